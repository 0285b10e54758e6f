#pragma once

#include <filesystem>

namespace comt {

/// Directory holding the shipped lexicon, question templates and injection
/// tables. `COMT_DATA_DIR` in the environment overrides the build-time path.
std::filesystem::path default_data_dir();

inline std::filesystem::path default_lexicon_path() { return default_data_dir() / "lexicon" / "radiology-v1.jsonl"; }
inline std::filesystem::path default_templates_path() {
  return default_data_dir() / "templates" / "comt-questions-v1.json";
}
inline std::filesystem::path default_injection_tables_path() {
  return default_data_dir() / "inject" / "tables-v1.json";
}

}  // namespace comt
