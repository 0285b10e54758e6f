#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace comt {

using Json = nlohmann::json;

/// Serialize with sorted keys and no whitespace; the byte form used in every
/// line-delimited file we write.
std::string dump_line(const Json& j);

/// Read every line of a file. Throws IoError when the file cannot be opened.
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Parse a whole line-delimited JSON file, throwing on the first bad line.
std::vector<Json> read_jsonl(const std::filesystem::path& path);

/// Write records to `path` (truncating) via a temp file and rename.
void write_jsonl_atomic(const std::filesystem::path& path, const std::vector<Json>& records);

void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace comt
