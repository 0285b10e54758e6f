#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "comt/corpus.hpp"
#include "comt/decompose.hpp"
#include "comt/record_store.hpp"

namespace comt {

/// Versioned question table: one fixed question and one prelude label per
/// dimension, plus the instruction used for whole-report examples.
class TemplateTable {
 public:
  struct Entry {
    std::string question;
    std::string label;
  };

  TemplateTable(std::string version, std::array<Entry, kDimensionCount> entries, std::string report_prompt);
  static TemplateTable load(const std::filesystem::path& path);

  const std::string& version() const noexcept { return version_; }
  const std::string& question(Dimension d) const noexcept { return entries_[ordinal(d)].question; }
  const std::string& label(Dimension d) const noexcept { return entries_[ordinal(d)].label; }
  const std::string& report_prompt() const noexcept { return report_prompt_; }

 private:
  std::string version_;
  std::array<Entry, kDimensionCount> entries_;
  std::string report_prompt_;
};

struct QAPair {
  std::string report_id;
  Dimension dimension = Dimension::Modality;
  std::string question_text;
  std::string answer_text;

  friend bool operator==(const QAPair&, const QAPair&) = default;
};

struct ChainedQAPair {
  std::string report_id;
  Dimension dimension = Dimension::Modality;
  std::vector<std::string> prelude;  // answers of every lower dimension, in order
  std::string question_text;
  std::string answer_text;
  std::string serialized_prompt;

  friend bool operator==(const ChainedQAPair&, const ChainedQAPair&) = default;
};

/// The six per-dimension questions for a reviewed record. Records that have
/// not passed both review rounds raise StateError unless `allow_unverified`.
std::array<QAPair, kDimensionCount> build_qa_pairs(const HierarchicalRecord& record, const TemplateTable& templates,
                                                   bool allow_unverified = false);

struct ChainOptions {
  /// Keep "Not mentioned" answers in preludes. When false, prelude lengths
  /// are no longer equal to the dimension ordinal.
  bool include_sentinels = true;
};

/// One prelude sentence: "<label>: <answer>." (terminal period added only
/// when the answer lacks one).
std::string render_prelude_sentence(Dimension d, const std::string& answer, const TemplateTable& templates);

/// Prefix every question with the answers of all lower dimensions. Each
/// prelude sentence is followed by a single space, then the question.
/// Throws ValidationError unless `pairs` holds each dimension once, in order.
std::vector<ChainedQAPair> refactor_chain(std::span<const QAPair> pairs, const TemplateTable& templates,
                                          ChainOptions options = {});

Json to_json(const ChainedQAPair& pair, const std::string& template_version);
ChainedQAPair chained_from_json(const Json& j);

enum class EmitMode { Chained, FlatQa, OriginalReport };

std::string_view to_string(EmitMode m) noexcept;
std::optional<EmitMode> parse_emit_mode(std::string_view s) noexcept;

struct EmitOptions {
  EmitMode mode = EmitMode::Chained;
  std::optional<Dimension> only_dimension;  // per-dimension filtering
};

struct EmitResult {
  std::map<Split, std::size_t> counts;
  std::size_t total = 0;
  std::vector<std::string> warnings;
};

/// Write `<out_dir>/{train,val,test}.jsonl` from the store. Records are
/// sorted by report id then dimension, so identical stores give
/// byte-identical files. An empty source stage yields empty files, zero
/// counts and a warning.
EmitResult emit_dataset(const RecordStore& store, const std::filesystem::path& out_dir, const TemplateTable& templates,
                        const EmitOptions& options = {});

}  // namespace comt
