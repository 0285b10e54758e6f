#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "comt/corpus.hpp"
#include "comt/jsonl.hpp"
#include "comt/llm_client.hpp"

namespace comt {

/// The six report facets, in chain order (global to fine-grained). The
/// ordinal of each member is its position in the chain and never changes.
enum class Dimension : int { Modality = 0, Organ = 1, Size = 2, AbnormalLocation = 3, Symptoms = 4, OverallHealth = 5 };

inline constexpr std::size_t kDimensionCount = 6;
inline constexpr std::array<Dimension, kDimensionCount> kDimensions = {
    Dimension::Modality, Dimension::Organ,    Dimension::Size,
    Dimension::AbnormalLocation, Dimension::Symptoms, Dimension::OverallHealth};

constexpr std::size_t ordinal(Dimension d) noexcept { return static_cast<std::size_t>(d); }

/// Stable machine key: modality, organ, size, abnormal_location, symptoms,
/// overall_health.
std::string_view key(Dimension d) noexcept;
std::optional<Dimension> parse_dimension(std::string_view s) noexcept;

/// Answer text for a dimension the report says nothing about.
inline constexpr std::string_view kNotMentioned = "Not mentioned in the report.";

struct DimensionAnswer {
  Dimension dimension = Dimension::Modality;
  std::string answer_text{kNotMentioned};
  bool mentioned = false;
  std::vector<Span> evidence_spans;

  static DimensionAnswer absent(Dimension d) { return DimensionAnswer{d, std::string(kNotMentioned), false, {}}; }
  /// Mentioned answer, or the sentinel when `text` is blank or the sentinel.
  static DimensionAnswer from_text(Dimension d, std::string text, std::vector<Span> spans = {});

  friend bool operator==(const DimensionAnswer&, const DimensionAnswer&) = default;
};

using DimensionAnswers = std::array<DimensionAnswer, kDimensionCount>;

DimensionAnswers all_absent();

enum class Verification { Unverified, Round1Passed, Round2Passed, Corrected };

std::string_view to_string(Verification v) noexcept;
std::optional<Verification> parse_verification(std::string_view s) noexcept;

struct Correction {
  Dimension dimension = Dimension::Modality;
  std::string old_text;
  std::string new_text;
  std::string reviewer_id;
  int round = 1;

  friend bool operator==(const Correction&, const Correction&) = default;
};

struct HierarchicalRecord {
  std::string report_id;
  DimensionAnswers answers = all_absent();
  std::string backend_id;
  Verification verification = Verification::Unverified;
  int last_round = 0;  // review round that produced `verification`; 0 before review
  std::vector<Correction> correction_log;
  std::uint64_t version = 0;  // bumped by every applied review decision
  std::string raw_response;   // verbatim backend output, remote backends only

  friend bool operator==(const HierarchicalRecord&, const HierarchicalRecord&) = default;
};

/// Throws ValidationError unless the record holds one well-formed answer per
/// dimension in canonical order.
void validate(const HierarchicalRecord& rec);

/// `text_size`, when given, also bounds every evidence span.
void validate(const HierarchicalRecord& rec, std::size_t text_size);

Json to_json(const HierarchicalRecord& rec);
HierarchicalRecord hierarchical_from_json(const Json& j);

/// Reviewed in both rounds (passed or corrected in round 2).
bool chain_eligible(const HierarchicalRecord& rec) noexcept;

/// Review round the record is waiting for: 1, 2, or 0 when done.
int pending_round(const HierarchicalRecord& rec) noexcept;

/// Per-dimension reviewer decision; dimensions not listed are accepted.
struct VerificationDecision {
  std::map<Dimension, std::string> replacements;
};

/// Apply one reviewer decision for `round` (1 or 2).
///
/// Round 1 needs an unverified record; round 2 needs one that passed or was
/// corrected in round 1. All-accept advances to round<N>_passed; any
/// replacement rewrites the answer, logs (dimension, old, new, reviewer,
/// round) and marks the record corrected. Throws StateError on a round-order
/// violation and ValidationError on a blank replacement; the input record is
/// never modified.
HierarchicalRecord submit_verification(const HierarchicalRecord& rec, const VerificationDecision& decision,
                                       const std::string& reviewer_id, int round);

// ---------------------------------------------------------------------------
// Rule-based segmentation

struct LexiconEntry {
  Dimension dimension = Dimension::Modality;
  std::string pattern;
  int priority = 0;
};

/// Keyword lexicon for the offline segmenter.
///
/// Patterns match case-insensitively on word boundaries. Words are
/// separated by single spaces (matching any whitespace run); `#` matches a
/// number such as 3 or 1.5; a trailing `*` on a word matches any word
/// continuation. Everything else is literal.
class Lexicon {
 public:
  Lexicon(std::string id, std::vector<LexiconEntry> entries);

  /// Line-delimited `{"dimension", "pattern", "priority"}` records. The
  /// lexicon id is the file stem unless a `{"lexicon_id": ...}` line is
  /// present.
  static Lexicon load(const std::filesystem::path& path);

  const std::string& id() const noexcept { return id_; }
  const std::vector<LexiconEntry>& entries() const noexcept { return entries_; }

  struct Match {
    Dimension dimension;
    Span span;
    int priority;
  };

  /// Every raw pattern hit, unresolved.
  std::vector<Match> find_all(std::string_view text) const;

 private:
  std::string id_;
  std::vector<LexiconEntry> entries_;
  std::vector<std::regex> compiled_;
};

std::regex compile_lexicon_pattern(const std::string& pattern);

/// Deterministic segmentation.
///
/// Modality, organ, size, location and symptom answers are the matched
/// terms in report order: overlapping hits resolve by length then priority,
/// adjacent same-dimension hits merge into one phrase ("left" + "pleural"),
/// and phrases join with "; ". Size, location and symptom hits inside a
/// negated clause ("no pleural effusion") are dropped. The overall-health
/// answer condenses each sentence holding a status term ("The lungs are
/// clear." becomes "lungs clear"). Words are lower-cased except acronyms.
DimensionAnswers rule_segment(std::string_view text, const Lexicon& lexicon);

// ---------------------------------------------------------------------------
// Backends

enum class BackendKind { RemoteLlm, RuleBased };

class SegmentationBackend {
 public:
  virtual ~SegmentationBackend() = default;
  virtual std::string id() const = 0;
  virtual BackendKind kind() const = 0;

  struct Output {
    DimensionAnswers answers;
    std::string raw_response;
  };
  virtual Output segment(const RawReport& report) = 0;
};

class RuleSegmentationBackend : public SegmentationBackend {
 public:
  explicit RuleSegmentationBackend(Lexicon lexicon) : lexicon_(std::move(lexicon)) {}
  std::string id() const override { return "rule:" + lexicon_.id(); }
  BackendKind kind() const override { return BackendKind::RuleBased; }
  Output segment(const RawReport& report) override { return {rule_segment(report.report_text, lexicon_), {}}; }

 private:
  Lexicon lexicon_;
};

inline constexpr std::string_view kSegmentPromptId = "segment-v1";

/// One request per report; the model answers with a tagged block of six
/// `<dimension>: <answer>` lines.
std::string segmentation_prompt(const RawReport& report);

/// Parse the tagged block. Throws SchemaViolationError (raw text attached)
/// unless every dimension appears exactly once.
DimensionAnswers parse_tagged_block(std::string_view response);

class LlmSegmentationBackend : public SegmentationBackend {
 public:
  explicit LlmSegmentationBackend(std::shared_ptr<CompletionClient> client) : client_(std::move(client)) {}
  std::string id() const override { return "llm:" + client_->id() + ":" + std::string(kSegmentPromptId); }
  BackendKind kind() const override { return BackendKind::RemoteLlm; }
  Output segment(const RawReport& report) override;

 private:
  std::shared_ptr<CompletionClient> client_;
};

/// Segment one report into an unverified record. Backend transport failures
/// surface as RetriableBackendError carrying the report id.
HierarchicalRecord segment_report(const RawReport& report, SegmentationBackend& backend);

}  // namespace comt
