#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "comt/corpus.hpp"
#include "comt/errors.hpp"
#include "comt/jsonl.hpp"
#include "comt/llm_client.hpp"

namespace comt {

enum class Label { Catastrophic = 0, Critical = 1, Attribute = 2, Correct = 3 };

inline constexpr std::array<Label, 4> kLabels = {Label::Catastrophic, Label::Critical, Label::Attribute,
                                                 Label::Correct};

constexpr double weight(Label l) noexcept {
  switch (l) {
    case Label::Catastrophic: return 0.0;
    case Label::Critical: return 0.3;
    case Label::Attribute: return 0.6;
    case Label::Correct: return 1.0;
  }
  return 0.0;
}

static_assert(weight(Label::Catastrophic) < weight(Label::Critical) && weight(Label::Critical) < weight(Label::Attribute) &&
              weight(Label::Attribute) < weight(Label::Correct));

std::string_view to_string(Label l) noexcept;
/// Case-insensitive.
std::optional<Label> parse_label(std::string_view s) noexcept;

struct JudgeVerdict {
  std::size_t sentence_index = 0;
  std::optional<Label> label;  // empty: the judge's answer could not be parsed
  std::string judge_id;
  std::string rationale;
  std::string raw_response;

  bool missing() const noexcept { return !label.has_value(); }
};

enum class ResolutionKind { Agreed, Adjudicated, Pending };
std::string_view to_string(ResolutionKind k) noexcept;

struct Resolution {
  ResolutionKind kind = ResolutionKind::Pending;
  std::optional<Label> label;
  std::string adjudicator_id;

  static Resolution pending() { return {}; }
  bool resolved() const noexcept { return kind != ResolutionKind::Pending; }
};

struct Adjudication {
  Label label = Label::Correct;
  std::string adjudicator_id;
};

struct ResolveOutcome {
  Resolution resolution;
  std::string warning;  // set when an adjudication was ignored
};

/// Agreement wins outright; an adjudication offered for agreeing verdicts is
/// dropped with a warning. A missing verdict never counts as agreement.
/// Throws ValidationError for identical judge ids or mismatched sentences.
ResolveOutcome resolve(const JudgeVerdict& a, const JudgeVerdict& b, const std::optional<Adjudication>& adjudication);

struct SentenceJudgment {
  std::string report_id;
  Sentence sentence;
  std::array<JudgeVerdict, 2> verdicts;
  Resolution resolution;
  std::int64_t version = 1;

  std::string id() const;  // "<report_id>#s<index>"
  bool disagreement() const noexcept;
  std::optional<double> score() const;  // S_i, absent while pending
};

Json to_json(const SentenceJudgment& j);
SentenceJudgment sentence_judgment_from_json(const Json& j);

struct MediHallResult {
  std::string report_id;
  std::vector<std::optional<double>> sentence_scores;
  std::size_t n = 0;
  std::optional<double> score;  // absent while any sentence is pending
  std::map<Label, std::size_t> counts;
  std::size_t pending_count = 0;

  bool final() const noexcept { return pending_count == 0; }
};

/// (sum of S_i) / N, summed in sentence order. Throws ValidationError when
/// there are no sentences or the judgments span several reports.
MediHallResult medihall_score(const std::vector<SentenceJudgment>& judgments);

Json to_json(const MediHallResult& r);

class PendingJudgmentsError : public StateError {
 public:
  PendingJudgmentsError(const std::string& what, std::vector<std::string> report_ids)
      : StateError(what), report_ids_(std::move(report_ids)) {}
  const std::vector<std::string>& report_ids() const noexcept { return report_ids_; }

 private:
  std::vector<std::string> report_ids_;
};

inline constexpr std::string_view kCorpusAggregation = "mean-of-reports";

/// Unweighted mean of per-report scores. Throws PendingJudgmentsError
/// naming every provisional report.
double corpus_medihall(const std::vector<MediHallResult>& results);

/// Group judgments by report (first-seen order) and score each group.
std::vector<MediHallResult> score_reports(const std::vector<SentenceJudgment>& judgments);

/// Share of sentences where both judges produced the same label.
double agreement_rate(const std::vector<SentenceJudgment>& judgments);

// ---------------------------------------------------------------------------
// Human evaluation

struct HumanEvalTally {
  std::string clinician_id;
  std::int64_t num_faith = 0;
  std::int64_t num_com = 0;
  std::int64_t num_flu = 0;
  std::int64_t num_data = 0;
};

/// (faith + com + flu) / (3 * data).
double human_score(const HumanEvalTally& t);

struct HumanScoreSummary {
  std::vector<std::pair<std::string, double>> per_clinician;
  double mean = 0.0;
};

HumanScoreSummary human_scores(const std::vector<HumanEvalTally>& tallies);
HumanEvalTally human_tally_from_json(const Json& j);

// ---------------------------------------------------------------------------
// Judges

class Judge {
 public:
  virtual ~Judge() = default;
  virtual std::string id() const = 0;
  /// `candidate_report_id` keys the sentence; `reference` is the grounding.
  virtual JudgeVerdict judge(const std::string& candidate_report_id, const Sentence& sentence,
                             const RawReport& reference) = 0;
};

std::string judge_prompt(const Sentence& sentence, const RawReport& reference);

/// Pulls "LABEL: <name>" and an optional "RATIONALE: ..." line out of a
/// response. Returns nullopt for the label when the tag is absent or names
/// something outside the four labels.
struct ParsedJudgeResponse {
  std::optional<Label> label;
  std::string rationale;
};
ParsedJudgeResponse parse_judge_response(std::string_view response);

/// Judge backed by a completion endpoint. One reformat request follows an
/// unparseable answer; a second failure throws JudgeParseError.
class LlmJudge : public Judge {
 public:
  LlmJudge(CompletionClient& client, std::string judge_id) : client_(client), id_(std::move(judge_id)) {}
  std::string id() const override { return id_; }
  JudgeVerdict judge(const std::string& candidate_report_id, const Sentence& sentence,
                     const RawReport& reference) override;

 private:
  CompletionClient& client_;
  std::string id_;
};

/// Gives every sentence the same label; the always-Correct seat in tests.
class ConstantJudge : public Judge {
 public:
  ConstantJudge(std::string judge_id, Label label) : id_(std::move(judge_id)), label_(label) {}
  std::string id() const override { return id_; }
  JudgeVerdict judge(const std::string&, const Sentence& sentence, const RawReport&) override;

 private:
  std::string id_;
  Label label_;
};

struct JudgeRunOptions {
  std::size_t max_in_flight = 4;  // shared by both judges
};

/// Split the candidate into sentences, ask both judges about each one and
/// resolve. A JudgeParseError leaves that judge's verdict missing (and the
/// sentence Pending); RetriableBackendError propagates.
std::vector<SentenceJudgment> judge_report(const RawReport& candidate, const RawReport& reference, Judge& first,
                                           Judge& second, const JudgeRunOptions& options = {});

}  // namespace comt
