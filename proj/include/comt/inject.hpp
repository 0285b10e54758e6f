#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "comt/corpus.hpp"
#include "comt/medihall.hpp"

namespace comt {

/// Synthetic hallucinations with known labels, used to check the MediHall
/// pipeline against an exact expectation.

struct InjectionRates {
  double catastrophic = 0.0;
  double critical = 0.0;
  double attribute = 0.0;
};

struct InjectionSpec {
  InjectionRates rates;
  std::uint64_t seed = 0;

  /// Throws ValidationError unless every rate is >= 0 and they sum to <= 1.
  void validate() const;
};

/// Parses "cat=0.2,crit=0.1,attr=0.1"; omitted keys are 0.
InjectionRates parse_rates(std::string_view text);

struct InjectionTables {
  std::string version;
  std::vector<std::vector<std::string>> disease_groups;    // swap within a group -> Critical
  std::vector<std::vector<std::string>> attribute_groups;  // swap within a group -> Attribute
  std::vector<std::string> fabrications;                   // findings absent from every group
  std::vector<std::string> normal_statements;              // stand-ins for omitted findings

  static InjectionTables load(const std::filesystem::path& path);
};

struct LedgerEntry {
  std::string report_id;
  std::size_t sentence_index = 0;
  std::string original;
  std::string mutated;
  Label target = Label::Correct;  // what the seeded draw asked for
  Label label = Label::Correct;   // what was actually injected
  std::string mutation;           // none | fabrication | omission | disease_swap | attribute_swap
  std::string detail;
};

Json to_json(const LedgerEntry& e);

struct InjectedReport {
  RawReport candidate;  // same report_id as the reference
  std::vector<LedgerEntry> ledger;
  double expected_score = 1.0;
  std::vector<std::string> substitutions;  // re-rolled draws, human-readable
};

/// Each sentence draws its label from its own seeded stream, so one
/// sentence's outcome never depends on another's mutation. A Critical draw
/// on a sentence without a disease term falls back to Attribute, then
/// Correct; an Attribute draw without an attribute token falls back to
/// Correct. Catastrophic sentences are replaced by a fabricated finding or,
/// when they carry a disease, possibly by a normal statement (omission).
InjectedReport inject(const RawReport& reference, const InjectionSpec& spec, const InjectionTables& tables);

/// Deterministic chest-radiograph style reports for oracle runs.
std::vector<RawReport> synthetic_corpus(std::size_t count, std::uint64_t seed);

class InjectionLedger {
 public:
  void add(const InjectedReport& report);
  const LedgerEntry* find(const std::string& report_id, std::size_t sentence_index) const;
  std::size_t size() const noexcept { return entries_.size(); }
  std::vector<Json> export_records() const;

 private:
  std::map<std::pair<std::string, std::size_t>, LedgerEntry> entries_;
  std::vector<std::pair<std::string, std::size_t>> order_;
};

/// Reads the ground truth back out of the ledger. A sentence without an
/// entry, or whose text differs from the ledger, is a harness bug and throws
/// StateError.
class OracleJudge : public Judge {
 public:
  explicit OracleJudge(const InjectionLedger& ledger, std::string judge_id = "oracle")
      : ledger_(ledger), id_(std::move(judge_id)) {}
  std::string id() const override { return id_; }
  JudgeVerdict judge(const std::string& candidate_report_id, const Sentence& sentence,
                     const RawReport& reference) override;

 private:
  const InjectionLedger& ledger_;
  std::string id_;
};

struct ValidationOptions {
  bool discordant = false;  // second seat always answers Correct
  JudgeRunOptions run;
};

struct PipelineReport {
  std::size_t reports = 0;
  std::size_t sentences = 0;
  std::array<std::array<std::size_t, 4>, 4> confusion{};  // [ground truth][resolved label]
  std::size_t pending_sentences = 0;
  double agreement = 0.0;
  double expected_corpus = 0.0;
  std::optional<double> computed_corpus;
  std::vector<std::string> pending_report_ids;
  std::vector<std::string> mismatches;
  std::vector<InjectedReport> injected;
  std::vector<SentenceJudgment> judgments;
  bool passed = false;

  bool confusion_is_identity() const;
  Json summary() const;
};

/// inject -> two judges -> resolve -> score, compared against the ledger.
/// With concordant oracles every computed score must equal its expectation
/// exactly. In discordant mode every mutated sentence must stay Pending and
/// corpus scoring must refuse.
PipelineReport validate_pipeline(const std::vector<RawReport>& references, const InjectionSpec& spec,
                                 const InjectionTables& tables, const ValidationOptions& options = {});

}  // namespace comt
