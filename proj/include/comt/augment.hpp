#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "comt/corpus.hpp"
#include "comt/llm_client.hpp"

namespace comt {

/// Comparison corpora: LLM rephrasings and token-level insert/swap/delete.
enum class AugmentMode { Rephrase, EdaInsert, EdaSwap, EdaDelete };

std::string_view to_string(AugmentMode m) noexcept;
std::optional<AugmentMode> parse_augment_mode(std::string_view s) noexcept;

inline constexpr double kDefaultAugmentRate = 0.1;

struct AugmentSpec {
  AugmentMode mode = AugmentMode::EdaDelete;
  double rate = kDefaultAugmentRate;  // fraction of tokens affected; unused by Rephrase
  std::uint64_t seed = 0;
};

/// Number of tokens an EDA operation touches for `n` tokens: 0 at rate 0,
/// otherwise rate*n rounded half-up with a floor of one.
std::size_t eda_operation_count(double rate, std::size_t n);

/// Negations ("no", "not", "without"), numerals and measurement units.
/// Surrounding punctuation and case are ignored.
bool is_protected_token(std::string_view token);

std::vector<std::string> whitespace_tokens(std::string_view text);

/// Apply one EDA operation. The random stream is seeded from the run seed
/// mixed with the report id, so output depends only on (report, spec).
///
/// insert duplicates k distinct tokens in place; swap performs k adjacent
/// swaps between unprotected neighbours (a no-op when none exist); delete
/// removes k distinct unprotected tokens. Rate 0 returns the text unchanged;
/// otherwise tokens are re-joined with single spaces. Throws ValidationError
/// for a rate outside [0,1] or a delete that would empty the report or
/// needs more unprotected tokens than exist.
RawReport eda_transform(const RawReport& report, const AugmentSpec& spec);

std::string rephrase_prompt(const RawReport& report);

struct RephraseOutcome {
  std::optional<RawReport> report;  // absent when the backend returned nothing usable
  std::string warning;
};

/// Ask the backend for a rephrasing. The result keeps split, images and
/// source and takes the id "<id>#rephrase". Transport failures propagate as
/// RetriableBackendError.
RephraseOutcome rephrase_report(const RawReport& report, CompletionClient& backend);

/// Raw-corpus record plus `augment_mode`, `augment_rate` and `seed`.
Json to_augmented_json(const RawReport& report, const AugmentSpec& spec);

}  // namespace comt
