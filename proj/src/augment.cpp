#include "comt/augment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "comt/errors.hpp"
#include "comt/rng.hpp"

namespace comt {

namespace {

std::string normalize_token(std::string_view t) {
  const std::string_view punct = ".,;:!?\"'()[]";
  while (!t.empty() && punct.find(t.front()) != std::string_view::npos) t.remove_prefix(1);
  while (!t.empty() && punct.find(t.back()) != std::string_view::npos) t.remove_suffix(1);
  std::string out(t);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// First `k` entries of a seeded Fisher-Yates shuffle of `pool`.
std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool, std::size_t k, SplitMix64& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

}  // namespace

std::string_view to_string(AugmentMode m) noexcept {
  switch (m) {
    case AugmentMode::Rephrase: return "rephrase";
    case AugmentMode::EdaInsert: return "eda_insert";
    case AugmentMode::EdaSwap: return "eda_swap";
    case AugmentMode::EdaDelete: return "eda_delete";
  }
  return "rephrase";
}

std::optional<AugmentMode> parse_augment_mode(std::string_view s) noexcept {
  for (auto m : {AugmentMode::Rephrase, AugmentMode::EdaInsert, AugmentMode::EdaSwap, AugmentMode::EdaDelete})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

std::size_t eda_operation_count(double rate, std::size_t n) {
  if (rate <= 0.0 || n == 0) return 0;
  const auto k = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n) + 0.5));
  return std::max<std::size_t>(1, k);
}

bool is_protected_token(std::string_view token) {
  static const std::set<std::string> negations = {"no", "not", "without"};
  static const std::set<std::string> units = {"mm", "cm", "m", "ml", "cc", "mg", "kg", "g", "%", "mmhg", "hu", "x"};
  const auto t = normalize_token(token);
  if (t.empty()) return false;
  if (negations.count(t) || units.count(t)) return true;
  return std::any_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const auto b = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > b) out.emplace_back(text.substr(b, i - b));
  }
  return out;
}

RawReport eda_transform(const RawReport& report, const AugmentSpec& spec) {
  if (spec.mode == AugmentMode::Rephrase) throw ValidationError("eda_transform needs an eda_* mode");
  if (!(spec.rate >= 0.0 && spec.rate <= 1.0)) throw ValidationError("augment rate must lie in [0,1]");

  RawReport out = report;
  out.report_id = report.report_id + "#" + std::string(to_string(spec.mode));
  auto tokens = whitespace_tokens(report.report_text);
  const auto n = tokens.size();
  const auto k = eda_operation_count(spec.rate, n);
  if (k == 0) return out;

  SplitMix64 rng(derive_seed(spec.seed, report.report_id));
  std::vector<std::size_t> unprotected;
  for (std::size_t i = 0; i < n; ++i)
    if (!is_protected_token(tokens[i])) unprotected.push_back(i);

  switch (spec.mode) {
    case AugmentMode::EdaInsert: {
      std::vector<std::size_t> all(n);
      for (std::size_t i = 0; i < n; ++i) all[i] = i;
      const auto chosen = sample_without_replacement(std::move(all), k, rng);
      std::vector<std::string> result;
      result.reserve(n + k);
      std::size_t c = 0;
      for (std::size_t i = 0; i < n; ++i) {
        result.push_back(tokens[i]);
        if (c < chosen.size() && chosen[c] == i) {
          result.push_back(tokens[i]);
          ++c;
        }
      }
      tokens = std::move(result);
      break;
    }
    case AugmentMode::EdaSwap: {
      // swapping two unprotected tokens keeps this set of positions valid
      std::vector<std::size_t> pairs;
      for (std::size_t i = 0; i + 1 < n; ++i)
        if (!is_protected_token(tokens[i]) && !is_protected_token(tokens[i + 1])) pairs.push_back(i);
      if (pairs.empty()) break;
      for (std::size_t s = 0; s < k; ++s) {
        const auto i = pairs[rng.below(pairs.size())];
        std::swap(tokens[i], tokens[i + 1]);
      }
      break;
    }
    case AugmentMode::EdaDelete: {
      if (k >= n)
        throw ValidationError(report.report_id + ": delete rate " + std::to_string(spec.rate) + " would remove all " +
                              std::to_string(n) + " tokens");
      if (k > unprotected.size())
        throw ValidationError(report.report_id + ": delete needs " + std::to_string(k) + " unprotected tokens, found " +
                              std::to_string(unprotected.size()));
      const auto chosen = sample_without_replacement(unprotected, k, rng);
      std::vector<std::string> result;
      std::size_t c = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (c < chosen.size() && chosen[c] == i) {
          ++c;
          continue;
        }
        result.push_back(tokens[i]);
      }
      tokens = std::move(result);
      break;
    }
    case AugmentMode::Rephrase: break;
  }
  out.report_text = join(tokens);
  return out;
}

std::string rephrase_prompt(const RawReport& report) {
  return "Rephrase the following radiology report. Keep every finding, measurement, location and negation "
         "unchanged; do not add or remove findings. Return only the rephrased report.\n\nReport:\n" +
         report.report_text + "\n";
}

RephraseOutcome rephrase_report(const RawReport& report, CompletionClient& backend) {
  auto text = trim(backend.complete(rephrase_prompt(report)));
  if (text.empty()) return {std::nullopt, report.report_id + ": backend returned an empty rephrasing; original kept"};
  RawReport out = report;
  out.report_id = report.report_id + "#rephrase";
  out.report_text = std::move(text);
  return {std::move(out), {}};
}

Json to_augmented_json(const RawReport& report, const AugmentSpec& spec) {
  auto j = to_json(report);
  j["augment_mode"] = std::string(to_string(spec.mode));
  j["seed"] = spec.seed;
  if (spec.mode != AugmentMode::Rephrase) j["augment_rate"] = spec.rate;
  return j;
}

}  // namespace comt
