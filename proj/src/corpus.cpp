#include "comt/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <set>

#include "comt/errors.hpp"

namespace comt {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }
bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

constexpr std::array<std::string_view, 16> kAbbreviations = {
    "dr", "mr", "mrs", "ms", "prof", "st", "vs", "etc", "e.g", "i.e", "a.m", "p.m", "approx", "fig", "cf", "resp"};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Token immediately before position `dot` (exclusive), i.e. the run of
// non-space characters ending at the terminator.
std::string_view token_before(std::string_view text, std::size_t dot, std::size_t* token_start) {
  std::size_t b = dot;
  while (b > 0 && !is_space(text[b - 1])) --b;
  *token_start = b;
  return text.substr(b, dot - b);
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), is_digit);
}

// "12." followed by whitespace (or end) at position `k`.
bool enumerator_at(std::string_view text, std::size_t k) {
  std::size_t e = k;
  while (e < text.size() && is_digit(text[e])) ++e;
  if (e == k || e >= text.size() || text[e] != '.') return false;
  return e + 1 == text.size() || is_space(text[e + 1]);
}

// True when the period at `dot` belongs to an abbreviation or a
// clause-initial enumerator and must not close the sentence.
bool guarded_period(std::string_view text, std::size_t dot, std::size_t sentence_start) {
  std::size_t tok_start = 0;
  auto tok = token_before(text, dot, &tok_start);
  while (!tok.empty() && (tok.front() == '(' || tok.front() == '"')) {
    tok.remove_prefix(1);
    ++tok_start;
  }
  if (std::find(kAbbreviations.begin(), kAbbreviations.end(), lower(tok)) != kAbbreviations.end()) return true;
  if (all_digits(tok)) {
    std::size_t p = tok_start;
    while (p > sentence_start && is_space(text[p - 1])) --p;
    if (p <= sentence_start) return true;
    const char prev = text[p - 1];
    if (prev == ':' || prev == ';') return true;
  }
  return false;
}

}  // namespace

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

std::optional<Split> parse_split(std::string_view s) noexcept {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  return std::nullopt;
}

Json to_json(const RawReport& r) {
  return Json{{"id", r.report_id},
              {"report_id", r.report_id},
              {"split", std::string(to_string(r.split))},
              {"image_refs", r.image_refs},
              {"report_text", r.report_text},
              {"source", r.source}};
}

RawReport raw_report_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("record is not an object");
  RawReport r;
  auto str_field = [&](const char* name) -> std::string {
    auto it = j.find(name);
    if (it == j.end() || !it->is_string()) throw ValidationError(std::string("field '") + name + "' missing or not a string");
    return it->get<std::string>();
  };
  r.report_id = str_field("report_id");
  if (trim(r.report_id).empty()) throw ValidationError("field 'report_id' is empty");
  auto split = parse_split(str_field("split"));
  if (!split) throw ValidationError("field 'split' must be one of train|val|test");
  r.split = *split;
  if (auto it = j.find("image_refs"); it != j.end()) {
    if (!it->is_array()) throw ValidationError("field 'image_refs' must be an array of strings");
    for (const auto& ref : *it) {
      if (!ref.is_string()) throw ValidationError("field 'image_refs' must be an array of strings");
      r.image_refs.push_back(ref.get<std::string>());
    }
  }
  r.report_text = str_field("report_text");
  if (trim(r.report_text).empty()) throw ValidationError("field 'report_text' is empty");
  if (auto it = j.find("source"); it != j.end()) {
    if (!it->is_string()) throw ValidationError("field 'source' must be a string");
    r.source = it->get<std::string>();
  }
  return r;
}

std::vector<Sentence> split_sentences(std::string_view text) {
  std::vector<Sentence> out;
  const std::size_t n = text.size();
  std::size_t pos = 0;
  while (pos < n && is_space(text[pos])) ++pos;
  std::size_t start = pos;

  auto emit = [&](std::size_t end) {
    std::size_t e = end;
    while (e > start && is_space(text[e - 1])) --e;
    if (e > start) out.push_back(Sentence{out.size(), std::string(text.substr(start, e - start)), Span{start, e}});
  };

  for (std::size_t i = pos; i < n; ++i) {
    if (!is_terminator(text[i])) continue;
    std::size_t j = i;
    while (j + 1 < n && is_terminator(text[j + 1])) ++j;
    std::size_t after = j + 1;
    // closing quote or bracket stays with the sentence
    while (after < n && (text[after] == '"' || text[after] == ')' || text[after] == '\'')) ++after;
    if (after < n && !is_space(text[after])) {
      i = j;
      continue;
    }
    std::size_t k = after;
    while (k < n && is_space(text[k])) ++k;
    if (k == n) break;  // trailing terminator: handled by the final emit
    const bool guarded = text[i] == '.' && j == i && guarded_period(text, i, start);
    const bool next_starts = is_upper(text[k]) || enumerator_at(text, k) || text[k] == '"' || text[k] == '(';
    if (!guarded && next_starts) {
      emit(after);
      start = k;
    }
    i = k - 1;
  }
  if (start < n) emit(n);
  return out;
}

LoadResult load_raw_corpus(const std::filesystem::path& path, std::string_view source_tag) {
  const auto lines = read_lines(path);
  LoadResult result;
  std::map<std::string, std::size_t> first_seen;
  std::set<std::string> duplicates;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error&) {
      result.rejects.push_back({i + 1, "not valid JSON"});
      continue;
    }
    RawReport r;
    try {
      r = raw_report_from_json(j);
    } catch (const ValidationError& e) {
      result.rejects.push_back({i + 1, e.what()});
      continue;
    }
    if (!source_tag.empty()) r.source = std::string(source_tag);
    if (!first_seen.emplace(r.report_id, i + 1).second) duplicates.insert(r.report_id);
    result.reports.push_back(std::move(r));
  }
  if (!duplicates.empty()) {
    std::vector<std::string> ids(duplicates.begin(), duplicates.end());
    std::string msg = "duplicate report_id in " + path.string() + ":";
    for (const auto& id : ids) msg += " " + id;
    throw DuplicateIdError(msg, std::move(ids));
  }
  return result;
}

}  // namespace comt
