#include "comt/decompose.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "comt/errors.hpp"

namespace comt {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t b = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

bool is_acronym(std::string_view w) {
  int letters = 0;
  for (char c : w) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      if (!std::isupper(static_cast<unsigned char>(c))) return false;
      ++letters;
    }
  }
  return letters >= 2;
}

std::string render_word(std::string_view w) { return is_acronym(w) ? std::string(w) : lower(w); }

std::string render_phrase(std::string_view s) {
  std::string out;
  for (auto w : split_ws(s)) {
    if (!out.empty()) out += ' ';
    out += render_word(w);
  }
  return out;
}

std::string strip_punct(std::string_view w) {
  const std::string_view punct = ".,;:!?\"'()[]";
  while (!w.empty() && punct.find(w.front()) != std::string_view::npos) w.remove_prefix(1);
  while (!w.empty() && punct.find(w.back()) != std::string_view::npos) w.remove_suffix(1);
  return std::string(w);
}

const std::set<std::string>& condense_stopwords() {
  static const std::set<std::string> s = {"the", "a", "an", "is", "are", "was", "were", "be", "been", "there"};
  return s;
}

// "The lungs are clear." -> "lungs clear"
std::string condense_clause(std::string_view sentence) {
  auto words = split_ws(sentence);
  std::size_t first = 0;
  // section headers ("Impression:") and list enumerators ("2.") lead clauses
  while (first < words.size()) {
    auto w = words[first];
    const bool header = w.size() > 1 && w.back() == ':';
    const bool enumerator = w.size() > 1 && w.back() == '.' &&
                            std::all_of(w.begin(), w.end() - 1, [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
    if (!header && !enumerator) break;
    ++first;
  }
  std::string out;
  for (std::size_t i = first; i < words.size(); ++i) {
    auto w = strip_punct(words[i]);
    if (w.empty()) continue;
    auto r = render_word(w);
    if (condense_stopwords().count(lower(r))) continue;
    if (!out.empty()) out += ' ';
    out += r;
  }
  return out;
}

const std::regex& negation_cue() {
  static const std::regex re(R"(\b(no|not|without|negative for|free of|absence of)\b)", std::regex::icase);
  return re;
}

const std::regex& negation_break() {
  static const std::regex re(R"(\b(but|however|although|except|otherwise)\b|;)", std::regex::icase);
  return re;
}

bool negated(std::string_view text, const Sentence& s, const Span& term) {
  const auto prefix = std::string(text.substr(s.span.start, term.start - s.span.start));
  std::size_t cue_end = std::string::npos;
  for (auto it = std::sregex_iterator(prefix.begin(), prefix.end(), negation_cue()); it != std::sregex_iterator(); ++it)
    cue_end = static_cast<std::size_t>(it->position() + it->length());
  if (cue_end == std::string::npos) return false;
  const auto between = prefix.substr(cue_end);
  return !std::regex_search(between, negation_break());
}

bool negatable(Dimension d) {
  return d == Dimension::Size || d == Dimension::AbnormalLocation || d == Dimension::Symptoms;
}

}  // namespace

std::string_view key(Dimension d) noexcept {
  switch (d) {
    case Dimension::Modality: return "modality";
    case Dimension::Organ: return "organ";
    case Dimension::Size: return "size";
    case Dimension::AbnormalLocation: return "abnormal_location";
    case Dimension::Symptoms: return "symptoms";
    case Dimension::OverallHealth: return "overall_health";
  }
  return "modality";
}

std::optional<Dimension> parse_dimension(std::string_view s) noexcept {
  for (auto d : kDimensions)
    if (key(d) == s) return d;
  return std::nullopt;
}

DimensionAnswer DimensionAnswer::from_text(Dimension d, std::string text, std::vector<Span> spans) {
  auto t = trim(text);
  if (t.empty() || t == kNotMentioned) return absent(d);
  return DimensionAnswer{d, std::move(t), true, std::move(spans)};
}

DimensionAnswers all_absent() {
  DimensionAnswers a;
  for (auto d : kDimensions) a[ordinal(d)] = DimensionAnswer::absent(d);
  return a;
}

std::string_view to_string(Verification v) noexcept {
  switch (v) {
    case Verification::Unverified: return "unverified";
    case Verification::Round1Passed: return "round1_passed";
    case Verification::Round2Passed: return "round2_passed";
    case Verification::Corrected: return "corrected";
  }
  return "unverified";
}

std::optional<Verification> parse_verification(std::string_view s) noexcept {
  for (auto v : {Verification::Unverified, Verification::Round1Passed, Verification::Round2Passed, Verification::Corrected})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

void validate(const HierarchicalRecord& rec) { validate(rec, std::string::npos); }

void validate(const HierarchicalRecord& rec, std::size_t text_size) {
  if (rec.report_id.empty()) throw ValidationError("hierarchical record without report_id");
  for (std::size_t k = 0; k < kDimensionCount; ++k) {
    const auto& a = rec.answers[k];
    if (ordinal(a.dimension) != k)
      throw ValidationError(rec.report_id + ": answer " + std::to_string(k) + " holds dimension " + std::string(key(a.dimension)));
    if (!a.mentioned && a.answer_text != kNotMentioned)
      throw ValidationError(rec.report_id + ": unmentioned " + std::string(key(a.dimension)) + " must carry the sentinel");
    if (a.mentioned && (trim(a.answer_text).empty() || a.answer_text == kNotMentioned))
      throw ValidationError(rec.report_id + ": mentioned " + std::string(key(a.dimension)) + " needs a real answer");
    for (const auto& s : a.evidence_spans) {
      if (s.start > s.end || (text_size != std::string::npos && s.end > text_size))
        throw ValidationError(rec.report_id + ": evidence span out of bounds");
    }
  }
}

Json to_json(const HierarchicalRecord& rec) {
  Json answers = Json::array();
  for (const auto& a : rec.answers) {
    Json spans = Json::array();
    for (const auto& s : a.evidence_spans) spans.push_back(Json::array({s.start, s.end}));
    answers.push_back({{"dimension", std::string(key(a.dimension))},
                       {"answer_text", a.answer_text},
                       {"mentioned", a.mentioned},
                       {"evidence_spans", spans}});
  }
  Json log = Json::array();
  for (const auto& c : rec.correction_log)
    log.push_back({{"dimension", std::string(key(c.dimension))},
                   {"old_text", c.old_text},
                   {"new_text", c.new_text},
                   {"reviewer_id", c.reviewer_id},
                   {"round", c.round}});
  Json j{{"id", rec.report_id},
         {"parent", rec.report_id},
         {"report_id", rec.report_id},
         {"answers", answers},
         {"backend_id", rec.backend_id},
         {"verification", std::string(to_string(rec.verification))},
         {"last_round", rec.last_round},
         {"correction_log", log},
         {"version", rec.version}};
  if (!rec.raw_response.empty()) j["raw_response"] = rec.raw_response;
  return j;
}

HierarchicalRecord hierarchical_from_json(const Json& j) {
  try {
    HierarchicalRecord rec;
    rec.report_id = j.at("report_id").get<std::string>();
    const auto& answers = j.at("answers");
    if (!answers.is_array() || answers.size() != kDimensionCount)
      throw ValidationError(rec.report_id + ": expected six answers");
    for (std::size_t k = 0; k < kDimensionCount; ++k) {
      const auto& a = answers[k];
      auto d = parse_dimension(a.at("dimension").get<std::string>());
      if (!d) throw ValidationError(rec.report_id + ": unknown dimension");
      DimensionAnswer out{*d, a.at("answer_text").get<std::string>(), a.at("mentioned").get<bool>(), {}};
      for (const auto& s : a.value("evidence_spans", Json::array()))
        out.evidence_spans.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
      rec.answers[k] = std::move(out);
    }
    rec.backend_id = j.at("backend_id").get<std::string>();
    auto v = parse_verification(j.at("verification").get<std::string>());
    if (!v) throw ValidationError(rec.report_id + ": unknown verification state");
    rec.verification = *v;
    rec.last_round = j.value("last_round", 0);
    for (const auto& c : j.value("correction_log", Json::array())) {
      auto d = parse_dimension(c.at("dimension").get<std::string>());
      if (!d) throw ValidationError(rec.report_id + ": unknown dimension in correction log");
      rec.correction_log.push_back({*d, c.at("old_text").get<std::string>(), c.at("new_text").get<std::string>(),
                                    c.at("reviewer_id").get<std::string>(), c.at("round").get<int>()});
    }
    rec.version = j.value("version", std::uint64_t{0});
    rec.raw_response = j.value("raw_response", std::string{});
    validate(rec);
    return rec;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed hierarchical record: ") + e.what());
  }
}

bool chain_eligible(const HierarchicalRecord& rec) noexcept {
  return rec.verification == Verification::Round2Passed ||
         (rec.verification == Verification::Corrected && rec.last_round == 2);
}

int pending_round(const HierarchicalRecord& rec) noexcept {
  if (rec.verification == Verification::Unverified) return 1;
  if (rec.verification == Verification::Round1Passed) return 2;
  if (rec.verification == Verification::Corrected && rec.last_round == 1) return 2;
  return 0;
}

HierarchicalRecord submit_verification(const HierarchicalRecord& rec, const VerificationDecision& decision,
                                       const std::string& reviewer_id, int round) {
  if (round != 1 && round != 2) throw ValidationError("review round must be 1 or 2");
  if (reviewer_id.empty()) throw ValidationError("reviewer_id is required");
  if (pending_round(rec) != round)
    throw StateError(rec.report_id + ": cannot apply a round-" + std::to_string(round) + " decision to a record in state " +
                     std::string(to_string(rec.verification)));
  for (const auto& [d, text] : decision.replacements)
    if (trim(text).empty()) throw ValidationError(rec.report_id + ": empty replacement for " + std::string(key(d)));

  HierarchicalRecord out = rec;
  bool corrected = false;
  for (const auto& [d, text] : decision.replacements) {
    auto& answer = out.answers[ordinal(d)];
    auto replacement = DimensionAnswer::from_text(d, text);
    if (replacement.answer_text == answer.answer_text) continue;
    out.correction_log.push_back({d, answer.answer_text, replacement.answer_text, reviewer_id, round});
    answer = std::move(replacement);
    corrected = true;
  }
  out.verification = corrected ? Verification::Corrected
                               : (round == 1 ? Verification::Round1Passed : Verification::Round2Passed);
  out.last_round = round;
  ++out.version;
  return out;
}

// ---------------------------------------------------------------------------

std::regex compile_lexicon_pattern(const std::string& pattern) {
  const auto words = split_ws(pattern);
  if (words.empty()) throw ValidationError("empty lexicon pattern");
  std::string re;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) re += R"(\s+)";
    auto w = words[i];
    if (w == "#") {
      re += R"(\d+(?:\.\d+)?)";
      continue;
    }
    bool wildcard = false;
    if (w.size() > 1 && w.back() == '*') {
      wildcard = true;
      w.remove_suffix(1);
    }
    for (char c : w) {
      if (std::isalnum(static_cast<unsigned char>(c)) || c == ' ')
        re += c;
      else {
        re += '\\';
        re += c;
      }
    }
    if (wildcard) re += "[A-Za-z]*";
  }
  const char first = words.front() == "#" ? '0' : words.front().front();
  std::string full = is_word(first) ? R"(\b)" : "";
  full += "(?:" + re + ")(?![A-Za-z0-9_])";
  return std::regex(full, std::regex::ECMAScript | std::regex::icase);
}

Lexicon::Lexicon(std::string id, std::vector<LexiconEntry> entries) : id_(std::move(id)), entries_(std::move(entries)) {
  compiled_.reserve(entries_.size());
  for (const auto& e : entries_) compiled_.push_back(compile_lexicon_pattern(e.pattern));
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::string id = path.stem().string();
  std::vector<LexiconEntry> entries;
  std::size_t n = 0;
  for (const auto& j : read_jsonl(path)) {
    ++n;
    if (j.contains("lexicon_id")) {
      id = j.at("lexicon_id").get<std::string>();
      continue;
    }
    auto d = parse_dimension(j.value("dimension", std::string{}));
    if (!d || !j.contains("pattern") || !j["pattern"].is_string())
      throw ValidationError(path.string() + ": record " + std::to_string(n) + " needs dimension and pattern");
    entries.push_back({*d, j["pattern"].get<std::string>(), j.value("priority", 0)});
  }
  return Lexicon(std::move(id), std::move(entries));
}

std::vector<Lexicon::Match> Lexicon::find_all(std::string_view text) const {
  std::vector<Match> out;
  const std::string s(text);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    for (auto it = std::sregex_iterator(s.begin(), s.end(), compiled_[i]); it != std::sregex_iterator(); ++it) {
      const auto b = static_cast<std::size_t>(it->position());
      const auto len = static_cast<std::size_t>(it->length());
      if (len == 0) continue;
      out.push_back({entries_[i].dimension, Span{b, b + len}, entries_[i].priority});
    }
  }
  return out;
}

DimensionAnswers rule_segment(std::string_view text, const Lexicon& lexicon) {
  DimensionAnswers answers = all_absent();
  const auto sentences = split_sentences(text);
  auto sentence_of = [&](std::size_t pos) -> const Sentence* {
    for (const auto& s : sentences)
      if (pos >= s.span.start && pos < s.span.end) return &s;
    return nullptr;
  };

  std::vector<Lexicon::Match> terms;
  std::vector<Lexicon::Match> status;
  for (auto& m : lexicon.find_all(text)) (m.dimension == Dimension::OverallHealth ? status : terms).push_back(m);

  // overlap resolution: longest, then priority, then position
  std::sort(terms.begin(), terms.end(), [](const auto& a, const auto& b) {
    if (a.span.length() != b.span.length()) return a.span.length() > b.span.length();
    if (a.priority != b.priority) return a.priority > b.priority;
    if (a.span.start != b.span.start) return a.span.start < b.span.start;
    return ordinal(a.dimension) < ordinal(b.dimension);
  });
  std::vector<Lexicon::Match> accepted;
  for (const auto& m : terms) {
    const bool overlaps = std::any_of(accepted.begin(), accepted.end(), [&](const auto& a) {
      return m.span.start < a.span.end && a.span.start < m.span.end;
    });
    if (overlaps) continue;
    if (negatable(m.dimension)) {
      const auto* s = sentence_of(m.span.start);
      if (s && negated(text, *s, m.span)) continue;
    }
    accepted.push_back(m);
  }
  std::sort(accepted.begin(), accepted.end(), [](const auto& a, const auto& b) { return a.span.start < b.span.start; });

  for (auto d : kDimensions) {
    if (d == Dimension::OverallHealth) continue;
    std::vector<Span> spans;
    for (const auto& m : accepted) {
      if (m.dimension != d) continue;
      if (!spans.empty()) {
        auto gap = text.substr(spans.back().end, m.span.start - spans.back().end);
        if (std::all_of(gap.begin(), gap.end(), is_space)) {
          spans.back().end = m.span.end;
          continue;
        }
      }
      spans.push_back(m.span);
    }
    std::vector<std::string> phrases;
    for (const auto& s : spans) {
      auto p = render_phrase(text.substr(s.start, s.length()));
      if (std::find(phrases.begin(), phrases.end(), p) == phrases.end()) phrases.push_back(std::move(p));
    }
    if (phrases.empty()) continue;
    std::string joined;
    for (const auto& p : phrases) joined += (joined.empty() ? "" : "; ") + p;
    answers[ordinal(d)] = DimensionAnswer::from_text(d, std::move(joined), std::move(spans));
  }

  std::vector<Span> health_spans;
  std::vector<std::string> clauses;
  for (const auto& s : sentences) {
    const bool hit = std::any_of(status.begin(), status.end(), [&](const auto& m) {
      return m.span.start >= s.span.start && m.span.end <= s.span.end;
    });
    if (!hit) continue;
    auto c = condense_clause(s.text);
    if (c.empty()) continue;
    health_spans.push_back(s.span);
    if (std::find(clauses.begin(), clauses.end(), c) == clauses.end()) clauses.push_back(std::move(c));
  }
  if (!clauses.empty()) {
    std::string joined;
    for (const auto& c : clauses) joined += (joined.empty() ? "" : "; ") + c;
    answers[ordinal(Dimension::OverallHealth)] =
        DimensionAnswer::from_text(Dimension::OverallHealth, std::move(joined), std::move(health_spans));
  }
  return answers;
}

// ---------------------------------------------------------------------------

std::string segmentation_prompt(const RawReport& report) {
  std::string p =
      "Split the radiology report below into six dimensions, ordered from global to fine-grained:\n"
      "modality, organ, size, abnormal_location, symptoms, overall_health.\n"
      "Answer with exactly six lines, one per dimension, in this order and format:\n";
  for (auto d : kDimensions) p += std::string(key(d)) + ": <answer>\n";
  p += "Use only information stated in the report. When the report says nothing about a dimension, answer \"";
  p += kNotMentioned;
  p += "\"\n\nReport:\n";
  p += report.report_text;
  p += "\n";
  return p;
}

DimensionAnswers parse_tagged_block(std::string_view response) {
  std::array<std::optional<std::string>, kDimensionCount> seen;
  std::size_t b = 0;
  while (b <= response.size()) {
    auto e = response.find('\n', b);
    if (e == std::string_view::npos) e = response.size();
    auto line = trim(response.substr(b, e - b));
    b = e + 1;
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    auto k = lower(trim(line.substr(0, colon)));
    std::replace(k.begin(), k.end(), ' ', '_');
    if (k == "overall_health_condition") k = "overall_health";
    auto d = parse_dimension(k);
    if (!d) continue;
    if (seen[ordinal(*d)]) throw SchemaViolationError("dimension '" + k + "' appears twice", std::string(response));
    seen[ordinal(*d)] = trim(line.substr(colon + 1));
  }
  DimensionAnswers out;
  for (auto d : kDimensions) {
    if (!seen[ordinal(d)])
      throw SchemaViolationError("response lacks dimension '" + std::string(key(d)) + "'", std::string(response));
    out[ordinal(d)] = DimensionAnswer::from_text(d, *seen[ordinal(d)]);
  }
  return out;
}

SegmentationBackend::Output LlmSegmentationBackend::segment(const RawReport& report) {
  auto raw = client_->complete(segmentation_prompt(report));
  auto answers = parse_tagged_block(raw);
  return {std::move(answers), std::move(raw)};
}

HierarchicalRecord segment_report(const RawReport& report, SegmentationBackend& backend) {
  if (trim(report.report_text).empty()) throw ValidationError(report.report_id + ": empty report text");
  SegmentationBackend::Output out;
  try {
    out = backend.segment(report);
  } catch (const RetriableBackendError& e) {
    throw RetriableBackendError(report.report_id + ": " + e.what(), report.report_id);
  }
  HierarchicalRecord rec;
  rec.report_id = report.report_id;
  rec.answers = std::move(out.answers);
  rec.backend_id = backend.id();
  rec.raw_response = std::move(out.raw_response);
  validate(rec, report.report_text.size());
  return rec;
}

}  // namespace comt
