#include "comt/medihall.hpp"

#include <atomic>
#include <cctype>
#include <exception>
#include <mutex>
#include <regex>
#include <thread>

namespace comt {

std::string_view to_string(Label l) noexcept {
  switch (l) {
    case Label::Catastrophic: return "Catastrophic";
    case Label::Critical: return "Critical";
    case Label::Attribute: return "Attribute";
    case Label::Correct: return "Correct";
  }
  return "Correct";
}

std::optional<Label> parse_label(std::string_view s) noexcept {
  for (auto l : kLabels) {
    const auto name = to_string(l);
    if (name.size() != s.size()) continue;
    bool eq = true;
    for (std::size_t i = 0; i < s.size() && eq; ++i)
      eq = std::tolower(static_cast<unsigned char>(s[i])) == std::tolower(static_cast<unsigned char>(name[i]));
    if (eq) return l;
  }
  return std::nullopt;
}

std::string_view to_string(ResolutionKind k) noexcept {
  switch (k) {
    case ResolutionKind::Agreed: return "agreed";
    case ResolutionKind::Adjudicated: return "adjudicated";
    case ResolutionKind::Pending: return "pending";
  }
  return "pending";
}

ResolveOutcome resolve(const JudgeVerdict& a, const JudgeVerdict& b, const std::optional<Adjudication>& adjudication) {
  if (a.judge_id == b.judge_id) throw ValidationError("both verdicts come from judge '" + a.judge_id + "'");
  if (a.sentence_index != b.sentence_index)
    throw ValidationError("verdicts refer to different sentences (" + std::to_string(a.sentence_index) + " vs " +
                          std::to_string(b.sentence_index) + ")");
  ResolveOutcome out;
  if (a.label && b.label && *a.label == *b.label) {
    out.resolution = {ResolutionKind::Agreed, a.label, {}};
    if (adjudication)
      out.warning = "sentence " + std::to_string(a.sentence_index) + ": judges agree on " +
                    std::string(to_string(*a.label)) + "; adjudication by '" + adjudication->adjudicator_id +
                    "' ignored";
    return out;
  }
  if (adjudication) {
    if (adjudication->adjudicator_id.empty()) throw ValidationError("adjudication needs an adjudicator id");
    out.resolution = {ResolutionKind::Adjudicated, adjudication->label, adjudication->adjudicator_id};
  }
  return out;
}

std::string SentenceJudgment::id() const { return report_id + "#s" + std::to_string(sentence.index); }

bool SentenceJudgment::disagreement() const noexcept {
  return !(verdicts[0].label && verdicts[1].label && *verdicts[0].label == *verdicts[1].label);
}

std::optional<double> SentenceJudgment::score() const {
  if (!resolution.resolved() || !resolution.label) return std::nullopt;
  return weight(*resolution.label);
}

Json to_json(const SentenceJudgment& j) {
  Json verdicts = Json::array();
  for (const auto& v : j.verdicts)
    verdicts.push_back({{"judge_id", v.judge_id},
                        {"label", v.label ? Json(std::string(to_string(*v.label))) : Json(nullptr)},
                        {"rationale", v.rationale},
                        {"raw_response", v.raw_response}});
  const auto s = j.score();
  return {{"id", j.id()},
          {"parent", j.report_id},
          {"report_id", j.report_id},
          {"sentence",
           {{"index", j.sentence.index},
            {"text", j.sentence.text},
            {"span", {j.sentence.span.start, j.sentence.span.end}}}},
          {"verdicts", verdicts},
          {"resolution",
           {{"kind", std::string(to_string(j.resolution.kind))},
            {"label", j.resolution.label ? Json(std::string(to_string(*j.resolution.label))) : Json(nullptr)},
            {"adjudicator_id", j.resolution.adjudicator_id}}},
          {"score", s ? Json(*s) : Json(nullptr)},
          {"version", j.version}};
}

namespace {

std::optional<Label> label_field(const Json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  const auto l = parse_label(j[key].get<std::string>());
  if (!l) throw ValidationError(std::string("unknown label in field '") + key + "': " + j[key].get<std::string>());
  return l;
}

}  // namespace

SentenceJudgment sentence_judgment_from_json(const Json& j) {
  try {
    SentenceJudgment out;
    out.report_id = j.at("report_id").get<std::string>();
    const auto& s = j.at("sentence");
    out.sentence.index = s.at("index").get<std::size_t>();
    out.sentence.text = s.at("text").get<std::string>();
    out.sentence.span = {s.at("span").at(0).get<std::size_t>(), s.at("span").at(1).get<std::size_t>()};
    const auto& vs = j.at("verdicts");
    if (!vs.is_array() || vs.size() != 2) throw ValidationError(out.report_id + ": expected exactly two verdicts");
    for (std::size_t i = 0; i < 2; ++i) {
      auto& v = out.verdicts[i];
      v.sentence_index = out.sentence.index;
      v.judge_id = vs[i].at("judge_id").get<std::string>();
      v.label = label_field(vs[i], "label");
      v.rationale = vs[i].value("rationale", "");
      v.raw_response = vs[i].value("raw_response", "");
    }
    const auto& r = j.at("resolution");
    const auto kind = r.at("kind").get<std::string>();
    if (kind == "agreed")
      out.resolution.kind = ResolutionKind::Agreed;
    else if (kind == "adjudicated")
      out.resolution.kind = ResolutionKind::Adjudicated;
    else if (kind == "pending")
      out.resolution.kind = ResolutionKind::Pending;
    else
      throw ValidationError("unknown resolution kind '" + kind + "'");
    out.resolution.label = label_field(r, "label");
    out.resolution.adjudicator_id = r.value("adjudicator_id", "");
    if (out.resolution.resolved() != out.resolution.label.has_value())
      throw ValidationError(out.id() + ": resolution label does not match its kind");
    out.version = j.at("version").get<std::int64_t>();
    return out;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed judgment record: ") + e.what());
  }
}

MediHallResult medihall_score(const std::vector<SentenceJudgment>& judgments) {
  if (judgments.empty()) throw ValidationError("MediHall score is undefined for a report with no sentences");
  MediHallResult out;
  out.report_id = judgments.front().report_id;
  out.n = judgments.size();
  double sum = 0.0;
  for (const auto& j : judgments) {
    if (j.report_id != out.report_id)
      throw ValidationError("judgments mix reports '" + out.report_id + "' and '" + j.report_id + "'");
    const auto s = j.score();
    out.sentence_scores.push_back(s);
    if (!s) {
      ++out.pending_count;
      continue;
    }
    ++out.counts[*j.resolution.label];
    sum += *s;
  }
  if (out.pending_count == 0) out.score = sum / static_cast<double>(out.n);
  return out;
}

Json to_json(const MediHallResult& r) {
  Json scores = Json::array();
  for (const auto& s : r.sentence_scores) scores.push_back(s ? Json(*s) : Json(nullptr));
  Json counts = Json::object();
  for (auto l : kLabels) {
    auto it = r.counts.find(l);
    counts[std::string(to_string(l))] = it == r.counts.end() ? 0 : it->second;
  }
  return {{"report_id", r.report_id},   {"n", r.n},
          {"sentence_scores", scores},  {"score", r.score ? Json(*r.score) : Json(nullptr)},
          {"counts", counts},           {"pending_count", r.pending_count},
          {"final", r.final()}};
}

double corpus_medihall(const std::vector<MediHallResult>& results) {
  if (results.empty()) throw ValidationError("no reports to aggregate");
  std::vector<std::string> pending;
  for (const auto& r : results)
    if (!r.final()) pending.push_back(r.report_id);
  if (!pending.empty()) {
    std::string list;
    for (const auto& id : pending) list += (list.empty() ? "" : ", ") + id;
    throw PendingJudgmentsError(std::to_string(pending.size()) + " report(s) still have pending sentences: " + list,
                                pending);
  }
  double sum = 0.0;
  for (const auto& r : results) sum += *r.score;
  return sum / static_cast<double>(results.size());
}

std::vector<MediHallResult> score_reports(const std::vector<SentenceJudgment>& judgments) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<SentenceJudgment>> groups;
  for (const auto& j : judgments) {
    auto [it, inserted] = groups.try_emplace(j.report_id);
    if (inserted) order.push_back(j.report_id);
    it->second.push_back(j);
  }
  std::vector<MediHallResult> out;
  for (const auto& id : order) {
    auto& g = groups[id];
    std::stable_sort(g.begin(), g.end(),
                     [](const auto& a, const auto& b) { return a.sentence.index < b.sentence.index; });
    out.push_back(medihall_score(g));
  }
  return out;
}

double agreement_rate(const std::vector<SentenceJudgment>& judgments) {
  if (judgments.empty()) return 0.0;
  std::size_t agree = 0;
  for (const auto& j : judgments)
    if (!j.disagreement()) ++agree;
  return static_cast<double>(agree) / static_cast<double>(judgments.size());
}

// ---------------------------------------------------------------------------

double human_score(const HumanEvalTally& t) {
  if (t.num_data <= 0) throw ValidationError(t.clinician_id + ": num_data must be positive");
  for (auto [name, v] : {std::pair{"num_faith", t.num_faith}, {"num_com", t.num_com}, {"num_flu", t.num_flu}})
    if (v < 0 || v > t.num_data)
      throw ValidationError(t.clinician_id + ": " + name + " = " + std::to_string(v) + " outside [0, " +
                            std::to_string(t.num_data) + "]");
  return static_cast<double>(t.num_faith + t.num_com + t.num_flu) / static_cast<double>(3 * t.num_data);
}

HumanScoreSummary human_scores(const std::vector<HumanEvalTally>& tallies) {
  if (tallies.empty()) throw ValidationError("no tallies given");
  HumanScoreSummary out;
  double sum = 0.0;
  for (const auto& t : tallies) {
    const double s = human_score(t);
    out.per_clinician.emplace_back(t.clinician_id, s);
    sum += s;
  }
  out.mean = sum / static_cast<double>(tallies.size());
  return out;
}

HumanEvalTally human_tally_from_json(const Json& j) {
  try {
    return {j.value("clinician_id", ""), j.at("num_faith").get<std::int64_t>(), j.at("num_com").get<std::int64_t>(),
            j.at("num_flu").get<std::int64_t>(), j.at("num_data").get<std::int64_t>()};
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed tally: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

std::string judge_prompt(const Sentence& sentence, const RawReport& reference) {
  return "You are checking one sentence of a generated radiology report against the reference report.\n"
         "Classify the sentence with exactly one label:\n"
         "  Catastrophic - it fabricates a disease the reference does not mention, or stands in for a disease the "
         "reference reports\n"
         "  Critical - it names the wrong type of disease\n"
         "  Attribute - the disease is right but an attribute (size, shape, location, severity) is wrong\n"
         "  Correct - consistent with the reference; meta-text such as comparisons to prior studies is Correct "
         "unless it contradicts the reference\n\n"
         "Reference report:\n" +
         reference.report_text + "\n\nSentence:\n" + sentence.text +
         "\n\nAnswer in this format:\nLABEL: <Catastrophic|Critical|Attribute|Correct>\nRATIONALE: <one line>\n";
}

ParsedJudgeResponse parse_judge_response(std::string_view response) {
  static const std::regex label_re(R"(LABEL\s*:\s*\**\s*([A-Za-z]+))", std::regex::icase);
  static const std::regex rationale_re(R"(RATIONALE\s*:\s*([^\r\n]*))", std::regex::icase);
  ParsedJudgeResponse out;
  const std::string text(response);
  std::smatch m;
  if (std::regex_search(text, m, label_re)) out.label = parse_label(m[1].str());
  if (std::regex_search(text, m, rationale_re)) out.rationale = trim(m[1].str());
  return out;
}

JudgeVerdict LlmJudge::judge(const std::string&, const Sentence& sentence, const RawReport& reference) {
  JudgeVerdict v;
  v.sentence_index = sentence.index;
  v.judge_id = id_;
  v.raw_response = client_.complete(judge_prompt(sentence, reference));
  auto parsed = parse_judge_response(v.raw_response);
  if (!parsed.label) {
    const auto retry = client_.complete(
        "Your previous answer could not be read:\n" + v.raw_response +
        "\n\nReply again using exactly this format and nothing else:\nLABEL: "
        "<Catastrophic|Critical|Attribute|Correct>\nRATIONALE: <one line>\n");
    v.raw_response += "\n--- reformat ---\n" + retry;
    parsed = parse_judge_response(retry);
    if (!parsed.label)
      throw JudgeParseError(id_ + ": no label in response for sentence " + std::to_string(sentence.index),
                            v.raw_response);
  }
  v.label = parsed.label;
  v.rationale = std::move(parsed.rationale);
  return v;
}

JudgeVerdict ConstantJudge::judge(const std::string&, const Sentence& sentence, const RawReport&) {
  return {sentence.index, label_, id_, "constant", std::string(to_string(label_))};
}

std::vector<SentenceJudgment> judge_report(const RawReport& candidate, const RawReport& reference, Judge& first,
                                           Judge& second, const JudgeRunOptions& options) {
  if (first.id() == second.id()) throw ValidationError("the two judge seats need distinct ids");
  const auto sentences = split_sentences(candidate.report_text);
  std::vector<SentenceJudgment> out(sentences.size());
  const std::size_t tasks = sentences.size() * 2;

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks; t = next++) {
      const auto& s = sentences[t / 2];
      Judge& judge = t % 2 == 0 ? first : second;
      auto& slot = out[t / 2].verdicts[t % 2];
      try {
        slot = judge.judge(candidate.report_id, s, reference);
      } catch (const JudgeParseError& e) {
        slot = {s.index, std::nullopt, judge.id(), e.what(), e.raw_response()};
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = tasks;
      }
    }
  };
  const auto workers = std::min(std::max<std::size_t>(1, options.max_in_flight), tasks);
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < workers; ++i) pool.emplace_back(worker);
  if (tasks > 0) worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  for (std::size_t i = 0; i < sentences.size(); ++i) {
    auto& j = out[i];
    j.report_id = candidate.report_id;
    j.sentence = sentences[i];
    j.resolution = resolve(j.verdicts[0], j.verdicts[1], std::nullopt).resolution;
  }
  return out;
}

}  // namespace comt
