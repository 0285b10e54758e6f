#include "comt/inject.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "comt/errors.hpp"
#include "comt/rng.hpp"

namespace comt {

void InjectionSpec::validate() const {
  const auto& r = rates;
  for (double v : {r.catastrophic, r.critical, r.attribute})
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("injection rates must lie in [0,1]");
  if (r.catastrophic + r.critical + r.attribute > 1.0 + 1e-12)
    throw ValidationError("injection rates sum to more than 1");
}

InjectionRates parse_rates(std::string_view text) {
  InjectionRates r;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ValidationError("rate '" + item + "' is not key=value");
    const auto key = trim(item.substr(0, eq));
    double value = 0.0;
    try {
      std::size_t used = 0;
      const auto v = trim(item.substr(eq + 1));
      value = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ValidationError("rate '" + item + "' has no numeric value");
    }
    if (key == "cat" || key == "catastrophic")
      r.catastrophic = value;
    else if (key == "crit" || key == "critical")
      r.critical = value;
    else if (key == "attr" || key == "attribute")
      r.attribute = value;
    else
      throw ValidationError("unknown rate key '" + key + "' (expected cat, crit, attr)");
  }
  return r;
}

InjectionTables InjectionTables::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read injection tables " + path.string());
  const auto j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ValidationError(path.string() + ": not valid JSON");
  try {
    InjectionTables t;
    t.version = j.at("version").get<std::string>();
    t.disease_groups = j.at("disease_groups").get<decltype(t.disease_groups)>();
    t.attribute_groups = j.at("attribute_groups").get<decltype(t.attribute_groups)>();
    t.fabrications = j.at("fabrications").get<std::vector<std::string>>();
    t.normal_statements = j.at("normal_statements").get<std::vector<std::string>>();
    for (const auto* groups : {&t.disease_groups, &t.attribute_groups})
      for (const auto& g : *groups)
        if (g.size() < 2) throw ValidationError(path.string() + ": every swap group needs two or more members");
    if (t.fabrications.size() < 2 || t.normal_statements.size() < 2)
      throw ValidationError(path.string() + ": need at least two fabrications and two normal statements");
    return t;
  } catch (const Json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

Json to_json(const LedgerEntry& e) {
  return {{"id", e.report_id + "#s" + std::to_string(e.sentence_index)},
          {"report_id", e.report_id},
          {"sentence_index", e.sentence_index},
          {"original", e.original},
          {"mutated", e.mutated},
          {"target", std::string(to_string(e.target))},
          {"label", std::string(to_string(e.label))},
          {"mutation", e.mutation},
          {"detail", e.detail}};
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

struct Hit {
  std::size_t pos;
  std::size_t len;
  std::size_t group;
  std::size_t member;
};

// Whole-word, case-insensitive occurrences of any group member.
std::vector<Hit> find_terms(const std::string& text, const std::vector<std::vector<std::string>>& groups) {
  const auto lt = lower(text);
  std::vector<Hit> hits;
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (std::size_t m = 0; m < groups[g].size(); ++m) {
      const auto term = lower(groups[g][m]);
      for (auto p = lt.find(term); p != std::string::npos; p = lt.find(term, p + 1)) {
        const auto e = p + term.size();
        if ((p == 0 || !word_char(lt[p - 1])) && (e == lt.size() || !word_char(lt[e]))) hits.push_back({p, term.size(), g, m});
      }
    }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.pos < b.pos; });
  return hits;
}

std::string swap_term(const std::string& text, const Hit& hit, const std::vector<std::string>& group, SplitMix64& rng,
                      std::string& detail) {
  auto pick = static_cast<std::size_t>(rng.below(group.size() - 1));
  if (pick >= hit.member) ++pick;
  std::string replacement = group[pick];
  if (std::isupper(static_cast<unsigned char>(text[hit.pos])))
    replacement[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(replacement[0])));
  detail = text.substr(hit.pos, hit.len) + " -> " + replacement;
  return text.substr(0, hit.pos) + replacement + text.substr(hit.pos + hit.len);
}

const std::string& pick_other(const std::vector<std::string>& pool, const std::string& avoid, SplitMix64& rng) {
  std::vector<const std::string*> options;
  for (const auto& s : pool)
    if (s != avoid) options.push_back(&s);
  return *options[rng.below(options.size())];
}

Label draw_label(const InjectionRates& r, SplitMix64& rng) {
  const double u = rng.unit();
  if (u < r.catastrophic) return Label::Catastrophic;
  if (u < r.catastrophic + r.critical) return Label::Critical;
  if (u < r.catastrophic + r.critical + r.attribute) return Label::Attribute;
  return Label::Correct;
}

}  // namespace

InjectedReport inject(const RawReport& reference, const InjectionSpec& spec, const InjectionTables& tables) {
  spec.validate();
  const auto sentences = split_sentences(reference.report_text);
  if (sentences.empty()) throw ValidationError(reference.report_id + ": reference has no sentences");

  InjectedReport out;
  out.candidate = reference;
  const auto report_seed = derive_seed(spec.seed, reference.report_id);
  std::string text;
  double sum = 0.0;
  for (const auto& s : sentences) {
    SplitMix64 label_rng(derive_seed(report_seed, 2 * s.index));
    SplitMix64 mut_rng(derive_seed(report_seed, 2 * s.index + 1));

    LedgerEntry e;
    e.report_id = reference.report_id;
    e.sentence_index = s.index;
    e.original = s.text;
    e.target = draw_label(spec.rates, label_rng);
    e.label = e.target;
    e.mutated = s.text;
    e.mutation = "none";

    const auto diseases = find_terms(s.text, tables.disease_groups);
    const auto attributes = find_terms(s.text, tables.attribute_groups);
    if (e.label == Label::Critical && diseases.empty()) {
      e.label = attributes.empty() ? Label::Correct : Label::Attribute;
      out.substitutions.push_back(e.report_id + " sentence " + std::to_string(s.index) +
                                  ": Critical drawn without a disease term, injected " +
                                  std::string(to_string(e.label)));
    }
    if (e.label == Label::Attribute && attributes.empty()) {
      e.label = Label::Correct;
      out.substitutions.push_back(e.report_id + " sentence " + std::to_string(s.index) +
                                  ": Attribute drawn without an attribute token, left Correct");
    }

    switch (e.label) {
      case Label::Catastrophic:
        if (!diseases.empty() && mut_rng.below(2) == 0) {
          e.mutation = "omission";
          e.mutated = pick_other(tables.normal_statements, s.text, mut_rng);
        } else {
          e.mutation = "fabrication";
          e.mutated = pick_other(tables.fabrications, s.text, mut_rng);
        }
        break;
      case Label::Critical: {
        const auto& hit = diseases[mut_rng.below(diseases.size())];
        e.mutation = "disease_swap";
        e.mutated = swap_term(s.text, hit, tables.disease_groups[hit.group], mut_rng, e.detail);
        break;
      }
      case Label::Attribute: {
        const auto& hit = attributes[mut_rng.below(attributes.size())];
        e.mutation = "attribute_swap";
        e.mutated = swap_term(s.text, hit, tables.attribute_groups[hit.group], mut_rng, e.detail);
        break;
      }
      case Label::Correct: break;
    }
    sum += weight(e.label);
    if (!text.empty()) text += ' ';
    text += e.mutated;
    out.ledger.push_back(std::move(e));
  }
  out.candidate.report_text = std::move(text);
  out.expected_score = sum / static_cast<double>(sentences.size());
  return out;
}

std::vector<RawReport> synthetic_corpus(std::size_t count, std::uint64_t seed) {
  static const std::vector<std::string> modality = {"PA and lateral chest radiograph.", "Portable AP chest radiograph.",
                                                    "Frontal and lateral views of the chest."};
  static const std::vector<std::string> size = {"small", "moderate", "large"};
  static const std::vector<std::string> side = {"left", "right"};
  static const std::vector<std::string> level = {"upper", "lower"};
  static const std::vector<std::string> severity = {"mild", "marked"};
  static const std::vector<std::string> shape = {"round", "irregular", "lobulated"};
  static const std::vector<std::string> airspace = {"pneumonia", "atelectasis", "consolidation"};
  static const std::vector<std::string> closing = {"The heart size is normal.", "No acute osseous abnormality.",
                                                   "The mediastinum is unremarkable."};
  auto cap = [](std::string s) {
    s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
  };

  std::vector<RawReport> out;
  for (std::size_t i = 0; i < count; ++i) {
    SplitMix64 rng(derive_seed(seed, i));
    auto any = [&](const std::vector<std::string>& v) -> const std::string& { return v[rng.below(v.size())]; };
    std::vector<std::string> findings = {
        "There is a " + any(size) + " " + any(side) + " pleural effusion.",
        cap(any(severity)) + " " + any(airspace) + " in the " +
            any(side) + " " + any(level) + " lobe.",
        "A " + any(size) + " " + any(shape) + " nodule is seen in the " + any(side) + " " + any(level) + " lobe.",
        "No pneumothorax.",
        "Mild cardiomegaly.",
        "There is " + any(airspace) + " at the " + any(side) + " base.",
    };
    std::string text = any(modality);
    const auto n_findings = 2 + rng.below(3);
    std::vector<std::size_t> idx(findings.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    for (std::size_t k = 0; k < n_findings; ++k) {
      std::swap(idx[k], idx[k + rng.below(idx.size() - k)]);
      text += " " + findings[idx[k]];
    }
    text += " " + any(closing);

    RawReport r;
    char id[32];
    std::snprintf(id, sizeof id, "syn-%05zu", i);
    r.report_id = id;
    r.split = i % 10 == 8 ? Split::Val : (i % 10 == 9 ? Split::Test : Split::Train);
    r.image_refs = {std::string("images/") + id + ".png"};
    r.report_text = std::move(text);
    r.source = "synthetic";
    out.push_back(std::move(r));
  }
  return out;
}

void InjectionLedger::add(const InjectedReport& report) {
  for (const auto& e : report.ledger) {
    const auto key = std::make_pair(e.report_id, e.sentence_index);
    if (!entries_.count(key)) order_.push_back(key);
    entries_[key] = e;
  }
}

const LedgerEntry* InjectionLedger::find(const std::string& report_id, std::size_t sentence_index) const {
  auto it = entries_.find({report_id, sentence_index});
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<Json> InjectionLedger::export_records() const {
  std::vector<Json> out;
  for (const auto& k : order_) out.push_back(to_json(entries_.at(k)));
  return out;
}

JudgeVerdict OracleJudge::judge(const std::string& candidate_report_id, const Sentence& sentence, const RawReport&) {
  const auto* e = ledger_.find(candidate_report_id, sentence.index);
  if (!e)
    throw StateError("oracle judge: no ledger entry for " + candidate_report_id + " sentence " +
                     std::to_string(sentence.index));
  if (e->mutated != sentence.text)
    throw StateError("oracle judge: " + candidate_report_id + " sentence " + std::to_string(sentence.index) +
                     " text differs from the ledger");
  return {sentence.index, e->label, id_, "ledger: " + e->mutation, std::string(to_string(e->label))};
}

bool PipelineReport::confusion_is_identity() const {
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t r = 0; r < 4; ++r)
      if (t != r && confusion[t][r] != 0) return false;
  return true;
}

Json PipelineReport::summary() const {
  Json conf = Json::object();
  for (auto t : kLabels) {
    Json row = Json::object();
    for (auto r : kLabels)
      row[std::string(to_string(r))] = confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(r)];
    conf[std::string(to_string(t))] = row;
  }
  return {{"reports", reports},
          {"sentences", sentences},
          {"pending_sentences", pending_sentences},
          {"agreement_rate", agreement},
          {"expected_corpus_medihall", expected_corpus},
          {"computed_corpus_medihall", computed_corpus ? Json(*computed_corpus) : Json(nullptr)},
          {"pending_report_ids", pending_report_ids},
          {"confusion", conf},
          {"confusion_is_identity", confusion_is_identity()},
          {"mismatches", mismatches},
          {"aggregation", std::string(kCorpusAggregation)},
          {"passed", passed}};
}

PipelineReport validate_pipeline(const std::vector<RawReport>& references, const InjectionSpec& spec,
                                 const InjectionTables& tables, const ValidationOptions& options) {
  PipelineReport rep;
  InjectionLedger ledger;
  for (const auto& r : references) {
    rep.injected.push_back(inject(r, spec, tables));
    ledger.add(rep.injected.back());
  }

  OracleJudge first(ledger, "oracle");
  OracleJudge second_oracle(ledger, "oracle#2");
  ConstantJudge always_correct("always-correct", Label::Correct);
  Judge& second = options.discordant ? static_cast<Judge&>(always_correct) : static_cast<Judge&>(second_oracle);

  std::vector<MediHallResult> results;
  double expected_sum = 0.0;
  for (std::size_t i = 0; i < references.size(); ++i) {
    const auto& inj = rep.injected[i];
    auto judgments = judge_report(inj.candidate, references[i], first, second, options.run);
    if (judgments.size() != inj.ledger.size()) {
      rep.mismatches.push_back(inj.candidate.report_id + ": candidate splits into " + std::to_string(judgments.size()) +
                               " sentences, ledger has " + std::to_string(inj.ledger.size()));
      continue;
    }
    for (const auto& j : judgments) {
      const auto& truth = inj.ledger[j.sentence.index];
      if (j.resolution.resolved()) {
        ++rep.confusion[static_cast<std::size_t>(truth.label)][static_cast<std::size_t>(*j.resolution.label)];
      } else {
        ++rep.pending_sentences;
      }
      const bool mutated = truth.label != Label::Correct;
      if (options.discordant && mutated && j.resolution.resolved())
        rep.mismatches.push_back(j.id() + ": mutated sentence resolved without adjudication");
      if (options.discordant && !mutated && !j.resolution.resolved())
        rep.mismatches.push_back(j.id() + ": untouched sentence left pending");
    }
    auto result = medihall_score(judgments);
    if (result.final() && *result.score != inj.expected_score) {
      std::ostringstream msg;
      msg.precision(17);
      msg << inj.candidate.report_id << ": computed " << *result.score << ", ledger expects " << inj.expected_score;
      rep.mismatches.push_back(msg.str());
    }
    expected_sum += inj.expected_score;
    results.push_back(std::move(result));
    rep.judgments.insert(rep.judgments.end(), judgments.begin(), judgments.end());
  }
  rep.reports = results.size();
  rep.sentences = rep.judgments.size();
  rep.agreement = agreement_rate(rep.judgments);
  if (!results.empty()) rep.expected_corpus = expected_sum / static_cast<double>(results.size());

  bool refused = false;
  try {
    if (!results.empty()) rep.computed_corpus = corpus_medihall(results);
  } catch (const PendingJudgmentsError& e) {
    refused = true;
    rep.pending_report_ids = e.report_ids();
  }

  bool ok = rep.mismatches.empty() && !results.empty();
  if (options.discordant) {
    ok = ok && refused == (rep.pending_sentences > 0);
    if (!refused) ok = ok && rep.computed_corpus && *rep.computed_corpus == rep.expected_corpus;
  } else {
    ok = ok && !refused && rep.confusion_is_identity() && rep.agreement == 1.0 && rep.computed_corpus &&
         *rep.computed_corpus == rep.expected_corpus;
  }
  rep.passed = ok;
  return rep;
}

}  // namespace comt
