#include "comt/chain.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "comt/errors.hpp"

namespace comt {

TemplateTable::TemplateTable(std::string version, std::array<Entry, kDimensionCount> entries, std::string report_prompt)
    : version_(std::move(version)), entries_(std::move(entries)), report_prompt_(std::move(report_prompt)) {
  if (version_.empty()) throw ValidationError("template table needs a version");
  for (auto d : kDimensions)
    if (entries_[ordinal(d)].question.empty() || entries_[ordinal(d)].label.empty())
      throw ValidationError("template table lacks a question or label for " + std::string(key(d)));
}

TemplateTable TemplateTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open template table " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  std::array<Entry, kDimensionCount> entries;
  std::array<bool, kDimensionCount> seen{};
  for (const auto& e : j.at("dimensions")) {
    auto d = parse_dimension(e.at("dimension").get<std::string>());
    if (!d) throw ValidationError(path.string() + ": unknown dimension " + e.at("dimension").dump());
    if (seen[ordinal(*d)]) throw ValidationError(path.string() + ": duplicate dimension " + std::string(key(*d)));
    seen[ordinal(*d)] = true;
    entries[ordinal(*d)] = {e.at("question").get<std::string>(), e.at("label").get<std::string>()};
  }
  return TemplateTable(j.at("version").get<std::string>(), std::move(entries), j.value("report_prompt", std::string{}));
}

std::array<QAPair, kDimensionCount> build_qa_pairs(const HierarchicalRecord& record, const TemplateTable& templates,
                                                   bool allow_unverified) {
  validate(record);
  if (!chain_eligible(record) && !allow_unverified)
    throw StateError(record.report_id + ": record is " + std::string(to_string(record.verification)) +
                     "; two review rounds are required before chain construction");
  std::array<QAPair, kDimensionCount> pairs;
  for (auto d : kDimensions)
    pairs[ordinal(d)] = QAPair{record.report_id, d, templates.question(d), record.answers[ordinal(d)].answer_text};
  return pairs;
}

std::string render_prelude_sentence(Dimension d, const std::string& answer, const TemplateTable& templates) {
  std::string s = templates.label(d) + ": " + answer;
  const char last = s.back();
  if (last != '.' && last != '!' && last != '?') s += '.';
  return s;
}

std::vector<ChainedQAPair> refactor_chain(std::span<const QAPair> pairs, const TemplateTable& templates,
                                          ChainOptions options) {
  if (pairs.size() != kDimensionCount)
    throw ValidationError("chain refactoring needs six QA pairs, got " + std::to_string(pairs.size()));
  for (std::size_t k = 0; k < kDimensionCount; ++k) {
    if (ordinal(pairs[k].dimension) != k)
      throw ValidationError("QA pair " + std::to_string(k) + " holds " + std::string(key(pairs[k].dimension)) +
                            "; pairs must cover each dimension once in chain order");
    if (pairs[k].report_id != pairs[0].report_id) throw ValidationError("QA pairs from different reports");
  }

  std::vector<ChainedQAPair> out;
  out.reserve(kDimensionCount);
  std::vector<std::string> prelude;
  std::string prefix;
  for (const auto& p : pairs) {
    out.push_back(ChainedQAPair{p.report_id, p.dimension, prelude, p.question_text, p.answer_text, prefix + p.question_text});
    if (options.include_sentinels || p.answer_text != kNotMentioned) {
      prelude.push_back(p.answer_text);
      prefix += render_prelude_sentence(p.dimension, p.answer_text, templates);
      prefix += ' ';
    }
  }
  return out;
}

Json to_json(const ChainedQAPair& pair, const std::string& template_version) {
  return Json{{"id", pair.report_id + "#" + std::string(key(pair.dimension))},
              {"parent", pair.report_id},
              {"report_id", pair.report_id},
              {"dimension", std::string(key(pair.dimension))},
              {"prelude", pair.prelude},
              {"question_text", pair.question_text},
              {"answer_text", pair.answer_text},
              {"serialized_prompt", pair.serialized_prompt},
              {"template_version", template_version}};
}

ChainedQAPair chained_from_json(const Json& j) {
  try {
    auto d = parse_dimension(j.at("dimension").get<std::string>());
    if (!d) throw ValidationError("unknown dimension in chained record");
    return ChainedQAPair{j.at("report_id").get<std::string>(),
                         *d,
                         j.at("prelude").get<std::vector<std::string>>(),
                         j.at("question_text").get<std::string>(),
                         j.at("answer_text").get<std::string>(),
                         j.at("serialized_prompt").get<std::string>()};
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed chained record: ") + e.what());
  }
}

std::string_view to_string(EmitMode m) noexcept {
  switch (m) {
    case EmitMode::Chained: return "chained";
    case EmitMode::FlatQa: return "flat-qa";
    case EmitMode::OriginalReport: return "original-report";
  }
  return "chained";
}

std::optional<EmitMode> parse_emit_mode(std::string_view s) noexcept {
  for (auto m : {EmitMode::Chained, EmitMode::FlatQa, EmitMode::OriginalReport})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

EmitResult emit_dataset(const RecordStore& store, const std::filesystem::path& out_dir, const TemplateTable& templates,
                        const EmitOptions& options) {
  std::map<std::string, RawReport> raw;
  for (const auto& j : store.read_latest(Stage::Raw)) {
    auto r = raw_report_from_json(j);
    raw.emplace(r.report_id, std::move(r));
  }

  struct Row {
    std::string report_id;
    std::size_t order;
    Json record;
    Split split;
  };
  std::vector<Row> rows;
  EmitResult result;
  const std::string mode(to_string(options.mode));

  if (options.mode == EmitMode::OriginalReport) {
    for (const auto& [id, r] : raw) {
      rows.push_back({id, 0,
                      Json{{"example_id", id + "#report"},
                           {"report_id", id},
                           {"image_refs", r.image_refs},
                           {"prompt", templates.report_prompt()},
                           {"target", r.report_text},
                           {"dimension", "report"},
                           {"mode", mode},
                           {"template_version", templates.version()}},
                      r.split});
    }
  } else {
    for (const auto& j : store.read_latest(Stage::Chained)) {
      const auto pair = chained_from_json(j);
      if (options.only_dimension && pair.dimension != *options.only_dimension) continue;
      auto it = raw.find(pair.report_id);
      if (it == raw.end()) throw LineageError("chained record for unknown report " + pair.report_id);
      const auto dim = std::string(key(pair.dimension));
      const bool chained = options.mode == EmitMode::Chained;
      rows.push_back({pair.report_id, ordinal(pair.dimension),
                      Json{{"example_id", pair.report_id + "#" + dim},
                           {"report_id", pair.report_id},
                           {"image_refs", it->second.image_refs},
                           {"prompt", chained ? pair.serialized_prompt : pair.question_text},
                           {"target", pair.answer_text},
                           {"dimension", dim},
                           {"mode", mode},
                           {"template_version", j.at("template_version")}},
                      it->second.split});
    }
  }

  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.report_id != b.report_id ? a.report_id < b.report_id : a.order < b.order;
  });
  std::map<Split, std::vector<Json>> by_split{{Split::Train, {}}, {Split::Val, {}}, {Split::Test, {}}};
  for (auto& r : rows) by_split[r.split].push_back(std::move(r.record));
  for (auto& [split, records] : by_split) {
    result.counts[split] = records.size();
    result.total += records.size();
    write_jsonl_atomic(out_dir / (std::string(to_string(split)) + ".jsonl"), records);
  }
  if (result.total == 0)
    result.warnings.push_back("no records to emit in " + mode + " mode; source stage is empty");
  return result;
}

}  // namespace comt
