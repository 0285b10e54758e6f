#include "comt/pipeline.hpp"

#include "comt/errors.hpp"

namespace comt {

IngestSummary ingest_corpus(RecordStore& store, const std::filesystem::path& input, std::string_view source_tag) {
  auto loaded = load_raw_corpus(input, source_tag);
  IngestSummary out;
  out.rejects = std::move(loaded.rejects);
  std::vector<Json> fresh;
  for (const auto& r : loaded.reports) {
    if (store.contains(Stage::Raw, r.report_id)) {
      ++out.already_present;
      continue;
    }
    fresh.push_back(to_json(r));
  }
  out.accepted = store.append(Stage::Raw, fresh);
  return out;
}

StageRunSummary decompose_store(RecordStore& store, SegmentationBackend& backend) {
  StageRunSummary out;
  std::vector<Json> fresh;
  for (const auto& j : store.read_latest(Stage::Raw)) {
    const auto report = raw_report_from_json(j);
    if (store.contains(Stage::Decomposed, report.report_id)) {
      ++out.skipped;
      continue;
    }
    try {
      fresh.push_back(to_json(segment_report(report, backend)));
    } catch (const SchemaViolationError& e) {
      out.failures.push_back(report.report_id + ": " + e.what());
    } catch (const RetriableBackendError& e) {
      out.failures.push_back(report.report_id + ": " + e.what());
    }
  }
  out.written = store.append(Stage::Decomposed, fresh);
  return out;
}

std::map<std::string, HierarchicalRecord> latest_hierarchical(const RecordStore& store) {
  std::map<std::string, HierarchicalRecord> out;
  for (const auto& j : store.read_latest(Stage::Decomposed)) {
    auto rec = hierarchical_from_json(j);
    out.insert_or_assign(rec.report_id, std::move(rec));
  }
  for (const auto& j : store.read_latest(Stage::Verified)) {
    auto rec = hierarchical_from_json(j);
    out.insert_or_assign(rec.report_id, std::move(rec));
  }
  return out;
}

StageRunSummary chain_store(RecordStore& store, const TemplateTable& templates, ChainOptions options,
                            bool allow_unverified) {
  std::map<std::string, Json> existing;
  for (auto& j : store.read_latest(Stage::Chained)) existing.emplace(j.at("id").get<std::string>(), std::move(j));

  StageRunSummary out;
  std::vector<Json> fresh;
  for (const auto& [id, rec] : latest_hierarchical(store)) {
    if (!allow_unverified && !chain_eligible(rec)) {
      ++out.skipped;
      continue;
    }
    const auto pairs = build_qa_pairs(rec, templates, allow_unverified);
    for (const auto& p : refactor_chain(pairs, templates, options)) {
      auto j = to_json(p, templates.version());
      auto it = existing.find(j.at("id").get<std::string>());
      if (it != existing.end() && it->second == j) continue;
      fresh.push_back(std::move(j));
    }
  }
  out.written = store.append(Stage::Chained, fresh);
  return out;
}

}  // namespace comt
