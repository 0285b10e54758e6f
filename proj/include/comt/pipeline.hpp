#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "comt/chain.hpp"
#include "comt/corpus.hpp"
#include "comt/decompose.hpp"
#include "comt/record_store.hpp"

namespace comt {

// Store-level drivers for the batch stages. Each one only adds what is
// missing or changed, so re-running on unchanged inputs appends nothing.

struct IngestSummary {
  std::size_t accepted = 0;
  std::size_t already_present = 0;
  std::vector<RejectedLine> rejects;
};

IngestSummary ingest_corpus(RecordStore& store, const std::filesystem::path& input, std::string_view source_tag);

struct StageRunSummary {
  std::size_t written = 0;
  std::size_t skipped = 0;
  std::vector<std::string> failures;  // "<report_id>: <reason>"
};

/// Segment every raw report that has no decomposed record yet. Schema
/// violations and exhausted retries are recorded per report; the rest of
/// the batch continues.
StageRunSummary decompose_store(RecordStore& store, SegmentationBackend& backend);

/// Latest review state per report: the newest verified version when one
/// exists, else the decomposed record. Ordered by report id.
std::map<std::string, HierarchicalRecord> latest_hierarchical(const RecordStore& store);

/// Chain every chain-eligible record (or every record with
/// `allow_unverified`). A pair is appended only when it differs from the
/// newest stored version of the same id.
StageRunSummary chain_store(RecordStore& store, const TemplateTable& templates, ChainOptions options = {},
                            bool allow_unverified = false);

}  // namespace comt
