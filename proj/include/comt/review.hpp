#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "comt/decompose.hpp"
#include "comt/jsonl.hpp"
#include "comt/medihall.hpp"
#include "comt/record_store.hpp"

namespace comt {

enum class ItemKind { SegmentationRound1, SegmentationRound2, Adjudication };
inline constexpr std::array<ItemKind, 3> kItemKinds = {ItemKind::SegmentationRound1, ItemKind::SegmentationRound2,
                                                       ItemKind::Adjudication};

std::string_view to_string(ItemKind k) noexcept;
std::optional<ItemKind> parse_item_kind(std::string_view s) noexcept;
/// "segmentation_round1, segmentation_round2, adjudication"
std::string allowed_item_kinds();

enum class ItemState { Pending, Done };
std::string_view to_string(ItemState s) noexcept;

/// Item ids: "seg1:<report_id>", "seg2:<report_id>", "adj:<report_id>#s<n>".
struct ReviewItem {
  std::string item_id;
  ItemKind kind = ItemKind::SegmentationRound1;
  std::int64_t version = 0;  // version of the underlying record
  ItemState state = ItemState::Pending;
  std::size_t seq = 0;  // creation order within the kind
  Json payload;
};

Json to_json(const ReviewItem& item);

struct QueuePage {
  std::vector<ReviewItem> items;
  std::optional<std::string> next_cursor;
};

struct KindProgress {
  std::size_t pending = 0;
  std::size_t done = 0;
  friend bool operator==(const KindProgress&, const KindProgress&) = default;
};

using Progress = std::map<ItemKind, KindProgress>;
Json to_json(const Progress& p);

struct ServiceConfig {
  std::set<std::string> reviewers;  // empty: any non-empty id is accepted
  std::size_t default_page_size = 50;
  std::size_t max_page_size = 500;
};

/// Reviewer list file: JSON `{"reviewers": [...]}` or one id per line.
std::set<std::string> load_reviewers(const std::filesystem::path& path);

/// Review queues over a writable record store.
///
/// Reads work on an immutable snapshot and never wait for a write in
/// progress. Writes are serialized; each decision names the version it was
/// made against and is refused with ConflictError if the item moved on or is
/// already done, so a retried request is applied at most once.
class ReviewService {
 public:
  ReviewService(RecordStore& store, ServiceConfig config);

  QueuePage list_queue(ItemKind kind, const std::optional<std::string>& cursor,
                       std::optional<std::size_t> limit = std::nullopt) const;
  ReviewItem get_item(const std::string& item_id) const;

  /// Segmentation: `{"replacements": {"<dimension>": "<text>", ...}}` (empty
  /// or absent means accept all). Adjudication: `{"label": "<Label>"}`.
  ReviewItem submit_decision(const std::string& item_id, std::int64_t version, const Json& decision,
                             const std::string& reviewer_id);

  /// Move every record that finished round 1 into the round-2 queue.
  /// Returns how many were promoted.
  std::size_t advance_round(const std::string& reviewer_id);

  Progress progress() const;

  /// Throws ValidationError for an unknown or empty reviewer id.
  void check_reviewer(const std::string& reviewer_id) const;

  struct State;

 private:
  std::shared_ptr<const State> snapshot() const;
  void publish(std::shared_ptr<const State> next);

  RecordStore& store_;
  ServiceConfig config_;
  mutable std::mutex snapshot_mu_;
  std::shared_ptr<const State> state_;
  std::mutex write_mu_;
};

/// Progress recomputed from the store files alone.
Progress progress_from_store(const std::filesystem::path& store_root);

}  // namespace comt
