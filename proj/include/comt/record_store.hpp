#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "comt/jsonl.hpp"

namespace comt {

/// Pipeline stages, each persisted as one line-delimited file.
enum class Stage { Raw, Decomposed, Verified, Chained, Judgments, Decisions };

inline constexpr Stage kAllStages[] = {Stage::Raw,     Stage::Decomposed, Stage::Verified,
                                       Stage::Chained, Stage::Judgments,  Stage::Decisions};

std::string_view to_string(Stage s) noexcept;
std::optional<Stage> parse_stage(std::string_view s) noexcept;

/// Stages whose ids a record of `s` may name as its parent. Empty for Raw.
std::vector<Stage> upstream_stages(Stage s);

/// Field names every record of `s` must carry (beyond `id`, and `parent`
/// for derived stages).
const std::vector<std::string>& required_fields(Stage s);

struct StageSummary {
  std::size_t count = 0;
  std::string checksum;  // FNV-1a 64 over the stage file bytes, hex
};

struct OpenOptions {
  bool writable = false;
  bool create = false;
};

/// Test hook: stop an append after `records_before_crash` whole records,
/// leaving `torn_bytes` of the next record on disk, then throw.
struct CrashInjection {
  std::size_t records_before_crash = 0;
  std::size_t torn_bytes = 0;
};

class SimulatedCrash : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Append-only record store rooted at a directory.
///
/// Layout: `<root>/<stage>.jsonl` per stage plus `<root>/manifest.json`.
/// Every record is a JSON object with a string `id`; records of derived
/// stages also carry `parent`, the id of a record in an upstream stage.
/// A record is visible only once its terminating newline is on disk, so an
/// interrupted append never exposes a partial record; a writable open trims
/// any torn tail left behind by a crash.
///
/// At most one writable handle may exist per root (advisory file lock).
/// Read-only handles and the free read functions never take the lock.
class RecordStore {
 public:
  static RecordStore open(const std::filesystem::path& root, OpenOptions options);

  RecordStore(RecordStore&&) noexcept;
  RecordStore& operator=(RecordStore&&) noexcept;
  RecordStore(const RecordStore&) = delete;
  RecordStore& operator=(const RecordStore&) = delete;
  ~RecordStore();

  const std::filesystem::path& root() const noexcept { return root_; }
  bool writable() const noexcept { return lock_fd_ >= 0; }

  /// Validate and durably append `records` in order. Returns the count
  /// written. Throws SchemaError (stage + field) or LineageError before any
  /// byte is written.
  std::size_t append(Stage stage, const std::vector<Json>& records);

  std::size_t append(Stage stage, const std::vector<Json>& records, const CrashInjection& crash);

  /// All visible records of a stage in append order.
  std::vector<Json> read(Stage stage) const;

  /// The last record appended for each id, ordered by first appearance.
  std::vector<Json> read_latest(Stage stage) const;

  bool contains(Stage stage, const std::string& id) const;

  std::map<Stage, StageSummary> manifest() const;

 private:
  RecordStore(std::filesystem::path root, int lock_fd);

  void ensure_index(Stage stage) const;
  void write_manifest() const;

  std::filesystem::path root_;
  int lock_fd_ = -1;
  mutable std::map<Stage, std::map<std::string, std::size_t>> id_index_;
};

std::filesystem::path stage_path(const std::filesystem::path& root, Stage stage);

/// Read every whole record of a stage file; a trailing line without its
/// newline is ignored.
std::vector<Json> read_stage_file(const std::filesystem::path& path);

}  // namespace comt
