#include "comt/record_store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "comt/errors.hpp"
#include "comt/rng.hpp"

namespace comt {

namespace {

enum class FieldType { String, Array, Object, Number, Any };

struct FieldSpec {
  std::string name;
  FieldType type;
};

const std::vector<FieldSpec>& field_specs(Stage s) {
  static const std::vector<FieldSpec> raw = {{"report_id", FieldType::String},
                                             {"split", FieldType::String},
                                             {"image_refs", FieldType::Array},
                                             {"report_text", FieldType::String},
                                             {"source", FieldType::String}};
  static const std::vector<FieldSpec> hierarchical = {{"report_id", FieldType::String},
                                                      {"answers", FieldType::Array},
                                                      {"backend_id", FieldType::String},
                                                      {"verification", FieldType::String},
                                                      {"version", FieldType::Number}};
  static const std::vector<FieldSpec> chained = {{"report_id", FieldType::String},
                                                 {"dimension", FieldType::String},
                                                 {"prelude", FieldType::Array},
                                                 {"question_text", FieldType::String},
                                                 {"answer_text", FieldType::String},
                                                 {"serialized_prompt", FieldType::String},
                                                 {"template_version", FieldType::String}};
  static const std::vector<FieldSpec> judgments = {{"report_id", FieldType::String},
                                                   {"sentence", FieldType::Object},
                                                   {"verdicts", FieldType::Array},
                                                   {"resolution", FieldType::Object},
                                                   {"version", FieldType::Number}};
  static const std::vector<FieldSpec> decisions = {
      {"kind", FieldType::String}, {"item_id", FieldType::String}, {"reviewer_id", FieldType::String}};
  switch (s) {
    case Stage::Raw: return raw;
    case Stage::Decomposed:
    case Stage::Verified: return hierarchical;
    case Stage::Chained: return chained;
    case Stage::Judgments: return judgments;
    case Stage::Decisions: return decisions;
  }
  return raw;
}

bool type_ok(const Json& v, FieldType t) {
  switch (t) {
    case FieldType::String: return v.is_string();
    case FieldType::Array: return v.is_array();
    case FieldType::Object: return v.is_object();
    case FieldType::Number: return v.is_number();
    case FieldType::Any: return true;
  }
  return false;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Bytes of the file that form whole records.
std::string visible_bytes(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  const auto last_nl = bytes.rfind('\n');
  if (last_nl == std::string::npos) return {};
  bytes.resize(last_nl + 1);
  return bytes;
}

void write_all(int fd, const char* data, std::size_t size, const std::filesystem::path& path) {
  while (size > 0) {
    const ssize_t w = ::write(fd, data, size);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw IoError("write " + path.string() + ": " + std::strerror(errno));
    }
    data += w;
    size -= static_cast<std::size_t>(w);
  }
}

void trim_torn_tail(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return;
  const auto size = std::filesystem::file_size(path);
  const auto keep = visible_bytes(path).size();
  if (keep != size) std::filesystem::resize_file(path, keep);
}

}  // namespace

std::string_view to_string(Stage s) noexcept {
  switch (s) {
    case Stage::Raw: return "raw";
    case Stage::Decomposed: return "decomposed";
    case Stage::Verified: return "verified";
    case Stage::Chained: return "chained";
    case Stage::Judgments: return "judgments";
    case Stage::Decisions: return "decisions";
  }
  return "raw";
}

std::optional<Stage> parse_stage(std::string_view s) noexcept {
  for (auto st : kAllStages)
    if (to_string(st) == s) return st;
  return std::nullopt;
}

std::vector<Stage> upstream_stages(Stage s) {
  switch (s) {
    case Stage::Raw: return {};
    case Stage::Decomposed: return {Stage::Raw};
    case Stage::Verified: return {Stage::Decomposed};
    case Stage::Chained: return {Stage::Verified, Stage::Decomposed};
    case Stage::Judgments: return {Stage::Raw};
    case Stage::Decisions: return {Stage::Decomposed, Stage::Verified, Stage::Judgments};
  }
  return {};
}

const std::vector<std::string>& required_fields(Stage s) {
  static const auto build = [](Stage st) {
    std::vector<std::string> names;
    for (const auto& f : field_specs(st)) names.push_back(f.name);
    return names;
  };
  static const std::map<Stage, std::vector<std::string>> table = [] {
    std::map<Stage, std::vector<std::string>> t;
    for (auto st : kAllStages) t[st] = build(st);
    return t;
  }();
  return table.at(s);
}

std::filesystem::path stage_path(const std::filesystem::path& root, Stage stage) {
  return root / (std::string(to_string(stage)) + ".jsonl");
}

std::vector<Json> read_stage_file(const std::filesystem::path& path) {
  std::vector<Json> out;
  std::istringstream in(visible_bytes(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(Json::parse(line));
  }
  return out;
}

RecordStore::RecordStore(std::filesystem::path root, int lock_fd) : root_(std::move(root)), lock_fd_(lock_fd) {}

RecordStore::RecordStore(RecordStore&& other) noexcept
    : root_(std::move(other.root_)), lock_fd_(other.lock_fd_), id_index_(std::move(other.id_index_)) {
  other.lock_fd_ = -1;
}

RecordStore& RecordStore::operator=(RecordStore&& other) noexcept {
  if (this != &other) {
    if (lock_fd_ >= 0) ::close(lock_fd_);
    root_ = std::move(other.root_);
    lock_fd_ = other.lock_fd_;
    id_index_ = std::move(other.id_index_);
    other.lock_fd_ = -1;
  }
  return *this;
}

RecordStore::~RecordStore() {
  if (lock_fd_ >= 0) ::close(lock_fd_);  // releases the flock
}

RecordStore RecordStore::open(const std::filesystem::path& root, OpenOptions options) {
  if (!std::filesystem::exists(root)) {
    if (!options.create) throw IoError("store does not exist: " + root.string());
    std::filesystem::create_directories(root);
  }
  if (!std::filesystem::is_directory(root)) throw IoError("store root is not a directory: " + root.string());
  if (!options.writable) return RecordStore(root, -1);

  const auto lock_path = root / "store.lock";
  const int fd = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("cannot open lock file " + lock_path.string() + ": " + std::strerror(errno));
  if (::flock(fd, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd);
    throw LockError("store " + root.string() + " already has a writer");
  }
  RecordStore store(root, fd);
  for (auto st : kAllStages) trim_torn_tail(stage_path(root, st));
  store.write_manifest();
  return store;
}

void RecordStore::ensure_index(Stage stage) const {
  if (id_index_.count(stage)) return;
  auto& idx = id_index_[stage];
  for (const auto& rec : read_stage_file(stage_path(root_, stage))) {
    if (auto it = rec.find("id"); it != rec.end() && it->is_string()) ++idx[it->get<std::string>()];
  }
}

bool RecordStore::contains(Stage stage, const std::string& id) const {
  ensure_index(stage);
  return id_index_.at(stage).count(id) > 0;
}

std::size_t RecordStore::append(Stage stage, const std::vector<Json>& records) {
  return append(stage, records, CrashInjection{records.size(), 0});
}

std::size_t RecordStore::append(Stage stage, const std::vector<Json>& records, const CrashInjection& crash) {
  if (!writable()) throw StateError("store opened read-only");
  const std::string stage_name(to_string(stage));
  const auto ups = upstream_stages(stage);

  std::string payload;
  std::vector<std::size_t> ends;
  for (const auto& rec : records) {
    if (!rec.is_object()) throw SchemaError(stage_name, "<record>", stage_name + ": record is not an object");
    auto id = rec.find("id");
    if (id == rec.end() || !id->is_string() || id->get<std::string>().empty())
      throw SchemaError(stage_name, "id", stage_name + ": missing or invalid field 'id'");
    for (const auto& f : field_specs(stage)) {
      auto it = rec.find(f.name);
      if (it == rec.end() || !type_ok(*it, f.type))
        throw SchemaError(stage_name, f.name, stage_name + ": missing or invalid field '" + f.name + "'");
    }
    if (stage == Stage::Raw) {
      if (rec.at("report_id") != *id)
        throw SchemaError(stage_name, "id", stage_name + ": 'id' must equal 'report_id'");
    } else {
      auto parent = rec.find("parent");
      if (parent == rec.end() || !parent->is_string())
        throw SchemaError(stage_name, "parent", stage_name + ": missing or invalid field 'parent'");
      const auto pid = parent->get<std::string>();
      bool found = false;
      for (auto up : ups) found = found || contains(up, pid);
      if (!found) throw LineageError(stage_name + ": parent '" + pid + "' of '" + id->get<std::string>() + "' not found upstream");
    }
    payload += dump_line(rec);
    payload += '\n';
    ends.push_back(payload.size());
  }

  const auto path = stage_path(root_, stage);
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
  std::size_t written = 0;
  std::size_t offset = 0;
  try {
    for (std::size_t i = 0; i < ends.size(); ++i) {
      if (i == crash.records_before_crash) {
        const auto torn = std::min(crash.torn_bytes, ends[i] - offset - 1);
        write_all(fd, payload.data() + offset, torn, path);
        ::fsync(fd);
        throw SimulatedCrash("simulated crash after " + std::to_string(i) + " records");
      }
      // one write per record: the newline lands together with the body
      write_all(fd, payload.data() + offset, ends[i] - offset, path);
      offset = ends[i];
      ++written;
      ++id_index_[stage][records[i].at("id").get<std::string>()];
    }
    ::fsync(fd);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  write_manifest();
  return written;
}

std::vector<Json> RecordStore::read(Stage stage) const { return read_stage_file(stage_path(root_, stage)); }

std::vector<Json> RecordStore::read_latest(Stage stage) const {
  std::vector<Json> order;
  std::map<std::string, std::size_t> pos;
  for (auto& rec : read(stage)) {
    const auto id = rec.at("id").get<std::string>();
    if (auto it = pos.find(id); it != pos.end()) {
      order[it->second] = std::move(rec);
    } else {
      pos.emplace(id, order.size());
      order.push_back(std::move(rec));
    }
  }
  return order;
}

std::map<Stage, StageSummary> RecordStore::manifest() const {
  std::map<Stage, StageSummary> m;
  for (auto st : kAllStages) {
    const auto bytes = visible_bytes(stage_path(root_, st));
    StageSummary s;
    for (char c : bytes) s.count += (c == '\n');
    s.checksum = hex64(fnv1a64(bytes));
    m[st] = s;
  }
  return m;
}

void RecordStore::write_manifest() const {
  Json stages = Json::object();
  for (const auto& [st, s] : manifest()) stages[std::string(to_string(st))] = {{"count", s.count}, {"checksum", s.checksum}};
  write_text_atomic(root_ / "manifest.json", Json{{"format", "comt-store/1"}, {"stages", stages}}.dump(2) + "\n");
}

}  // namespace comt
