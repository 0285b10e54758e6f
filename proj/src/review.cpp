#include "comt/review.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "comt/errors.hpp"

namespace comt {

std::string_view to_string(ItemKind k) noexcept {
  switch (k) {
    case ItemKind::SegmentationRound1: return "segmentation_round1";
    case ItemKind::SegmentationRound2: return "segmentation_round2";
    case ItemKind::Adjudication: return "adjudication";
  }
  return "adjudication";
}

std::optional<ItemKind> parse_item_kind(std::string_view s) noexcept {
  for (auto k : kItemKinds)
    if (to_string(k) == s) return k;
  return std::nullopt;
}

std::string allowed_item_kinds() {
  std::string out;
  for (auto k : kItemKinds) out += (out.empty() ? "" : ", ") + std::string(to_string(k));
  return out;
}

std::string_view to_string(ItemState s) noexcept { return s == ItemState::Pending ? "pending" : "done"; }

Json to_json(const ReviewItem& item) {
  return {{"item_id", item.item_id},
          {"kind", std::string(to_string(item.kind))},
          {"version", item.version},
          {"state", std::string(to_string(item.state))},
          {"payload", item.payload}};
}

Json to_json(const Progress& p) {
  Json out = Json::object();
  for (auto k : kItemKinds) {
    auto it = p.find(k);
    const auto kp = it == p.end() ? KindProgress{} : it->second;
    out[std::string(to_string(k))] = {{"pending", kp.pending}, {"done", kp.done}};
  }
  return out;
}

std::set<std::string> load_reviewers(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read reviewer list " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::set<std::string> out;
  const auto j = Json::parse(text, nullptr, false);
  if (!j.is_discarded()) {
    if (!j.is_object() || !j.contains("reviewers") || !j["reviewers"].is_array())
      throw ValidationError(path.string() + ": expected {\"reviewers\": [...]}");
    for (const auto& r : j["reviewers"]) out.insert(r.get<std::string>());
  } else {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      line = trim(line);
      if (!line.empty() && line[0] != '#') out.insert(line);
    }
  }
  if (out.empty()) throw ValidationError(path.string() + ": reviewer list is empty");
  return out;
}

// ---------------------------------------------------------------------------

struct ReviewService::State {
  std::map<std::string, std::string> report_text;
  std::map<std::string, HierarchicalRecord> records;
  std::vector<std::string> record_order;
  std::vector<std::string> promoted;
  std::set<std::string> promoted_set;
  std::map<std::string, SentenceJudgment> judgments;
  std::vector<std::string> judgment_order;
};

namespace {

using State = ReviewService::State;

std::shared_ptr<State> build_state(const RecordStore& store) {
  auto s = std::make_shared<State>();
  for (const auto& j : store.read_latest(Stage::Raw))
    s->report_text[j.at("report_id").get<std::string>()] = j.at("report_text").get<std::string>();
  for (const auto& j : store.read_latest(Stage::Decomposed)) {
    auto rec = hierarchical_from_json(j);
    s->record_order.push_back(rec.report_id);
    s->records.emplace(rec.report_id, std::move(rec));
  }
  for (const auto& j : store.read_latest(Stage::Verified)) {
    auto rec = hierarchical_from_json(j);
    if (!s->records.count(rec.report_id)) s->record_order.push_back(rec.report_id);
    s->records.insert_or_assign(rec.report_id, std::move(rec));
  }
  for (const auto& j : store.read(Stage::Decisions)) {
    if (j.value("kind", "") != "round_advance") continue;
    const auto rid = j.at("parent").get<std::string>();
    if (s->promoted_set.insert(rid).second) s->promoted.push_back(rid);
  }
  for (const auto& j : store.read_latest(Stage::Judgments)) {
    auto sj = sentence_judgment_from_json(j);
    const auto id = sj.id();
    s->judgment_order.push_back(id);
    s->judgments.emplace(id, std::move(sj));
  }
  return s;
}

struct ItemRef {
  ItemKind kind;
  std::string key;  // report id, or judgment id for adjudication
};

std::optional<ItemRef> parse_item_id(const std::string& id) {
  for (auto [prefix, kind] : {std::pair{"seg1:", ItemKind::SegmentationRound1},
                              std::pair{"seg2:", ItemKind::SegmentationRound2},
                              std::pair{"adj:", ItemKind::Adjudication}}) {
    const std::string_view p(prefix);
    if (id.size() > p.size() && id.compare(0, p.size(), p) == 0) return ItemRef{kind, id.substr(p.size())};
  }
  return std::nullopt;
}

std::string item_id(ItemKind kind, const std::string& key) {
  switch (kind) {
    case ItemKind::SegmentationRound1: return "seg1:" + key;
    case ItemKind::SegmentationRound2: return "seg2:" + key;
    case ItemKind::Adjudication: return "adj:" + key;
  }
  return key;
}

std::string text_of(const State& s, const std::string& rid) {
  auto it = s.report_text.find(rid);
  return it == s.report_text.end() ? std::string() : it->second;
}

// nullopt when the key does not name an item of that kind
std::optional<ReviewItem> make_item(const State& s, ItemKind kind, const std::string& key, std::size_t seq) {
  ReviewItem item;
  item.item_id = item_id(kind, key);
  item.kind = kind;
  item.seq = seq;
  if (kind == ItemKind::Adjudication) {
    auto it = s.judgments.find(key);
    if (it == s.judgments.end() || !it->second.disagreement()) return std::nullopt;
    const auto& j = it->second;
    item.version = j.version;
    item.state = j.resolution.resolved() ? ItemState::Done : ItemState::Pending;
    item.payload = {{"judgment", to_json(j)}, {"reference_text", text_of(s, j.report_id)}};
    return item;
  }
  auto it = s.records.find(key);
  if (it == s.records.end()) return std::nullopt;
  if (kind == ItemKind::SegmentationRound2 && !s.promoted_set.count(key)) return std::nullopt;
  const auto& rec = it->second;
  const int round = kind == ItemKind::SegmentationRound1 ? 1 : 2;
  item.version = static_cast<std::int64_t>(rec.version);
  item.state = pending_round(rec) == round ? ItemState::Pending : ItemState::Done;
  item.payload = {{"report_id", rec.report_id}, {"report_text", text_of(s, rec.report_id)}, {"round", round},
                  {"record", to_json(rec)}};
  return item;
}

template <class Fn>
void for_each_item(const State& s, ItemKind kind, Fn&& fn) {
  const auto& order = kind == ItemKind::SegmentationRound1   ? s.record_order
                      : kind == ItemKind::SegmentationRound2 ? s.promoted
                                                             : s.judgment_order;
  for (std::size_t i = 0; i < order.size(); ++i)
    if (auto item = make_item(s, kind, order[i], i + 1)) fn(*item);
}

Progress compute_progress(const State& s) {
  Progress p;
  for (auto k : kItemKinds) {
    auto& kp = p[k];
    for_each_item(s, k, [&](const ReviewItem& item) { ++(item.state == ItemState::Pending ? kp.pending : kp.done); });
  }
  return p;
}

VerificationDecision parse_segmentation_decision(const Json& d) {
  if (!d.is_object()) throw ValidationError("decision must be an object");
  VerificationDecision out;
  if (!d.contains("replacements") || d["replacements"].is_null()) return out;
  const auto& reps = d["replacements"];
  if (!reps.is_object()) throw ValidationError("'replacements' must map dimension names to text");
  for (const auto& [k, v] : reps.items()) {
    const auto dim = parse_dimension(k);
    if (!dim) throw ValidationError("unknown dimension '" + k + "'");
    if (!v.is_string()) throw ValidationError("replacement for '" + k + "' must be a string");
    out.replacements[*dim] = v.get<std::string>();
  }
  return out;
}

Label parse_adjudication_decision(const Json& d) {
  if (!d.is_object() || !d.contains("label") || !d["label"].is_string())
    throw ValidationError("adjudication decision needs a string 'label'");
  const auto l = parse_label(d["label"].get<std::string>());
  if (!l) throw ValidationError("label must be one of Catastrophic, Critical, Attribute, Correct");
  return *l;
}

}  // namespace

ReviewService::ReviewService(RecordStore& store, ServiceConfig config)
    : store_(store), config_(std::move(config)), state_(build_state(store)) {
  if (!store_.writable()) throw StateError("the review service needs a writable store");
  if (config_.default_page_size == 0) config_.default_page_size = 1;
}

std::shared_ptr<const ReviewService::State> ReviewService::snapshot() const {
  std::lock_guard lock(snapshot_mu_);
  return state_;
}

void ReviewService::publish(std::shared_ptr<const State> next) {
  std::lock_guard lock(snapshot_mu_);
  state_ = std::move(next);
}

void ReviewService::check_reviewer(const std::string& reviewer_id) const {
  if (reviewer_id.empty()) throw ValidationError("reviewer id is required");
  if (!config_.reviewers.empty() && !config_.reviewers.count(reviewer_id))
    throw ValidationError("unknown reviewer '" + reviewer_id + "'");
}

QueuePage ReviewService::list_queue(ItemKind kind, const std::optional<std::string>& cursor,
                                    std::optional<std::size_t> limit) const {
  std::size_t after = 0;
  if (cursor && !cursor->empty()) {
    const auto* b = cursor->data();
    const auto* e = b + cursor->size();
    auto [p, ec] = std::from_chars(b, e, after);
    if (ec != std::errc() || p != e) throw ValidationError("malformed cursor '" + *cursor + "'");
  }
  const auto n = limit.value_or(config_.default_page_size);
  if (n == 0) throw ValidationError("limit must be positive");
  const auto page_size = std::min(n, config_.max_page_size);

  QueuePage page;
  bool more = false;
  for_each_item(*snapshot(), kind, [&](const ReviewItem& item) {
    if (item.seq <= after || item.state != ItemState::Pending || more) return;
    if (page.items.size() == page_size) {
      more = true;
      return;
    }
    page.items.push_back(item);
  });
  if (more) page.next_cursor = std::to_string(page.items.back().seq);
  return page;
}

ReviewItem ReviewService::get_item(const std::string& id) const {
  const auto ref = parse_item_id(id);
  if (!ref) throw NotFoundError("no item '" + id + "'");
  const auto s = snapshot();
  const auto& order = ref->kind == ItemKind::SegmentationRound1   ? s->record_order
                      : ref->kind == ItemKind::SegmentationRound2 ? s->promoted
                                                                  : s->judgment_order;
  const auto pos = std::find(order.begin(), order.end(), ref->key);
  if (pos == order.end()) throw NotFoundError("no item '" + id + "'");
  auto item = make_item(*s, ref->kind, ref->key, static_cast<std::size_t>(pos - order.begin()) + 1);
  if (!item) throw NotFoundError("no item '" + id + "'");
  return *item;
}

ReviewItem ReviewService::submit_decision(const std::string& id, std::int64_t version, const Json& decision,
                                          const std::string& reviewer_id) {
  check_reviewer(reviewer_id);
  std::lock_guard lock(write_mu_);
  const auto item = get_item(id);
  if (item.state == ItemState::Done) throw ConflictError(id + " is already decided");
  if (item.version != version)
    throw ConflictError(id + " is at version " + std::to_string(item.version) + ", decision was made against " +
                        std::to_string(version));

  const auto current = snapshot();
  auto next = std::make_shared<State>(*current);
  const auto ref = *parse_item_id(id);
  Json decision_record{{"id", id + "@v" + std::to_string(version)},
                       {"parent", ref.key},
                       {"kind", std::string(to_string(ref.kind))},
                       {"item_id", id},
                       {"reviewer_id", reviewer_id},
                       {"version", version},
                       {"decision", decision}};

  if (ref.kind == ItemKind::Adjudication) {
    const auto label = parse_adjudication_decision(decision);
    auto j = current->judgments.at(ref.key);
    auto outcome = resolve(j.verdicts[0], j.verdicts[1], Adjudication{label, reviewer_id});
    j.resolution = outcome.resolution;
    ++j.version;
    store_.append(Stage::Judgments, {to_json(j)});
    next->judgments[ref.key] = std::move(j);
  } else {
    const auto parsed = parse_segmentation_decision(decision);
    const int round = ref.kind == ItemKind::SegmentationRound1 ? 1 : 2;
    auto rec = submit_verification(current->records.at(ref.key), parsed, reviewer_id, round);
    store_.append(Stage::Verified, {to_json(rec)});
    next->records[ref.key] = std::move(rec);
  }
  store_.append(Stage::Decisions, {decision_record});
  publish(next);
  return get_item(id);
}

std::size_t ReviewService::advance_round(const std::string& reviewer_id) {
  check_reviewer(reviewer_id);
  std::lock_guard lock(write_mu_);
  const auto current = snapshot();
  auto next = std::make_shared<State>(*current);
  std::vector<Json> records;
  for (const auto& rid : current->record_order) {
    if (current->promoted_set.count(rid) || pending_round(current->records.at(rid)) != 2) continue;
    records.push_back({{"id", "seg2:" + rid + "@advance"},
                       {"parent", rid},
                       {"kind", "round_advance"},
                       {"item_id", "seg2:" + rid},
                       {"reviewer_id", reviewer_id}});
    next->promoted.push_back(rid);
    next->promoted_set.insert(rid);
  }
  store_.append(Stage::Decisions, records);
  publish(next);
  return records.size();
}

Progress ReviewService::progress() const { return compute_progress(*snapshot()); }

Progress progress_from_store(const std::filesystem::path& store_root) {
  const auto store = RecordStore::open(store_root, OpenOptions{false, false});
  return compute_progress(*build_state(store));
}

}  // namespace comt
