#include "comt/record_store.hpp"

#include <gtest/gtest.h>

#include "comt/corpus.hpp"
#include "comt/errors.hpp"
#include "test_util.hpp"

namespace comt {
namespace {

using testing::TempDir;

Json raw(const std::string& id, const std::string& text = "Clear lungs.") {
  auto j = to_json(RawReport{id, Split::Train, {id + ".png"}, text, "test"});
  j["id"] = id;
  return j;
}

Json decomposed(const std::string& id, const std::string& parent) {
  return Json{{"id", id},       {"parent", parent},        {"report_id", parent}, {"answers", Json::array()},
              {"backend_id", "x"}, {"verification", "unverified"}, {"version", 0}};
}

TEST(RecordStore, AppendUpdatesManifestCounts) {
  TempDir dir;
  auto store = RecordStore::open(dir.path(), {.writable = true, .create = true});
  EXPECT_EQ(store.append(Stage::Raw, {raw("a"), raw("b"), raw("c")}), 3u);
  EXPECT_EQ(store.manifest().at(Stage::Raw).count, 3u);
  const auto manifest = Json::parse(testing::read_file(dir / "manifest.json"));
  EXPECT_EQ(manifest["stages"]["raw"]["count"], 3);
  EXPECT_EQ(manifest["stages"]["decomposed"]["count"], 0);
}

TEST(RecordStore, RoundTripIsFieldForField) {
  TempDir dir;
  std::vector<RawReport> input = {{"r1", Split::Train, {"x.png", "y.png"}, "The lungs are clear.", "openi"},
                                  {"r2", Split::Test, {}, "Small left effusion. \"quoted\" é", "mimic-cxr"}};
  {
    auto store = RecordStore::open(dir.path(), {.writable = true, .create = true});
    std::vector<Json> recs;
    for (const auto& r : input) {
      auto j = to_json(r);
      j["id"] = r.report_id;
      recs.push_back(j);
    }
    store.append(Stage::Raw, recs);
  }
  auto store = RecordStore::open(dir.path(), {});
  std::vector<RawReport> back;
  for (const auto& j : store.read(Stage::Raw)) back.push_back(raw_report_from_json(j));
  EXPECT_EQ(back, input);
}

TEST(RecordStore, MissingParentIsLineageError) {
  TempDir dir;
  auto store = RecordStore::open(dir.path(), {.writable = true, .create = true});
  store.append(Stage::Raw, {raw("a")});
  EXPECT_NO_THROW(store.append(Stage::Decomposed, {decomposed("a", "a")}));
  EXPECT_THROW(store.append(Stage::Decomposed, {decomposed("zz", "zz")}), LineageError);
  EXPECT_EQ(store.read(Stage::Decomposed).size(), 1u);
}

TEST(RecordStore, SchemaMismatchNamesStageAndField) {
  TempDir dir;
  auto store = RecordStore::open(dir.path(), {.writable = true, .create = true});
  auto bad = raw("a");
  bad.erase("split");
  try {
    store.append(Stage::Raw, {raw("ok"), bad});
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.stage(), "raw");
    EXPECT_EQ(e.field(), "split");
  }
  // validation happens before any byte is written
  EXPECT_TRUE(store.read(Stage::Raw).empty());
}

TEST(RecordStore, CrashAfterTwoOfThreeLeavesWholeRecordPrefix) {
  TempDir dir;
  {
    auto store = RecordStore::open(dir.path(), {.writable = true, .create = true});
    EXPECT_THROW(store.append(Stage::Raw, {raw("a"), raw("b"), raw("c")}, CrashInjection{2, 17}), SimulatedCrash);
  }
  // the torn tail is invisible to readers even before recovery
  EXPECT_EQ(RecordStore::open(dir.path(), {}).read(Stage::Raw).size(), 2u);
  auto store = RecordStore::open(dir.path(), {.writable = true});
  auto recs = store.read(Stage::Raw);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[1]["id"], "b");
  EXPECT_EQ(store.manifest().at(Stage::Raw).count, 2u);
  // appending after recovery continues cleanly
  store.append(Stage::Raw, {raw("c")});
  EXPECT_EQ(store.read(Stage::Raw).size(), 3u);
}

TEST(RecordStore, CrashAtEveryByteOffsetKeepsPrefix) {
  const auto line = dump_line(raw("x")).size();
  for (std::size_t torn = 0; torn < line; torn += 7) {
    TempDir dir;
    {
      auto store = RecordStore::open(dir.path(), {.writable = true, .create = true});
      store.append(Stage::Raw, {raw("p")});
      EXPECT_THROW(store.append(Stage::Raw, {raw("x")}, CrashInjection{0, torn}), SimulatedCrash);
    }
    auto store = RecordStore::open(dir.path(), {.writable = true});
    ASSERT_EQ(store.read(Stage::Raw).size(), 1u);
  }
}

TEST(RecordStore, SecondWriterIsRefused) {
  TempDir dir;
  auto first = RecordStore::open(dir.path(), {.writable = true, .create = true});
  EXPECT_THROW(RecordStore::open(dir.path(), {.writable = true}), LockError);
  EXPECT_NO_THROW(RecordStore::open(dir.path(), {}));
  { auto moved = std::move(first); }
  EXPECT_NO_THROW(RecordStore::open(dir.path(), {.writable = true}));
}

TEST(RecordStore, ReadLatestKeepsLastVersionInFirstSeenOrder) {
  TempDir dir;
  auto store = RecordStore::open(dir.path(), {.writable = true, .create = true});
  store.append(Stage::Raw, {raw("a"), raw("b")});
  store.append(Stage::Decomposed, {decomposed("a", "a"), decomposed("b", "b")});
  auto updated = decomposed("a", "a");
  updated["version"] = 1;
  store.append(Stage::Decomposed, {updated});
  auto latest = store.read_latest(Stage::Decomposed);
  ASSERT_EQ(latest.size(), 2u);
  EXPECT_EQ(latest[0]["id"], "a");
  EXPECT_EQ(latest[0]["version"], 1);
}

TEST(RecordStore, ReadOnlyHandleCannotAppend) {
  TempDir dir;
  { RecordStore::open(dir.path(), {.writable = true, .create = true}); }
  auto store = RecordStore::open(dir.path(), {});
  EXPECT_THROW(store.append(Stage::Raw, {raw("a")}), StateError);
}

TEST(RecordStore, MissingRootWithoutCreate) {
  EXPECT_THROW(RecordStore::open("/nonexistent/comt-store", {}), IoError);
}

}  // namespace
}  // namespace comt
