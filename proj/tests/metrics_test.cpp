#include <gtest/gtest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "comt/errors.hpp"
#include "comt/metrics.hpp"
#include "comt/rng.hpp"
#include "comt/stemmer.hpp"

using namespace comt;

namespace {

TokenSeq seq(std::vector<std::string> t) {
  TokenSeq s;
  s.tokens = std::move(t);
  return s;
}

// Exhaustive LCS: try every subsequence of `a` (by bitmask), longest first.
std::size_t brute_lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::size_t best = 0;
  for (unsigned mask = 0; mask < (1u << a.size()); ++mask) {
    std::vector<std::string> sub;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (mask & (1u << i)) sub.push_back(a[i]);
    if (sub.size() <= best) continue;
    std::size_t j = 0;
    for (const auto& tok : b)
      if (j < sub.size() && tok == sub[j]) ++j;
    if (j == sub.size()) best = sub.size();
  }
  return best;
}

std::vector<std::string> random_tokens(SplitMix64& rng, std::size_t max_len, std::size_t vocab) {
  std::vector<std::string> out(rng.below(max_len + 1));
  for (auto& t : out) t = std::string(1, static_cast<char>('a' + rng.below(vocab)));
  return out;
}

}  // namespace

TEST(Tokenize, LowercasesAndStripsPunctuation) {
  EXPECT_EQ(normalize_tokenize("The Lungs, are clear.").tokens,
            (std::vector<std::string>{"the", "lungs", "are", "clear"}));
  EXPECT_TRUE(normalize_tokenize("").empty());
  EXPECT_EQ(normalize_tokenize("1.5 cm nodule").tokens, (std::vector<std::string>{"1.5", "cm", "nodule"}));
  EXPECT_EQ(normalize_tokenize("size 3.2x4.0cm.").tokens, (std::vector<std::string>{"size", "3.2x4.0cm"}));
  EXPECT_EQ(normalize_tokenize("end. 5").tokens, (std::vector<std::string>{"end", "5"}));
  EXPECT_EQ(normalize_tokenize("x").normalization_id, kNormalizationId);
}

TEST(Rouge, UnigramAndBigramFixture) {
  const auto ref = normalize_tokenize("the lungs are clear");
  const auto cand = normalize_tokenize("lungs are clear");
  const auto r1 = rouge_n(cand, ref, 1);
  EXPECT_DOUBLE_EQ(r1.precision, 1.0);
  EXPECT_DOUBLE_EQ(r1.recall, 0.75);
  EXPECT_NEAR(r1.f1, 6.0 / 7.0, 1e-12);
  const auto r2 = rouge_n(cand, ref, 2);
  EXPECT_DOUBLE_EQ(r2.precision, 1.0);
  EXPECT_NEAR(r2.recall, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r2.f1, 0.8, 1e-12);
  const auto rl = rouge_l(cand, ref);
  EXPECT_EQ(lcs_length(cand.tokens, ref.tokens), 3u);
  EXPECT_DOUBLE_EQ(rl.precision, 1.0);
  EXPECT_DOUBLE_EQ(rl.recall, 0.75);
  EXPECT_NEAR(rl.f1, 6.0 / 7.0, 1e-12);
}

TEST(Rouge, IdentityDisjointAndDegenerate) {
  const auto a = normalize_tokenize("small left pleural effusion");
  for (int n : {1, 2}) {
    const auto p = rouge_n(a, a, n);
    EXPECT_DOUBLE_EQ(p.f1, 1.0);
    EXPECT_FALSE(p.degenerate);
  }
  EXPECT_DOUBLE_EQ(rouge_l(a, a).f1, 1.0);

  const auto b = normalize_tokenize("heart normal");
  EXPECT_DOUBLE_EQ(rouge_l(a, b).f1, 0.0);
  EXPECT_FALSE(rouge_l(a, b).degenerate);

  const auto one = normalize_tokenize("clear");
  EXPECT_TRUE(rouge_n(one, a, 2).degenerate);
  EXPECT_DOUBLE_EQ(rouge_n(one, a, 2).f1, 0.0);
  EXPECT_TRUE(rouge_l(TokenSeq{}, a).degenerate);
  EXPECT_THROW(rouge_n(a, a, 3), ValidationError);
}

TEST(Rouge, UnigramMatchesLcsWhenOrderAgrees) {
  // Candidate is an in-order subsequence of the reference, so overlap == LCS.
  const auto ref = normalize_tokenize("no focal consolidation effusion or pneumothorax");
  const auto cand = normalize_tokenize("no consolidation or pneumothorax");
  const auto r1 = rouge_n(cand, ref, 1);
  const auto rl = rouge_l(cand, ref);
  EXPECT_DOUBLE_EQ(r1.precision, rl.precision);
  EXPECT_DOUBLE_EQ(r1.recall, rl.recall);
  EXPECT_DOUBLE_EQ(r1.f1, rl.f1);
}

TEST(RougeProperty, LcsAgreesWithExhaustiveSearch) {
  SplitMix64 rng(0x1c5);
  for (int iter = 0; iter < 1500; ++iter) {
    const auto a = random_tokens(rng, 8, 4);
    const auto b = random_tokens(rng, 8, 4);
    ASSERT_EQ(lcs_length(a, b), brute_lcs(a, b)) << "iteration " << iter;
  }
}

TEST(RougeProperty, DeletingMatchedTokenNeverRaisesRecall) {
  SplitMix64 rng(77);
  for (int iter = 0; iter < 1500; ++iter) {
    const auto ref = seq(random_tokens(rng, 10, 5));
    auto cand = seq(random_tokens(rng, 10, 5));
    if (ref.empty() || cand.empty()) continue;
    const double before = rouge_n(cand, ref, 1).recall;
    std::vector<std::size_t> matched;
    for (std::size_t i = 0; i < cand.size(); ++i)
      if (std::find(ref.tokens.begin(), ref.tokens.end(), cand.tokens[i]) != ref.tokens.end()) matched.push_back(i);
    if (matched.empty()) continue;
    cand.tokens.erase(cand.tokens.begin() + static_cast<long>(matched[rng.below(matched.size())]));
    const auto after = rouge_n(cand, ref, 1);
    ASSERT_LE(after.recall, before + 1e-12);
  }
}

TEST(RougeProperty, ScoresStayInUnitInterval) {
  SplitMix64 rng(5);
  for (int iter = 0; iter < 1000; ++iter) {
    const auto a = seq(random_tokens(rng, 12, 6));
    const auto b = seq(random_tokens(rng, 12, 6));
    for (const auto& p : {rouge_n(a, b, 1), rouge_n(a, b, 2), rouge_l(a, b)}) {
      ASSERT_GE(p.precision, 0.0);
      ASSERT_LE(p.precision, 1.0);
      ASSERT_GE(p.recall, 0.0);
      ASSERT_LE(p.recall, 1.0);
      ASSERT_GE(p.f1, 0.0);
      ASSERT_LE(p.f1, 1.0);
    }
    const double m = meteor(a, b);
    ASSERT_GE(m, 0.0);
    ASSERT_LE(m, 1.0);
  }
}

TEST(Meteor, NoOverlapScoresZero) {
  EXPECT_DOUBLE_EQ(meteor(seq({"a", "b"}), seq({"c", "d"})), 0.0);
  EXPECT_DOUBLE_EQ(meteor(TokenSeq{}, seq({"c"})), 0.0);
}

TEST(Meteor, IdentityOfFourTokens) {
  const auto s = seq({"a", "b", "c", "d"});
  const auto d = meteor_detail(s, s);
  EXPECT_EQ(d.matches, 4u);
  EXPECT_EQ(d.chunks, 1u);
  EXPECT_DOUBLE_EQ(d.fmean, 1.0);
  EXPECT_DOUBLE_EQ(d.penalty, 0.0078125);
  EXPECT_DOUBLE_EQ(d.score, 0.9921875);
}

TEST(Meteor, SwappedTailMakesThreeChunks) {
  const auto d = meteor_detail(seq({"a", "b", "d", "c"}), seq({"a", "b", "c", "d"}));
  EXPECT_EQ(d.matches, 4u);
  EXPECT_EQ(d.chunks, 3u);
  EXPECT_DOUBLE_EQ(d.penalty, 0.5 * 27.0 / 64.0);
  EXPECT_DOUBLE_EQ(d.score, 0.7890625);
}

TEST(Meteor, FmeanWeightsRecall) {
  // P = 1, R = 0.5 -> 10PR / (R + 9P) = 5 / 9.5
  const auto d = meteor_detail(seq({"a", "b"}), seq({"a", "b", "c", "d"}));
  EXPECT_NEAR(d.fmean, 5.0 / 9.5, 1e-12);
  EXPECT_EQ(d.chunks, 1u);
}

TEST(Meteor, StemStageMatchesInflections) {
  const auto d = meteor_detail(seq({"effusions", "noted"}), seq({"effusion", "noted"}));
  EXPECT_EQ(d.matches, 2u);
  EXPECT_EQ(d.chunks, 1u);
}

TEST(Meteor, ExactStageWinsOverStem) {
  // "opacity" exact-matches ref[1]; "opacities" then falls to the stem stage
  // but no stem partner is left.
  const auto d = meteor_detail(seq({"opacities", "opacity"}), seq({"x", "opacity"}));
  EXPECT_EQ(d.matches, 1u);
}

TEST(Stemmer, ClassicExamples) {
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"caresses", "caress"}, {"ponies", "poni"},       {"ties", "ti"},          {"caress", "caress"},
      {"cats", "cat"},        {"feed", "feed"},         {"agreed", "agre"},      {"plastered", "plaster"},
      {"bled", "bled"},       {"motoring", "motor"},    {"sing", "sing"},        {"conflated", "conflat"},
      {"troubled", "troubl"}, {"sized", "size"},        {"hopping", "hop"},      {"tanned", "tan"},
      {"falling", "fall"},    {"hissing", "hiss"},      {"fizzed", "fizz"},      {"failing", "fail"},
      {"filing", "file"},     {"happy", "happi"},       {"sky", "sky"},          {"relational", "relat"},
      {"conditional", "condit"}, {"rational", "ration"}, {"generalization", "gener"}, {"controll", "control"},
      {"roll", "roll"},       {"effusions", "effus"},   {"effusion", "effus"},   {"is", "is"},
  };
  for (const auto& [in, out] : cases) EXPECT_EQ(porter_stem(in), out) << in;
  EXPECT_EQ(porter_stem("1.5"), "1.5");
}

TEST(BertScore, OrthogonalFixture) {
  OrthogonalTestEmbedding emb;
  const auto p = bertscore(seq({"a", "c"}), seq({"a", "b"}), emb);
  EXPECT_DOUBLE_EQ(p.recall, 0.5);
  EXPECT_DOUBLE_EQ(p.precision, 0.5);
  EXPECT_DOUBLE_EQ(p.f1, 0.5);
}

TEST(BertScore, IdentityAndEmpty) {
  HashedTestEmbedding emb;
  const auto s = normalize_tokenize("mild cardiomegaly with small bilateral effusions");
  const auto p = bertscore(s, s, emb);
  EXPECT_NEAR(p.f1, 1.0, 1e-12);
  EXPECT_TRUE(bertscore(TokenSeq{}, s, emb).degenerate);
}

TEST(BertScore, HashedEmbeddingIsStable) {
  HashedTestEmbedding a, b;
  const auto s = seq({"lung", "heart", "lung"});
  const auto va = a.embed(s);
  EXPECT_EQ(va, b.embed(s));
  EXPECT_EQ(va[0], va[2]);
  EXPECT_EQ(va[0].size(), 64u);
}

namespace {
class WrongDimension : public EmbeddingBackend {
 public:
  EmbeddingKind kind() const override { return EmbeddingKind::DeterministicTest; }
  std::size_t dimension() const override { return 8; }
  std::string id() const override { return "wrong"; }
  std::vector<std::vector<double>> embed(const TokenSeq& t) override {
    return std::vector<std::vector<double>>(t.size(), std::vector<double>(4, 1.0));
  }
};
}  // namespace

TEST(BertScore, DimensionMismatchIsFatal) {
  WrongDimension emb;
  EXPECT_THROW(bertscore(seq({"a"}), seq({"a"}), emb), ValidationError);
}

TEST(BertScore, IdfAndBaseline) {
  OrthogonalTestEmbedding emb;
  const std::map<std::string, double> idf{{"a", 3.0}, {"b", 1.0}};
  BertScoreOptions opt;
  opt.idf = &idf;
  // recall: ref [a,b], a matched (1), b unmatched (0) -> 3 / 4
  EXPECT_DOUBLE_EQ(bertscore(seq({"a", "c"}), seq({"a", "b"}), emb, opt).recall, 0.75);
  BertScoreOptions base;
  base.baseline = 0.2;
  EXPECT_NEAR(bertscore(seq({"a", "c"}), seq({"a", "b"}), emb, base).recall, 0.375, 1e-12);
}

TEST(BertScore, IdfSmoothing) {
  const auto idf = compute_idf({seq({"a", "b"}), seq({"a"})});
  EXPECT_NEAR(idf.at("a"), std::log(3.0 / 3.0), 1e-12);
  EXPECT_NEAR(idf.at("b"), std::log(3.0 / 2.0), 1e-12);
}

TEST(Corpus, MeanAndMissing) {
  const std::map<std::string, std::string> refs{{"r1", "the lungs are clear"}, {"r2", "heart normal"}, {"r3", "x"}};
  const std::map<std::string, std::string> cands{{"r1", "lungs are clear"}, {"r2", "heart normal"}};
  OrthogonalTestEmbedding emb;
  const auto out = evaluate_corpus(cands, refs, &emb);
  ASSERT_EQ(out.reports.size(), 2u);
  EXPECT_EQ(out.missing_candidates, std::vector<std::string>{"r3"});
  EXPECT_EQ(out.mean.report_id, "__corpus__");
  EXPECT_NEAR(out.mean.rouge1.recall, (0.75 + 1.0) / 2.0, 1e-12);
  ASSERT_TRUE(out.mean.bertscore.has_value());
  EXPECT_NEAR(out.mean.bertscore->f1, (6.0 / 7.0 + 1.0) / 2.0, 1e-12);

  const auto j = to_json(out.reports[0]);
  EXPECT_EQ(j["report_id"], "r1");
  EXPECT_DOUBLE_EQ(j["rouge1"]["p"].get<double>(), 1.0);
  EXPECT_TRUE(j.contains("bertscore"));
  EXPECT_FALSE(to_json(evaluate_corpus(cands, refs, nullptr).reports[0]).contains("bertscore"));
}
