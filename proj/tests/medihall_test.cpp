#include <gtest/gtest.h>

#include <atomic>

#include "comt/medihall.hpp"
#include "comt/rng.hpp"

using namespace comt;

namespace {

JudgeVerdict verdict(std::optional<Label> l, std::string judge, std::size_t idx = 0) {
  JudgeVerdict v;
  v.sentence_index = idx;
  v.label = l;
  v.judge_id = std::move(judge);
  return v;
}

SentenceJudgment agreed(const std::string& rid, std::size_t idx, Label l) {
  SentenceJudgment j;
  j.report_id = rid;
  j.sentence = {idx, "s" + std::to_string(idx) + ".", {0, 3}};
  j.verdicts = {verdict(l, "a", idx), verdict(l, "b", idx)};
  j.resolution = resolve(j.verdicts[0], j.verdicts[1], std::nullopt).resolution;
  return j;
}

std::vector<SentenceJudgment> report_of(const std::vector<Label>& labels, const std::string& rid = "r1") {
  std::vector<SentenceJudgment> out;
  for (std::size_t i = 0; i < labels.size(); ++i) out.push_back(agreed(rid, i, labels[i]));
  return out;
}

RawReport ref(std::string text) {
  RawReport r;
  r.report_id = "r1";
  r.report_text = std::move(text);
  r.source = "fixture";
  return r;
}

}  // namespace

TEST(Labels, WeightsAreFixed) {
  EXPECT_EQ(weight(Label::Catastrophic), 0.0);
  EXPECT_EQ(weight(Label::Critical), 0.3);
  EXPECT_EQ(weight(Label::Attribute), 0.6);
  EXPECT_EQ(weight(Label::Correct), 1.0);
  for (auto l : kLabels) EXPECT_EQ(parse_label(to_string(l)), l);
  EXPECT_EQ(parse_label("critical"), Label::Critical);
  EXPECT_FALSE(parse_label("Severe"));
}

TEST(Resolve, AgreementDisagreementAdjudication) {
  auto r = resolve(verdict(Label::Correct, "a"), verdict(Label::Correct, "b"), std::nullopt);
  EXPECT_EQ(r.resolution.kind, ResolutionKind::Agreed);
  EXPECT_EQ(r.resolution.label, Label::Correct);

  r = resolve(verdict(Label::Critical, "a"), verdict(Label::Attribute, "b"), std::nullopt);
  EXPECT_EQ(r.resolution.kind, ResolutionKind::Pending);
  EXPECT_FALSE(r.resolution.label);

  r = resolve(verdict(Label::Critical, "a"), verdict(Label::Attribute, "b"), Adjudication{Label::Critical, "dr-1"});
  EXPECT_EQ(r.resolution.kind, ResolutionKind::Adjudicated);
  EXPECT_EQ(r.resolution.label, Label::Critical);
  EXPECT_EQ(r.resolution.adjudicator_id, "dr-1");
}

TEST(Resolve, AgreementBeatsHumanInput) {
  const auto r = resolve(verdict(Label::Attribute, "a"), verdict(Label::Attribute, "b"),
                         Adjudication{Label::Catastrophic, "dr-1"});
  EXPECT_EQ(r.resolution.kind, ResolutionKind::Agreed);
  EXPECT_EQ(r.resolution.label, Label::Attribute);
  EXPECT_NE(r.warning.find("ignored"), std::string::npos);
}

TEST(Resolve, MissingVerdictIsPending) {
  EXPECT_EQ(resolve(verdict(std::nullopt, "a"), verdict(std::nullopt, "b"), std::nullopt).resolution.kind,
            ResolutionKind::Pending);
  EXPECT_EQ(resolve(verdict(std::nullopt, "a"), verdict(Label::Correct, "b"), Adjudication{Label::Correct, "d"})
                .resolution.kind,
            ResolutionKind::Adjudicated);
}

TEST(Resolve, RejectsMalformedPairs) {
  EXPECT_THROW(resolve(verdict(Label::Correct, "a"), verdict(Label::Correct, "a"), std::nullopt), ValidationError);
  EXPECT_THROW(resolve(verdict(Label::Correct, "a", 0), verdict(Label::Correct, "b", 1), std::nullopt),
               ValidationError);
}

TEST(Score, WorkedCases) {
  auto r = medihall_score(report_of({Label::Correct, Label::Correct, Label::Catastrophic}));
  ASSERT_TRUE(r.score);
  EXPECT_DOUBLE_EQ(*r.score, 2.0 / 3.0);
  r = medihall_score(report_of({Label::Correct, Label::Critical, Label::Attribute}));
  EXPECT_EQ(*r.score, (1.0 + 0.3 + 0.6) / 3.0);
  EXPECT_NEAR(*r.score, 0.6333333333, 1e-9);
  EXPECT_EQ(r.counts[Label::Critical], 1u);
  EXPECT_EQ(r.n, 3u);
}

TEST(Score, PendingMakesResultProvisional) {
  auto js = report_of({Label::Correct, Label::Correct});
  js[1].verdicts[1].label = Label::Critical;
  js[1].resolution = Resolution::pending();
  const auto r = medihall_score(js);
  EXPECT_FALSE(r.score);
  EXPECT_EQ(r.pending_count, 1u);
  EXPECT_FALSE(r.final());
  EXPECT_TRUE(to_json(r)["score"].is_null());
}

TEST(Score, EmptyReportIsUndefined) { EXPECT_THROW(medihall_score({}), ValidationError); }

TEST(Score, MixedReportsRejected) {
  auto js = report_of({Label::Correct});
  js.push_back(agreed("r2", 1, Label::Correct));
  EXPECT_THROW(medihall_score(js), ValidationError);
}

TEST(ScoreProperty, MatchesHandFormulaAndBounds) {
  SplitMix64 rng(31337);
  for (int iter = 0; iter < 1000; ++iter) {
    std::vector<Label> labels(1 + rng.below(25));
    double sum = 0.0;
    for (auto& l : labels) {
      l = kLabels[rng.below(4)];
      sum += weight(l);
    }
    const auto r = medihall_score(report_of(labels));
    ASSERT_EQ(*r.score, sum / static_cast<double>(labels.size()));
    ASSERT_GE(*r.score, 0.0);
    ASSERT_LE(*r.score, 1.0);
    const bool all_correct = std::all_of(labels.begin(), labels.end(), [](Label l) { return l == Label::Correct; });
    const bool all_cat = std::all_of(labels.begin(), labels.end(), [](Label l) { return l == Label::Catastrophic; });
    ASSERT_EQ(*r.score == 1.0, all_correct);
    ASSERT_EQ(*r.score == 0.0, all_cat);
  }
}

TEST(ScoreProperty, LoweringALabelStrictlyLowersScore) {
  SplitMix64 rng(8);
  for (int iter = 0; iter < 1000; ++iter) {
    std::vector<Label> labels(1 + rng.below(20));
    for (auto& l : labels) l = kLabels[rng.below(4)];
    const auto i = rng.below(labels.size());
    const auto cur = static_cast<int>(labels[i]);
    if (cur == 0) continue;
    const double before = *medihall_score(report_of(labels)).score;
    labels[i] = static_cast<Label>(rng.below(static_cast<std::uint64_t>(cur)));
    ASSERT_LT(*medihall_score(report_of(labels)).score, before);
  }
}

TEST(Corpus, MeanAndRefusal) {
  std::vector<MediHallResult> rs = {medihall_score(report_of({Label::Correct}, "a")),
                                    medihall_score(report_of({Label::Catastrophic}, "b"))};
  EXPECT_EQ(corpus_medihall(rs), 0.5);
  EXPECT_EQ(corpus_medihall({medihall_score(report_of({Label::Correct, Label::Critical, Label::Attribute}))}),
            (1.0 + 0.3 + 0.6) / 3.0);

  std::vector<MediHallResult> ten;
  for (int i = 0; i < 10; ++i) ten.push_back(medihall_score(report_of({Label::Correct}, "r" + std::to_string(i))));
  ten[6].pending_count = 1;
  ten[6].score.reset();
  try {
    corpus_medihall(ten);
    FAIL() << "expected refusal";
  } catch (const PendingJudgmentsError& e) {
    EXPECT_EQ(e.report_ids(), std::vector<std::string>{"r6"});
    EXPECT_NE(std::string(e.what()).find("r6"), std::string::npos);
  }
}

TEST(Corpus, ScoreReportsGroupsInOrder) {
  auto js = report_of({Label::Correct, Label::Critical}, "x");
  auto more = report_of({Label::Attribute}, "y");
  js.insert(js.begin() + 1, more.begin(), more.end());
  const auto rs = score_reports(js);
  ASSERT_EQ(rs.size(), 2u);
  EXPECT_EQ(rs[0].report_id, "x");
  EXPECT_EQ(*rs[0].score, (1.0 + 0.3) / 2.0);
  EXPECT_EQ(*rs[1].score, 0.6);
}

TEST(HumanScore, Formula) {
  EXPECT_EQ(human_score({"c1", 120, 100, 140, 200}), 0.6);
  EXPECT_EQ(human_score({"c1", 0, 0, 0, 17}), 0.0);
  EXPECT_EQ(human_score({"c1", 17, 17, 17, 17}), 1.0);
  EXPECT_THROW(human_score({"c1", 0, 0, 0, 0}), ValidationError);
  EXPECT_THROW(human_score({"c1", 5, 0, 0, 4}), ValidationError);
  EXPECT_THROW(human_score({"c1", -1, 0, 0, 4}), ValidationError);
  const auto s = human_scores({{"a", 120, 100, 140, 200}, {"b", 10, 10, 10, 10}});
  EXPECT_EQ(s.per_clinician.size(), 2u);
  EXPECT_DOUBLE_EQ(s.mean, 0.8);
  EXPECT_EQ(human_tally_from_json(Json::parse(R"({"clinician_id":"a","num_faith":1,"num_com":2,"num_flu":3,"num_data":4})"))
                .num_flu,
            3);
}

TEST(Judgment, JsonRoundTrip) {
  SentenceJudgment j;
  j.report_id = "r1";
  j.sentence = {2, "Small effusion.", {30, 45}};
  j.verdicts = {verdict(Label::Critical, "gpt", 2), verdict(std::nullopt, "gem", 2)};
  j.verdicts[1].raw_response = "I think it is fine";
  j.resolution = {ResolutionKind::Adjudicated, Label::Attribute, "dr-2"};
  j.version = 3;
  const auto json = to_json(j);
  EXPECT_EQ(json["id"], "r1#s2");
  EXPECT_EQ(json["parent"], "r1");
  EXPECT_DOUBLE_EQ(json["score"].get<double>(), 0.6);
  const auto back = sentence_judgment_from_json(json);
  EXPECT_EQ(back.sentence, j.sentence);
  EXPECT_EQ(back.verdicts[0].label, Label::Critical);
  EXPECT_FALSE(back.verdicts[1].label);
  EXPECT_EQ(back.verdicts[1].raw_response, "I think it is fine");
  EXPECT_EQ(back.resolution.kind, ResolutionKind::Adjudicated);
  EXPECT_EQ(back.resolution.adjudicator_id, "dr-2");
  EXPECT_EQ(back.version, 3);

  auto bad = json;
  bad["resolution"]["label"] = nullptr;
  EXPECT_THROW(sentence_judgment_from_json(bad), ValidationError);
}

TEST(LlmJudgeTest, ParsesTaggedLabel) {
  const auto p = parse_judge_response("LABEL: Correct\nRATIONALE: matches the reference");
  EXPECT_EQ(p.label, Label::Correct);
  EXPECT_EQ(p.rationale, "matches the reference");
  EXPECT_EQ(parse_judge_response("label:**critical**").label, Label::Critical);
  EXPECT_FALSE(parse_judge_response("The sentence looks correct to me.").label);
  EXPECT_FALSE(parse_judge_response("LABEL: Severe").label);
}

TEST(LlmJudgeTest, MockReturningCorrect) {
  FunctionCompletionClient client("mock", [](const std::string&) { return std::string("LABEL: Correct"); });
  LlmJudge judge(client, "judge-a");
  const auto v = judge.judge("r1", Sentence{0, "Lungs are clear.", {0, 16}}, ref("Lungs are clear."));
  EXPECT_EQ(v.label, Label::Correct);
  EXPECT_EQ(v.judge_id, "judge-a");
  EXPECT_EQ(v.raw_response, "LABEL: Correct");
}

TEST(LlmJudgeTest, ReformatRetryThenParseError) {
  std::atomic<int> calls{0};
  FunctionCompletionClient prose("prose", [&](const std::string&) {
    ++calls;
    return std::string("Looks fine overall.");
  });
  LlmJudge judge(prose, "judge-a");
  try {
    judge.judge("r1", Sentence{0, "x.", {0, 2}}, ref("x."));
    FAIL();
  } catch (const JudgeParseError& e) {
    EXPECT_NE(e.raw_response().find("Looks fine"), std::string::npos);
  }
  EXPECT_EQ(calls.load(), 2);

  int n = 0;
  FunctionCompletionClient second_try("fix", [&](const std::string&) {
    return std::string(n++ == 0 ? "fine" : "LABEL: Attribute\nRATIONALE: wrong side");
  });
  LlmJudge fixed(second_try, "judge-b");
  EXPECT_EQ(fixed.judge("r1", Sentence{0, "x.", {0, 2}}, ref("x.")).label, Label::Attribute);
}

TEST(LlmJudgeTest, PromptCarriesSentenceAndReference) {
  const auto p = judge_prompt(Sentence{0, "Large effusion.", {0, 15}}, ref("Small effusion."));
  EXPECT_NE(p.find("Large effusion."), std::string::npos);
  EXPECT_NE(p.find("Small effusion."), std::string::npos);
  EXPECT_NE(p.find("LABEL:"), std::string::npos);
}

TEST(JudgeReport, ParseFailureLeavesSentencePending) {
  FunctionCompletionClient good("g", [](const std::string&) { return std::string("LABEL: Correct"); });
  FunctionCompletionClient bad("b", [](const std::string& prompt) {
    return std::string(prompt.find("Sentence:\nLungs") != std::string::npos ? "LABEL: Correct" : "no idea");
  });
  LlmJudge a(good, "a"), b(bad, "b");
  const auto candidate = ref("Lungs are clear. Heart is normal.");
  const auto js = judge_report(candidate, ref("Lungs are clear. Heart is normal."), a, b, {3});
  ASSERT_EQ(js.size(), 2u);
  EXPECT_EQ(js[0].resolution.kind, ResolutionKind::Agreed);
  EXPECT_EQ(js[1].resolution.kind, ResolutionKind::Pending);
  EXPECT_TRUE(js[1].verdicts[1].missing());
  EXPECT_NE(js[1].verdicts[1].raw_response.find("no idea"), std::string::npos);
}

TEST(JudgeReport, BackendFailurePropagates) {
  FunctionCompletionClient down("d", [](const std::string&) -> std::string { throw RetriableBackendError("503"); });
  FunctionCompletionClient up("u", [](const std::string&) { return std::string("LABEL: Correct"); });
  LlmJudge a(up, "a"), b(down, "b");
  EXPECT_THROW(judge_report(ref("A. B. C."), ref("A."), a, b), RetriableBackendError);
}

TEST(JudgeReport, AgreementRate) {
  ConstantJudge a("a", Label::Correct), b("b", Label::Correct), c("c", Label::Critical);
  const auto r = ref("One finding. Two findings.");
  EXPECT_EQ(agreement_rate(judge_report(r, r, a, b)), 1.0);
  EXPECT_EQ(agreement_rate(judge_report(r, r, a, c)), 0.0);
  EXPECT_THROW(judge_report(r, r, a, a), ValidationError);
}
