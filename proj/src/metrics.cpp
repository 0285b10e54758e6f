#include "comt/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "comt/errors.hpp"
#include "comt/rng.hpp"
#include "comt/stemmer.hpp"

namespace comt {

PRF PRF::from(double precision, double recall) {
  PRF p{precision, recall, 0.0, false};
  if (precision + recall > 0.0) p.f1 = 2.0 * precision * recall / (precision + recall);
  return p;
}

TokenSeq normalize_tokenize(std::string_view text) {
  TokenSeq seq;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) seq.tokens.push_back(std::move(cur));
    cur.clear();
  };
  const auto digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const auto uc = static_cast<unsigned char>(c);
    if (uc >= 0x80 || std::isalnum(uc)) {
      cur += static_cast<char>(uc >= 0x80 ? c : std::tolower(uc));
    } else if (c == '.' && i > 0 && i + 1 < text.size() && digit(text[i - 1]) && digit(text[i + 1]) && !cur.empty()) {
      cur += c;
    } else {
      flush();
    }
  }
  flush();
  return seq;
}

namespace {

std::map<std::string, std::size_t> ngram_counts(const std::vector<std::string>& t, int n) {
  std::map<std::string, std::size_t> counts;
  const auto un = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + un <= t.size(); ++i) {
    std::string key = t[i];
    for (std::size_t k = 1; k < un; ++k) {
      key += '\x1f';
      key += t[i + k];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

PRF rouge_n(const TokenSeq& candidate, const TokenSeq& reference, int n) {
  if (n != 1 && n != 2) throw ValidationError("rouge_n supports n = 1 or 2");
  const auto un = static_cast<std::size_t>(n);
  if (candidate.size() < un || reference.size() < un) return PRF::degenerate_zero();
  const auto cand = ngram_counts(candidate.tokens, n);
  const auto ref = ngram_counts(reference.tokens, n);
  std::size_t overlap = 0;
  for (const auto& [g, c] : cand)
    if (auto it = ref.find(g); it != ref.end()) overlap += std::min(c, it->second);
  const double cand_total = static_cast<double>(candidate.size() - un + 1);
  const double ref_total = static_cast<double>(reference.size() - un + 1);
  return PRF::from(static_cast<double>(overlap) / cand_total, static_cast<double>(overlap) / ref_total);
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

PRF rouge_l(const TokenSeq& candidate, const TokenSeq& reference) {
  if (candidate.empty() || reference.empty()) return PRF::degenerate_zero();
  const double l = static_cast<double>(lcs_length(candidate.tokens, reference.tokens));
  return PRF::from(l / static_cast<double>(candidate.size()), l / static_cast<double>(reference.size()));
}

MeteorDetail meteor_detail(const TokenSeq& candidate, const TokenSeq& reference, const MeteorParams& params) {
  const auto& c = candidate.tokens;
  const auto& r = reference.tokens;
  std::vector<int> cand_match(c.size(), -1);
  std::vector<bool> ref_used(r.size(), false);

  // Within a stage, prefer the reference slot right after the previous
  // candidate token's match so that contiguous runs stay one chunk.
  auto stage = [&](auto&& key) {
    std::vector<std::string> ck(c.size()), rk(r.size());
    for (std::size_t i = 0; i < c.size(); ++i) ck[i] = key(c[i]);
    for (std::size_t j = 0; j < r.size(); ++j) rk[j] = key(r[j]);
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (cand_match[i] >= 0) continue;
      int best = -1;
      if (i > 0 && cand_match[i - 1] >= 0) {
        const auto p = static_cast<std::size_t>(cand_match[i - 1] + 1);
        if (p < r.size() && !ref_used[p] && rk[p] == ck[i]) best = static_cast<int>(p);
      }
      for (std::size_t j = 0; best < 0 && j < r.size(); ++j)
        if (!ref_used[j] && rk[j] == ck[i]) best = static_cast<int>(j);
      if (best >= 0) {
        cand_match[i] = best;
        ref_used[static_cast<std::size_t>(best)] = true;
      }
    }
  };
  stage([](const std::string& t) { return t; });
  stage([](const std::string& t) { return porter_stem(t); });

  MeteorDetail d;
  int prev_ref = -2;
  bool prev_matched = false;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (cand_match[i] < 0) {
      prev_matched = false;
      continue;
    }
    ++d.matches;
    if (!prev_matched || cand_match[i] != prev_ref + 1) ++d.chunks;
    prev_ref = cand_match[i];
    prev_matched = true;
  }
  if (d.matches == 0) return d;
  const double m = static_cast<double>(d.matches);
  const double p = m / static_cast<double>(c.size());
  const double rec = m / static_cast<double>(r.size());
  d.fmean = p * rec / (params.alpha * p + (1.0 - params.alpha) * rec);
  d.penalty = params.gamma * std::pow(static_cast<double>(d.chunks) / m, params.beta);
  d.score = d.fmean * (1.0 - d.penalty);
  return d;
}

double meteor(const TokenSeq& candidate, const TokenSeq& reference, const MeteorParams& params) {
  return meteor_detail(candidate, reference, params).score;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<double>> OrthogonalTestEmbedding::embed(const TokenSeq& tokens) {
  std::vector<std::vector<double>> out;
  for (const auto& t : tokens.tokens) {
    auto [it, inserted] = vocabulary_.emplace(t, vocabulary_.size());
    if (it->second >= dimension_) throw ValidationError("orthogonal test embedding ran out of dimensions");
    std::vector<double> v(dimension_, 0.0);
    v[it->second] = 1.0;
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<std::vector<double>> HashedTestEmbedding::embed(const TokenSeq& tokens) {
  std::vector<std::vector<double>> out;
  for (const auto& t : tokens.tokens) {
    SplitMix64 rng(fnv1a64(t));
    std::vector<double> v(dimension_);
    for (auto& x : v) x = rng.unit() * 2.0 - 1.0;
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<std::vector<double>> RemoteEmbedding::embed(const TokenSeq& tokens) {
  const Json req{{"model", config_.model}, {"tokens", tokens.tokens}};
  const auto body = post_json_with_retry(config_, req.dump());
  const auto j = Json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.contains("embeddings") || !j["embeddings"].is_array())
    throw SchemaViolationError("embedding response lacks an 'embeddings' array", body);
  if (j["embeddings"].size() != tokens.size())
    throw SchemaViolationError("embedding response has " + std::to_string(j["embeddings"].size()) + " vectors for " +
                                   std::to_string(tokens.size()) + " tokens",
                               body);
  return j["embeddings"].get<std::vector<std::vector<double>>>();
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

}  // namespace

PRF bertscore(const TokenSeq& candidate, const TokenSeq& reference, EmbeddingBackend& backend,
              const BertScoreOptions& options) {
  if (candidate.empty() || reference.empty()) return PRF::degenerate_zero();
  const auto ce = backend.embed(candidate);
  const auto re = backend.embed(reference);
  for (const auto* side : {&ce, &re})
    for (const auto& v : *side)
      if (v.size() != backend.dimension())
        throw ValidationError("embedding dimension " + std::to_string(v.size()) + " does not match configured " +
                              std::to_string(backend.dimension()));

  double idf_fallback = 1.0;
  if (options.idf && !options.idf->empty()) {
    idf_fallback = 0.0;
    for (const auto& [t, w] : *options.idf) idf_fallback = std::max(idf_fallback, w);
  }
  auto weight = [&](const std::string& t) {
    if (!options.idf) return 1.0;
    auto it = options.idf->find(t);
    return it == options.idf->end() ? idf_fallback : it->second;
  };
  auto greedy = [&](const std::vector<std::vector<double>>& from, const std::vector<std::string>& from_tokens,
                    const std::vector<std::vector<double>>& to) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < from.size(); ++i) {
      double best = 0;
      for (const auto& v : to) best = std::max(best, cosine(from[i], v));
      const double w = weight(from_tokens[i]);
      num += w * best;
      den += w;
    }
    return den > 0 ? num / den : 0.0;
  };
  double recall = greedy(re, reference.tokens, ce);
  double precision = greedy(ce, candidate.tokens, re);
  if (options.baseline != 0.0) {
    auto rescale = [&](double x) { return std::clamp((x - options.baseline) / (1.0 - options.baseline), 0.0, 1.0); };
    recall = rescale(recall);
    precision = rescale(precision);
  }
  return PRF::from(precision, recall);
}

std::map<std::string, double> compute_idf(const std::vector<TokenSeq>& references) {
  std::map<std::string, std::size_t> df;
  for (const auto& r : references) {
    std::set<std::string> uniq(r.tokens.begin(), r.tokens.end());
    for (const auto& t : uniq) ++df[t];
  }
  std::map<std::string, double> idf;
  const double n = static_cast<double>(references.size());
  for (const auto& [t, c] : df) idf[t] = std::log((n + 1.0) / (static_cast<double>(c) + 1.0));
  return idf;
}

// ---------------------------------------------------------------------------

CorpusScores evaluate_corpus(const std::map<std::string, std::string>& candidates,
                             const std::map<std::string, std::string>& references, EmbeddingBackend* embedding,
                             const BertScoreOptions& bert_options) {
  CorpusScores out;
  for (const auto& [id, ref_text] : references) {
    auto it = candidates.find(id);
    if (it == candidates.end()) {
      out.missing_candidates.push_back(id);
      continue;
    }
    const auto cand = normalize_tokenize(it->second);
    const auto ref = normalize_tokenize(ref_text);
    ReportScores s;
    s.report_id = id;
    s.rouge1 = rouge_n(cand, ref, 1);
    s.rouge2 = rouge_n(cand, ref, 2);
    s.rougeL = rouge_l(cand, ref);
    s.meteor = meteor(cand, ref);
    if (embedding) s.bertscore = bertscore(cand, ref, *embedding, bert_options);
    out.reports.push_back(std::move(s));
  }

  auto& m = out.mean;
  m.report_id = "__corpus__";
  if (out.reports.empty()) return out;
  const double n = static_cast<double>(out.reports.size());
  auto mean_prf = [&](auto getter) {
    PRF acc;
    for (const auto& r : out.reports) {
      const PRF& p = getter(r);
      acc.precision += p.precision;
      acc.recall += p.recall;
      acc.f1 += p.f1;
    }
    acc.precision /= n;
    acc.recall /= n;
    acc.f1 /= n;
    return acc;
  };
  m.rouge1 = mean_prf([](const ReportScores& r) -> const PRF& { return r.rouge1; });
  m.rouge2 = mean_prf([](const ReportScores& r) -> const PRF& { return r.rouge2; });
  m.rougeL = mean_prf([](const ReportScores& r) -> const PRF& { return r.rougeL; });
  for (const auto& r : out.reports) m.meteor += r.meteor;
  m.meteor /= n;
  if (embedding) m.bertscore = mean_prf([](const ReportScores& r) -> const PRF& { return *r.bertscore; });
  return out;
}

Json to_json(const ReportScores& s) {
  auto prf = [](const PRF& p) {
    return Json{{"p", p.precision}, {"r", p.recall}, {"f", p.f1}};
  };
  Json j{{"report_id", s.report_id},
         {"rouge1", prf(s.rouge1)},
         {"rouge2", prf(s.rouge2)},
         {"rougeL", prf(s.rougeL)},
         {"meteor", s.meteor}};
  if (s.bertscore) j["bertscore"] = prf(*s.bertscore);
  return j;
}

}  // namespace comt
