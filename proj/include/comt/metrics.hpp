#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "comt/jsonl.hpp"
#include "comt/llm_client.hpp"

namespace comt {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool degenerate = false;  // input too short to score; all fields are 0

  static PRF from(double precision, double recall);
  static PRF degenerate_zero() { return PRF{0.0, 0.0, 0.0, true}; }
};

inline constexpr std::string_view kNormalizationId = "lower-punct-v1";

struct TokenSeq {
  std::vector<std::string> tokens;
  std::string normalization_id{kNormalizationId};

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }
};

/// Lower-case, turn punctuation into separators and split on whitespace. A
/// period between two digits is kept, so "1.5" stays one token.
TokenSeq normalize_tokenize(std::string_view text);

/// Clipped n-gram overlap for n in {1, 2}.
PRF rouge_n(const TokenSeq& candidate, const TokenSeq& reference, int n);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

PRF rouge_l(const TokenSeq& candidate, const TokenSeq& reference);

struct MeteorParams {
  double alpha = 0.9;  // Fmean = P*R / (alpha*P + (1-alpha)*R), i.e. 10PR/(R+9P)
  double gamma = 0.5;
  double beta = 3.0;
};

struct MeteorDetail {
  double score = 0.0;
  std::size_t matches = 0;
  std::size_t chunks = 0;
  double fmean = 0.0;
  double penalty = 0.0;
};

/// METEOR without a synonym stage ("meteor-lite"): exact matches first, then
/// Porter-stem matches among the leftovers.
MeteorDetail meteor_detail(const TokenSeq& candidate, const TokenSeq& reference, const MeteorParams& params = {});
double meteor(const TokenSeq& candidate, const TokenSeq& reference, const MeteorParams& params = {});

inline constexpr std::string_view kMeteorVariant = "meteor-lite";

// ---------------------------------------------------------------------------
// BERTScore

enum class EmbeddingKind { RemoteService, DeterministicTest };

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual EmbeddingKind kind() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::string id() const = 0;
  /// One vector per token, in order.
  virtual std::vector<std::vector<double>> embed(const TokenSeq& tokens) = 0;
};

/// One-hot vectors: every distinct token gets its own basis direction, so
/// distinct tokens have cosine 0. Directions are handed out on first sight.
class OrthogonalTestEmbedding : public EmbeddingBackend {
 public:
  explicit OrthogonalTestEmbedding(std::size_t dimension = 4096) : dimension_(dimension) {}
  EmbeddingKind kind() const override { return EmbeddingKind::DeterministicTest; }
  std::size_t dimension() const override { return dimension_; }
  std::string id() const override { return "orthogonal-test"; }
  std::vector<std::vector<double>> embed(const TokenSeq& tokens) override;

 private:
  std::size_t dimension_;
  std::map<std::string, std::size_t> vocabulary_;
};

/// Pseudo-random vectors seeded by a hash of the token text; identical
/// tokens map to identical vectors in every run.
class HashedTestEmbedding : public EmbeddingBackend {
 public:
  explicit HashedTestEmbedding(std::size_t dimension = 64) : dimension_(dimension) {}
  EmbeddingKind kind() const override { return EmbeddingKind::DeterministicTest; }
  std::size_t dimension() const override { return dimension_; }
  std::string id() const override { return "hashed-test-" + std::to_string(dimension_); }
  std::vector<std::vector<double>> embed(const TokenSeq& tokens) override;

 private:
  std::size_t dimension_;
};

/// POSTs `{"model", "tokens"}`; expects `{"embeddings": [[...], ...]}` with
/// one vector per token.
class RemoteEmbedding : public EmbeddingBackend {
 public:
  RemoteEmbedding(EndpointConfig config, std::size_t dimension) : config_(std::move(config)), dimension_(dimension) {}
  EmbeddingKind kind() const override { return EmbeddingKind::RemoteService; }
  std::size_t dimension() const override { return dimension_; }
  std::string id() const override { return "remote:" + config_.url; }
  std::vector<std::vector<double>> embed(const TokenSeq& tokens) override;

 private:
  EndpointConfig config_;
  std::size_t dimension_;
};

struct BertScoreOptions {
  const std::map<std::string, double>* idf = nullptr;  // token weights; uniform when null
  double baseline = 0.0;                                // rescale (x - b) / (1 - b) when non-zero
};

/// Greedy soft alignment over cosine similarity (clamped to [0,1]): recall
/// averages each reference token's best match in the candidate, precision
/// the reverse. Throws ValidationError when a vector's size differs from
/// the backend dimension.
PRF bertscore(const TokenSeq& candidate, const TokenSeq& reference, EmbeddingBackend& backend,
              const BertScoreOptions& options = {});

/// Inverse document frequency over reference documents, smoothed:
/// log((N + 1) / (df + 1)).
std::map<std::string, double> compute_idf(const std::vector<TokenSeq>& references);

// ---------------------------------------------------------------------------
// Corpus evaluation

struct ReportScores {
  std::string report_id;
  PRF rouge1;
  PRF rouge2;
  PRF rougeL;
  double meteor = 0.0;
  std::optional<PRF> bertscore;
};

struct CorpusScores {
  std::vector<ReportScores> reports;
  ReportScores mean;  // arithmetic mean of per-report values; report_id "__corpus__"
  std::vector<std::string> missing_candidates;
};

/// Score every reference that has a candidate with the same report id.
/// Reports are processed in reference-id order.
CorpusScores evaluate_corpus(const std::map<std::string, std::string>& candidates,
                             const std::map<std::string, std::string>& references, EmbeddingBackend* embedding,
                             const BertScoreOptions& bert_options = {});

Json to_json(const ReportScores& s);

}  // namespace comt
