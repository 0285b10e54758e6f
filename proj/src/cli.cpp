#include "comt/cli.hpp"

#include <CLI11.hpp>
#include <pthread.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <ctime>
#include <thread>

#include "comt/augment.hpp"
#include "comt/chain.hpp"
#include "comt/data_dir.hpp"
#include "comt/errors.hpp"
#include "comt/inject.hpp"
#include "comt/medihall.hpp"
#include "comt/metrics.hpp"
#include "comt/pipeline.hpp"
#include "comt/review.hpp"
#include "comt/review_server.hpp"

namespace comt {

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string env_name(std::string_view key) {
  std::string out = "COMT_";
  for (char c : key) out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

// One subcommand plus the bookkeeping for flag > environment > config file.
class Command {
 public:
  Command(CLI::App& root, const std::string& name, const std::string& description)
      : app_(root.add_subcommand(name, description)), name_(name) {}

  CLI::App* app() const { return app_; }
  const std::string& name() const { return name_; }

  template <class T>
  CLI::Option* option(const std::string& key, T& target, const std::string& description) {
    auto* o = app_->add_option("--" + key, target, description + " [env " + env_name(key) + "]");
    o->capture_default_str();
    entries_.push_back({key, o});
    return o;
  }

  CLI::Option* flag(const std::string& key, bool& target, const std::string& description) {
    auto* o = app_->add_flag("--" + key, target, description + " [env " + env_name(key) + "]");
    entries_.push_back({key, o});
    return o;
  }

  void resolve(const Json& config) {
    for (auto& e : entries_) {
      if (e.opt->count() > 0) {
        e.source = "flag";
        continue;
      }
      std::optional<std::string> value;
      if (const char* env = std::getenv(env_name(e.key).c_str()); env && *env) {
        value = env;
        e.source = "env";
      } else if (auto c = config_value(config, e.key)) {
        value = std::move(c);
        e.source = "config";
      }
      if (!value) continue;
      e.opt->add_result(*value);
      try {
        e.opt->run_callback();
      } catch (const CLI::Error& ex) {
        throw UsageError(name_ + ": bad value '" + *value + "' for " + e.key + " from " + e.source + ": " + ex.what());
      }
    }
  }

  bool given(const std::string& key) const {
    for (const auto& e : entries_)
      if (e.key == key) return e.source != "default";
    return false;
  }

  void require(std::initializer_list<const char*> keys) const {
    for (const auto* k : keys)
      if (!given(k)) throw UsageError(name_ + ": --" + std::string(k) + " is required");
  }

  Json resolved() const {
    Json out = Json::object();
    for (const auto& e : entries_) {
      std::string value;
      if (e.source == "default") {
        value = e.opt->get_default_str();
      } else {
        for (const auto& r : e.opt->results()) value += (value.empty() ? "" : ",") + r;
      }
      out[e.key] = {{"value", value}, {"source", e.source}};
    }
    return out;
  }

 private:
  std::optional<std::string> config_value(const Json& config, const std::string& key) const {
    const Json* found = nullptr;
    if (config.contains(name_) && config[name_].is_object() && config[name_].contains(key))
      found = &config[name_][key];
    else if (config.contains(key))
      found = &config[key];
    if (!found || found->is_null() || found->is_object() || found->is_array()) return std::nullopt;
    if (found->is_string()) return found->get<std::string>();
    return found->dump();
  }

  struct Entry {
    std::string key;
    CLI::Option* opt;
    std::string source = "default";
  };

  CLI::App* app_;
  std::string name_;
  std::vector<Entry> entries_;
};

std::map<std::string, std::string> read_text_map(const std::filesystem::path& path) {
  std::map<std::string, std::string> out;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(path)) {
    ++line;
    if (!j.is_object() || !j.contains("report_id") || !j["report_id"].is_string())
      throw ValidationError(path.string() + ": record " + std::to_string(line) + " lacks a string report_id");
    const Json* text = j.contains("text") ? &j["text"] : (j.contains("report_text") ? &j["report_text"] : nullptr);
    if (!text || !text->is_string())
      throw ValidationError(path.string() + ": record " + std::to_string(line) + " lacks 'text' or 'report_text'");
    if (!out.emplace(j["report_id"].get<std::string>(), text->get<std::string>()).second)
      throw ValidationError(path.string() + ": duplicate report_id " + j["report_id"].get<std::string>());
  }
  return out;
}

Json manifest_counts(const RecordStore& store) {
  Json out = Json::object();
  for (const auto& [stage, summary] : store.manifest()) out[std::string(to_string(stage))] = summary.count;
  return out;
}

EndpointConfig endpoint(const std::string& url, const std::string& model, const char* key_env, int timeout_ms,
                        int retries) {
  EndpointConfig c;
  c.url = url;
  c.model = model;
  c.api_key_env = key_env;
  c.timeout = std::chrono::milliseconds(timeout_ms);
  c.retries = retries;
  return c;
}

std::vector<SentenceJudgment> stored_judgments(const RecordStore& store) {
  std::vector<SentenceJudgment> out;
  for (const auto& j : store.read_latest(Stage::Judgments)) out.push_back(sentence_judgment_from_json(j));
  return out;
}

// Sidecar carrying the run summary (resolved config included) next to an artifact.
void write_run_json(const std::filesystem::path& path, Json summary) {
  summary.erase("status");
  write_text_atomic(path, summary.dump(2) + "\n");
}

// Blocks SIGINT/SIGTERM for the calling thread (and threads it starts) and
// stops the server once one arrives.
class SignalStopper {
 public:
  explicit SignalStopper(ReviewServer& server) {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set_, &old_);
    waiter_ = std::thread([this, &server] {
      const timespec tick{0, 200'000'000};
      while (!finished_) {
        if (sigtimedwait(&set_, nullptr, &tick) > 0) {
          server.stop();
          return;
        }
      }
    });
  }
  ~SignalStopper() {
    finished_ = true;
    waiter_.join();
    pthread_sigmask(SIG_SETMASK, &old_, nullptr);
  }

 private:
  sigset_t set_{};
  sigset_t old_{};
  std::atomic<bool> finished_{false};
  std::thread waiter_;
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Chain-of-medical-thought corpus builder and MediHall evaluator", "comt");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kArtifactVersion));
  std::string config_path;
  bool verbose = false;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON config file; flags and COMT_* environment variables take precedence");
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Warnings and errors only");

  // ingest
  Command ingest(app, "ingest", "Load a raw JSONL corpus into the store");
  std::string ingest_input, ingest_store, ingest_source;
  ingest.option("input", ingest_input, "Raw corpus (JSONL)");
  ingest.option("store", ingest_store, "Record store directory");
  ingest.option("source", ingest_source, "Source tag stamped on every report");

  // decompose
  Command decompose(app, "decompose", "Segment raw reports into six-dimension records");
  std::string dec_store, dec_backend = "rule", dec_lexicon, seg_url, seg_model;
  int dec_timeout = 30000, dec_retries = 3;
  decompose.option("store", dec_store, "Record store directory");
  decompose.option("backend", dec_backend, "rule | llm");
  decompose.option("lexicon", dec_lexicon, "Lexicon for the rule backend");
  decompose.option("segment-url", seg_url, "Completion endpoint for the llm backend (key: COMT_SEGMENT_API_KEY)");
  decompose.option("segment-model", seg_model, "Model name for the llm backend");
  decompose.option("timeout-ms", dec_timeout, "Per-request timeout");
  decompose.option("retries", dec_retries, "Retries after the first attempt");

  // chain
  Command chain(app, "chain", "Chain-refactor reviewed records and emit a training dataset");
  std::string ch_store, ch_out, ch_templates, ch_mode = "chained", ch_dimension;
  bool ch_unverified = false, ch_no_sentinels = false;
  chain.option("store", ch_store, "Record store directory");
  chain.option("out", ch_out, "Output directory for train/val/test JSONL");
  chain.option("templates", ch_templates, "Question template table");
  chain.option("mode", ch_mode, "chained | flat-qa | original-report");
  chain.option("dimension", ch_dimension, "Emit only this dimension");
  chain.flag("allow-unverified", ch_unverified, "Also chain records that have not passed both review rounds");
  chain.flag("no-sentinels", ch_no_sentinels, "Drop 'Not mentioned' answers from preludes");

  // augment
  Command augment(app, "augment", "Build a rephrased or EDA-augmented comparison corpus");
  std::string au_input, au_out, au_mode = "eda_delete", re_url, re_model;
  double au_rate = kDefaultAugmentRate;
  std::uint64_t au_seed = 0;
  int au_timeout = 30000, au_retries = 3;
  augment.option("input", au_input, "Raw corpus (JSONL)");
  augment.option("out", au_out, "Augmented corpus (JSONL)");
  augment.option("mode", au_mode, "rephrase | eda_insert | eda_swap | eda_delete");
  augment.option("rate", au_rate, "Fraction of tokens touched by EDA modes");
  augment.option("seed", au_seed, "Run seed");
  augment.option("rephrase-url", re_url, "Completion endpoint for rephrase mode (key: COMT_REPHRASE_API_KEY)");
  augment.option("rephrase-model", re_model, "Model name for rephrase mode");
  augment.option("timeout-ms", au_timeout, "Per-request timeout");
  augment.option("retries", au_retries, "Retries after the first attempt");

  // evaluate
  Command evaluate(app, "evaluate", "ROUGE-1/2/L, METEOR-lite and BERTScore against references");
  std::string ev_cands, ev_refs, ev_out, ev_embedding = "none", em_url, em_model;
  std::size_t em_dim = 768;
  bool ev_idf = false;
  double ev_baseline = 0.0;
  int ev_timeout = 30000, ev_retries = 3;
  evaluate.option("candidates", ev_cands, "Candidate reports (JSONL: report_id, text)");
  evaluate.option("references", ev_refs, "Reference reports (JSONL: report_id, text)");
  evaluate.option("out", ev_out, "Per-report scores plus a corpus record (JSONL)");
  evaluate.option("embedding", ev_embedding, "none | hashed | orthogonal | remote");
  evaluate.option("embed-url", em_url, "Embedding endpoint (key: COMT_EMBED_API_KEY)");
  evaluate.option("embed-model", em_model, "Embedding model name");
  evaluate.option("embed-dim", em_dim, "Embedding dimension");
  evaluate.flag("idf", ev_idf, "Weight BERTScore by reference idf");
  evaluate.option("baseline", ev_baseline, "BERTScore baseline for rescaling");
  evaluate.option("timeout-ms", ev_timeout, "Per-request timeout");
  evaluate.option("retries", ev_retries, "Retries after the first attempt");

  // medihall
  Command medihall(app, "medihall", "Judge candidate sentences and compute MediHall scores");
  std::string mh_store, mh_cands, ja_url, ja_model, jb_url, jb_model, mh_export;
  int mh_timeout = 30000, mh_retries = 3;
  std::size_t mh_inflight = 4;
  medihall.option("store", mh_store, "Record store holding the reference reports");
  medihall.option("candidates", mh_cands, "Candidate reports to judge (JSONL: report_id, text)");
  medihall.option("judge-a-url", ja_url, "First judge endpoint (key: COMT_JUDGE_A_API_KEY)");
  medihall.option("judge-a-model", ja_model, "First judge model");
  medihall.option("judge-b-url", jb_url, "Second judge endpoint (key: COMT_JUDGE_B_API_KEY)");
  medihall.option("judge-b-model", jb_model, "Second judge model");
  medihall.option("timeout-ms", mh_timeout, "Per-request timeout");
  medihall.option("retries", mh_retries, "Retries after the first attempt");
  medihall.option("max-in-flight", mh_inflight, "Concurrent judge requests");
  medihall.option("export", mh_export, "Write sentence judgments (JSONL)");

  // inject
  Command inject_cmd(app, "inject", "Write candidates with injected hallucinations and their ledger");
  std::string in_input, in_out, in_rates = "cat=0.2,crit=0.1,attr=0.1", in_tables;
  std::size_t in_synthetic = 0;
  std::uint64_t in_seed = 0;
  inject_cmd.option("input", in_input, "Reference corpus (JSONL); omit to use --synthetic");
  inject_cmd.option("synthetic", in_synthetic, "Generate this many synthetic references");
  inject_cmd.option("out", in_out, "Output directory");
  inject_cmd.option("rates", in_rates, "cat=..,crit=..,attr=..");
  inject_cmd.option("seed", in_seed, "Run seed");
  inject_cmd.option("tables", in_tables, "Injection tables");

  // validate
  Command validate(app, "validate", "Run the oracle-judge check of the MediHall pipeline");
  std::string va_input, va_rates = "cat=0.2,crit=0.1,attr=0.1", va_tables, va_out;
  std::size_t va_reports = 200, va_inflight = 4;
  std::uint64_t va_seed = 0;
  bool va_discordant = false;
  validate.option("input", va_input, "Reference corpus (JSONL); omit for a synthetic corpus");
  validate.option("reports", va_reports, "Synthetic corpus size");
  validate.option("rates", va_rates, "cat=..,crit=..,attr=..");
  validate.option("seed", va_seed, "Run seed");
  validate.option("tables", va_tables, "Injection tables");
  validate.flag("discordant", va_discordant, "Second judge always answers Correct");
  validate.option("out", va_out, "Write the full validation report (JSON)");
  validate.option("max-in-flight", va_inflight, "Concurrent judge calls");

  // humanscore
  Command humanscore(app, "humanscore", "Human score from clinician tallies");
  std::string hs_input, hs_clinician = "clinician";
  std::int64_t hs_faith = -1, hs_com = -1, hs_flu = -1, hs_data = -1;
  humanscore.option("input", hs_input, "Tallies (JSONL: clinician_id, num_faith, num_com, num_flu, num_data)");
  humanscore.option("faith", hs_faith, "Faithful count");
  humanscore.option("com", hs_com, "Comprehensive count");
  humanscore.option("flu", hs_flu, "Fluent count");
  humanscore.option("data", hs_data, "Number of evaluated reports");
  humanscore.option("clinician", hs_clinician, "Clinician id for a single tally");

  // serve
  Command serve(app, "serve", "Run the review service");
  std::string sv_store, sv_bind = "127.0.0.1", sv_reviewers, sv_ui;
  int sv_port = 8080;
  serve.option("store", sv_store, "Record store directory");
  serve.option("bind", sv_bind, "Bind address");
  serve.option("port", sv_port, "Port (0 picks a free one)");
  serve.option("reviewers", sv_reviewers, "Reviewer list file");
  serve.option("ui-dir", sv_ui, "Static UI assets served at /");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, err, err);
    return code == 0 ? kOk : kUsage;
  }

  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto log = std::make_shared<spdlog::logger>("comt", sink);
  log->set_pattern("[%l] %v");
  log->set_level(verbose ? spdlog::level::debug : (quiet ? spdlog::level::warn : spdlog::level::info));

  Command* cmd = nullptr;
  for (auto* c : {&ingest, &decompose, &chain, &augment, &evaluate, &medihall, &inject_cmd, &validate, &humanscore,
                  &serve})
    if (c->app()->parsed()) cmd = c;

  Json summary{{"command", cmd->name()}, {"artifact_version", std::string(kArtifactVersion)}};
  auto emit = [&](int code) {
    summary["status"] = code == kOk ? "ok" : "failed";
    out << summary.dump(2) << '\n';
    out.flush();
    return code;
  };

  try {
    if (config_path.empty())
      if (const char* env = std::getenv("COMT_CONFIG"); env && *env) config_path = env;
    Json config = Json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw UsageError("cannot read config file " + config_path);
      config = Json::parse(in, nullptr, false);
      if (config.is_discarded() || !config.is_object()) throw UsageError(config_path + ": config must be a JSON object");
    }
    cmd->resolve(config);
    summary["config"] = cmd->resolved();
    if (!config_path.empty()) summary["config_file"] = config_path;

    // ---------------------------------------------------------------- ingest
    if (cmd == &ingest) {
      ingest.require({"input", "store"});
      auto store = RecordStore::open(ingest_store, OpenOptions{true, true});
      const auto s = ingest_corpus(store, ingest_input, ingest_source);
      Json rejects = Json::array();
      for (const auto& r : s.rejects) {
        rejects.push_back({{"line", r.line_number}, {"reason", r.reason}});
        log->warn("line {} rejected: {}", r.line_number, r.reason);
      }
      summary.update({{"accepted", s.accepted},
                      {"already_present", s.already_present},
                      {"rejected", s.rejects.size()},
                      {"rejects", rejects},
                      {"stages", manifest_counts(store)}});
      log->info("ingested {} reports ({} already present, {} rejected)", s.accepted, s.already_present,
                s.rejects.size());
      return emit(kOk);
    }

    // ------------------------------------------------------------- decompose
    if (cmd == &decompose) {
      decompose.require({"store"});
      auto store = RecordStore::open(dec_store, OpenOptions{true, false});
      std::unique_ptr<SegmentationBackend> backend;
      if (dec_backend == "rule") {
        backend = std::make_unique<RuleSegmentationBackend>(
            Lexicon::load(dec_lexicon.empty() ? default_lexicon_path() : std::filesystem::path(dec_lexicon)));
      } else if (dec_backend == "llm") {
        decompose.require({"segment-url"});
        backend = std::make_unique<LlmSegmentationBackend>(std::make_shared<HttpCompletionClient>(
            endpoint(seg_url, seg_model, "COMT_SEGMENT_API_KEY", dec_timeout, dec_retries)));
      } else {
        throw UsageError("decompose: --backend must be rule or llm");
      }
      const auto s = decompose_store(store, *backend);
      for (const auto& f : s.failures) log->error("{}", f);
      summary.update({{"backend_id", backend->id()},
                      {"deterministic", backend->kind() == BackendKind::RuleBased},
                      {"written", s.written},
                      {"skipped", s.skipped},
                      {"failures", s.failures},
                      {"stages", manifest_counts(store)}});
      return emit(s.failures.empty() ? kOk : kFailed);
    }

    // ----------------------------------------------------------------- chain
    if (cmd == &chain) {
      chain.require({"store", "out"});
      const auto mode = parse_emit_mode(ch_mode);
      if (!mode) throw UsageError("chain: --mode must be chained, flat-qa or original-report");
      EmitOptions eo{*mode, std::nullopt};
      if (!ch_dimension.empty()) {
        eo.only_dimension = parse_dimension(ch_dimension);
        if (!eo.only_dimension) throw UsageError("chain: unknown dimension '" + ch_dimension + "'");
      }
      const auto templates =
          TemplateTable::load(ch_templates.empty() ? default_templates_path() : std::filesystem::path(ch_templates));
      auto store = RecordStore::open(ch_store, OpenOptions{true, false});
      const auto cs = chain_store(store, templates, ChainOptions{!ch_no_sentinels}, ch_unverified);
      std::filesystem::create_directories(ch_out);
      const auto er = emit_dataset(store, ch_out, templates, eo);
      for (const auto& w : er.warnings) log->warn("{}", w);
      Json counts = Json::object();
      for (const auto& [split, n] : er.counts) counts[std::string(to_string(split))] = n;
      summary.update({{"template_version", templates.version()},
                      {"chained_written", cs.written},
                      {"not_chain_eligible", cs.skipped},
                      {"emitted", counts},
                      {"total", er.total},
                      {"warnings", er.warnings}});
      write_run_json(std::filesystem::path(ch_out) / "run.json", summary);
      return emit(kOk);
    }

    // --------------------------------------------------------------- augment
    if (cmd == &augment) {
      augment.require({"input", "out"});
      const auto mode = parse_augment_mode(au_mode);
      if (!mode) throw UsageError("augment: --mode must be rephrase, eda_insert, eda_swap or eda_delete");
      const AugmentSpec spec{*mode, au_rate, au_seed};
      const auto loaded = load_raw_corpus(au_input);
      std::unique_ptr<HttpCompletionClient> client;
      if (*mode == AugmentMode::Rephrase) {
        augment.require({"rephrase-url"});
        client = std::make_unique<HttpCompletionClient>(
            endpoint(re_url, re_model, "COMT_REPHRASE_API_KEY", au_timeout, au_retries));
      }
      std::vector<Json> records;
      std::vector<std::string> failures, warnings;
      for (const auto& r : loaded.reports) {
        try {
          if (client) {
            auto outcome = rephrase_report(r, *client);
            if (!outcome.warning.empty()) warnings.push_back(outcome.warning);
            if (outcome.report) records.push_back(to_augmented_json(*outcome.report, spec));
          } else {
            records.push_back(to_augmented_json(eda_transform(r, spec), spec));
          }
        } catch (const ValidationError& e) {
          failures.push_back(e.what());
        } catch (const RetriableBackendError& e) {
          failures.push_back(r.report_id + ": " + e.what());
        }
      }
      for (const auto& w : warnings) log->warn("{}", w);
      for (const auto& f : failures) log->error("{}", f);
      write_jsonl_atomic(au_out, records);
      summary.update({{"mode", au_mode},
                      {"seed", au_seed},
                      {"deterministic", *mode != AugmentMode::Rephrase},
                      {"written", records.size()},
                      {"input_rejects", loaded.rejects.size()},
                      {"warnings", warnings},
                      {"failures", failures}});
      if (*mode != AugmentMode::Rephrase) {
        summary["augment_rate"] = au_rate;
        summary["augment_rate_is_default"] = !augment.given("rate");
      }
      write_run_json(au_out + ".run.json", summary);
      return emit(failures.empty() ? kOk : kFailed);
    }

    // -------------------------------------------------------------- evaluate
    if (cmd == &evaluate) {
      evaluate.require({"candidates", "references"});
      const auto cands = read_text_map(ev_cands);
      const auto refs = read_text_map(ev_refs);
      std::unique_ptr<EmbeddingBackend> emb;
      if (ev_embedding == "hashed")
        emb = std::make_unique<HashedTestEmbedding>(em_dim);
      else if (ev_embedding == "orthogonal")
        emb = std::make_unique<OrthogonalTestEmbedding>(std::max<std::size_t>(em_dim, 4096));
      else if (ev_embedding == "remote") {
        evaluate.require({"embed-url"});
        emb = std::make_unique<RemoteEmbedding>(
            endpoint(em_url, em_model, "COMT_EMBED_API_KEY", ev_timeout, ev_retries), em_dim);
      } else if (ev_embedding != "none") {
        throw UsageError("evaluate: --embedding must be none, hashed, orthogonal or remote");
      }
      std::map<std::string, double> idf;
      BertScoreOptions bo;
      if (ev_idf) {
        std::vector<TokenSeq> docs;
        for (const auto& [id, text] : refs) docs.push_back(normalize_tokenize(text));
        idf = compute_idf(docs);
        bo.idf = &idf;
      }
      bo.baseline = ev_baseline;
      const auto scores = evaluate_corpus(cands, refs, emb.get(), bo);
      std::size_t extra = 0;
      for (const auto& [id, text] : cands) extra += refs.count(id) == 0;
      if (!scores.missing_candidates.empty())
        log->warn("{} references have no candidate", scores.missing_candidates.size());
      Json meta{{"normalization", std::string(kNormalizationId)},
                {"meteor_variant", std::string(kMeteorVariant)},
                {"aggregation", "arithmetic mean of per-report scores"},
                {"scale", "[0,1]"},
                {"bertscore",
                 emb ? Json{{"backend", emb->id()}, {"idf", ev_idf}, {"baseline", ev_baseline}} : Json(nullptr)},
                {"deterministic", !emb || emb->kind() == EmbeddingKind::DeterministicTest}};
      if (!ev_out.empty()) {
        std::vector<Json> records;
        for (const auto& r : scores.reports) records.push_back(to_json(r));
        auto corpus = to_json(scores.mean);
        corpus["reports"] = scores.reports.size();
        corpus["metadata"] = meta;
        corpus["config"] = summary["config"];
        corpus["artifact_version"] = std::string(kArtifactVersion);
        records.push_back(corpus);
        write_jsonl_atomic(ev_out, records);
      }
      summary.update({{"reports", scores.reports.size()},
                      {"missing_candidates", scores.missing_candidates},
                      {"candidates_without_reference", extra},
                      {"mean", scores.reports.empty() ? Json(nullptr) : to_json(scores.mean)},
                      {"metadata", meta}});
      return emit(kOk);
    }

    // -------------------------------------------------------------- medihall
    if (cmd == &medihall) {
      medihall.require({"store"});
      auto store = RecordStore::open(mh_store, OpenOptions{true, false});
      std::vector<std::string> failures;
      std::size_t judged = 0, already = 0;
      if (!mh_cands.empty()) {
        medihall.require({"judge-a-url", "judge-b-url"});
        HttpCompletionClient client_a(endpoint(ja_url, ja_model, "COMT_JUDGE_A_API_KEY", mh_timeout, mh_retries));
        HttpCompletionClient client_b(endpoint(jb_url, jb_model, "COMT_JUDGE_B_API_KEY", mh_timeout, mh_retries));
        LlmJudge judge_a(client_a, "a:" + client_a.id());
        LlmJudge judge_b(client_b, "b:" + client_b.id());
        std::map<std::string, RawReport> refs;
        for (const auto& j : store.read_latest(Stage::Raw)) {
          auto r = raw_report_from_json(j);
          refs.emplace(r.report_id, std::move(r));
        }
        for (const auto& [rid, text] : read_text_map(mh_cands)) {
          auto ref = refs.find(rid);
          if (ref == refs.end()) {
            failures.push_back(rid + ": no reference report in the store");
            continue;
          }
          if (store.contains(Stage::Judgments, rid + "#s0")) {
            ++already;
            continue;
          }
          RawReport candidate = ref->second;
          candidate.report_text = text;
          try {
            std::vector<Json> records;
            for (const auto& j : judge_report(candidate, ref->second, judge_a, judge_b, {mh_inflight}))
              records.push_back(to_json(j));
            store.append(Stage::Judgments, records);
            ++judged;
          } catch (const RetriableBackendError& e) {
            failures.push_back(rid + ": " + e.what());
          } catch (const ValidationError& e) {
            failures.push_back(rid + ": " + e.what());
          }
        }
      }
      for (const auto& f : failures) log->error("{}", f);
      const auto judgments = stored_judgments(store);
      if (judgments.empty()) throw ValidationError("no sentence judgments in the store to score");
      if (!mh_export.empty()) {
        std::vector<Json> records;
        for (const auto& j : judgments) records.push_back(to_json(j));
        write_jsonl_atomic(mh_export, records);
        write_run_json(mh_export + ".run.json", summary);
      }
      const auto results = score_reports(judgments);
      Json reports = Json::array();
      for (const auto& r : results) reports.push_back(to_json(r));
      summary.update({{"judged_now", judged},
                      {"already_judged", already},
                      {"failures", failures},
                      {"agreement_rate", agreement_rate(judgments)},
                      {"aggregation", std::string(kCorpusAggregation)},
                      {"reports", reports},
                      {"deterministic", false}});
      try {
        summary["corpus_medihall"] = corpus_medihall(results);
        summary["final"] = true;
      } catch (const PendingJudgmentsError& e) {
        log->warn("{}", e.what());
        summary["corpus_medihall"] = nullptr;
        summary["final"] = false;
        summary["pending_report_ids"] = e.report_ids();
        return emit(kFailed);
      }
      return emit(failures.empty() ? kOk : kFailed);
    }

    // ---------------------------------------------------------------- inject
    if (cmd == &inject_cmd) {
      inject_cmd.require({"out"});
      if (in_input.empty() && in_synthetic == 0) throw UsageError("inject: give --input or --synthetic N");
      const InjectionSpec spec{parse_rates(in_rates), in_seed};
      spec.validate();
      const auto tables = InjectionTables::load(in_tables.empty() ? default_injection_tables_path()
                                                                  : std::filesystem::path(in_tables));
      const auto refs = in_input.empty() ? synthetic_corpus(in_synthetic, in_seed) : load_raw_corpus(in_input).reports;
      std::vector<Json> candidates, expected, references;
      InjectionLedger ledger;
      std::map<std::string, std::size_t> labels;
      std::size_t substitutions = 0;
      double sum = 0.0;
      for (const auto& r : refs) {
        const auto inj = inject(r, spec, tables);
        ledger.add(inj);
        candidates.push_back(to_json(inj.candidate));
        expected.push_back({{"report_id", r.report_id}, {"expected_score", inj.expected_score}});
        references.push_back(to_json(r));
        for (const auto& e : inj.ledger) ++labels[std::string(to_string(e.label))];
        substitutions += inj.substitutions.size();
        sum += inj.expected_score;
      }
      const std::filesystem::path dir(in_out);
      std::filesystem::create_directories(dir);
      write_jsonl_atomic(dir / "candidates.jsonl", candidates);
      write_jsonl_atomic(dir / "references.jsonl", references);
      write_jsonl_atomic(dir / "expected.jsonl", expected);
      write_jsonl_atomic(dir / "ledger.jsonl", ledger.export_records());
      summary.update({{"reports", refs.size()},
                      {"sentences", ledger.size()},
                      {"labels", labels},
                      {"rerolled_draws", substitutions},
                      {"tables_version", tables.version},
                      {"expected_corpus_medihall", refs.empty() ? Json(nullptr) : Json(sum / refs.size())}});
      write_run_json(dir / "run.json", summary);
      return emit(kOk);
    }

    // -------------------------------------------------------------- validate
    if (cmd == &validate) {
      const InjectionSpec spec{parse_rates(va_rates), va_seed};
      spec.validate();
      const auto tables = InjectionTables::load(va_tables.empty() ? default_injection_tables_path()
                                                                  : std::filesystem::path(va_tables));
      const auto refs = va_input.empty() ? synthetic_corpus(va_reports, va_seed) : load_raw_corpus(va_input).reports;
      const auto rep = validate_pipeline(refs, spec, tables, ValidationOptions{va_discordant, {va_inflight}});
      auto s = rep.summary();
      s["mode"] = va_discordant ? "discordant" : "concordant";
      s["tables_version"] = tables.version;
      if (!va_out.empty()) {
        auto full = summary;
        full.update(s);
        full["judgments"] = Json::array();
        for (const auto& j : rep.judgments) full["judgments"].push_back(to_json(j));
        write_run_json(va_out, full);
      }
      summary.update(s);
      if (!rep.passed)
        for (const auto& m : rep.mismatches) log->error("{}", m);
      return emit(rep.passed ? kOk : kFailed);
    }

    // ------------------------------------------------------------ humanscore
    if (cmd == &humanscore) {
      std::vector<HumanEvalTally> tallies;
      if (!hs_input.empty()) {
        for (const auto& j : read_jsonl(hs_input)) tallies.push_back(human_tally_from_json(j));
      } else {
        humanscore.require({"faith", "com", "flu", "data"});
        tallies.push_back({hs_clinician, hs_faith, hs_com, hs_flu, hs_data});
      }
      const auto s = human_scores(tallies);
      Json per = Json::array();
      for (const auto& [id, score] : s.per_clinician) per.push_back({{"clinician_id", id}, {"score", score}});
      summary.update({{"per_clinician", per}, {"mean", s.mean}});
      return emit(kOk);
    }

    // ----------------------------------------------------------------- serve
    if (cmd == &serve) {
      serve.require({"store"});
      auto store = RecordStore::open(sv_store, OpenOptions{true, false});
      ServiceConfig sc;
      if (!sv_reviewers.empty())
        sc.reviewers = load_reviewers(sv_reviewers);
      else
        log->warn("no --reviewers list; any non-empty reviewer id is accepted");
      ReviewService service(store, sc);
      ReviewServer server(service, ServerOptions{sv_ui});
      int port = sv_port;
      if (sv_port == 0) {
        port = server.bind_to_any_port(sv_bind);
        if (port < 0) throw Error("cannot bind " + sv_bind);
      } else if (!server.bind(sv_bind, sv_port)) {
        throw Error("cannot bind " + sv_bind + ":" + std::to_string(sv_port));
      }
      log->info("review service listening on http://{}:{}", sv_bind, port);
      {
        SignalStopper stopper(server);
        server.listen_after_bind();
      }
      summary.update({{"address", sv_bind + ":" + std::to_string(port)}, {"progress", to_json(service.progress())}});
      return emit(kOk);
    }
  } catch (const UsageError& e) {
    err << e.what() << "\n\n" << cmd->app()->help();
    return kUsage;
  } catch (const std::exception& e) {
    log->error("{}", e.what());
    summary["error"] = e.what();
    return emit(kFailed);
  }
  return kUsage;
}

}  // namespace comt
