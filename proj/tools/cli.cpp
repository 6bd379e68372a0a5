#include "cli.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ream/augmentor.hpp"
#include "ream/corpus.hpp"
#include "ream/embeddings.hpp"
#include "ream/errors.hpp"
#include "ream/experiments.hpp"
#include "ream/log.hpp"
#include "ream/metrics.hpp"
#include "ream/service.hpp"
#include "ream/training.hpp"

namespace ream::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct ProviderFlags {
  bool provider_given = false;
  std::string backend = "hash";
  std::size_t dim = 64;
  std::string tokenizer = "whitespace";
  std::uint64_t hash_seed = 0;
  std::string cache;
  std::string endpoint;
  int timeout_ms = 10000;

  bool given() const { return provider_given; }

  ProviderConfig config() const {
    ProviderConfig c;
    if (backend == "hash") c.backend = ProviderConfig::Backend::hash;
    else if (backend == "file") c.backend = ProviderConfig::Backend::file;
    else if (backend == "remote") c.backend = ProviderConfig::Backend::remote;
    else throw ValidationError("unknown provider '" + backend + "' (hash, file or remote)");
    c.dimension = dim;
    c.tokenizer = Tokenizer::from_name(tokenizer);
    c.seed = hash_seed;
    c.cache_path = cache;
    c.endpoint = endpoint;
    c.timeout = std::chrono::milliseconds(timeout_ms);
    return c;
  }
};

void add_provider_flags(CLI::App* app, ProviderFlags& f) {
  app->add_option_function<std::string>(
      "--provider",
      [&f](const std::string& v) {
        f.backend = v;
        f.provider_given = true;
      },
      "Embedding provider: hash, file or remote");
  app->add_option("--dim", f.dim, "Embedding dimension")->capture_default_str();
  app->add_option("--tokenizer", f.tokenizer, "whitespace, character (append -cased to keep case)")
      ->capture_default_str();
  app->add_option("--hash-seed", f.hash_seed, "Seed of the hash provider");
  app->add_option("--cache", f.cache, "Embedding cache file (file provider)");
  app->add_option("--endpoint", f.endpoint, "Encoder URL (remote provider; REAM_ENCODER_URL overrides)");
  app->add_option("--timeout-ms", f.timeout_ms, "Remote encoder timeout");
}

struct Common {
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out;
};

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      const int v = std::stoi(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      out.push_back(v);
    } catch (const std::logic_error&) {
      throw ValidationError("not an integer list: '" + s + "'");
    }
  }
  if (out.empty()) throw ValidationError("empty integer list");
  return out;
}

std::vector<std::string> parse_name_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');)
    if (!tok.empty()) out.push_back(tok);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

fs::path out_dir(const std::string& out) {
  if (out.empty()) throw ValidationError("--out is required");
  fs::create_directories(out);
  return out;
}

std::shared_ptr<const EmbeddingProvider> make_shared_provider(const ProviderConfig& cfg) {
  return std::shared_ptr<const EmbeddingProvider>(make_provider(cfg));
}

std::unique_ptr<metrics::Metric> make_metric(const std::string& name, const ProviderFlags& pf,
                                             std::shared_ptr<const EmbeddingProvider> provider) {
  auto cfg = metrics::MetricConfig::from_name(name);
  if (cfg.kind == metrics::MetricKind::embed_f1) {
    if (!pf.given() && !provider)
      throw ValidationError("--metric embed requires --provider");
    if (!provider) provider = make_shared_provider(pf.config());
    return std::make_unique<metrics::Metric>(cfg, provider, provider->tokenizer());
  }
  return std::make_unique<metrics::Metric>(cfg, nullptr, pf.config().tokenizer);
}

struct LoadedModel {
  model::Checkpoint ckpt;
  std::shared_ptr<const model::ModelParams> params;
  std::shared_ptr<const EmbeddingProvider> provider;
};

// The provider comes from the flags when --provider is given, else from the
// checkpoint's hash fingerprint.
LoadedModel load_model(const std::string& path, const ProviderFlags& pf) {
  if (path.empty()) throw ValidationError("--model is required");
  LoadedModel m;
  m.ckpt = model::load_checkpoint(path);
  m.params = std::make_shared<const model::ModelParams>(m.ckpt.params);
  if (pf.given()) {
    m.provider = make_shared_provider(pf.config());
  } else {
    const std::string fp = m.ckpt.meta.value("provider", "");
    if (!fp.starts_with("hash:"))
      throw ValidationError("checkpoint was trained with provider '" + fp +
                            "'; pass --provider and its flags");
    m.provider = make_shared_provider(parse_hash_fingerprint(fp));
  }
  if (m.provider->dimension() != m.params->input_dim())
    throw ValidationError("provider dimension " + std::to_string(m.provider->dimension()) +
                          " does not match the checkpoint's " +
                          std::to_string(m.params->input_dim()));
  return m;
}

Corpus load_required_corpus(const std::string& path, const Tokenizer& tok = {}) {
  if (path.empty()) throw ValidationError("--corpus is required");
  return load_corpus(path, tok);
}

std::vector<RefSetInstance> make_instances(const Corpus& corpus, const std::vector<int>& ks,
                                           int per_k, std::uint64_t seed) {
  std::vector<RefSetInstance> out;
  for (const auto& s : corpus) {
    auto v = augment_combinations(s, ks, per_k, seed);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

const EvalSample& find_sample(const Corpus& corpus, const std::string& id) {
  for (const auto& s : corpus)
    if (s.query.id == id) return s;
  throw ValidationError("no sample with id '" + id + "'");
}

std::vector<std::unique_ptr<metrics::Metric>> make_metrics(
    const std::string& names, const ProviderFlags& pf,
    std::shared_ptr<const EmbeddingProvider> embed_provider) {
  std::vector<std::unique_ptr<metrics::Metric>> out;
  for (const auto& n : parse_name_list(names)) out.push_back(make_metric(n, pf, embed_provider));
  if (out.empty()) throw ValidationError("no metrics given");
  return out;
}

std::vector<const metrics::Metric*> raw(const std::vector<std::unique_ptr<metrics::Metric>>& v) {
  std::vector<const metrics::Metric*> out;
  for (const auto& m : v) out.push_back(m.get());
  return out;
}

// ---------------------------------------------------------------- commands

struct SynthFlags {
  SynthConfig cfg;
};

void cmd_synth(const SynthFlags& f, const Common& c) {
  SynthConfig cfg = f.cfg;
  cfg.seed = c.seed;
  if (c.out.empty()) throw ValidationError("--out is required");
  const auto corpus = synth_generate(cfg);
  if (fs::path(c.out).has_parent_path()) fs::create_directories(fs::path(c.out).parent_path());
  save_corpus(c.out, corpus);
  log::info("wrote " + std::to_string(corpus.size()) + " samples to " + c.out);
}

struct DataFlags {
  std::string corpus;
  std::string instances;
  std::string ks = "3,5,7,10";
  int per_k = 3;
  std::string metric = "bleu-star";
};

void cmd_augment_data(const DataFlags& f, const Common& c) {
  const auto corpus = load_required_corpus(f.corpus);
  if (c.out.empty()) throw ValidationError("--out is required");
  const auto inst = make_instances(corpus, parse_int_list(f.ks), f.per_k, c.seed);
  save_instances(c.out, inst);
  log::info("wrote " + std::to_string(inst.size()) + " instances to " + c.out);
}

void cmd_label(const DataFlags& f, const ProviderFlags& pf, const Common& c) {
  const auto corpus = load_required_corpus(f.corpus, pf.config().tokenizer);
  if (c.out.empty()) throw ValidationError("--out is required");
  const auto metric = make_metric(f.metric, pf, nullptr);
  const auto inst = f.instances.empty() ? make_instances(corpus, parse_int_list(f.ks), f.per_k, c.seed)
                                        : load_instances(f.instances);
  const auto ex = model::label_instances(corpus, inst, *metric, c.jobs);
  std::vector<metrics::ScoreRecord> records;
  for (const auto& e : ex)
    records.push_back({corpus[e.sample_index].query.id, e.k(), metric->name(), e.gold_c, e.degenerate});
  metrics::save_score_report(c.out, records);
  log::info("labeled " + std::to_string(records.size()) + " reference sets");
}

struct TrainFlags {
  DataFlags data;
  model::TrainConfig cfg;
  double valid_fraction = 0.2;
};

void cmd_train(const TrainFlags& f, const ProviderFlags& pf, const Common& c) {
  if (c.out.empty()) throw ValidationError("--out is required");
  model::TrainConfig cfg = f.cfg;
  cfg.seed = c.seed;
  cfg.validate();
  if (!(f.valid_fraction >= 0 && f.valid_fraction < 1))
    throw ValidationError("--valid-fraction must lie in [0,1)");
  const auto provider = make_shared_provider(pf.config());
  const auto corpus = load_required_corpus(f.data.corpus, provider->tokenizer());
  const auto metric = make_metric(f.data.metric, pf, provider);
  const auto ks = parse_int_list(f.data.ks);
  const auto all = f.data.instances.empty() ? make_instances(corpus, ks, f.data.per_k, c.seed)
                                            : load_instances(f.data.instances);

  // Split by query: the last valid_fraction of the corpus validates.
  const auto n_valid = static_cast<std::size_t>(f.valid_fraction * static_cast<double>(corpus.size()));
  std::unordered_map<std::string, bool> is_valid;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    is_valid[corpus[i].query.id] = i >= corpus.size() - n_valid;
  std::vector<RefSetInstance> tr, va;
  for (const auto& inst : all) (is_valid[inst.sample_id] ? va : tr).push_back(inst);

  model::DatasetOptions opts;
  opts.negatives = {cfg.negatives_per_sample, c.seed};
  opts.jobs = c.jobs;
  const auto train_items = model::build_items(corpus, tr, *metric, *provider, opts);
  opts.with_negatives = false;
  const auto valid_items = model::build_items(corpus, va, *metric, *provider, opts);
  log::info("training on " + std::to_string(train_items.size()) + " examples, validating on " +
            std::to_string(valid_items.size()));

  const auto res = model::fit(train_items, valid_items, cfg, provider->dimension());
  model::Checkpoint ckpt;
  ckpt.params = res.params;
  ckpt.meta = {{"train_config", cfg.to_json()},
               {"provider", provider->fingerprint()},
               {"metric", metric->name()},
               {"ks", ks},
               {"per_k", f.data.per_k},
               {"train_examples", train_items.size()},
               {"valid_examples", valid_items.size()},
               {"best_epoch", res.best_epoch},
               {"diverged", res.diverged}};
  const fs::path out(c.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  model::save_checkpoint(out, ckpt);
  write_json(out.string() + ".history.json",
             {{"history", model::to_json(res.history)},
              {"best_epoch", res.best_epoch},
              {"diverged", res.diverged}});
  if (res.diverged) throw DivergenceError("training diverged; best parameters were saved");
}

struct EvalFlags {
  std::string model;
  std::string corpus;
  std::string buckets = "3,5,10,20,30,40";
  int per_k = 2;
  std::string metric;
};

void cmd_eval(const EvalFlags& f, const ProviderFlags& pf, const Common& c) {
  const auto m = load_model(f.model, pf);
  const auto corpus = load_required_corpus(f.corpus, m.provider->tokenizer());
  const std::string metric_name = f.metric.empty() ? m.ckpt.meta.value("metric", "bleu-star") : f.metric;
  const auto metric = make_metric(metric_name, pf, m.provider);
  const auto inst = make_instances(corpus, parse_int_list(f.buckets), f.per_k, c.seed);
  model::DatasetOptions opts;
  opts.with_negatives = false;
  opts.jobs = c.jobs;
  const auto items = model::build_items(corpus, inst, *metric, *m.provider, opts);
  const auto report = model::evaluate(items, *m.params);
  const json j{{"metric", metric->name()}, {"buckets", model::to_json(report)}};
  if (!c.out.empty())
    write_json(c.out, j);
  else
    std::cout << j.dump(2) << '\n';
}

struct ScoreFlags {
  std::string model;
  std::string query;
  std::vector<std::string> refs;
  std::string corpus;
  std::string sample_id;
};

void cmd_score(const ScoreFlags& f, const ProviderFlags& pf, const Common& c) {
  const auto m = load_model(f.model, pf);
  std::string query = f.query;
  std::vector<std::string> refs = f.refs;
  if (!f.corpus.empty()) {
    const auto corpus = load_required_corpus(f.corpus, m.provider->tokenizer());
    const auto& s = find_sample(corpus, f.sample_id);
    query = s.query.text;
    for (const auto& r : s.references) refs.push_back(r.text);
  }
  if (refs.empty()) throw ValidationError("no references given (--ref or --corpus/--sample-id)");
  const double score = model::predict(*m.provider, *m.params, query, refs);
  const json j{{"score", score}, {"num_refs", refs.size()}};
  if (!c.out.empty())
    write_json(c.out, j);
  else
    std::cout << j.dump() << '\n';
}

struct AnnotateFlags {
  std::string model;
  std::string corpus;
  std::string sample_id;
  std::string retrieve_from;
  int top_k = 100;
  bool oracle = false;
  std::string metric = "bleu-star";
};

void cmd_auto_annotate(const AnnotateFlags& f, const ProviderFlags& pf, const Common& c) {
  if (c.out.empty()) throw ValidationError("--out is required");
  std::shared_ptr<const EmbeddingProvider> provider;
  augment::SetScorer model_scorer;
  if (!f.oracle) {
    const auto m = load_model(f.model, pf);
    provider = m.provider;
    model_scorer = augment::model_scorer(m.provider, m.params);
  }
  const Tokenizer tok = provider ? provider->tokenizer() : pf.config().tokenizer;
  auto corpus = std::make_shared<const Corpus>(load_required_corpus(f.corpus, tok));
  std::unique_ptr<metrics::Metric> metric;
  if (f.oracle) metric = make_metric(f.metric, pf, nullptr);

  Corpus pool_corpus;
  std::vector<PoolEntry> pool;
  if (!f.retrieve_from.empty()) pool_corpus = load_corpus(f.retrieve_from, tok);

  auto results = json::array();
  for (const auto& s : *corpus) {
    if (!f.sample_id.empty() && s.query.id != f.sample_id) continue;
    const std::size_t init = experiments::initial_reference(s, c.seed);
    std::vector<std::string> candidates;
    if (f.retrieve_from.empty()) {
      candidates = experiments::pool_candidates(s, init);
    } else {
      pool = pool_from_corpus(pool_corpus, s.query.id);
      for (const auto& r : jaccard_retrieve(s.query, pool, f.top_k, tok))
        candidates.push_back(r.response_text);
    }
    augment::SetScorer scorer = model_scorer;
    if (f.oracle)
      scorer = augment::oracle_scorer(std::shared_ptr<const EvalSample>(corpus, &s),
                                      model::metric_labeler(*metric));
    const std::vector<std::string> init_set{s.references[init].text};
    const auto res = augment::auto_augment(s.query.text, init_set, candidates, scorer,
                                           stable_hash(s.query.id, c.seed));
    auto j = augment::to_json(res);
    j["sample_id"] = s.query.id;
    results.push_back(std::move(j));
  }
  if (results.empty()) throw ValidationError("no sample matched");
  write_json(c.out, {{"seed", c.seed}, {"scorer", f.oracle ? "oracle" : "model"}, {"results", results}});
}

struct RetrieveFlags {
  std::string corpus;
  std::string query;
  int top_k = 10;
};

void cmd_retrieve(const RetrieveFlags& f, const ProviderFlags& pf, const Common& c) {
  const Tokenizer tok = pf.config().tokenizer;
  const auto corpus = load_required_corpus(f.corpus, tok);
  Query q;
  q.text = f.query;
  q.tokens = tok(f.query);
  const auto pool = pool_from_corpus(corpus);
  auto arr = json::array();
  for (const auto& r : jaccard_retrieve(q, pool, f.top_k, tok))
    arr.push_back({{"pool_index", r.pool_index},
                   {"query", r.query_text},
                   {"response", r.response_text},
                   {"similarity", r.similarity}});
  if (!c.out.empty())
    write_json(c.out, arr);
  else
    std::cout << arr.dump(2) << '\n';
}

struct ExperimentFlags {
  std::string corpus;
  std::string metrics = "bleu-star,embed";
  int max_refs = 10;
  std::string model;
  std::string model_b;
  std::string name_a = "bleu-star";
  std::string name_b = "embed";
  int target = 10;
  int prefix = 5;
};

void write_curves(const fs::path& dir, const std::string& stem,
                  const std::vector<experiments::CurvePoint>& pts, const std::string& title) {
  experiments::write_curves_csv(dir / (stem + ".csv"), pts);
  write_text(dir / (stem + ".svg"), experiments::render_svg(pts, title));
}

std::shared_ptr<const EmbeddingProvider> embed_provider_for(const ProviderFlags& pf) {
  // Embedding metric token vectors default to a hash provider.
  return make_shared_provider(pf.config());
}

void cmd_assume(const ExperimentFlags& f, const ProviderFlags& pf, const Common& c) {
  const auto dir = out_dir(c.out);
  const auto provider = embed_provider_for(pf);
  const auto corpus = load_required_corpus(f.corpus, provider->tokenizer());
  const auto ms = make_metrics(f.metrics + ",corpus-bleu", pf, provider);
  experiments::AssumptionConfig cfg;
  cfg.max_refs = f.max_refs;
  cfg.seed = c.seed;
  cfg.jobs = c.jobs;
  const auto pts = experiments::run_assumption_curves(corpus, raw(ms), cfg);
  write_curves(dir, "assumption", pts, "Pearson vs number of references");
}

void cmd_compare(const ExperimentFlags& f, const ProviderFlags& pf, const Common& c) {
  const auto dir = out_dir(c.out);
  const auto m = load_model(f.model, pf);
  const auto corpus = load_required_corpus(f.corpus, m.provider->tokenizer());
  const auto ms = make_metrics(f.metrics, pf, m.provider);
  experiments::CompareConfig cfg;
  cfg.seed = c.seed;
  cfg.jobs = c.jobs;
  cfg.target_size = f.target;
  cfg.shared_prefix = f.prefix;
  const auto res = experiments::run_augment_comparison(
      corpus, augment::model_scorer(m.provider, m.params), raw(ms), {}, cfg);
  write_curves(dir, "compare", res.curves, "Model-selected vs random references");
  write_json(dir / "compare.json", experiments::to_json(res));
}

void cmd_transfer(const ExperimentFlags& f, const ProviderFlags& pf, const Common& c) {
  const auto dir = out_dir(c.out);
  const auto a = load_model(f.model, pf);
  const auto b = load_model(f.model_b, pf);
  const auto corpus = load_required_corpus(f.corpus, a.provider->tokenizer());
  const auto ms = make_metrics(f.metrics, pf, a.provider);
  experiments::CompareConfig cfg;
  cfg.seed = c.seed;
  cfg.jobs = c.jobs;
  cfg.target_size = f.target;
  cfg.shared_prefix = f.prefix;
  const std::vector<experiments::NamedScorer> models{
      {f.name_a, augment::model_scorer(a.provider, a.params)},
      {f.name_b, augment::model_scorer(b.provider, b.params)}};
  const auto pts = experiments::run_transferability(corpus, models, raw(ms), cfg);
  write_curves(dir, "transfer", pts, "Transferability across metrics");
}

struct ServeFlags {
  std::string model;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string oracle_corpus;
  std::string metric = "bleu-star";
  std::string snapshot;
  int max_attempts = augment::AnnotationSession::kDefaultMaxAttempts;
};

void cmd_serve(const ServeFlags& f, const ProviderFlags& pf, const Common&) {
  const auto m = load_model(f.model, pf);
  service::ServiceOptions opts;
  opts.default_max_attempts = f.max_attempts;
  opts.snapshot_path = f.snapshot;
  std::shared_ptr<metrics::Metric> metric;
  if (!f.oracle_corpus.empty()) {
    opts.oracle_corpus = std::make_shared<const Corpus>(load_corpus(f.oracle_corpus, m.provider->tokenizer()));
    metric = make_metric(f.metric, pf, m.provider);
    opts.oracle_labeler = model::metric_labeler(*metric);
  }
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  service::Service svc(m.provider, m.params, opts);
  const int port = svc.start(f.host, f.port);
  std::cout << json{{"host", f.host}, {"port", port}}.dump() << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  svc.stop();
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Reference-set reliability toolkit", "ream"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Common common;
  ProviderFlags pf;
  bool quiet = false;
  auto common_flags = [&](CLI::App* sub, bool with_out = true) {
    sub->add_option("--seed", common.seed, "Random seed")->capture_default_str();
    sub->add_option("--jobs", common.jobs, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--quiet", quiet, "Only print warnings");
    if (with_out) sub->add_option("--out", common.out, "Output path");
  };

  SynthFlags synth;
  auto* s_synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  s_synth->add_option("--queries", synth.cfg.num_queries, "Number of queries")->capture_default_str();
  s_synth->add_option("--pool", synth.cfg.pool_size_per_query, "References per query")->capture_default_str();
  s_synth->add_option("--responses", synth.cfg.num_model_responses, "Model responses per query")
      ->capture_default_str();
  s_synth->add_option("--noise", synth.cfg.noise_std, "Human score noise")->capture_default_str();
  s_synth->add_option("--aspects", synth.cfg.aspects_per_query, "Aspects per query")->capture_default_str();
  s_synth->add_option("--hq-fraction", synth.cfg.high_quality_fraction, "High-quality reference fraction")
      ->capture_default_str();
  s_synth->add_option("--world-seed", synth.cfg.world_seed, "Seed of the shared filler vocabulary")
      ->capture_default_str();
  s_synth->add_option("--hq-spread", synth.cfg.high_quality_spread, "Per-query spread of that fraction")
      ->capture_default_str();
  common_flags(s_synth);

  DataFlags data;
  auto* s_label = app.add_subcommand("label", "Label reference sets with gold reliability");
  auto* s_aug = app.add_subcommand("augment-data", "Sample k-combinations of reference pools");
  for (auto* sub : {s_label, s_aug}) {
    sub->add_option("--corpus", data.corpus, "Corpus JSONL")->required();
    sub->add_option("--ks", data.ks, "Set sizes")->capture_default_str();
    sub->add_option("--per-k", data.per_k, "Combinations per size")->capture_default_str();
    common_flags(sub);
  }
  s_label->add_option("--instances", data.instances, "Instances JSONL (default: sample --ks)");
  s_label->add_option("--metric", data.metric, "bleu-star, embed or corpus-bleu")->capture_default_str();
  add_provider_flags(s_label, pf);

  TrainFlags train;
  train.cfg.epochs = 20;
  auto* s_train = app.add_subcommand("train", "Train the reliability model");
  s_train->add_option("--corpus", train.data.corpus, "Corpus JSONL")->required();
  s_train->add_option("--instances", train.data.instances, "Instances JSONL (default: sample --ks)");
  s_train->add_option("--ks", train.data.ks, "Set sizes")->capture_default_str();
  s_train->add_option("--per-k", train.data.per_k, "Combinations per size")->capture_default_str();
  s_train->add_option("--metric", train.data.metric, "Labeling metric")->capture_default_str();
  s_train->add_option("--epochs", train.cfg.epochs, "Epochs")->capture_default_str();
  s_train->add_option("--lr", train.cfg.learning_rate, "Adam learning rate")->capture_default_str();
  s_train->add_option("--batch-size", train.cfg.batch_size, "Mini-batch size")->capture_default_str();
  s_train->add_option("--negatives", train.cfg.negatives_per_sample, "Negatives per example")
      ->capture_default_str();
  s_train->add_option("--gamma", train.cfg.l2_gamma, "L2 weight")->capture_default_str();
  s_train->add_option("--margin", train.cfg.margin, "Contrastive margin")->capture_default_str();
  s_train->add_option("--hidden", train.cfg.hidden_dim, "Hidden size (0 = input size)");
  s_train->add_flag("--squared-l2", train.cfg.squared_l2, "Use gamma * ||theta||^2");
  s_train->add_option("--valid-fraction", train.valid_fraction, "Held-out query fraction")
      ->capture_default_str();
  common_flags(s_train);
  add_provider_flags(s_train, pf);

  EvalFlags eval;
  auto* s_eval = app.add_subcommand("eval", "Per-bucket MSE of a trained model");
  s_eval->add_option("--model", eval.model, "Checkpoint")->required();
  s_eval->add_option("--corpus", eval.corpus, "Test corpus JSONL")->required();
  s_eval->add_option("--buckets", eval.buckets, "Set sizes")->capture_default_str();
  s_eval->add_option("--per-k", eval.per_k, "Sets per size and query")->capture_default_str();
  s_eval->add_option("--metric", eval.metric, "Labeling metric (default: the checkpoint's)");
  common_flags(s_eval);
  add_provider_flags(s_eval, pf);

  ScoreFlags score;
  auto* s_score = app.add_subcommand("score", "Predict the reliability of a reference set");
  s_score->add_option("--model", score.model, "Checkpoint")->required();
  s_score->add_option("--query", score.query, "Query text");
  s_score->add_option("--ref", score.refs, "Reference text (repeatable)");
  s_score->add_option("--corpus", score.corpus, "Corpus JSONL");
  s_score->add_option("--sample-id", score.sample_id, "Sample whose pool is scored");
  common_flags(s_score);
  add_provider_flags(s_score, pf);

  AnnotateFlags ann;
  auto* s_ann = app.add_subcommand("auto-annotate", "Greedy model-guided reference augmentation");
  s_ann->add_option("--model", ann.model, "Checkpoint");
  s_ann->add_option("--corpus", ann.corpus, "Corpus JSONL")->required();
  s_ann->add_option("--sample-id", ann.sample_id, "Only this sample");
  s_ann->add_option("--retrieve-from", ann.retrieve_from, "Retrieve candidates from this corpus");
  s_ann->add_option("--top-k", ann.top_k, "Retrieved candidates")->capture_default_str();
  s_ann->add_flag("--oracle", ann.oracle, "Score with the gold labeler instead of a model");
  s_ann->add_option("--metric", ann.metric, "Labeling metric for --oracle")->capture_default_str();
  common_flags(s_ann);
  add_provider_flags(s_ann, pf);

  RetrieveFlags ret;
  auto* s_ret = app.add_subcommand("retrieve", "Jaccard retrieval of candidate responses");
  s_ret->add_option("--corpus", ret.corpus, "Pool corpus JSONL")->required();
  s_ret->add_option("--query", ret.query, "Query text")->required();
  s_ret->add_option("--top-k", ret.top_k, "Results")->capture_default_str();
  common_flags(s_ret);
  add_provider_flags(s_ret, pf);

  ExperimentFlags ex;
  auto* s_assume = app.add_subcommand("assume", "Clean vs noisy reference curves");
  s_assume->add_option("--corpus", ex.corpus, "Corpus JSONL")->required();
  s_assume->add_option("--metrics", ex.metrics, "Metrics (corpus-bleu is always added)")
      ->capture_default_str();
  s_assume->add_option("--max-refs", ex.max_refs, "Curve length")->capture_default_str();
  common_flags(s_assume);
  add_provider_flags(s_assume, pf);

  auto* s_cmp = app.add_subcommand("compare", "Model-guided vs random augmentation");
  auto* s_tr = app.add_subcommand("transfer", "Cross-metric evaluation of two models");
  for (auto* sub : {s_cmp, s_tr}) {
    sub->add_option("--corpus", ex.corpus, "Test corpus JSONL")->required();
    sub->add_option("--metrics", ex.metrics, "Evaluation metrics")->capture_default_str();
    sub->add_option("--target", ex.target, "Final set size")->capture_default_str();
    sub->add_option("--shared-prefix", ex.prefix, "Members shared with the random set")
        ->capture_default_str();
    common_flags(sub);
    add_provider_flags(sub, pf);
  }
  s_cmp->add_option("--model", ex.model, "Checkpoint")->required();
  s_tr->add_option("--model-a", ex.model, "First checkpoint")->required();
  s_tr->add_option("--model-b", ex.model_b, "Second checkpoint")->required();
  s_tr->add_option("--name-a", ex.name_a, "Label of the first model")->capture_default_str();
  s_tr->add_option("--name-b", ex.name_b, "Label of the second model")->capture_default_str();

  ServeFlags serve;
  auto* s_serve = app.add_subcommand("serve", "HTTP API for scoring and annotation sessions");
  s_serve->add_option("--model", serve.model, "Checkpoint")->required();
  s_serve->add_option("--host", serve.host, "Bind address")->capture_default_str();
  s_serve->add_option("--port", serve.port, "Port (0 = any free port)")->capture_default_str();
  s_serve->add_option("--oracle-corpus", serve.oracle_corpus, "Corpus for oracle sessions");
  s_serve->add_option("--metric", serve.metric, "Labeling metric for oracle sessions")
      ->capture_default_str();
  s_serve->add_option("--snapshot", serve.snapshot, "Write sessions here on shutdown");
  s_serve->add_option("--max-attempts", serve.max_attempts, "Default edit attempts")
      ->capture_default_str();
  common_flags(s_serve, false);
  add_provider_flags(s_serve, pf);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();  // program name
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  log::set_level(quiet ? log::Level::warning : log::Level::info);
  try {
    if (*s_synth) cmd_synth(synth, common);
    else if (*s_label) cmd_label(data, pf, common);
    else if (*s_aug) cmd_augment_data(data, common);
    else if (*s_train) cmd_train(train, pf, common);
    else if (*s_eval) cmd_eval(eval, pf, common);
    else if (*s_score) cmd_score(score, pf, common);
    else if (*s_ann) cmd_auto_annotate(ann, pf, common);
    else if (*s_ret) cmd_retrieve(ret, pf, common);
    else if (*s_assume) cmd_assume(ex, pf, common);
    else if (*s_cmp) cmd_compare(ex, pf, common);
    else if (*s_tr) cmd_transfer(ex, pf, common);
    else if (*s_serve) cmd_serve(serve, pf, common);
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << '\n';
    return 2;
  }
}

int run(int argc, const char* const* argv) {
  return run(std::vector<std::string>(argv, argv + argc));
}

}  // namespace ream::cli
