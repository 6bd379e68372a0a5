// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "determinism.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "ream/augmentor.hpp"
#include "ream/experiments.hpp"
#include "ream/log.hpp"
#include "ream/service.hpp"
#include "ream/training.hpp"
#include "session_replay.hpp"

using namespace ream;
namespace t = ream::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream o;
  o.precision(prec);
  o << v;
  return o.str();
}

std::shared_ptr<const EmbeddingProvider> hash_provider(std::size_t d) {
  ProviderConfig c;
  c.dimension = d;
  return std::make_shared<const HashProvider>(c);
}

// ----------------------------------------------------------------------------

Outcome metric_oracles() {
  std::mt19937_64 rng(101);
  // [smoothed, unsmoothed]
  double worst_bleu[2] = {0, 0}, worst_corpus[2] = {0, 0}, worst_p = 0, worst_k = 0;
  constexpr int kCases = 250;
  for (int i = 0; i < kCases; ++i) {
    metrics::MetricConfig cfg;
    cfg.max_n = 1 + static_cast<int>(rng() % 4);
    cfg.smoothing = i % 2 ? metrics::Smoothing::none : metrics::Smoothing::add_epsilon;
    const auto c = t::random_tokens(rng, 1, 10, 5), r = t::random_tokens(rng, 1, 10, 5);
    const double d = std::abs(metrics::sentence_bleu(c, r, cfg) - t::brute_sentence_bleu(c, r, cfg));
    double& w = worst_bleu[cfg.smoothing == metrics::Smoothing::none];
    w = std::max(w, d);
  }
  for (int i = 0; i < kCases; ++i) {
    metrics::MetricConfig cfg;
    cfg.max_n = 1 + static_cast<int>(rng() % 4);
    cfg.smoothing = i % 2 ? metrics::Smoothing::none : metrics::Smoothing::add_epsilon;
    const int n = 1 + static_cast<int>(rng() % 5);
    std::vector<Tokens> cands;
    std::vector<std::vector<Tokens>> refs(n);
    for (int s = 0; s < n; ++s) {
      cands.push_back(t::random_tokens(rng, 1, 9, 5));
      for (int k = 1 + static_cast<int>(rng() % 4); k > 0; --k)
        refs[s].push_back(t::random_tokens(rng, 1, 9, 5));
    }
    const double d =
        std::abs(metrics::corpus_bleu_multi(cands, refs, cfg) - t::brute_corpus_bleu(cands, refs, cfg));
    double& w = worst_corpus[cfg.smoothing == metrics::Smoothing::none];
    w = std::max(w, d);
  }
  std::normal_distribution<double> g;
  int kendall_cases = 0;
  for (int i = 0; i < kCases; ++i) {
    const std::size_t n = 3 + rng() % 40;
    std::vector<double> x(n), y(n), xi(n), yi(n);
    for (std::size_t j = 0; j < n; ++j) {
      x[j] = g(rng);
      y[j] = 0.3 * x[j] + g(rng);
      xi[j] = static_cast<double>(rng() % 5);
      yi[j] = static_cast<double>(rng() % 5);
    }
    worst_p = std::max(worst_p, std::abs(metrics::pearson(x, y).value - t::brute_pearson(x, y)));
    worst_k = std::max(worst_k, std::abs(metrics::kendall(x, y).value - t::brute_kendall(x, y)));
    const auto kt = metrics::kendall(xi, yi);  // with ties
    if (!kt.degenerate) {
      worst_k = std::max(worst_k, std::abs(kt.value - t::brute_kendall(xi, yi)));
      ++kendall_cases;
    }
  }
  const bool pass = worst_bleu[0] <= 1e-9 && worst_bleu[1] <= 1e-12 && worst_corpus[0] <= 1e-9 &&
                    worst_corpus[1] <= 1e-12 && worst_p <= 1e-12 && worst_k <= 1e-12;
  return {pass, std::to_string(kCases) + " cases each; max |d| bleu " + fmt(worst_bleu[0]) + "/" +
                    fmt(worst_bleu[1]) + ", corpus " + fmt(worst_corpus[0]) + "/" +
                    fmt(worst_corpus[1]) + ", pearson " + fmt(worst_p) + ", kendall " +
                    fmt(worst_k) + " (+" + std::to_string(kendall_cases) + " tied)"};
}

Outcome superset_monotonicity() {
  std::mt19937_64 rng(202);
  const auto prov = hash_provider(16);
  metrics::SingleRefMetric bleu = [](const Tokens& c, const Tokens& r) {
    return metrics::sentence_bleu(c, r);
  };
  metrics::SingleRefMetric embed = [&](const Tokens& c, const Tokens& r) {
    return metrics::embed_f1(join(c), join(r), *prov);
  };
  int violations = 0;
  constexpr int kTriples = 1000;
  for (int i = 0; i < kTriples; ++i) {
    const auto cand = t::random_tokens(rng, 1, 8, 8);
    std::vector<Tokens> r2;
    for (int k = 2 + static_cast<int>(rng() % 5); k > 0; --k) r2.push_back(t::random_tokens(rng, 1, 8, 8));
    std::vector<Tokens> r1;
    for (const auto& r : r2)
      if (rng() % 2) r1.push_back(r);
    if (r1.empty()) r1.push_back(r2[rng() % r2.size()]);
    for (const auto* base : {&bleu, &embed})
      if (metrics::multi_ref_score(cand, r2, *base) < metrics::multi_ref_score(cand, r1, *base))
        ++violations;
  }
  return {violations == 0, std::to_string(kTriples) + " triples x {BLEU*, embed_f1}, " +
                               std::to_string(violations) + " violations"};
}

Outcome gradient_check() {
  std::mt19937_64 rng(303);
  double worst = 0;
  int active = 0, inactive = 0;
  constexpr int kConfigs = 30;
  for (int i = 0; i < kConfigs; ++i) {
    const bool on = i % 2 == 0;
    const auto c = t::random_grad_case(rng, on);
    const auto br = model::loss_total(c.batch(), c.params, c.loss);
    (br.active_hinges > 0 ? active : inactive)++;
    worst = std::max(worst, t::grad_rel_error(c));
  }
  return {worst < 1e-4 && active > 0 && inactive > 0,
          std::to_string(kConfigs) + " configs (" + std::to_string(active) + " hinge-active, " +
              std::to_string(inactive) + " inactive), max rel err " + fmt(worst)};
}

Outcome permutation_and_range() {
  std::mt19937_64 rng(404);
  int mismatches = 0, out_of_range = 0, evaluated = 0;
  constexpr int kInstances = 40, kPerms = 50;
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t d = 4 + rng() % 29, n = 2 + rng() % 9;
    auto p = model::ModelParams::init(d, 4 + rng() % 29, rng());
    p *= i < 10 ? 20.0 : 1.0;  // include saturated models
    const auto x = t::random_nodes(rng, n, d);
    const double ref = model::forward(x, p);
    std::vector<Eigen::Index> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int r = 0; r < kPerms; ++r) {
      std::shuffle(perm.begin(), perm.end(), rng);
      model::Matrix y(n, d);
      for (std::size_t j = 0; j < n; ++j) y.row(j) = x.row(perm[j]);
      const double s = model::forward(y, p);
      ++evaluated;
      if (s != ref) ++mismatches;
      if (!(s > -1.0 && s < 1.0)) ++out_of_range;
    }
  }
  return {mismatches == 0 && out_of_range == 0,
          std::to_string(evaluated) + " forwards, " + std::to_string(mismatches) +
              " inexact, " + std::to_string(out_of_range) + " outside (-1,1)"};
}

Outcome assumption_curves(const fs::path& work) {
  SynthConfig cfg;
  cfg.num_queries = 200;
  cfg.seed = 505;
  const auto corpus = synth_generate(cfg);
  const auto prov = hash_provider(32);
  metrics::Metric bleu{metrics::MetricConfig{}};
  metrics::Metric embed{metrics::MetricConfig::from_name("embed"), prov, prov->tokenizer()};
  metrics::Metric cbleu{metrics::MetricConfig::from_name("corpus-bleu")};
  const std::vector<const metrics::Metric*> ms{&bleu, &embed, &cbleu};
  experiments::AssumptionConfig ac;
  ac.seed = 5;
  const auto pts = experiments::run_assumption_curves(corpus, ms, ac);
  experiments::write_curves_csv(work / "assumption.csv", pts);
  std::ofstream(work / "assumption.svg") << experiments::render_svg(pts, "assumption");

  auto at = [&](const std::string& cond, const std::string& m, int k) {
    for (const auto& p : pts)
      if (p.condition == cond && p.metric == m && p.num_refs == k) return p;
    return experiments::CurvePoint{};
  };
  bool pass = true;
  std::string detail;
  for (const std::string m : {"bleu-star", "embed"}) {
    const auto c1 = at("clean", m, 1), c10 = at("clean", m, 10), n10 = at("noisy", m, 10);
    const bool ok = c10.mean - c1.mean >= 0.05 && n10.mean < c10.mean && c10.n_samples >= 200;
    pass &= ok;
    detail += m + ": clean " + fmt(c1.mean, 3) + "->" + fmt(c10.mean, 3) + ", noisy@10 " +
              fmt(n10.mean, 3) + " (n=" + std::to_string(c10.n_samples) + "); ";
  }
  detail += "corpus-bleu curve emitted";
  return {pass, detail};
}

struct Trained {
  std::shared_ptr<const EmbeddingProvider> provider;
  std::shared_ptr<const model::ModelParams> params;
  Corpus test;
};

SynthConfig spread_corpus(int queries, std::uint64_t seed) {
  SynthConfig c;
  c.num_queries = queries;
  c.seed = seed;
  c.high_quality_fraction = 0.5;
  c.high_quality_spread = 0.45;
  return c;
}

std::vector<RefSetInstance> instances(const Corpus& corpus, const std::vector<int>& ks, int per_k,
                                      std::uint64_t seed) {
  std::vector<RefSetInstance> out;
  for (const auto& s : corpus) {
    auto v = augment_combinations(s, ks, per_k, seed);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

Outcome model_learning(Trained& out) {
  const auto train_corpus = synth_generate(spread_corpus(200, 606));
  out.test = synth_generate(spread_corpus(100, 607));
  out.provider = hash_provider(32);
  metrics::Metric bleu{metrics::MetricConfig{}};

  std::vector<RefSetInstance> tr, va;
  const auto all = instances(train_corpus, {3, 5, 7, 10}, 3, 6);
  for (const auto& inst : all)
    (std::stoi(inst.sample_id.substr(1)) >= 180 ? va : tr).push_back(inst);
  model::DatasetOptions opts;
  opts.negatives = {3, 6};
  const auto train_items = model::build_items(train_corpus, tr, bleu, *out.provider, opts);
  opts.with_negatives = false;
  const auto valid_items = model::build_items(train_corpus, va, bleu, *out.provider, opts);

  model::TrainConfig cfg;
  cfg.epochs = 60;
  cfg.learning_rate = 2e-3;
  cfg.batch_size = 64;
  cfg.seed = 6;
  const auto fitted = model::fit(train_items, valid_items, cfg, 32);
  out.params = std::make_shared<const model::ModelParams>(fitted.params);

  const auto test_items = model::build_items(
      out.test, instances(out.test, {3, 5, 10, 20, 30, 40}, 2, 7), bleu, *out.provider, opts);
  const auto report = model::evaluate(test_items, fitted.params);
  bool pass = train_items.size() >= 2000 && !fitted.diverged;
  double in_range = 0;
  int n_in = 0;
  std::string detail = std::to_string(train_items.size()) + " training examples; ";
  for (const auto& b : report) {
    detail += "k=" + std::to_string(b.k) + " mse " + fmt(b.mse, 3) + "/base " +
              fmt(b.mean_baseline_mse, 3) + "; ";
    if (b.k <= 10) {
      pass &= b.mse <= 0.5 * b.mean_baseline_mse;
      in_range += b.mse;
      ++n_in;
    }
  }
  in_range /= n_in;
  for (const auto& b : report)
    if (b.k > 10) pass &= b.mse <= 2.0 * in_range;
  detail += "k<=10 avg " + fmt(in_range, 3);
  return {pass && report.size() == 6, detail};
}

Outcome augmentation_comparison(const Trained& m, const fs::path& work) {
  metrics::Metric bleu{metrics::MetricConfig{}};
  metrics::Metric embed{metrics::MetricConfig::from_name("embed"), m.provider,
                        m.provider->tokenizer()};
  const std::vector<const metrics::Metric*> ms{&bleu, &embed};
  experiments::CompareConfig cfg;
  cfg.seed = 8;
  const auto r = experiments::run_augment_comparison(
      m.test, augment::model_scorer(m.provider, m.params), ms, {}, cfg);
  experiments::write_curves_csv(work / "compare.csv", r.curves);
  std::ofstream(work / "compare.json") << experiments::to_json(r).dump(2);

  auto row = [&](const std::string& metric, const std::string& set) {
    for (const auto& t : r.table)
      if (t.metric == metric && t.set == set) return t.pearson;
    return std::nan("");
  };
  bool pass = r.samples.size() == 100 && r.win_rate() >= 0.65 && r.mean_improvement() > 0;
  std::string detail = "win rate " + fmt(r.win_rate(), 3) + " over " +
                       std::to_string(r.samples.size()) + " queries, mean improvement " +
                       fmt(r.mean_improvement(), 3) + "; ";
  for (const std::string metric : {"bleu-star", "embed"}) {
    const double raw = row(metric, "Raw"), aug = row(metric, "Aug");
    pass &= raw < aug;
    detail += metric + " Raw " + fmt(raw, 3) + " -> Aug " + fmt(aug, 3) + "; ";
  }
  return {pass, detail};
}

Outcome negatives_contract() {
  SynthConfig sc;
  sc.num_queries = 60;
  sc.seed = 707;
  const auto corpus = synth_generate(sc);
  metrics::Metric bleu{metrics::MetricConfig{}};
  const auto labeler = model::metric_labeler(bleu);
  const auto ex = model::label_instances(corpus, instances(corpus, {2, 3, 5, 8}, 1, 7), bleu);
  std::mt19937_64 rng(7);
  std::size_t sampled = 0, removes = 0, bad_remove = 0, foreign = 0, bad_foreign = 0;
  while (sampled < 500) {
    const auto& e = ex[rng() % ex.size()];
    const auto& parent = corpus[e.sample_index];
    for (const auto& n : model::make_negatives(e, corpus, {3, rng()}, labeler)) {
      ++sampled;
      if (n.kind == model::NegativeKind::remove) {
        ++removes;
        if (!(labeler(parent, n.texts(parent)) < e.gold_c) || n.foreign) ++bad_remove;
      } else {
        ++foreign;
        const auto texts = n.texts(parent);
        std::size_t from_other = 0;
        for (const auto& txt : texts) {
          bool own = false;
          for (const auto& r : parent.references) own |= r.text == txt;
          from_other += !own;
        }
        const bool ok = n.foreign && n.foreign->sample_index != e.sample_index &&
                        from_other == 1 && texts.size() == n.member_indices.size() + 1;
        bad_foreign += !ok;
      }
    }
  }
  return {bad_remove == 0 && bad_foreign == 0 && removes > 0 && foreign > 0,
          std::to_string(sampled) + " negatives: " + std::to_string(removes) + " remove (" +
              std::to_string(bad_remove) + " not below parent), " + std::to_string(foreign) +
              " add/replace (" + std::to_string(bad_foreign) + " without exactly one foreign)"};
}

Outcome session_replay() {
  const auto prov = hash_provider(16);
  const auto params =
      std::make_shared<const model::ModelParams>(model::ModelParams::init(16, 16, 9));
  service::Service svc(prov, params);
  std::mt19937_64 rng(808);
  int mismatched = 0, leaked = 0, history_bad = 0;
  constexpr int kScripts = 50;
  for (int script = 0; script < kScripts; ++script) {
    std::vector<std::string> cands;
    for (int i = 2 + static_cast<int>(rng() % 8); i > 0; --i)
      cands.push_back(join(t::random_tokens(rng, 2, 8, 30)));
    const std::vector<std::string> init{join(t::random_tokens(rng, 2, 8, 30))};
    const std::string query = "query " + std::to_string(script);
    const int max_attempts = static_cast<int>(rng() % 4);
    nlohmann::json body{{"query", query}, {"initial_refs", init}, {"candidates", cands},
                        {"max_attempts", max_attempts}};
    auto r = svc.handle("POST", "/sessions", body.dump());
    const std::string id = r.body["id"];
    std::vector<t::ScriptStep> steps;
    nlohmann::json view = r.body;
    while (!view["finished"].get<bool>()) {
      steps.push_back(t::choose(rng, view));
      nlohmann::json d{{"action", augment::to_string(steps.back().kind)}};
      if (!steps.back().text.empty()) d["text"] = steps.back().text;
      view = svc.handle("POST", "/sessions/" + id + "/decision", d.dump()).body["view"];
    }
    const auto exported = svc.handle("GET", "/sessions/" + id + "/export", "").body;
    const auto oracle = t::replay(init, cands, max_attempts, steps,
                                  [&](const std::vector<std::string>& set) {
                                    return model::predict(*prov, *params, query, set);
                                  });
    const auto final_set = exported["references"].get<std::vector<std::string>>();
    const auto history = exported["history"].get<std::vector<double>>();
    mismatched += final_set != oracle.final_set;
    history_bad += history != oracle.history || history.size() != 1 + oracle.mutations;
    for (const auto& c : exported["candidates"])
      if (c["status"] == "abandoned")
        leaked += std::count(final_set.begin(), final_set.end(), c["text"].get<std::string>()) > 0;
  }
  return {mismatched == 0 && leaked == 0 && history_bad == 0,
          std::to_string(kScripts) + " scripts via the service: " + std::to_string(mismatched) +
              " final-set mismatches, " + std::to_string(leaked) + " abandoned in final sets, " +
              std::to_string(history_bad) + " history mismatches"};
}

Outcome determinism(const fs::path& work) {
  const auto a = t::run_pipeline(work / "det_a", "42");
  const auto b = t::run_pipeline(work / "det_b", "42");
  if (a.empty() || b.empty()) return {false, "pipeline command failed"};
  std::string diff;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].second != b[i].second) diff += a[i].first + " ";
  return {diff.empty(), diff.empty() ? "synth, augment-data, train (+sidecar, history), "
                                       "auto-annotate: bit-identical"
                                     : "differs: " + diff};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "ream_acceptance";
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--workdir") work = argv[i + 1];
  fs::remove_all(work);
  fs::create_directories(work);
  log::set_level(log::Level::error);

  int failures = 0;
  auto check = [&](const std::string& name, double budget_s, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (budget_s > 0 && secs > budget_s) {
      o.pass = false;
      o.detail += "; over the " + fmt(budget_s) + " s budget";
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << "  [" << fmt(secs, 3) << " s]  "
              << o.detail << std::endl;
  };

  Trained trained;
  check("metric oracles", 30, metric_oracles);
  check("superset monotonicity", 0, superset_monotonicity);
  check("gradient check", 60, gradient_check);
  check("permutation invariance and range", 0, permutation_and_range);
  check("assumption curves", 300, [&] { return assumption_curves(work); });
  check("model learning", 900, [&] { return model_learning(trained); });
  check("augmentation comparison", 600, [&] {
    if (!trained.params) return Outcome{false, "no trained model"};
    return augmentation_comparison(trained, work);
  });
  check("negative construction contract", 0, negatives_contract);
  check("session replay", 0, session_replay);
  check("determinism", 0, [&] { return determinism(work); });

  std::cout << (failures ? std::to_string(failures) + " criteria failed" : "all criteria passed")
            << std::endl;
  return failures ? 1 : 0;
}
