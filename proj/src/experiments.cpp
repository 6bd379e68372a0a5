#include "ream/experiments.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "parallel.hpp"
#include "ream/errors.hpp"
#include "ream/log.hpp"

namespace ream::experiments {

namespace {

// Values per (condition, metric, size), appended in sample order.
class CurveBuilder {
 public:
  void add(const std::string& condition, const std::string& metric, int size, double v) {
    series_[{condition, metric}][size].push_back(v);
  }

  std::vector<CurvePoint> build() const {
    std::vector<CurvePoint> out;
    for (const auto& [key, sizes] : series_)
      for (const auto& [size, values] : sizes) {
        CurvePoint p{key.first, key.second, size, 0.0, 0.0, values.size()};
        for (double v : values) p.mean += v;
        p.mean /= static_cast<double>(values.size());
        for (double v : values) p.stddev += (v - p.mean) * (v - p.mean);
        p.stddev = std::sqrt(p.stddev / static_cast<double>(values.size()));
        out.push_back(p);
      }
    return out;
  }

 private:
  std::map<std::pair<std::string, std::string>, std::map<int, std::vector<double>>> series_;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void write_curves_csv(const std::filesystem::path& path, std::span<const CurvePoint> points) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "condition,metric,num_refs,mean,stddev,n_samples\n";
  for (const auto& p : points)
    out << p.condition << ',' << p.metric << ',' << p.num_refs << ',' << fmt(p.mean) << ','
        << fmt(p.stddev) << ',' << p.n_samples << '\n';
}

std::vector<CurvePoint> read_curves_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || line != "condition,metric,num_refs,mean,stddev,n_samples")
    throw ParseError("unexpected CSV header", 1);
  std::vector<CurvePoint> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 6) throw ParseError("expected 6 columns", lineno);
    try {
      out.push_back({f[0], f[1], std::stoi(f[2]), std::stod(f[3]), std::stod(f[4]),
                     static_cast<std::size_t>(std::stoull(f[5]))});
    } catch (const std::logic_error&) {
      throw ParseError("bad number", lineno);
    }
  }
  return out;
}

nlohmann::json to_json(std::span<const CurvePoint> points) {
  auto out = nlohmann::json::array();
  for (const auto& p : points)
    out.push_back({{"condition", p.condition},
                   {"metric", p.metric},
                   {"num_refs", p.num_refs},
                   {"mean", p.mean},
                   {"stddev", p.stddev},
                   {"n_samples", p.n_samples}});
  return out;
}

std::vector<CurvePoint> run_assumption_curves(const Corpus& corpus,
                                              std::span<const metrics::Metric* const> metrics,
                                              const AssumptionConfig& config) {
  if (config.max_refs < 1) throw ValidationError("max_refs must be >= 1");
  if (metrics.empty()) throw ValidationError("no metrics given");
  const auto max_refs = static_cast<std::size_t>(config.max_refs);
  const auto noisy_from = static_cast<std::size_t>(std::max(1, config.noisy_from));

  struct Row {
    bool used = false;
    std::vector<std::vector<double>> clean, noisy;  // [metric][size-1]
  };
  std::vector<Row> rows(corpus.size());
  detail::parallel_for(corpus.size(), config.jobs, [&](std::size_t s) {
    const EvalSample& sample = corpus[s];
    std::vector<std::size_t> hq;
    for (std::size_t i = 0; i < sample.references.size(); ++i)
      if (sample.references[i].quality && *sample.references[i].quality > kHighQualityThreshold)
        hq.push_back(i);
    if (hq.size() < max_refs) return;
    std::mt19937_64 rng(stable_hash(sample.query.id, config.seed));
    std::shuffle(hq.begin(), hq.end(), rng);
    hq.resize(max_refs);

    std::vector<std::string> clean, noisy;
    for (std::size_t i = 0; i < max_refs; ++i) {
      clean.push_back(sample.references[hq[i]].text);
      if (i + 1 < noisy_from || corpus.size() < 2) {
        noisy.push_back(clean.back());
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 2);
        std::size_t other = pick(rng);
        if (other >= s) ++other;
        const auto& pool = corpus[other].references;
        noisy.push_back(pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)].text);
      }
    }
    Row& row = rows[s];
    row.used = true;
    for (const auto* m : metrics) {
      std::vector<double> c, n;
      for (std::size_t k = 1; k <= max_refs; ++k) {
        c.push_back(metrics::reliability(sample, std::span(clean).first(k), *m).value);
        n.push_back(k < noisy_from ? c.back()
                                   : metrics::reliability(sample, std::span(noisy).first(k), *m).value);
      }
      row.clean.push_back(std::move(c));
      row.noisy.push_back(std::move(n));
    }
  });

  CurveBuilder curves;
  std::size_t skipped = 0;
  for (const auto& row : rows) {
    if (!row.used) {
      ++skipped;
      continue;
    }
    for (std::size_t m = 0; m < metrics.size(); ++m)
      for (std::size_t k = 0; k < max_refs; ++k) {
        curves.add("clean", metrics[m]->name(), static_cast<int>(k + 1), row.clean[m][k]);
        curves.add("noisy", metrics[m]->name(), static_cast<int>(k + 1), row.noisy[m][k]);
      }
  }
  if (skipped)
    log::warning("assumption curves: skipped " + std::to_string(skipped) +
                 " sample(s) with fewer than " + std::to_string(max_refs) +
                 " high-quality references");
  return curves.build();
}

double CompareResult::win_rate() const {
  if (samples.empty()) return 0.0;
  std::size_t wins = 0;
  for (const auto& s : samples) wins += s.model_final >= s.random_final;
  return static_cast<double>(wins) / static_cast<double>(samples.size());
}

double CompareResult::mean_improvement() const {
  if (samples.empty()) return 0.0;
  double sum = 0;
  for (const auto& s : samples) sum += s.model_final - s.random_final;
  return sum / static_cast<double>(samples.size());
}

std::size_t initial_reference(const EvalSample& sample, std::uint64_t seed) {
  if (sample.references.empty()) throw ValidationError("sample has no references");
  std::vector<std::size_t> hq;
  for (std::size_t i = 0; i < sample.references.size(); ++i)
    if (sample.references[i].quality && *sample.references[i].quality > kHighQualityThreshold)
      hq.push_back(i);
  std::mt19937_64 rng(stable_hash("raw:" + sample.query.id, seed));
  if (hq.empty())
    return std::uniform_int_distribution<std::size_t>(0, sample.references.size() - 1)(rng);
  return hq[std::uniform_int_distribution<std::size_t>(0, hq.size() - 1)(rng)];
}

std::vector<std::string> pool_candidates(const EvalSample& sample, std::size_t init_index) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < sample.references.size(); ++i)
    if (i != init_index) out.push_back(sample.references[i].text);
  return out;
}

namespace {

struct SampleRun {
  SampleComparison cmp;
  std::string raw;
  // [metric] -> per-size Pearson for model and random sets
  std::vector<std::vector<double>> model_curve, random_curve;
  // [metric][set] -> (pearson, kendall); sets: Raw, Aug, Random, Mix
  std::vector<std::array<std::pair<double, double>, 4>> table;
};

constexpr const char* kSetNames[4] = {"Raw", "Aug", "Random", "Mix"};

std::pair<double, double> correlations(const EvalSample& sample, std::span<const std::string> refs,
                                       const metrics::Metric& metric) {
  const auto scores = metric.score_responses(sample, refs);
  const auto human = sample.human_scores();
  return {metrics::pearson(scores, human).value, metrics::kendall(scores, human).value};
}

SampleRun run_sample(const EvalSample& sample, const augment::SetScorer& scorer,
                     std::span<const metrics::Metric* const> metrics,
                     const std::vector<std::string>* given, const CompareConfig& config) {
  SampleRun run;
  run.cmp.sample_id = sample.query.id;
  const std::size_t init = initial_reference(sample, config.seed);
  run.raw = sample.references[init].text;
  const std::vector<std::string> candidates =
      given && !given->empty() ? *given : pool_candidates(sample, init);

  const std::vector<std::string> init_set{run.raw};
  auto res = augment::auto_augment(sample.query.text, init_set, candidates, scorer,
                                   stable_hash(sample.query.id, config.seed));
  if (res.trace.incomplete)
    log::warning("auto_augment stopped early for " + sample.query.id + ": " + res.trace.error);
  run.cmp.kept = res.final_set.size() - 1;
  const auto target = static_cast<std::size_t>(config.target_size);
  run.cmp.model_set = res.final_set;
  if (run.cmp.model_set.size() > target) run.cmp.model_set.resize(target);

  const std::size_t prefix =
      std::min(static_cast<std::size_t>(config.shared_prefix), run.cmp.model_set.size());
  run.cmp.random_set.assign(run.cmp.model_set.begin(), run.cmp.model_set.begin() + prefix);
  {
    std::multiset<std::string> used(run.cmp.random_set.begin(), run.cmp.random_set.end());
    used.erase(used.find(run.raw));
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      auto it = used.find(candidates[i]);
      if (it != used.end())
        used.erase(it);
      else
        rest.push_back(i);
    }
    std::mt19937_64 rng(stable_hash("random:" + sample.query.id, config.seed));
    std::shuffle(rest.begin(), rest.end(), rng);
    for (std::size_t i = 0; i < rest.size() && run.cmp.random_set.size() < target; ++i)
      run.cmp.random_set.push_back(candidates[rest[i]]);
  }

  std::vector<std::string> mix = run.cmp.model_set;
  {
    std::multiset<std::string> have(mix.begin(), mix.end());
    for (const auto& r : run.cmp.random_set) {
      auto it = have.find(r);
      if (it != have.end())
        have.erase(it);
      else
        mix.push_back(r);
    }
  }

  for (const auto* m : metrics) {
    std::vector<double> mc, rc;
    for (std::size_t k = 1; k <= run.cmp.model_set.size(); ++k)
      mc.push_back(metrics::reliability(sample, std::span(run.cmp.model_set).first(k), *m).value);
    for (std::size_t k = 1; k <= run.cmp.random_set.size(); ++k)
      rc.push_back(k <= prefix ? mc[k - 1]
                               : metrics::reliability(
                                     sample, std::span(run.cmp.random_set).first(k), *m)
                                     .value);
    run.model_curve.push_back(std::move(mc));
    run.random_curve.push_back(std::move(rc));
    run.table.push_back({correlations(sample, init_set, *m),
                         correlations(sample, run.cmp.model_set, *m),
                         correlations(sample, run.cmp.random_set, *m),
                         correlations(sample, mix, *m)});
  }
  run.cmp.model_final = run.model_curve[0].back();
  run.cmp.random_final = run.random_curve[0].back();
  return run;
}

}  // namespace

CompareResult run_augment_comparison(const Corpus& corpus, const augment::SetScorer& scorer,
                                     std::span<const metrics::Metric* const> metrics,
                                     std::span<const std::vector<std::string>> candidates,
                                     const CompareConfig& config) {
  if (metrics.empty()) throw ValidationError("no metrics given");
  if (config.target_size < 1) throw ValidationError("target_size must be >= 1");
  if (config.shared_prefix < 1 || config.shared_prefix > config.target_size)
    throw ValidationError("shared_prefix must lie in [1, target_size]");
  if (!candidates.empty() && candidates.size() != corpus.size())
    throw ValidationError("candidate pools and corpus differ in length");

  std::vector<SampleRun> runs(corpus.size());
  detail::parallel_for(corpus.size(), config.jobs, [&](std::size_t i) {
    runs[i] = run_sample(corpus[i], scorer, metrics, candidates.empty() ? nullptr : &candidates[i],
                         config);
  });

  CompareResult out;
  CurveBuilder curves;
  std::vector<std::array<std::array<double, 2>, 4>> sums(metrics.size());
  for (auto& row : sums)
    for (auto& cell : row) cell = {0.0, 0.0};
  for (const auto& run : runs) {
    for (std::size_t m = 0; m < metrics.size(); ++m) {
      const std::string name = metrics[m]->name();
      for (std::size_t k = 0; k < run.model_curve[m].size(); ++k)
        curves.add("model_selected", name, static_cast<int>(k + 1), run.model_curve[m][k]);
      for (std::size_t k = 0; k < run.random_curve[m].size(); ++k)
        curves.add("random_selected", name, static_cast<int>(k + 1), run.random_curve[m][k]);
      for (std::size_t s = 0; s < 4; ++s) {
        sums[m][s][0] += run.table[m][s].first;
        sums[m][s][1] += run.table[m][s].second;
      }
    }
    out.samples.push_back(run.cmp);
  }
  out.curves = curves.build();
  const double n = static_cast<double>(runs.size());
  for (std::size_t m = 0; m < metrics.size(); ++m)
    for (std::size_t s = 0; s < 4; ++s)
      out.table.push_back({metrics[m]->name(), kSetNames[s], runs.empty() ? 0.0 : sums[m][s][0] / n,
                           runs.empty() ? 0.0 : sums[m][s][1] / n, runs.size()});
  return out;
}

nlohmann::json to_json(const CompareResult& result) {
  auto samples = nlohmann::json::array();
  for (const auto& s : result.samples)
    samples.push_back({{"sample_id", s.sample_id},
                       {"model_set", s.model_set},
                       {"random_set", s.random_set},
                       {"model_final", s.model_final},
                       {"random_final", s.random_final},
                       {"kept", s.kept}});
  auto table = nlohmann::json::array();
  for (const auto& r : result.table)
    table.push_back({{"metric", r.metric},
                     {"set", r.set},
                     {"pearson", r.pearson},
                     {"kendall", r.kendall},
                     {"n_samples", r.n_samples}});
  return {{"curves", to_json(result.curves)},
          {"table", table},
          {"samples", samples},
          {"win_rate", result.win_rate()},
          {"mean_improvement", result.mean_improvement()}};
}

std::vector<CurvePoint> run_transferability(const Corpus& corpus,
                                            std::span<const NamedScorer> models,
                                            std::span<const metrics::Metric* const> metrics,
                                            const CompareConfig& config) {
  std::vector<CurvePoint> out;
  for (const auto& m : models) {
    const auto res = run_augment_comparison(corpus, m.scorer, metrics, {}, config);
    for (auto p : res.curves)
      if (p.condition == "model_selected") {
        p.condition = "model:" + m.name;
        out.push_back(std::move(p));
      }
  }
  return out;
}

std::string render_svg(std::span<const CurvePoint> points, const std::string& title) {
  constexpr double W = 640, H = 400, L = 60, R = 180, T = 40, B = 50;
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                            "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  std::map<std::string, std::vector<std::pair<int, double>>> series;
  int xmax = 1;
  double ymin = 0, ymax = 0;
  bool first = true;
  for (const auto& p : points) {
    series[p.condition + " / " + p.metric].emplace_back(p.num_refs, p.mean);
    xmax = std::max(xmax, p.num_refs);
    ymin = first ? p.mean : std::min(ymin, p.mean);
    ymax = first ? p.mean : std::max(ymax, p.mean);
    first = false;
  }
  if (ymax - ymin < 1e-9) {
    ymin -= 0.05;
    ymax += 0.05;
  }
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto px = [&](double x) { return L + (W - L - R) * (xmax == 1 ? 0.5 : (x - 1) / (xmax - 1)); };
  auto py = [&](double y) { return T + (H - T - B) * (1 - (y - ymin) / (ymax - ymin)); };

  auto escape = [](const std::string& s) {
    std::string o;
    for (char c : s) {
      if (c == '<') o += "&lt;";
      else if (c == '>') o += "&gt;";
      else if (c == '&') o += "&amp;";
      else o += c;
    }
    return o;
  };

  std::ostringstream os;
  os.precision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\">" << escape(title)
     << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  for (int x = 1; x <= xmax; ++x)
    os << "<text x=\"" << px(x) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << x
       << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = ymin + (ymax - ymin) * i / 4;
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << y
       << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10
     << "\" text-anchor=\"middle\">number of references</text>\n";
  std::size_t c = 0;
  for (const auto& [name, pts] : series) {
    const char* color = kColors[c % std::size(kColors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) os << px(x) << ',' << py(y) << ' ';
    os << "\"/>\n";
    const double ly = T + 16.0 * static_cast<double>(c);
    os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\""
       << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 34 << "\" y=\"" << ly + 4 << "\">" << escape(name) << "</text>\n";
    ++c;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace ream::experiments
