#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ream/augmentor.hpp"
#include "ream/corpus.hpp"
#include "ream/metrics.hpp"

namespace ream::experiments {

inline constexpr double kHighQualityThreshold = 4.0;  // quality strictly above

struct CurvePoint {
  std::string condition;  // clean | noisy | model_selected | random_selected | ...
  std::string metric;
  int num_refs = 1;
  double mean = 0.0;
  double stddev = 0.0;  // population stddev over samples
  std::size_t n_samples = 0;
};

void write_curves_csv(const std::filesystem::path& path, std::span<const CurvePoint> points);
std::vector<CurvePoint> read_curves_csv(const std::filesystem::path& path);
nlohmann::json to_json(std::span<const CurvePoint> points);

struct AssumptionConfig {
  int max_refs = 10;
  int noisy_from = 6;  // additions from this position on come from other queries
  std::uint64_t seed = 0;
  int jobs = 1;
};

// Per metric, adds a sample's high-quality references one at a time (clean)
// and, from position `noisy_from`, substitutes references drawn from other
// queries' pools (noisy; resampled per sample). Samples with fewer than
// `max_refs` high-quality references are skipped with a warning.
std::vector<CurvePoint> run_assumption_curves(const Corpus& corpus,
                                              std::span<const metrics::Metric* const> metrics,
                                              const AssumptionConfig& config);

struct CompareConfig {
  int target_size = 10;
  int shared_prefix = 5;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct SampleComparison {
  std::string sample_id;
  std::vector<std::string> model_set;   // init first, then kept candidates
  std::vector<std::string> random_set;  // shares the first `shared_prefix` members
  // Gold Pearson of the final sets under the first metric.
  double model_final = 0.0;
  double random_final = 0.0;
  std::size_t kept = 0;  // candidates kept by auto_augment before truncation
};

struct TableRow {
  std::string metric;
  std::string set;  // Raw | Aug | Random | Mix
  double pearson = 0.0;
  double kendall = 0.0;
  std::size_t n_samples = 0;
};

struct CompareResult {
  std::vector<CurvePoint> curves;
  std::vector<SampleComparison> samples;
  std::vector<TableRow> table;

  // Fraction of samples where model_final >= random_final.
  double win_rate() const;
  double mean_improvement() const;
};

// Index of the reference used as the 1-reference ("Raw") set: a seed-chosen
// high-quality reference, or any reference when the sample has none.
std::size_t initial_reference(const EvalSample& sample, std::uint64_t seed);

// The sample's own pool without `init_index`.
std::vector<std::string> pool_candidates(const EvalSample& sample, std::size_t init_index);

// For every sample: auto_augment from the raw reference over its candidates,
// keeping at most target_size - 1 additions (model_selected), and a random
// set sharing the first shared_prefix members (random_selected). Curves give
// mean Pearson per set size under every metric. `candidates[i]` belongs to
// `corpus[i]`; when empty, pool_candidates is used.
CompareResult run_augment_comparison(const Corpus& corpus, const augment::SetScorer& scorer,
                                     std::span<const metrics::Metric* const> metrics,
                                     std::span<const std::vector<std::string>> candidates,
                                     const CompareConfig& config);

nlohmann::json to_json(const CompareResult& result);

struct NamedScorer {
  std::string name;
  augment::SetScorer scorer;
};

// Builds each model's augmented sets and evaluates them under every metric;
// conditions are "model:<name>".
std::vector<CurvePoint> run_transferability(const Corpus& corpus,
                                            std::span<const NamedScorer> models,
                                            std::span<const metrics::Metric* const> metrics,
                                            const CompareConfig& config);

// Minimal SVG line chart: one polyline per (condition, metric) series.
std::string render_svg(std::span<const CurvePoint> points, const std::string& title);

}  // namespace ream::experiments
