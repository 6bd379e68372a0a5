#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ream/corpus.hpp"
#include "ream/metrics.hpp"
#include "ream/model.hpp"

namespace ream::model {

// Gold reliability of a reference set (given as texts) for a sample.
using Labeler = std::function<double(const EvalSample&, std::span<const std::string>)>;

Labeler metric_labeler(const metrics::Metric& metric);

struct TrainConfig {
  double learning_rate = 5e-4;
  std::size_t batch_size = 128;
  double l2_gamma = 1e-5;
  double margin = 0.1;
  std::size_t negatives_per_sample = 3;
  int epochs = 10;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool squared_l2 = false;
  std::size_t hidden_dim = 0;  // 0 means same as the input dimension

  void validate() const;
  LossConfig loss() const { return {l2_gamma, margin, squared_l2}; }
  AdamConfig adam() const { return {learning_rate, beta1, beta2, eps}; }
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// (query, reference subset, gold c). `sample_index` points into the corpus
// the example was built from.
struct ReliabilityExample {
  std::size_t sample_index = 0;
  std::vector<std::size_t> member_indices;
  double gold_c = 0.0;
  bool degenerate = false;
  Matrix features;  // N x d cached pair encodings, empty until encoded

  std::size_t k() const { return member_indices.size(); }
};

// Labels every instance with `metric`. Instances whose sample id is unknown
// raise ValidationError. Runs on up to `jobs` threads; output order matches
// the input.
std::vector<ReliabilityExample> label_instances(const Corpus& corpus,
                                                std::span<const RefSetInstance> instances,
                                                const metrics::Metric& metric, int jobs = 1);

enum class NegativeKind { remove, add_foreign, replace_foreign };
std::string to_string(NegativeKind kind);

struct ForeignResponse {
  std::size_t sample_index = 0;
  std::size_t reference_index = 0;
  std::string text;
};

struct NegativeExample {
  NegativeKind kind = NegativeKind::remove;
  // Own-pool members left after the perturbation.
  std::vector<std::size_t> member_indices;
  std::optional<ForeignResponse> foreign;
  Matrix features;

  std::size_t size() const { return member_indices.size() + (foreign ? 1 : 0); }
  std::vector<std::string> texts(const EvalSample& parent) const;
};

struct NegativeConfig {
  std::size_t count = 3;  // T
  std::uint64_t seed = 0;
};

// Builds T negatives cycling through remove, add_foreign, replace_foreign.
// A remove-kind candidate is kept only if its gold reliability is strictly
// below the parent's; other removal positions are tried in random order and
// an add_foreign negative is substituted when none deteriorates (or when the
// parent is a singleton). Deterministic in (config.seed, sample id, members).
std::vector<NegativeExample> make_negatives(const ReliabilityExample& example,
                                            const Corpus& corpus, const NegativeConfig& config,
                                            const Labeler& labeler);

void encode_example(ReliabilityExample& example, const Corpus& corpus,
                    const EmbeddingProvider& provider);
void encode_negative(NegativeExample& negative, const EvalSample& parent,
                     const EmbeddingProvider& provider);

struct TrainingItem {
  Matrix positive;
  double gold = 0.0;
  std::size_t k = 0;
  std::vector<Matrix> negatives;
};

struct DatasetOptions {
  bool with_negatives = true;
  NegativeConfig negatives;
  int jobs = 1;
};

// Labels, encodes and (optionally) builds negatives for every instance.
// Output order matches `instances` regardless of `jobs`.
std::vector<TrainingItem> build_items(const Corpus& corpus, std::span<const RefSetInstance> instances,
                                      const metrics::Metric& metric,
                                      const EmbeddingProvider& provider,
                                      const DatasetOptions& options);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean total loss per example
  double train_mse = 0.0;
  double valid_mse = 0.0;
};

struct FitResult {
  ModelParams params;
  std::vector<EpochRecord> history;
  int best_epoch = 0;  // 0 = initial parameters
  bool diverged = false;
};

// Mini-batch Adam over shuffled epochs. Returns the parameters with the best
// validation MSE (the last epoch's when `valid` is empty). On a non-finite
// loss or gradient, stops and returns the best parameters so far with
// `diverged` set.
FitResult fit(std::span<const TrainingItem> train, std::span<const TrainingItem> valid,
              const TrainConfig& config, std::size_t input_dim);

double mse(std::span<const TrainingItem> items, const ModelParams& params);

struct BucketReport {
  std::size_t k = 0;
  std::size_t count = 0;
  double mse = 0.0;
  double sq_err_std = 0.0;  // std of the squared errors
  double pred_mean = 0.0;
  double gold_mean = 0.0;
  double mean_baseline_mse = 0.0;  // MSE of predicting the bucket's gold mean
};

// One row per distinct k, ascending.
std::vector<BucketReport> evaluate(std::span<const TrainingItem> items, const ModelParams& params);

nlohmann::json to_json(std::span<const BucketReport> report);
nlohmann::json to_json(std::span<const EpochRecord> history);

// Binary checkpoint, little endian:
//   magic "REAMCKPT" | u32 version | u32 d | u32 d' |
//   w_gat (d' x d, row-major) | a_attn (2d') | w_head (d') | b_head, all f64
// plus "<path>.json" holding the train config and provider fingerprint.
struct Checkpoint {
  ModelParams params;
  nlohmann::json meta;  // {"train_config": ..., "provider": str, "metric": str, ...}
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ream::model
