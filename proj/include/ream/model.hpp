#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ream/embeddings.hpp"

namespace ream::model {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Trainable state: one single-head graph-attention layer followed by a
// linear head with tanh.
struct ModelParams {
  Matrix w_gat;   // hidden x input
  Vector a_attn;  // 2 * hidden: [source half ; neighbour half]
  Vector w_head;  // hidden
  double b_head = 0.0;

  // Glorot-uniform weights, zero bias.
  static ModelParams init(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed);
  static ModelParams zeros(std::size_t input_dim, std::size_t hidden_dim);

  std::size_t input_dim() const { return static_cast<std::size_t>(w_gat.cols()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(w_gat.rows()); }
  std::size_t size() const;

  double l2_norm() const;
  bool all_finite() const;
  void validate() const;

  // Flat order: w_gat (column-major), a_attn, w_head, b_head.
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  ModelParams& operator+=(const ModelParams& other);
  ModelParams& operator*=(double s);
};

inline constexpr double kLeakySlope = 0.2;
// Largest double below 1; scores are clamped to [-kMaxScore, kMaxScore].
inline constexpr double kMaxScore = 1.0 - 0x1p-53;

// Intermediate values of one forward pass, in canonical node order.
struct ForwardCache {
  Matrix x;            // N x d node features
  Matrix z;            // N x h
  Matrix logits;       // N x N, pre-LeakyReLU attention logits
  Matrix attn;         // N x N, row-stochastic
  Matrix h_pre;        // N x h
  Matrix h;            // N x h, ELU(h_pre)
  Vector pooled;       // h
  std::vector<Eigen::Index> argmax;  // per hidden unit, lowest node index on ties
  double pre_tanh = 0.0;
  double score = 0.0;
};

// Sorts node rows lexicographically so the result is independent of the
// order the reference set was given in.
Matrix canonical_order(const Matrix& nodes);

// Scores a node set (rows = pair encodings). Throws ValidationError on an
// empty set or a dimension mismatch.
double forward(const Matrix& nodes, const ModelParams& params, ForwardCache* cache = nullptr);

// Accumulates d(score)/d(params) * upstream into `grads`.
void backward(const ForwardCache& cache, const ModelParams& params, double upstream,
              ModelParams& grads);

// Pair-encodes every reference against the query, one row per reference.
Matrix encode_set(const EmbeddingProvider& provider, std::string_view query,
                  std::span<const std::string> references);

double predict(const EmbeddingProvider& provider, const ModelParams& params,
               std::string_view query, std::span<const std::string> references);

struct LossConfig {
  double l2_gamma = 1e-5;
  double margin = 0.1;
  bool squared_l2 = false;  // gamma * ||theta||^2 instead of gamma * ||theta||
};

// One positive node set with its gold label and T negative node sets.
struct LossItem {
  const Matrix* positive = nullptr;
  double gold = 0.0;
  std::vector<const Matrix*> negatives;
};

struct LossBreakdown {
  double total = 0.0;
  double regression = 0.0;   // sum of (f - c)^2
  double l2 = 0.0;           // batch size * gamma * ||theta||
  double contrastive = 0.0;  // sum of (1/T) * sum_t hinge
  std::size_t active_hinges = 0;
};

// Sum over the batch of (f - c)^2 + gamma ||theta|| + (1/T) sum_t
// max(0, margin - f(pos) + f(neg_t)). When `grads` is non-null it is
// overwritten with the exact gradient of `total`.
LossBreakdown loss_total(std::span<const LossItem> batch, const ModelParams& params,
                         const LossConfig& config, ModelParams* grads = nullptr);

ModelParams gradient(std::span<const LossItem> batch, const ModelParams& params,
                     const LossConfig& config);

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ModelParams m;
  ModelParams v;
  long step = 0;

  static AdamState for_params(const ModelParams& params);
};

// Bias-corrected Adam update. Throws DivergenceError on a non-finite gradient.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const AdamConfig& config);

}  // namespace ream::model
