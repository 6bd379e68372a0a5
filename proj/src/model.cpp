#include "ream/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ream/errors.hpp"

namespace ream::model {

ModelParams ModelParams::zeros(std::size_t input_dim, std::size_t hidden_dim) {
  ModelParams p;
  const auto d = static_cast<Eigen::Index>(input_dim), h = static_cast<Eigen::Index>(hidden_dim);
  p.w_gat = Matrix::Zero(h, d);
  p.a_attn = Vector::Zero(2 * h);
  p.w_head = Vector::Zero(h);
  p.b_head = 0.0;
  return p;
}

ModelParams ModelParams::init(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed) {
  if (input_dim == 0 || hidden_dim == 0) throw ValidationError("model dimensions must be positive");
  ModelParams p = zeros(input_dim, hidden_dim);
  std::mt19937_64 rng(seed);
  auto fill = [&](auto& m, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
  };
  const auto d = static_cast<double>(input_dim), h = static_cast<double>(hidden_dim);
  fill(p.w_gat, d, h);
  fill(p.a_attn, 2 * h, 1);
  fill(p.w_head, h, 1);
  return p;
}

std::size_t ModelParams::size() const {
  return static_cast<std::size_t>(w_gat.size() + a_attn.size() + w_head.size() + 1);
}

double ModelParams::l2_norm() const {
  return std::sqrt(w_gat.squaredNorm() + a_attn.squaredNorm() + w_head.squaredNorm() +
                   b_head * b_head);
}

bool ModelParams::all_finite() const {
  return w_gat.allFinite() && a_attn.allFinite() && w_head.allFinite() && std::isfinite(b_head);
}

void ModelParams::validate() const {
  if (w_gat.size() == 0) throw ValidationError("model parameters are empty");
  if (a_attn.size() != 2 * w_gat.rows() || w_head.size() != w_gat.rows())
    throw ValidationError("model parameter shapes are inconsistent");
  if (!all_finite()) throw ValidationError("model parameters contain non-finite values");
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> out;
  out.reserve(size());
  out.insert(out.end(), w_gat.data(), w_gat.data() + w_gat.size());
  out.insert(out.end(), a_attn.data(), a_attn.data() + a_attn.size());
  out.insert(out.end(), w_head.data(), w_head.data() + w_head.size());
  out.push_back(b_head);
  return out;
}

void ModelParams::assign(std::span<const double> flat) {
  if (flat.size() != size()) throw ValidationError("flat parameter vector has the wrong length");
  auto it = flat.begin();
  std::copy_n(it, w_gat.size(), w_gat.data());
  it += w_gat.size();
  std::copy_n(it, a_attn.size(), a_attn.data());
  it += a_attn.size();
  std::copy_n(it, w_head.size(), w_head.data());
  it += w_head.size();
  b_head = *it;
}

ModelParams& ModelParams::operator+=(const ModelParams& o) {
  w_gat += o.w_gat;
  a_attn += o.a_attn;
  w_head += o.w_head;
  b_head += o.b_head;
  return *this;
}

ModelParams& ModelParams::operator*=(double s) {
  w_gat *= s;
  a_attn *= s;
  w_head *= s;
  b_head *= s;
  return *this;
}

Matrix canonical_order(const Matrix& nodes) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(nodes.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < nodes.cols(); ++j) {
      if (nodes(a, j) != nodes(b, j)) return nodes(a, j) < nodes(b, j);
    }
    return false;
  });
  Matrix out(nodes.rows(), nodes.cols());
  for (std::size_t i = 0; i < order.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = nodes.row(order[i]);
  return out;
}

double forward(const Matrix& nodes, const ModelParams& params, ForwardCache* cache) {
  if (nodes.rows() == 0) throw ValidationError("forward: empty reference set");
  if (nodes.cols() != params.w_gat.cols())
    throw ValidationError("forward: node dimension " + std::to_string(nodes.cols()) +
                          " does not match model input dimension " +
                          std::to_string(params.w_gat.cols()));
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  const Eigen::Index n = nodes.rows(), h = params.w_gat.rows();

  c.x = canonical_order(nodes);
  c.z.noalias() = c.x * params.w_gat.transpose();
  const Vector s_self = c.z * params.a_attn.head(h);
  const Vector s_nbr = c.z * params.a_attn.tail(h);

  c.logits.resize(n, n);
  c.attn.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      const double pre = s_self(i) + s_nbr(j);
      c.logits(i, j) = pre;
      const double e = pre > 0 ? pre : kLeakySlope * pre;
      c.attn(i, j) = e;
      row_max = std::max(row_max, e);
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      c.attn(i, j) = std::exp(c.attn(i, j) - row_max);
      sum += c.attn(i, j);
    }
    c.attn.row(i) /= sum;
  }

  c.h_pre.noalias() = c.attn * c.z;
  c.h = c.h_pre.unaryExpr([](double v) { return v > 0 ? v : std::expm1(v); });

  c.pooled.resize(h);
  c.argmax.assign(static_cast<std::size_t>(h), 0);
  for (Eigen::Index k = 0; k < h; ++k) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < n; ++i)
      if (c.h(i, k) > c.h(best, k)) best = i;
    c.argmax[static_cast<std::size_t>(k)] = best;
    c.pooled(k) = c.h(best, k);
  }
  c.pre_tanh = params.w_head.dot(c.pooled) + params.b_head;
  c.score = std::clamp(std::tanh(c.pre_tanh), -kMaxScore, kMaxScore);
  return c.score;
}

void backward(const ForwardCache& c, const ModelParams& params, double upstream,
              ModelParams& grads) {
  const Eigen::Index n = c.x.rows(), h = params.w_gat.rows();
  const double d_pre_tanh = upstream * (1.0 - c.score * c.score);
  grads.w_head += d_pre_tanh * c.pooled;
  grads.b_head += d_pre_tanh;

  // Max-pool routes each hidden unit's gradient to its argmax node.
  Matrix d_h_pre = Matrix::Zero(n, h);
  for (Eigen::Index k = 0; k < h; ++k) {
    const Eigen::Index i = c.argmax[static_cast<std::size_t>(k)];
    const double x = c.h_pre(i, k);
    d_h_pre(i, k) = d_pre_tanh * params.w_head(k) * (x > 0 ? 1.0 : std::exp(x));
  }

  const Matrix d_attn = d_h_pre * c.z.transpose();
  Matrix d_z = c.attn.transpose() * d_h_pre;

  // Softmax then LeakyReLU, row by row.
  Matrix d_logits(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double inner = c.attn.row(i).dot(d_attn.row(i));
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d_e = c.attn(i, j) * (d_attn(i, j) - inner);
      d_logits(i, j) = d_e * (c.logits(i, j) > 0 ? 1.0 : kLeakySlope);
    }
  }
  const Vector d_self = d_logits.rowwise().sum();
  const Vector d_nbr = d_logits.colwise().sum().transpose();

  grads.a_attn.head(h) += c.z.transpose() * d_self;
  grads.a_attn.tail(h) += c.z.transpose() * d_nbr;
  d_z.noalias() += d_self * params.a_attn.head(h).transpose();
  d_z.noalias() += d_nbr * params.a_attn.tail(h).transpose();

  grads.w_gat.noalias() += d_z.transpose() * c.x;
}

Matrix encode_set(const EmbeddingProvider& provider, std::string_view query,
                  std::span<const std::string> references) {
  if (references.empty()) throw ValidationError("cannot encode an empty reference set");
  const auto d = static_cast<Eigen::Index>(provider.dimension());
  Matrix out(static_cast<Eigen::Index>(references.size()), d);
  for (std::size_t i = 0; i < references.size(); ++i) {
    const auto v = provider.encode_pair(query, references[i]);
    if (static_cast<Eigen::Index>(v.size()) != d)
      throw ValidationError("provider returned a vector of the wrong dimension");
    for (Eigen::Index j = 0; j < d; ++j) out(static_cast<Eigen::Index>(i), j) = v[j];
  }
  return out;
}

double predict(const EmbeddingProvider& provider, const ModelParams& params,
               std::string_view query, std::span<const std::string> references) {
  return forward(encode_set(provider, query, references), params);
}

LossBreakdown loss_total(std::span<const LossItem> batch, const ModelParams& params,
                         const LossConfig& cfg, ModelParams* grads) {
  LossBreakdown out;
  if (grads) *grads = ModelParams::zeros(params.input_dim(), params.hidden_dim());
  ForwardCache pos_cache, neg_cache;
  for (const auto& item : batch) {
    const double f = forward(*item.positive, params, grads ? &pos_cache : nullptr);
    const double err = f - item.gold;
    out.regression += err * err;
    double d_f = 2.0 * err;

    if (!item.negatives.empty()) {
      const double inv_t = 1.0 / static_cast<double>(item.negatives.size());
      for (const Matrix* neg : item.negatives) {
        const double f_neg = forward(*neg, params, grads ? &neg_cache : nullptr);
        const double hinge = cfg.margin - f + f_neg;
        if (hinge > 0) {
          out.contrastive += inv_t * hinge;
          ++out.active_hinges;
          d_f -= inv_t;
          if (grads) backward(neg_cache, params, inv_t, *grads);
        }
      }
    }
    if (grads) backward(pos_cache, params, d_f, *grads);
  }

  const double norm = params.l2_norm();
  const double per_item = cfg.squared_l2 ? norm * norm : norm;
  const auto count = static_cast<double>(batch.size());
  out.l2 = count * cfg.l2_gamma * per_item;
  out.total = out.regression + out.l2 + out.contrastive;

  if (grads && cfg.l2_gamma != 0.0 && count > 0) {
    // d||theta||/dtheta = theta / ||theta||; d||theta||^2/dtheta = 2 theta
    const double scale = cfg.squared_l2 ? 2.0 : (norm > 0 ? 1.0 / norm : 0.0);
    ModelParams reg = params;
    reg *= count * cfg.l2_gamma * scale;
    *grads += reg;
  }
  return out;
}

ModelParams gradient(std::span<const LossItem> batch, const ModelParams& params,
                     const LossConfig& config) {
  ModelParams g;
  loss_total(batch, params, config, &g);
  return g;
}

AdamState AdamState::for_params(const ModelParams& params) {
  return {ModelParams::zeros(params.input_dim(), params.hidden_dim()),
          ModelParams::zeros(params.input_dim(), params.hidden_dim()), 0};
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const AdamConfig& cfg) {
  if (!grads.all_finite()) throw DivergenceError("non-finite gradient in Adam step");
  if (grads.size() != params.size() || state.m.size() != params.size())
    throw ValidationError("Adam: parameter, gradient and state shapes differ");
  ++state.step;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  auto update = [&](double& p, double g, double& m, double& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    p -= cfg.learning_rate * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
  };
  auto apply = [&](auto& p, const auto& g, auto& m, auto& v) {
    for (Eigen::Index i = 0; i < p.size(); ++i)
      update(p.data()[i], g.data()[i], m.data()[i], v.data()[i]);
  };
  apply(params.w_gat, grads.w_gat, state.m.w_gat, state.v.w_gat);
  apply(params.a_attn, grads.a_attn, state.m.a_attn, state.v.a_attn);
  apply(params.w_head, grads.w_head, state.m.w_head, state.v.w_head);
  update(params.b_head, grads.b_head, state.m.b_head, state.v.b_head);
}

}  // namespace ream::model
