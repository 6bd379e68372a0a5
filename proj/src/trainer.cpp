#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "ream/errors.hpp"
#include "ream/log.hpp"
#include "ream/training.hpp"

namespace ream::model {

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ValidationError("learning_rate must be > 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(l2_gamma >= 0)) throw ValidationError("l2_gamma must be >= 0");
  if (!(margin >= 0)) throw ValidationError("margin must be >= 0");
  if (negatives_per_sample < 1) throw ValidationError("negatives_per_sample must be >= 1");
  if (epochs < 0) throw ValidationError("epochs must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1))
    throw ValidationError("Adam betas must lie in [0,1)");
  if (!(eps > 0)) throw ValidationError("Adam eps must be > 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"l2_gamma", l2_gamma},
          {"margin", margin},
          {"negatives_per_sample", negatives_per_sample},
          {"epochs", epochs},
          {"seed", seed},
          {"beta1", beta1},
          {"beta2", beta2},
          {"eps", eps},
          {"squared_l2", squared_l2},
          {"hidden_dim", hidden_dim}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.l2_gamma = j.value("l2_gamma", c.l2_gamma);
  c.margin = j.value("margin", c.margin);
  c.negatives_per_sample = j.value("negatives_per_sample", c.negatives_per_sample);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.squared_l2 = j.value("squared_l2", c.squared_l2);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  return c;
}

namespace {

std::vector<LossItem> loss_items(std::span<const TrainingItem> items,
                                 std::span<const std::size_t> order) {
  std::vector<LossItem> out;
  out.reserve(order.size());
  for (auto i : order) {
    LossItem li{&items[i].positive, items[i].gold, {}};
    for (const auto& n : items[i].negatives) li.negatives.push_back(&n);
    out.push_back(std::move(li));
  }
  return out;
}

}  // namespace

double mse(std::span<const TrainingItem> items, const ModelParams& params) {
  if (items.empty()) return 0.0;
  double s = 0;
  for (const auto& it : items) {
    const double e = forward(it.positive, params) - it.gold;
    s += e * e;
  }
  return s / static_cast<double>(items.size());
}

FitResult fit(std::span<const TrainingItem> train, std::span<const TrainingItem> valid,
              const TrainConfig& config, std::size_t input_dim) {
  config.validate();
  if (train.empty()) throw ValidationError("fit: empty training set");
  const std::size_t hidden = config.hidden_dim ? config.hidden_dim : input_dim;

  FitResult result;
  ModelParams params = ModelParams::init(input_dim, hidden, config.seed);
  result.params = params;
  if (config.epochs == 0) return result;

  AdamState state = AdamState::for_params(params);
  const LossConfig loss_cfg = config.loss();
  const AdamConfig adam_cfg = config.adam();
  std::mt19937_64 rng(config.seed ^ 0x5eedf00dULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  double best = std::numeric_limits<double>::infinity();
  ModelParams grads;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    try {
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        const auto batch = loss_items(train, std::span(order).subspan(start, end - start));
        const auto loss = loss_total(batch, params, loss_cfg, &grads);
        if (!std::isfinite(loss.total)) throw DivergenceError("non-finite training loss");
        epoch_loss += loss.total;
        adam_step(params, grads, state, adam_cfg);
        if (!params.all_finite()) throw DivergenceError("non-finite parameters after update");
      }
    } catch (const DivergenceError& e) {
      log::warning(std::string("training diverged in epoch ") + std::to_string(epoch) + ": " +
                   e.what());
      result.diverged = true;
      break;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(train.size());
    rec.train_mse = mse(train, params);
    rec.valid_mse = valid.empty() ? rec.train_mse : mse(valid, params);
    result.history.push_back(rec);
    if (valid.empty() || rec.valid_mse < best) {
      best = rec.valid_mse;
      result.params = params;
      result.best_epoch = epoch;
    }
  }
  return result;
}

std::vector<BucketReport> evaluate(std::span<const TrainingItem> items, const ModelParams& params) {
  std::map<std::size_t, std::vector<std::pair<double, double>>> buckets;  // k -> (pred, gold)
  for (const auto& it : items) buckets[it.k].emplace_back(forward(it.positive, params), it.gold);
  std::vector<BucketReport> out;
  for (const auto& [k, rows] : buckets) {
    BucketReport r;
    r.k = k;
    r.count = rows.size();
    const double n = static_cast<double>(rows.size());
    std::vector<double> sq;
    for (const auto& [p, g] : rows) {
      sq.push_back((p - g) * (p - g));
      r.pred_mean += p / n;
      r.gold_mean += g / n;
    }
    r.mse = std::accumulate(sq.begin(), sq.end(), 0.0) / n;
    double var = 0;
    for (double s : sq) var += (s - r.mse) * (s - r.mse);
    r.sq_err_std = std::sqrt(var / n);
    for (const auto& [p, g] : rows) r.mean_baseline_mse += (g - r.gold_mean) * (g - r.gold_mean) / n;
    out.push_back(r);
  }
  return out;
}

nlohmann::json to_json(std::span<const BucketReport> report) {
  auto out = nlohmann::json::array();
  for (const auto& r : report)
    out.push_back({{"k", r.k},
                   {"count", r.count},
                   {"mse", r.mse},
                   {"sq_err_std", r.sq_err_std},
                   {"pred_mean", r.pred_mean},
                   {"gold_mean", r.gold_mean},
                   {"mean_baseline_mse", r.mean_baseline_mse}});
  return out;
}

nlohmann::json to_json(std::span<const EpochRecord> history) {
  auto out = nlohmann::json::array();
  for (const auto& h : history)
    out.push_back({{"epoch", h.epoch},
                   {"train_loss", h.train_loss},
                   {"train_mse", h.train_mse},
                   {"valid_mse", h.valid_mse}});
  return out;
}

}  // namespace ream::model
