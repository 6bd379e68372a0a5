#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "ream/errors.hpp"
#include "ream/model.hpp"
#include "ream/training.hpp"

using namespace ream;
using namespace ream::model;
namespace t = ream::testing;

TEST(Forward, MatchesLoopImplementation) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const std::size_t d = 2 + rng() % 10, h = 2 + rng() % 10, n = 1 + rng() % 6;
    const auto p = ModelParams::init(d, h, rng());
    const auto x = t::random_nodes(rng, n, d);
    EXPECT_NEAR(forward(x, p), t::naive_forward(x, p), 1e-12);
  }
}

TEST(Forward, PermutationInvariantAndBounded) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const std::size_t d = 8, n = 2 + rng() % 6;
    auto p = ModelParams::init(d, 8, rng());
    p *= 3.0;
    const auto x = t::random_nodes(rng, n, d);
    const double ref = forward(x, p);
    EXPECT_GT(ref, -1.0);
    EXPECT_LT(ref, 1.0);
    std::vector<Eigen::Index> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int r = 0; r < 10; ++r) {
      std::shuffle(perm.begin(), perm.end(), rng);
      Matrix y(n, d);
      for (std::size_t j = 0; j < n; ++j) y.row(j) = x.row(perm[j]);
      EXPECT_EQ(forward(y, p), ref);
    }
  }
}

TEST(Forward, Validation) {
  const auto p = ModelParams::init(4, 4, 0);
  EXPECT_THROW(forward(Matrix(0, 4), p), ValidationError);
  EXPECT_THROW(forward(Matrix::Zero(2, 5), p), ValidationError);
}

TEST(Forward, MaxPoolTieGoesToLowestIndex) {
  const auto p = ModelParams::init(3, 3, 4);
  Matrix x(2, 3);
  x << 1, 2, 3, 1, 2, 3;
  ForwardCache c;
  forward(x, p, &c);
  for (auto a : c.argmax) EXPECT_EQ(a, 0);
}

TEST(Gradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 24; ++i) {
    const auto c = t::random_grad_case(rng, i % 2 == 0);
    EXPECT_LT(t::grad_rel_error(c), 1e-4) << "case " << i;
  }
}

TEST(Gradient, HingeActivityIsControlledByMargin) {
  std::mt19937_64 rng(4);
  const auto on = t::random_grad_case(rng, true);
  EXPECT_GT(loss_total(on.batch(), on.params, on.loss).active_hinges, 0u);
  const auto off = t::random_grad_case(rng, false);
  EXPECT_EQ(loss_total(off.batch(), off.params, off.loss).active_hinges, 0u);
}

TEST(Loss, IndependentRecomputationAtD4) {
  std::mt19937_64 rng(5);
  const auto p = ModelParams::init(4, 4, 9);
  std::vector<Matrix> pos{t::random_nodes(rng, 3, 4), t::random_nodes(rng, 2, 4)};
  std::vector<Matrix> neg{t::random_nodes(rng, 2, 4), t::random_nodes(rng, 4, 4)};
  const std::vector<double> gold{0.3, -0.2};
  std::vector<LossItem> batch{{&pos[0], gold[0], {&neg[0], &neg[1]}}, {&pos[1], gold[1], {&neg[1]}}};
  LossConfig cfg{0.01, 0.5, false};

  double theta2 = 0;
  for (double v : p.flatten()) theta2 += v * v;
  double expected = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double f = t::naive_forward(pos[i], p);
    expected += (f - gold[i]) * (f - gold[i]) + cfg.l2_gamma * std::sqrt(theta2);
    double h = 0;
    for (const Matrix* n : batch[i].negatives)
      h += std::max(0.0, cfg.margin - f + t::naive_forward(*n, p));
    expected += h / static_cast<double>(batch[i].negatives.size());
  }
  const auto got = loss_total(batch, p, cfg);
  EXPECT_NEAR(got.total, expected, 1e-12);
  EXPECT_NEAR(got.regression + got.l2 + got.contrastive, got.total, 1e-15);
}

TEST(Adam, HandComputedTwoSteps) {
  auto p = ModelParams::zeros(1, 1);
  p.w_head(0) = 1.0;
  auto g = ModelParams::zeros(1, 1);
  g.w_head(0) = 0.5;
  auto state = AdamState::for_params(p);
  const AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};

  adam_step(p, g, state, cfg);
  // m = 0.05, v = 0.00025; bias corrected: 0.5, 0.25
  EXPECT_NEAR(p.w_head(0), 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  const double after1 = p.w_head(0);

  g.w_head(0) = -1.0;
  adam_step(p, g, state, cfg);
  const double m = 0.9 * 0.05 + 0.1 * -1.0;
  const double v = 0.999 * 0.00025 + 0.001 * 1.0;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(p.w_head(0), after1 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8), 1e-15);
  EXPECT_EQ(state.step, 2);
  EXPECT_EQ(p.w_gat(0, 0), 0.0);  // zero gradient leaves zero parameter
}

TEST(Adam, RejectsNonFiniteGradient) {
  auto p = ModelParams::zeros(2, 2);
  auto g = ModelParams::zeros(2, 2);
  g.b_head = std::nan("");
  auto s = AdamState::for_params(p);
  EXPECT_THROW(adam_step(p, g, s, {}), DivergenceError);
}

TEST(Params, FlattenAssignRoundTrip) {
  const auto p = ModelParams::init(3, 5, 1);
  EXPECT_EQ(p.flatten().size(), p.size());
  EXPECT_EQ(p.size(), 5u * 3u + 10u + 5u + 1u);
  auto q = ModelParams::zeros(3, 5);
  q.assign(p.flatten());
  EXPECT_EQ(q.flatten(), p.flatten());
  EXPECT_THROW(q.assign(std::vector<double>(3)), ValidationError);
}

TEST(Params, GlorotBounds) {
  const auto p = ModelParams::init(10, 6, 2);
  const double bound = std::sqrt(6.0 / 16.0);
  EXPECT_LE(p.w_gat.cwiseAbs().maxCoeff(), bound);
  EXPECT_EQ(p.b_head, 0.0);
  EXPECT_NE(ModelParams::init(10, 6, 3).flatten(), p.flatten());
}

TEST(Checkpoint, RoundTripIsExact) {
  t::TempDir dir;
  Checkpoint c;
  c.params = ModelParams::init(6, 4, 7);
  c.params.b_head = 0.123456789012345;
  c.meta = {{"provider", "hash:d=6"}, {"metric", "bleu-star"}};
  save_checkpoint(dir / "m.ckpt", c);
  const auto back = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(back.params.flatten(), c.params.flatten());
  EXPECT_EQ(back.meta, c.meta);
  EXPECT_TRUE(std::filesystem::exists(dir / "m.ckpt.json"));

  auto bytes = t::read_file(dir / "m.ckpt");
  bytes[0] = 'X';
  {
    std::ofstream out(dir / "bad.ckpt", std::ios::binary);
    out << bytes;
  }
  EXPECT_THROW(load_checkpoint(dir / "bad.ckpt"), ParseError);
}

TEST(Encode, SetRowsArePairEncodings) {
  ProviderConfig cfg;
  cfg.dimension = 8;
  HashProvider prov(cfg);
  const std::vector<std::string> refs{"a b", "c"};
  const Matrix m = encode_set(prov, "q", refs);
  ASSERT_EQ(m.rows(), 2);
  const auto row = prov.encode_pair("q", "c");
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(m(1, j), row[j]);
  const auto p = ModelParams::init(8, 8, 0);
  EXPECT_EQ(predict(prov, p, "q", refs), forward(m, p));
}
