#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "spgrpo/errors.hpp"
#include "spgrpo/numerics.hpp"

using namespace spgrpo;
using namespace spgrpo::numerics;

namespace {

// Second implementation: plain loops over nested vectors.
std::vector<double> naive_forward(const MlpParams& p, std::vector<double> x) {
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const auto& w = p.weights[l];
    std::vector<double> y(w.rows());
    for (std::size_t r = 0; r < w.rows(); ++r) {
      double acc = p.biases[l][r];
      for (std::size_t c = 0; c < w.cols(); ++c) acc += w(r, c) * x[c];
      y[r] = (l + 1 < p.weights.size()) ? std::tanh(acc) : acc;
    }
    x = std::move(y);
  }
  return x;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

MlpParams random_net(std::vector<std::size_t> sizes, std::uint64_t seed) {
  RandomSource rng(seed);
  auto p = init_mlp(sizes, rng);
  for (auto& b : p.biases)
    for (double& v : b) v = rng.uniform() - 0.5;
  return p;
}

}  // namespace

TEST(MlpForward, ZeroNetGivesZero) {
  const std::vector<std::size_t> sizes{3, 5, 2};
  const auto p = zeros_mlp(sizes);
  const auto out = mlp_forward(p, std::vector<double>{1.0, -2.0, 0.5}).output;
  EXPECT_EQ(out, (std::vector<double>{0.0, 0.0}));
}

TEST(MlpForward, MatchesNaiveEvaluation) {
  const auto p = random_net({2, 4, 2}, 17);
  const std::vector<double> x{0.3, -1.1};
  const auto fast = mlp_forward(p, x).output;
  const auto slow = naive_forward(p, x);
  ASSERT_EQ(fast.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(fast[i], slow[i], 1e-14);
}

TEST(MlpForward, WrongInputLengthThrows) {
  const auto p = random_net({2, 4, 2}, 1);
  EXPECT_THROW(mlp_forward(p, std::vector<double>{1.0}), ShapeError);
}

TEST(MlpBackward, ZeroUpstreamGivesZeroGradients) {
  const auto p = random_net({2, 4, 2}, 3);
  const auto fwd = mlp_forward(p, std::vector<double>{0.2, 0.4});
  const auto back = mlp_backward(p, fwd.cache, std::vector<double>{0.0, 0.0});
  EXPECT_EQ(squared_norm(back.param_grads), 0.0);
  EXPECT_EQ(back.input_grad, (std::vector<double>{0.0, 0.0}));
}

TEST(MlpBackward, SingleLinearLayer) {
  const auto p = random_net({3, 2}, 5);
  const std::vector<double> x{1.0, -2.0, 0.5};
  const std::vector<double> g{0.7, -0.3};
  const auto back = mlp_backward(p, mlp_forward(p, x).cache, g);
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_DOUBLE_EQ(back.param_grads.biases[0][r], g[r]);
    for (std::size_t c = 0; c < 3; ++c)
      EXPECT_DOUBLE_EQ(back.param_grads.weights[0](r, c), g[r] * x[c]);
  }
}

TEST(MlpBackward, MismatchedCacheThrows) {
  const auto p = random_net({2, 4, 2}, 5);
  const auto other = random_net({3, 4, 2}, 5);
  const auto cache = mlp_forward(other, std::vector<double>{1, 2, 3}).cache;
  EXPECT_THROW(mlp_backward(p, cache, std::vector<double>{1.0, 1.0}), ShapeError);
}

// Property: every parameter and input partial matches central differences.
TEST(MlpBackward, FiniteDifferenceOracle) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto p = random_net({2, 4, 2}, seed);
    RandomSource rng(seed + 100);
    std::vector<double> x{rng.normal(), rng.normal()};
    std::vector<double> g{rng.normal(), rng.normal()};
    const auto back = mlp_backward(p, mlp_forward(p, x).cache, g);
    const auto analytic = flatten(back.param_grads);
    auto theta = flatten(p);
    const double h = 1e-5;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double keep = theta[k];
      theta[k] = keep + h;
      unflatten(theta, p);
      const double up = dot(naive_forward(p, x), g);
      theta[k] = keep - h;
      unflatten(theta, p);
      const double down = dot(naive_forward(p, x), g);
      theta[k] = keep;
      unflatten(theta, p);
      const double fd = (up - down) / (2 * h);
      const double err = std::abs(fd - analytic[k]);
      EXPECT_TRUE(err < 1e-8 || err / std::max(std::abs(fd), std::abs(analytic[k])) < 1e-4)
          << "seed " << seed << " param " << k << " fd " << fd << " analytic " << analytic[k];
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (dot(naive_forward(p, xp), g) - dot(naive_forward(p, xm), g)) / (2 * h);
      EXPECT_NEAR(back.input_grad[i], fd, 1e-7);
    }
  }
}

TEST(MlpBackward, AccumulateAddsIntoExisting) {
  const auto p = random_net({2, 3, 2}, 8);
  const auto cache = mlp_forward(p, std::vector<double>{0.1, 0.2}).cache;
  const std::vector<double> g{1.0, -1.0};
  auto once = mlp_backward(p, cache, g).param_grads;
  auto twice = zeros_like(p);
  mlp_backward_accumulate(p, cache, g, twice);
  mlp_backward_accumulate(p, cache, g, twice);
  scale(once, 2.0);
  const auto a = flatten(once), b = flatten(twice);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(Adam, ZeroGradientKeepsParams) {
  auto p = random_net({2, 3, 1}, 4);
  const auto before = p;
  auto state = AdamState::for_params(p, 1e-2);
  adam_step(p, zeros_like(p), state);
  EXPECT_EQ(p, before);
  EXPECT_EQ(state.first_moment, zeros_like(p));
  EXPECT_EQ(state.step_count, 1);
}

TEST(Adam, ZeroGradientDecaysMoments) {
  auto p = random_net({2, 3, 1}, 4);
  auto state = AdamState::for_params(p, 1e-2);
  state.first_moment.for_each([](double& v) { v = 1.0; });
  state.second_moment.for_each([](double& v) { v = 1.0; });
  adam_step(p, zeros_like(p), state);
  state.first_moment.for_each([](double v) { EXPECT_DOUBLE_EQ(v, 0.9); });
  state.second_moment.for_each([](double v) { EXPECT_DOUBLE_EQ(v, 0.999); });
}

TEST(Adam, FirstStepMovesBySignTimesLearningRate) {
  auto p = random_net({2, 3, 1}, 4);
  const auto before = flatten(p);
  auto grads = zeros_like(p);
  RandomSource rng(6);
  grads.for_each([&](double& v) { v = rng.normal(); });
  const auto g = flatten(grads);
  auto state = AdamState::for_params(p, 1e-3);
  adam_step(p, grads, state);
  const auto after = flatten(p);
  for (std::size_t i = 0; i < g.size(); ++i) {
    // m_hat = g, v_hat = g^2, so delta = -lr * g / (|g| + eps).
    const double expected = -1e-3 * g[i] / (std::abs(g[i]) + 1e-8);
    EXPECT_NEAR(after[i] - before[i], expected, 1e-15);
  }
}

TEST(Adam, Deterministic) {
  auto p1 = random_net({2, 3, 1}, 4), p2 = p1;
  auto grads = zeros_like(p1);
  grads.for_each([](double& v) { v = 0.25; });
  auto s1 = AdamState::for_params(p1, 1e-3), s2 = AdamState::for_params(p2, 1e-3);
  for (int i = 0; i < 2; ++i) {
    adam_step(p1, grads, s1);
    adam_step(p2, grads, s2);
  }
  EXPECT_EQ(p1, p2);
}

TEST(Adam, NonFiniteGradientRejected) {
  auto p = random_net({2, 3, 1}, 4);
  const auto before = p;
  auto grads = zeros_like(p);
  grads.biases[0][1] = std::numeric_limits<double>::quiet_NaN();
  auto state = AdamState::for_params(p, 1e-3);
  EXPECT_THROW(adam_step(p, grads, state), NonFiniteError);
  EXPECT_EQ(p, before);
  EXPECT_EQ(state.step_count, 0);
}

TEST(ParamOps, FlattenRoundTrip) {
  auto p = random_net({3, 4, 2}, 9);
  const auto flat = flatten(p);
  EXPECT_EQ(flat.size(), p.num_parameters());
  auto q = zeros_like(p);
  unflatten(flat, q);
  EXPECT_EQ(p, q);
}

TEST(ParamOps, AxpyAndNorm) {
  auto p = random_net({2, 2}, 2);
  auto y = zeros_like(p);
  axpy(2.0, p, y);
  EXPECT_NEAR(squared_norm(y), 4.0 * squared_norm(p), 1e-12);
  EXPECT_THROW(axpy(1.0, random_net({3, 2}, 1), y), ShapeError);
}

TEST(SmoothCurve, HandExample) {
  const std::vector<double> v{0, 1, 2, 3};
  const auto s = smooth_curve(v, 3);
  const std::vector<double> expected{0.5, 1.0, 2.0, 2.5};
  ASSERT_EQ(s.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(s[i], expected[i]);
}

TEST(SmoothCurve, WindowOneIsIdentity) {
  const std::vector<double> v{0.3, -1.0, 7.5};
  EXPECT_EQ(smooth_curve(v, 1), v);
}

TEST(SmoothCurve, ConstantUnchanged) {
  const std::vector<double> v(10, 0.42);
  for (double x : smooth_curve(v, 4)) EXPECT_DOUBLE_EQ(x, 0.42);
}

TEST(SmoothCurve, ZeroWindowThrows) {
  const std::vector<double> v{1.0};
  EXPECT_THROW(smooth_curve(v, 0), DomainError);
}
