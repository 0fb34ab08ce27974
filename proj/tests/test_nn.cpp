#include <doctest.h>

#include <cmath>
#include <random>

#include "rfslam/common.hpp"
#include "rfslam/nn.hpp"

using namespace rfslam;
using namespace rfslam::nn;

namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> g(0.0, scale);
  for (double& v : t.data) v = g(rng);
  return t;
}

// ReLU kinks make finite differences meaningless within one step of zero.
Tensor away_from_zero(Tensor t) {
  for (double& v : t.data) {
    if (std::abs(v) < 0.05) v = v < 0 ? -0.05 - std::abs(v) : 0.05 + v;
  }
  return t;
}

constexpr double kStep = 1e-6;
constexpr double kTol = 1e-5;

}  // namespace

TEST_CASE("tensor basics") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK(shape_string(t.shape) == "[2,3]");
  CHECK(t.reshaped({3, 2}).dim(0) == 3);
  CHECK_THROWS(t.reshaped({4, 2}));
}

TEST_CASE("linear, tanh and relu gradients") {
  std::mt19937_64 rng(1);
  Linear lin(5, 3, rng);
  CHECK(finite_diff_check(lin, random_tensor({4, 5}, rng), kStep, true).max_rel_error < kTol);
  Tanh th;
  CHECK(finite_diff_check(th, random_tensor({4, 6}, rng), kStep, true).max_rel_error < kTol);
  ReLU re;
  CHECK(finite_diff_check(re, away_from_zero(random_tensor({4, 6}, rng)), kStep, true).max_rel_error < kTol);
}

TEST_CASE("conv1d gradients") {
  std::mt19937_64 rng(2);
  Conv1d conv(2, 3, 5, rng);
  const auto r = finite_diff_check(conv, random_tensor({3, 2, 11}, rng), kStep, true);
  CAPTURE(r.worst);
  CHECK(r.max_rel_error < kTol);
}

TEST_CASE("batchnorm gradients in training and eval mode") {
  std::mt19937_64 rng(3);
  BatchNorm bn2(4);
  auto r = finite_diff_check(bn2, random_tensor({6, 4}, rng, 2.0), kStep, true);
  CAPTURE(r.worst);
  CHECK(r.max_rel_error < kTol);
  BatchNorm bn3(3);
  r = finite_diff_check(bn3, random_tensor({4, 3, 7}, rng), kStep, true);
  CHECK(r.max_rel_error < kTol);
  // Eval mode uses the running statistics gathered above.
  r = finite_diff_check(bn3, random_tensor({4, 3, 7}, rng), kStep, false);
  CHECK(r.max_rel_error < kTol);
}

TEST_CASE("batchnorm normalizes per channel in training") {
  std::mt19937_64 rng(4);
  BatchNorm bn(2);
  Tensor x = random_tensor({64, 2}, rng, 3.0);
  for (int b = 0; b < 64; ++b) x[static_cast<std::size_t>(2 * b + 1)] += 10.0;
  const Tensor y = bn.forward(x, true);
  for (int c = 0; c < 2; ++c) {
    double mean = 0, var = 0;
    for (int b = 0; b < 64; ++b) mean += y[static_cast<std::size_t>(2 * b + c)];
    mean /= 64;
    for (int b = 0; b < 64; ++b) var += std::pow(y[static_cast<std::size_t>(2 * b + c)] - mean, 2);
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var / 64 == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("composite layers") {
  std::mt19937_64 rng(5);
  auto mlp = make_mlp({4, 7, 3}, Activation::kTanh, rng);
  CHECK(finite_diff_check(*mlp, random_tensor({5, 4}, rng), kStep, true).max_rel_error < kTol);

  auto inner = std::make_unique<Sequential>();
  inner->add(std::make_unique<Linear>(4, 4, rng)).add(std::make_unique<Tanh>());
  Residual res(std::move(inner));
  CHECK(finite_diff_check(res, random_tensor({3, 4}, rng), kStep, true).max_rel_error < kTol);

  Sequential seq;
  // A bias feeding straight into batchnorm has an exactly zero gradient, so
  // the activation goes first.
  seq.add(std::make_unique<Conv1d>(1, 2, 3, rng))
      .add(std::make_unique<Tanh>())
      .add(std::make_unique<BatchNorm>(2))
      .add(std::make_unique<Flatten>())
      .add(std::make_unique<Linear>(16, 2, rng));
  const auto r = finite_diff_check(seq, random_tensor({4, 1, 8}, rng), kStep, true);
  CAPTURE(r.worst);
  CHECK(r.max_rel_error < kTol);
  CHECK(parameter_count(parameters(seq)) == (2 * 3 + 2) + (2 + 2) + (16 * 2 + 2));
}

TEST_CASE("adam first step moves each entry by lr against the gradient sign") {
  // With m0 = v0 = 0 the bias-corrected first step is lr * g / (|g| + eps).
  Tensor w({3});
  w.data = {1.0, -2.0, 0.5};
  Tensor g({3});
  g.data = {0.3, -4.0, 0.0};
  AdamConfig cfg;
  cfg.lr = 0.01;
  Adam opt({ParamRef{"w", &w, &g, nullptr}}, cfg);
  opt.step();
  CHECK(w[0] == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + 1e-8)));
  CHECK(w[1] == doctest::Approx(-2.0 + 0.01 * 4.0 / (4.0 + 1e-8)));
  CHECK(w[2] == 0.5);
  CHECK(opt.steps() == 1);
}

TEST_CASE("adam respects frozen entries and lr scales") {
  Tensor w({2}, 1.0), g({2}, 1.0);
  std::vector<char> frozen = {1, 0};
  Tensor u({1}, 1.0), gu({1}, 1.0);
  Adam opt({ParamRef{"w", &w, &g, &frozen}, ParamRef{"u", &u, &gu, nullptr}}, AdamConfig{});
  opt.set_lr_scale("u", 0.0);
  for (int i = 0; i < 1000; ++i) opt.step();
  CHECK(w[0] == 1.0);
  CHECK(w[1] < 1.0);
  CHECK(u[0] == 1.0);
  CHECK_THROWS_AS(opt.set_lr_scale("missing", 1.0), ConfigError);
}

TEST_CASE("adam rejects non-finite gradients before updating") {
  Tensor a({1}, 2.0), ga({1}, 1.0);
  Tensor b({1}, 3.0), gb({1}, NAN);
  Adam opt({ParamRef{"a", &a, &ga, nullptr}, ParamRef{"b", &b, &gb, nullptr}}, AdamConfig{});
  CHECK_THROWS_AS(opt.step(), NumericalError);
  CHECK(a[0] == 2.0);
  try {
    opt.step();
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
  }
}

TEST_CASE("parameter names are stable and prefixed") {
  std::mt19937_64 rng(6);
  auto mlp = make_mlp({2, 3, 1}, Activation::kReLU, rng);
  const auto ps = parameters(*mlp);
  REQUIRE(ps.size() == 4);
  CHECK(ps[0].name != ps[2].name);
  for (const auto& p : ps) CHECK(p.value->shape == p.grad->shape);
}
