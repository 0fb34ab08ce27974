#include <doctest.h>

#include <algorithm>
#include <random>

#include "rfslam/common.hpp"
#include "rfslam/encoders.hpp"

using namespace rfslam;
using namespace rfslam::encoders;

namespace {

std::vector<Input> random_inputs(int n, int width, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<Input> out(static_cast<std::size_t>(n), Input(static_cast<std::size_t>(width)));
  for (auto& x : out)
    for (double& v : x) v = g(rng);
  return out;
}

std::vector<const Input*> ptrs(const std::vector<Input>& v) {
  std::vector<const Input*> out;
  for (const auto& x : v) out.push_back(&x);
  return out;
}

// Parameter gradients of sum(w * forward) against central differences.
double encoder_grad_error(Encoder& enc, const std::vector<const Input*>& batch) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g;
  const nn::Tensor y = enc.forward(batch, true);
  nn::Tensor w(y.shape);
  for (double& v : w.data) v = g(rng);
  const auto scalar = [&] {
    const nn::Tensor out = enc.forward(batch, true);
    double s = 0;
    for (std::size_t i = 0; i < out.numel(); ++i) s += out[i] * w[i];
    return s;
  };
  auto params = enc.parameters();
  nn::zero_grad(params);
  enc.forward(batch, true);
  enc.backward(w);
  double worst = 0;
  for (auto& p : params) {
    const auto analytic = p.grad->data;
    const auto saved = p.value->data;
    const double err = nn::finite_diff_max_rel(
        [&](const std::vector<double>& v) {
          p.value->data = v;
          return scalar();
        },
        saved, analytic, 1e-6);
    p.value->data = saved;
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace

TEST_CASE("MLP encoder gradients and output shape") {
  std::mt19937_64 rng(1);
  EncoderConfig cfg;
  cfg.input_dim = 5;
  cfg.mlp_hidden = {8, 8};
  cfg.output_scale = 3.0;
  cfg.linear_skip = true;
  auto enc = make_encoder(cfg, 4);
  const auto xs = random_inputs(6, 5, rng);
  enc->fit_normalization(ptrs(xs));
  // Perturb the zeroed last layer so every path carries gradient.
  for (auto& p : enc->parameters())
    for (double& v : p.value->data) v += 0.01;
  const auto y = enc->forward(ptrs(xs), true);
  CHECK(y.shape == std::vector<int>{6, 2});
  CHECK(encoder_grad_error(*enc, ptrs(xs)) < 1e-5);
  const auto bad = random_inputs(1, 4, rng);
  CHECK_THROWS_AS(enc->forward(ptrs(bad), false), ConfigError);
}

TEST_CASE("skip-path MLP starts as an exact affine map") {
  std::mt19937_64 rng(2);
  EncoderConfig cfg;
  cfg.input_dim = 4;
  cfg.linear_skip = true;
  auto enc = make_encoder(cfg, 7);
  const auto xs = random_inputs(20, 4, rng);
  enc->fit_normalization(ptrs(xs));
  // f(a x + (1 - a) z) = a f(x) + (1 - a) f(z) for an affine f.
  for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
    Input mid(4);
    for (int i = 0; i < 4; ++i) mid[static_cast<std::size_t>(i)] = 0.3 * xs[k][static_cast<std::size_t>(i)] + 0.7 * xs[k + 1][static_cast<std::size_t>(i)];
    const auto y = enc->forward({&xs[k], &xs[k + 1], &mid}, false);
    for (int d = 0; d < 2; ++d) {
      CHECK(y[static_cast<std::size_t>(4 + d)] ==
            doctest::Approx(0.3 * y[static_cast<std::size_t>(d)] + 0.7 * y[static_cast<std::size_t>(2 + d)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv encoder gradients") {
  std::mt19937_64 rng(3);
  EncoderConfig cfg;
  cfg.kind = EncoderKind::kConv;
  cfg.input_dim = 16;
  cfg.conv_channels = 2;
  cfg.conv_kernel = 3;
  cfg.conv_fc = 6;
  auto enc = make_encoder(cfg, 5);
  const auto xs = random_inputs(5, 16, rng);
  enc->fit_normalization(ptrs(xs));
  CHECK(enc->forward(ptrs(xs), true).shape == std::vector<int>{5, 2});
  CHECK(encoder_grad_error(*enc, ptrs(xs)) < 1e-5);
  EncoderConfig odd = cfg;
  odd.input_dim = 15;
  CHECK_THROWS_AS(make_encoder(odd, 1), ConfigError);
}

TEST_CASE("DeepSet is exactly permutation invariant and accepts variable sizes") {
  std::mt19937_64 rng(4);
  EncoderConfig cfg;
  cfg.kind = EncoderKind::kDeepSet;
  cfg.out_dim = 3;
  cfg.deepset_width = 16;
  auto enc = make_encoder(cfg, 11);
  std::uniform_real_distribution<double> u(1e-8, 6e-8);
  std::vector<Input> sets;
  for (int n : {1, 3, 5, 7, 4}) {
    Input s(static_cast<std::size_t>(n));
    for (double& v : s) v = u(rng);
    sets.push_back(s);
  }
  enc->fit_normalization(ptrs(sets));
  const auto y = enc->forward(ptrs(sets), false);
  for (int t = 0; t < 50; ++t) {
    auto shuffled = sets;
    for (auto& s : shuffled) std::shuffle(s.begin(), s.end(), rng);
    const auto z = enc->forward(ptrs(shuffled), false);
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(z[i] == y[i]);
  }
  CHECK(encoder_grad_error(*enc, ptrs(sets)) < 1e-5);
}

TEST_CASE("encoder kind parsing") {
  CHECK(parse_encoder_kind("deepset") == EncoderKind::kDeepSet);
  CHECK(std::string(encoder_kind_name(EncoderKind::kConv)) == "conv");
  CHECK_THROWS_AS(parse_encoder_kind("rnn"), ConfigError);
  EncoderConfig cfg;
  cfg.input_dim = 3;
  cfg.out_dim = 4;
  CHECK_THROWS_AS(make_encoder(cfg, 1), ConfigError);
}
