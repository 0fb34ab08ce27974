#include <doctest.h>

#include <random>
#include <vector>

#include "rfslam/kernels.hpp"

using namespace rfslam::kernels;

namespace {

std::vector<double> random_reals(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

std::vector<cdouble> random_complex(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<cdouble> v(n);
  for (auto& x : v) x = {g(rng), g(rng)};
  return v;
}

}  // namespace

TEST_CASE("scalar kernels match naive loops") {
  const auto& s = scalar_table();
  std::mt19937_64 rng(3);
  const auto a = random_reals(37, rng), b = random_reals(37, rng);
  double ref = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ref += a[i] * b[i];
  CHECK(s.dot(a.data(), b.data(), a.size()) == doctest::Approx(ref).epsilon(1e-14));

  const auto ca = random_complex(19, rng), cb = random_complex(19, rng);
  cdouble cref = 0;
  for (std::size_t i = 0; i < ca.size(); ++i) cref += std::conj(ca[i]) * cb[i];
  const cdouble got = s.cdotc(ca.data(), cb.data(), ca.size());
  CHECK(std::abs(got - cref) < 1e-12);
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const KernelTable* v = avx2_table();
  if (!v) {
    MESSAGE("AVX2 variant unavailable on this CPU; skipping");
    return;
  }
  const auto& s = scalar_table();
  std::mt19937_64 rng(11);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 9u, 31u, 64u, 129u}) {
    CAPTURE(n);
    const auto a = random_reals(n, rng), b = random_reals(n, rng);
    CHECK(v->dot(a.data(), b.data(), n) == doctest::Approx(s.dot(a.data(), b.data(), n)).epsilon(1e-12));

    auto y1 = random_reals(n, rng);
    auto y2 = y1;
    s.axpy(0.37, a.data(), y1.data(), n);
    v->axpy(0.37, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-14));

    const auto ca = random_complex(n, rng), cb = random_complex(n, rng);
    CHECK(std::abs(v->cdotc(ca.data(), cb.data(), n) - s.cdotc(ca.data(), cb.data(), n)) < 1e-11);

    auto z1 = random_complex(n, rng);
    auto z2 = z1;
    const cdouble alpha{0.3, -1.2};
    s.caxpy_conj(alpha, ca.data(), z1.data(), n);
    v->caxpy_conj(alpha, ca.data(), z2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(z1[i] - z2[i]) < 1e-13);

    auto x1 = ca, w1 = cb, x2 = ca, w2 = cb;
    const cdouble e = std::polar(1.0, 0.7);
    s.crot(x1.data(), w1.data(), n, 0.8, 0.6, e);
    v->crot(x2.data(), w2.data(), n, 0.8, 0.6, e);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(x1[i] - x2[i]) < 1e-13);
      CHECK(std::abs(w1[i] - w2[i]) < 1e-13);
    }
  }
}

TEST_CASE("active table can be switched") {
  const Isa before = active().isa;
  set_active(Isa::kScalar);
  CHECK(active().isa == Isa::kScalar);
  CHECK(isa_name(Isa::kScalar) == "scalar");
  if (avx2_table()) {
    set_active(Isa::kAvx2);
    CHECK(active().isa == Isa::kAvx2);
  }
  set_active(before);
}
