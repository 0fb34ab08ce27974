#pragma once
// Inner-loop arithmetic kernels with a scalar reference implementation and an
// AVX2/FMA variant selected once at runtime.
//
// Every numerical hot loop in the library (dense layers, convolution via
// im2col, covariance accumulation, Jacobi rotations and MUSIC projections)
// goes through this table. The scalar table is the reference; the SIMD table
// is equivalence-tested against it.

#include <complex>
#include <cstddef>
#include <span>
#include <string_view>

namespace rfslam::kernels {

using cdouble = std::complex<double>;

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // sum_i conj(a[i]) * b[i]
  cdouble (*cdotc)(const cdouble* a, const cdouble* b, std::size_t n);
  // y[i] += alpha * conj(x[i])
  void (*caxpy_conj)(cdouble alpha, const cdouble* x, cdouble* y,
                     std::size_t n);
  // x' = c*x - s*e*y ; y' = s*x + c*e*y   (one plane rotation with phase e)
  void (*crot)(cdouble* x, cdouble* y, std::size_t n, double c, double s,
               cdouble e);
};

const KernelTable& scalar_table();

// nullptr when the variant was not compiled in or the CPU lacks AVX2+FMA.
const KernelTable* avx2_table();

// Table used by the library. Chosen on first use: AVX2 when available unless
// the environment variable RFSLAM_SIMD=scalar is set.
const KernelTable& active();

// Overrides the runtime choice (tests and benchmarks).
void set_active(Isa isa);

std::string_view isa_name(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

inline cdouble cdotc(std::span<const cdouble> a, std::span<const cdouble> b) {
  return active().cdotc(a.data(), b.data(), a.size());
}

}  // namespace rfslam::kernels
