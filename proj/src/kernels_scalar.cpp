#include "rfslam/kernels.hpp"

namespace rfslam::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

cdouble cdotc_scalar(const cdouble* a, const cdouble* b, std::size_t n) {
  double re = 0.0;
  double im = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ar = a[i].real(), ai = a[i].imag();
    const double br = b[i].real(), bi = b[i].imag();
    re += ar * br + ai * bi;
    im += ar * bi - ai * br;
  }
  return {re, im};
}

void caxpy_conj_scalar(cdouble alpha, const cdouble* x, cdouble* y,
                       std::size_t n) {
  const double p = alpha.real(), q = alpha.imag();
  for (std::size_t i = 0; i < n; ++i) {
    const double xr = x[i].real(), xi = x[i].imag();
    y[i] += cdouble(p * xr + q * xi, q * xr - p * xi);
  }
}

void crot_scalar(cdouble* x, cdouble* y, std::size_t n, double c, double s,
                 cdouble e) {
  for (std::size_t i = 0; i < n; ++i) {
    const cdouble xv = x[i];
    const cdouble ey = e * y[i];
    x[i] = c * xv - s * ey;
    y[i] = s * xv + c * ey;
  }
}

constexpr KernelTable kScalarTable{
    Isa::kScalar, dot_scalar, axpy_scalar, cdotc_scalar, caxpy_conj_scalar,
    crot_scalar};

}  // namespace

const KernelTable& scalar_table() { return kScalarTable; }

}  // namespace rfslam::kernels
