// Compiled with -mavx2 -mfma; only reached through the runtime dispatcher
// after the CPU reported both features.
#include <immintrin.h>

#include "rfslam/kernels.hpp"

namespace rfslam::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                           _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Two complex values per register: [re0, im0, re1, im1].
cdouble cdotc_avx2(const cdouble* a, const cdouble* b, std::size_t n) {
  const double* pa = reinterpret_cast<const double*>(a);
  const double* pb = reinterpret_cast<const double*>(b);
  __m256d acc_re = _mm256_setzero_pd();  // ar*br, ai*bi
  __m256d acc_im = _mm256_setzero_pd();  // ar*bi, ai*br
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d va = _mm256_loadu_pd(pa + 2 * i);
    const __m256d vb = _mm256_loadu_pd(pb + 2 * i);
    acc_re = _mm256_fmadd_pd(va, vb, acc_re);
    acc_im = _mm256_fmadd_pd(va, _mm256_permute_pd(vb, 0b0101), acc_im);
  }
  alignas(32) double im_lanes[4];
  _mm256_store_pd(im_lanes, acc_im);
  double re = hsum(acc_re);
  double im = im_lanes[0] - im_lanes[1] + im_lanes[2] - im_lanes[3];
  for (; i < n; ++i) {
    const double ar = a[i].real(), ai = a[i].imag();
    const double br = b[i].real(), bi = b[i].imag();
    re += ar * br + ai * bi;
    im += ar * bi - ai * br;
  }
  return {re, im};
}

void caxpy_conj_avx2(cdouble alpha, const cdouble* x, cdouble* y,
                     std::size_t n) {
  const double p = alpha.real(), q = alpha.imag();
  const double* px = reinterpret_cast<const double*>(x);
  double* py = reinterpret_cast<double*>(y);
  const __m256d vp = _mm256_setr_pd(p, -p, p, -p);
  const __m256d vq = _mm256_set1_pd(q);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d vx = _mm256_loadu_pd(px + 2 * i);
    const __m256d vxs = _mm256_permute_pd(vx, 0b0101);
    __m256d vy = _mm256_loadu_pd(py + 2 * i);
    vy = _mm256_fmadd_pd(vp, vx, vy);
    vy = _mm256_fmadd_pd(vq, vxs, vy);
    _mm256_storeu_pd(py + 2 * i, vy);
  }
  for (; i < n; ++i) {
    const double xr = x[i].real(), xi = x[i].imag();
    y[i] += cdouble(p * xr + q * xi, q * xr - p * xi);
  }
}

void crot_avx2(cdouble* x, cdouble* y, std::size_t n, double c, double s,
               cdouble e) {
  double* px = reinterpret_cast<double*>(x);
  double* py = reinterpret_cast<double*>(y);
  const __m256d ver = _mm256_set1_pd(e.real());
  const __m256d vei = _mm256_setr_pd(-e.imag(), e.imag(), -e.imag(), e.imag());
  const __m256d vc = _mm256_set1_pd(c);
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d vx = _mm256_loadu_pd(px + 2 * i);
    const __m256d vy = _mm256_loadu_pd(py + 2 * i);
    const __m256d ey = _mm256_fmadd_pd(
        ver, vy, _mm256_mul_pd(vei, _mm256_permute_pd(vy, 0b0101)));
    _mm256_storeu_pd(px + 2 * i,
                     _mm256_fnmadd_pd(vs, ey, _mm256_mul_pd(vc, vx)));
    _mm256_storeu_pd(py + 2 * i, _mm256_fmadd_pd(vc, ey, _mm256_mul_pd(vs, vx)));
  }
  for (; i < n; ++i) {
    const cdouble xv = x[i];
    const cdouble ey = e * y[i];
    x[i] = c * xv - s * ey;
    y[i] = s * xv + c * ey;
  }
}

constexpr KernelTable kAvx2Table{Isa::kAvx2,     dot_avx2,        axpy_avx2,
                                 cdotc_avx2,     caxpy_conj_avx2, crot_avx2};

}  // namespace

const KernelTable* avx2_table_compiled() { return &kAvx2Table; }

}  // namespace rfslam::kernels
