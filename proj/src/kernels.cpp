#include "ncl/kernels.hpp"

#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ncl::kernels {

namespace {

// Row kernels shared by the serial and parallel drivers so both produce
// identical floating-point results.

inline void matmul_row(const double* a, const double* b, double* out, std::size_t i,
                       std::size_t k, std::size_t n) {
  double* o = out + i * n;
  for (std::size_t j = 0; j < n; ++j) o[j] = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    const double aip = a[i * k + p];
    const double* br = b + p * n;
    for (std::size_t j = 0; j < n; ++j) o[j] += aip * br[j];
  }
}

inline void matmul_bt_row(const double* a, const double* b, double* out, std::size_t i,
                          std::size_t k, std::size_t n) {
  const double* ar = a + i * k;
  for (std::size_t j = 0; j < n; ++j) {
    const double* br = b + j * k;
    double s = 0.0;
    for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
    out[i * n + j] = s;
  }
}

inline void matmul_at_row(const double* a, const double* b, double* out, std::size_t i,
                          std::size_t k, std::size_t m, std::size_t n, double* scratch) {
  for (std::size_t j = 0; j < n; ++j) scratch[j] = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    const double api = a[p * m + i];
    const double* br = b + p * n;
    for (std::size_t j = 0; j < n; ++j) scratch[j] += api * br[j];
  }
  double* o = out + i * n;
  for (std::size_t j = 0; j < n; ++j) o[j] += scratch[j];
}

inline double row_norm(const double* x, std::size_t d) {
  double s = 0.0;
  for (std::size_t p = 0; p < d; ++p) s += x[p] * x[p];
  return std::sqrt(s);
}

inline void cosine_row(const double* q, const double* g, const double* gnorm, double* out,
                       std::size_t i, std::size_t ng, std::size_t d) {
  const double* qr = q + i * d;
  const double qn = row_norm(qr, d);
  for (std::size_t j = 0; j < ng; ++j) {
    const double* gr = g + j * d;
    double s = 0.0;
    for (std::size_t p = 0; p < d; ++p) s += qr[p] * gr[p];
    out[i * ng + j] = s / (qn * gnorm[j]);
  }
}

inline std::size_t rank_row(const double* sims, std::size_t i, std::size_t ng) {
  const double* r = sims + i * ng;
  const double truth = r[i];
  std::size_t rank = 0;
  for (std::size_t j = 0; j < ng; ++j) {
    if (r[j] > truth || (r[j] == truth && j < i)) ++rank;
  }
  return rank;
}

bool go_parallel(std::size_t work) { return work >= kParallelThreshold; }

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  const auto sm = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (go_parallel(m * k * n))
  for (std::ptrdiff_t i = 0; i < sm; ++i) {
    matmul_row(a.data(), b.data(), out.data(), static_cast<std::size_t>(i), k, n);
  }
}

void matmul_bt(std::span<const double> a, std::span<const double> b, std::span<double> out,
               std::size_t m, std::size_t k, std::size_t n) {
  const auto sm = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (go_parallel(m * k * n))
  for (std::ptrdiff_t i = 0; i < sm; ++i) {
    matmul_bt_row(a.data(), b.data(), out.data(), static_cast<std::size_t>(i), k, n);
  }
}

void matmul_at_accumulate(std::span<const double> a, std::span<const double> b,
                          std::span<double> out, std::size_t k, std::size_t m, std::size_t n) {
  const auto sm = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel if (go_parallel(m * k * n))
  {
    std::vector<double> scratch(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < sm; ++i) {
      matmul_at_row(a.data(), b.data(), out.data(), static_cast<std::size_t>(i), k, m, n,
                    scratch.data());
    }
  }
}

void cosine_matrix(std::span<const double> q, std::span<const double> g, std::span<double> out,
                   std::size_t nq, std::size_t ng, std::size_t d) {
  std::vector<double> gnorm(ng);
  for (std::size_t j = 0; j < ng; ++j) gnorm[j] = row_norm(g.data() + j * d, d);
  const auto sq = static_cast<std::ptrdiff_t>(nq);
#pragma omp parallel for schedule(static) if (go_parallel(nq * ng * d))
  for (std::ptrdiff_t i = 0; i < sq; ++i) {
    cosine_row(q.data(), g.data(), gnorm.data(), out.data(), static_cast<std::size_t>(i), ng, d);
  }
}

void true_match_ranks(std::span<const double> sims, std::span<std::size_t> ranks,
                      std::size_t nq, std::size_t ng) {
  const auto sq = static_cast<std::ptrdiff_t>(nq);
#pragma omp parallel for schedule(static) if (go_parallel(nq * ng))
  for (std::ptrdiff_t i = 0; i < sq; ++i) {
    ranks[static_cast<std::size_t>(i)] = rank_row(sims.data(), static_cast<std::size_t>(i), ng);
  }
}

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_row(a.data(), b.data(), out.data(), i, k, n);
}

void matmul_bt(std::span<const double> a, std::span<const double> b, std::span<double> out,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_bt_row(a.data(), b.data(), out.data(), i, k, n);
}

void matmul_at_accumulate(std::span<const double> a, std::span<const double> b,
                          std::span<double> out, std::size_t k, std::size_t m, std::size_t n) {
  std::vector<double> scratch(n);
  for (std::size_t i = 0; i < m; ++i) {
    matmul_at_row(a.data(), b.data(), out.data(), i, k, m, n, scratch.data());
  }
}

void cosine_matrix(std::span<const double> q, std::span<const double> g, std::span<double> out,
                   std::size_t nq, std::size_t ng, std::size_t d) {
  std::vector<double> gnorm(ng);
  for (std::size_t j = 0; j < ng; ++j) gnorm[j] = row_norm(g.data() + j * d, d);
  for (std::size_t i = 0; i < nq; ++i) cosine_row(q.data(), g.data(), gnorm.data(), out.data(), i, ng, d);
}

void true_match_ranks(std::span<const double> sims, std::span<std::size_t> ranks,
                      std::size_t nq, std::size_t ng) {
  for (std::size_t i = 0; i < nq; ++i) ranks[i] = rank_row(sims.data(), i, ng);
}

}  // namespace serial

}  // namespace ncl::kernels
