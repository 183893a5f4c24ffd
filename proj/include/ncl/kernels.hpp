#pragma once

// Data-parallel inner loops. Every kernel has an OpenMP version (ncl::kernels)
// and a plain serial reference (ncl::kernels::serial) that tests and the
// benchmark compare against. Each output element is produced by exactly one
// thread with a fixed summation order, so both versions agree bit for bit.

#include <cstddef>
#include <span>

namespace ncl::kernels {

/// Below this many multiply-adds the parallel kernels stay on one thread.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

// out[m×n] = a[m×k] · b[k×n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);

// out[m×n] = a[m×k] · b[n×k]ᵀ
void matmul_bt(std::span<const double> a, std::span<const double> b, std::span<double> out,
               std::size_t m, std::size_t k, std::size_t n);

// out[m×n] += a[k×m]ᵀ · b[k×n]
void matmul_at_accumulate(std::span<const double> a, std::span<const double> b,
                          std::span<double> out, std::size_t k, std::size_t m, std::size_t n);

// out[i×j] = cos(q_i, g_j) for row-major q[nq×d], g[ng×d]. Rows must be nonzero.
void cosine_matrix(std::span<const double> q, std::span<const double> g, std::span<double> out,
                   std::size_t nq, std::size_t ng, std::size_t d);

// For each query i (index-aligned with gallery item i), the 0-based rank of
// the true item in the gallery ordered by descending similarity, ties broken
// toward the lower gallery index. sims is nq×ng with nq ≤ ng.
void true_match_ranks(std::span<const double> sims, std::span<std::size_t> ranks,
                      std::size_t nq, std::size_t ng);

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_bt(std::span<const double> a, std::span<const double> b, std::span<double> out,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_at_accumulate(std::span<const double> a, std::span<const double> b,
                          std::span<double> out, std::size_t k, std::size_t m, std::size_t n);
void cosine_matrix(std::span<const double> q, std::span<const double> g, std::span<double> out,
                   std::size_t nq, std::size_t ng, std::size_t d);
void true_match_ranks(std::span<const double> sims, std::span<std::size_t> ranks,
                      std::size_t nq, std::size_t ng);

}  // namespace serial

int max_threads();

}  // namespace ncl::kernels
