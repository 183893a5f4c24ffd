#pragma once

// Differentiable primitives recorded on a Tape. Shape coercions are explicit:
// the only broadcast is the row-vector bias in add_bias.

#include <cstddef>
#include <span>
#include <vector>

#include "ncl/tape.hpp"

namespace ncl::ops {

Var matmul(Var a, Var b);
/// x[r×c] + bias[1×c] on every row.
Var add_bias(Var x, Var bias);
Var relu(Var x);
Var add(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var x, double s);
/// [a | b] for equal row counts.
Var concat_cols(Var a, Var b);
/// Per-column max over all rows → 1×c. Ties go to the lowest row index.
Var maxpool_rows(Var x);
/// Per-column max inside consecutive row segments → segments×c.
Var segment_maxpool(Var x, std::vector<std::size_t> segment_rows);
/// Sum of all entries → 1×1.
Var sum(Var x);

/// S[i,j] = cos(q_i, t_j). Throws DegenerateInputError on a zero-norm row.
Var cosine_matrix(Var queries, Var targets);
/// cos(u, v) for two 1×d row vectors → 1×1.
Var cosine(Var u, Var v);

/// Per-row InfoNCE over a square similarity matrix:
///   out[i] = −log softmax_j(S[i,j]/τ)[i]
/// evaluated with a max-shifted log-sum-exp. Output is B×1.
Var nce_rows(Var sims, double tau);

/// (1/B)·Σ weights[i]·x[i] for a B×1 column → 1×1.
Var masked_mean(Var x, std::span<const double> weights);

}  // namespace ncl::ops
