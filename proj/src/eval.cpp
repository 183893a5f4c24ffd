#include "ncl/eval.hpp"

#include <string>

#include "ncl/errors.hpp"
#include "ncl/kernels.hpp"

namespace ncl {

namespace {

void check_inputs(const Matrix& queries, const Matrix& gallery, std::size_t k) {
  if (queries.cols() != gallery.cols()) throw ShapeError("recall: embedding widths differ");
  if (queries.rows() != gallery.rows()) throw ShapeError("recall: queries and gallery must be index-aligned");
  if (k == 0) throw ConfigError("recall: k must be >= 1");
  if (k > gallery.rows()) {
    throw ConfigError("recall: k=" + std::to_string(k) + " exceeds gallery size " + std::to_string(gallery.rows()));
  }
  for (const Matrix* m : {&queries, &gallery}) {
    for (std::size_t r = 0; r < m->rows(); ++r) {
      if (norm(m->row(r)) == 0.0) throw DegenerateInputError("recall: zero-norm embedding");
    }
  }
}

}  // namespace

std::vector<std::size_t> true_match_ranks(const Matrix& queries, const Matrix& gallery) {
  check_inputs(queries, gallery, 1);
  const std::size_t n = queries.rows();
  Matrix sims(n, n);
  kernels::cosine_matrix(queries.data(), gallery.data(), sims.data(), n, n, queries.cols());
  std::vector<std::size_t> ranks(n);
  kernels::true_match_ranks(sims.data(), ranks, n, n);
  return ranks;
}

double recall_from_ranks(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t r : ranks) hits += r < k ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double recall_at_k(const Matrix& queries, const Matrix& gallery, std::size_t k) {
  check_inputs(queries, gallery, k);
  return recall_from_ranks(true_match_ranks(queries, gallery), k);
}

double recall_at_k_serial(const Matrix& queries, const Matrix& gallery, std::size_t k) {
  check_inputs(queries, gallery, k);
  const std::size_t n = queries.rows();
  Matrix sims(n, n);
  kernels::serial::cosine_matrix(queries.data(), gallery.data(), sims.data(), n, n, queries.cols());
  std::vector<std::size_t> ranks(n);
  kernels::serial::true_match_ranks(sims.data(), ranks, n, n);
  return recall_from_ranks(ranks, k);
}

std::optional<FilterQuality> evaluate_filter(const SoftLabelVector& labels, const std::vector<bool>& noisy) {
  if (noisy.empty()) return std::nullopt;
  if (noisy.size() != labels.size()) throw ShapeError("evaluate_filter: labels and truth differ in length");
  FilterQuality q;
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    const bool predicted = labels.labels[i] == 0;
    if (predicted && noisy[i]) ++q.true_positive;
    if (predicted && !noisy[i]) ++q.false_positive;
    if (!predicted && noisy[i]) ++q.false_negative;
  }
  const double tp = static_cast<double>(q.true_positive);
  const std::size_t predicted = q.true_positive + q.false_positive;
  const std::size_t actual = q.true_positive + q.false_negative;
  q.precision_undefined = predicted == 0;
  q.precision = predicted == 0 ? 0.0 : tp / static_cast<double>(predicted);
  q.recall = actual == 0 ? 0.0 : tp / static_cast<double>(actual);
  q.f1 = q.precision + q.recall > 0.0 ? 2.0 * q.precision * q.recall / (q.precision + q.recall) : 0.0;
  return q;
}

}  // namespace ncl
