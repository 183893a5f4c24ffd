#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ncl/fusion_loss.hpp"
#include "ncl/matrix.hpp"

namespace ncl {

/// Fraction of queries whose index-aligned gallery item ranks within the top
/// k by cosine similarity; ties go to the lower gallery index.
/// Throws ConfigError for k == 0 or k > N.
double recall_at_k(const Matrix& queries, const Matrix& gallery, std::size_t k);
double recall_at_k_serial(const Matrix& queries, const Matrix& gallery, std::size_t k);

/// 0-based rank of each query's true item; one similarity pass serves many k.
std::vector<std::size_t> true_match_ranks(const Matrix& queries, const Matrix& gallery);
double recall_from_ranks(std::span<const std::size_t> ranks, std::size_t k);

/// Noise detection quality. Positive class is "noisy"; a label of 0 predicts it.
struct FilterQuality {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // No pair was predicted noisy; precision is reported as 0.
  bool precision_undefined = false;
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;
  std::size_t false_negative = 0;
};

/// Returns nullopt when no ground truth is available (empty truth).
std::optional<FilterQuality> evaluate_filter(const SoftLabelVector& labels, const std::vector<bool>& noisy);

}  // namespace ncl
