#pragma once

// Noise-pair Filter Block: a two-component 1-D Gaussian mixture fitted by EM
// to per-pair contrastive losses, thresholded posteriors per view, and the
// set algebra that turns two views into per-pair training labels.

#include <cstddef>
#include <span>
#include <vector>

#include "ncl/fusion_loss.hpp"

namespace ncl {

inline constexpr double kVarianceFloor = 1e-6;
inline constexpr double kDefaultThreshold = 0.5;

/// Component 0 is the low-loss ("matched") component: mean[0] <= mean[1].
struct GmmParams {
  double weight[2] = {0.5, 0.5};
  double mean[2] = {0.0, 0.0};
  double variance[2] = {1.0, 1.0};
};

struct EmOptions {
  std::size_t max_iters = 100;
  double tol = 1e-6;
};

struct GmmFit {
  GmmParams params;
  std::size_t iterations = 0;
  // Log-likelihood after each E-step, starting with the initial parameters.
  std::vector<double> log_likelihood;
  // Too few points to fit: every pair is treated as matched.
  bool fallback = false;
};

/// Min-max rescale to [0, 1]; a constant vector maps to all 0.5.
LossVector normalize_losses(std::span<const double> losses);

/// Fewer than this many points triggers the fallback.
inline constexpr std::size_t kMinEmPoints = 4;

GmmFit em_fit(std::span<const double> losses, const EmOptions& options = {});

/// p(k=0 | x), evaluated in log space.
double posterior(const GmmParams& gmm, double x);
/// Posterior per point; all ones for a fallback fit.
std::vector<double> posteriors(const GmmFit& fit, std::span<const double> losses);

double log_likelihood(const GmmParams& gmm, std::span<const double> xs);

struct PairSets {
  std::size_t batch = 0;
  double threshold = kDefaultThreshold;
  std::vector<std::size_t> match;      // post > θ
  std::vector<std::size_t> mis;        // post ≤ θ
  std::vector<std::size_t> match_wcb;
  std::vector<std::size_t> mis_wcb;
  std::vector<std::size_t> matched;    // match ∪ match_wcb
  std::vector<std::size_t> unmatched;  // mis ∩ mis_wcb
  std::vector<std::size_t> partial;    // (mis ∪ mis_wcb) \ (mis ∩ mis_wcb)
};

/// Throws ShapeError on unequal lengths, ConfigError for θ outside (0, 1).
PairSets build_sets(std::span<const double> post, std::span<const double> post_wcb,
                    double threshold = kDefaultThreshold);

/// 1 for pairs in the matched set that are neither unmatched nor partial.
SoftLabelVector soft_labels(const PairSets& sets);

/// One filtering pass over two loss views.
struct FilterResult {
  GmmFit fit;
  GmmFit fit_wcb;
  std::vector<double> post;
  std::vector<double> post_wcb;
  PairSets sets;
  SoftLabelVector labels;
};

FilterResult run_filter(std::span<const double> losses, std::span<const double> losses_wcb,
                        double threshold = kDefaultThreshold, const EmOptions& options = {});

}  // namespace ncl
