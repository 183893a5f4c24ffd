#include "ncl/nfb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "ncl/errors.hpp"

namespace ncl {

namespace {

double log_normal(double x, double mean, double variance) {
  const double diff = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + diff * diff / variance);
}

double log_weight(double w) { return w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity(); }

// log(e^a + e^b) with -inf handled.
double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::vector<std::size_t> threshold_set(std::span<const double> post, double theta, bool above) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < post.size(); ++i) {
    if ((post[i] > theta) == above) out.push_back(i);
  }
  return out;
}

}  // namespace

LossVector normalize_losses(std::span<const double> losses) {
  LossVector out(losses.size(), 0.5);
  if (losses.empty()) return out;
  const auto [lo, hi] = std::minmax_element(losses.begin(), losses.end());
  const double range = *hi - *lo;
  if (range > 0.0) {
    for (std::size_t i = 0; i < losses.size(); ++i) out[i] = std::clamp((losses[i] - *lo) / range, 0.0, 1.0);
  }
  return out;
}

double log_likelihood(const GmmParams& g, std::span<const double> xs) {
  double ll = 0.0;
  for (double x : xs) {
    ll += log_add(log_weight(g.weight[0]) + log_normal(x, g.mean[0], g.variance[0]),
                  log_weight(g.weight[1]) + log_normal(x, g.mean[1], g.variance[1]));
  }
  return ll;
}

double posterior(const GmmParams& g, double x) {
  const double l0 = log_weight(g.weight[0]) + log_normal(x, g.mean[0], g.variance[0]);
  const double l1 = log_weight(g.weight[1]) + log_normal(x, g.mean[1], g.variance[1]);
  const double total = log_add(l0, l1);
  if (total == -std::numeric_limits<double>::infinity()) return 0.5;
  return std::clamp(std::exp(l0 - total), 0.0, 1.0);
}

GmmFit em_fit(std::span<const double> losses, const EmOptions& options) {
  GmmFit fit;
  const std::size_t n = losses.size();
  if (n < kMinEmPoints) {
    fit.fallback = true;
    return fit;
  }
  for (double x : losses) {
    if (!std::isfinite(x)) throw NumericalError("em_fit: non-finite loss");
  }

  std::vector<double> sorted(losses.begin(), losses.end());
  std::sort(sorted.begin(), sorted.end());
  double mean = 0.0;
  for (double x : losses) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : losses) var += (x - mean) * (x - mean);
  var = std::max(var / static_cast<double>(n), kVarianceFloor);

  GmmParams& g = fit.params;
  g.mean[0] = quantile_sorted(sorted, 0.25);
  g.mean[1] = quantile_sorted(sorted, 0.75);
  g.variance[0] = g.variance[1] = var;
  g.weight[0] = g.weight[1] = 0.5;

  std::vector<double> resp0(n);
  for (std::size_t iter = 0;; ++iter) {
    // E-step.
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double l0 = log_weight(g.weight[0]) + log_normal(losses[i], g.mean[0], g.variance[0]);
      const double l1 = log_weight(g.weight[1]) + log_normal(losses[i], g.mean[1], g.variance[1]);
      const double total = log_add(l0, l1);
      resp0[i] = std::exp(l0 - total);
      ll += total;
    }
    const bool converged = !fit.log_likelihood.empty() && ll - fit.log_likelihood.back() < options.tol;
    fit.log_likelihood.push_back(ll);
    if (converged || iter >= options.max_iters) break;

    // M-step: weighted MLE with the variance floor as a box constraint.
    for (int k = 0; k < 2; ++k) {
      double nk = 0.0, sx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = k == 0 ? resp0[i] : 1.0 - resp0[i];
        nk += r;
        sx += r * losses[i];
      }
      if (nk <= 0.0) {
        g.weight[k] = 0.0;
        continue;
      }
      const double mk = sx / nk;
      double sv = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = k == 0 ? resp0[i] : 1.0 - resp0[i];
        sv += r * (losses[i] - mk) * (losses[i] - mk);
      }
      g.weight[k] = nk / static_cast<double>(n);
      g.mean[k] = mk;
      g.variance[k] = std::max(sv / nk, kVarianceFloor);
    }
    const double wsum = g.weight[0] + g.weight[1];
    g.weight[0] /= wsum;
    g.weight[1] = 1.0 - g.weight[0];
    fit.iterations = iter + 1;
  }

  if (g.mean[0] > g.mean[1]) {
    std::swap(g.mean[0], g.mean[1]);
    std::swap(g.variance[0], g.variance[1]);
    std::swap(g.weight[0], g.weight[1]);
  }
  return fit;
}

std::vector<double> posteriors(const GmmFit& fit, std::span<const double> losses) {
  std::vector<double> out(losses.size(), 1.0);
  if (fit.fallback) return out;
  for (std::size_t i = 0; i < losses.size(); ++i) out[i] = posterior(fit.params, losses[i]);
  return out;
}

PairSets build_sets(std::span<const double> post, std::span<const double> post_wcb, double threshold) {
  if (post.size() != post_wcb.size()) throw ShapeError("build_sets: posterior vectors differ in length");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("build_sets: threshold must lie in (0, 1)");
  PairSets s;
  s.batch = post.size();
  s.threshold = threshold;
  s.match = threshold_set(post, threshold, true);
  s.mis = threshold_set(post, threshold, false);
  s.match_wcb = threshold_set(post_wcb, threshold, true);
  s.mis_wcb = threshold_set(post_wcb, threshold, false);
  std::set_union(s.match.begin(), s.match.end(), s.match_wcb.begin(), s.match_wcb.end(),
                 std::back_inserter(s.matched));
  std::set_intersection(s.mis.begin(), s.mis.end(), s.mis_wcb.begin(), s.mis_wcb.end(),
                        std::back_inserter(s.unmatched));
  std::vector<std::size_t> either;
  std::set_union(s.mis.begin(), s.mis.end(), s.mis_wcb.begin(), s.mis_wcb.end(), std::back_inserter(either));
  std::set_difference(either.begin(), either.end(), s.unmatched.begin(), s.unmatched.end(),
                      std::back_inserter(s.partial));
  return s;
}

SoftLabelVector soft_labels(const PairSets& sets) {
  // The zero clause wins: partial pairs are also members of the matched set.
  SoftLabelVector out{std::vector<std::uint8_t>(sets.batch, 0)};
  for (std::size_t i : sets.matched) out.labels[i] = 1;
  for (std::size_t i : sets.unmatched) out.labels[i] = 0;
  for (std::size_t i : sets.partial) out.labels[i] = 0;
  return out;
}

FilterResult run_filter(std::span<const double> losses, std::span<const double> losses_wcb, double threshold,
                        const EmOptions& options) {
  FilterResult r;
  const auto norm = normalize_losses(losses);
  const auto norm_wcb = normalize_losses(losses_wcb);
  r.fit = em_fit(norm, options);
  r.fit_wcb = em_fit(norm_wcb, options);
  r.post = posteriors(r.fit, norm);
  r.post_wcb = posteriors(r.fit_wcb, norm_wcb);
  r.sets = build_sets(r.post, r.post_wcb, threshold);
  r.labels = soft_labels(r.sets);
  return r;
}

}  // namespace ncl
