#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ncl/errors.hpp"
#include "ncl/nfb.hpp"
#include "ncl/rng.hpp"

using namespace ncl;

namespace {

double density(double x, double mean, double var) {
  return std::exp(-(x - mean) * (x - mean) / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
}

std::vector<double> planted(Rng& rng, std::size_t n, double m0, double m1, double sd, double frac0 = 0.5) {
  std::vector<double> xs;
  const auto n0 = static_cast<std::size_t>(std::llround(frac0 * double(n)));
  for (std::size_t i = 0; i < n; ++i) xs.push_back((i < n0 ? m0 : m1) + rng.normal(sd));
  return xs;
}

bool contains(const std::vector<std::size_t>& v, std::size_t i) { return std::binary_search(v.begin(), v.end(), i); }

GmmParams random_gmm(Rng& rng) {
  GmmParams g;
  g.weight[0] = rng.uniform(0.05, 0.95);
  g.weight[1] = 1.0 - g.weight[0];
  g.mean[0] = rng.uniform(0.0, 0.5);
  g.mean[1] = rng.uniform(0.5, 1.0);
  g.variance[0] = rng.uniform(0.001, 0.1);
  g.variance[1] = rng.uniform(0.001, 0.1);
  return g;
}

}  // namespace

TEST_CASE("normalize: affine examples") {
  CHECK(normalize_losses(std::vector<double>{2, 4, 6}) == std::vector<double>{0, 0.5, 1});
  CHECK(normalize_losses(std::vector<double>{3, 3, 3}) == std::vector<double>{0.5, 0.5, 0.5});
  CHECK(normalize_losses(std::vector<double>{}).empty());
}

TEST_CASE("normalize: range and order over random vectors") {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> xs(2 + rng.below(30));
    for (double& x : xs) x = rng.uniform(-10, 10) * std::exp(rng.uniform(-3, 3));
    const auto ys = normalize_losses(xs);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      CHECK(ys[i] >= 0.0);
      CHECK(ys[i] <= 1.0);
      for (std::size_t j = 0; j < xs.size(); ++j) {
        if (xs[i] < xs[j]) CHECK(ys[i] <= ys[j]);
      }
    }
    CHECK(*std::min_element(ys.begin(), ys.end()) == 0.0);
    CHECK(*std::max_element(ys.begin(), ys.end()) == 1.0);
  }
}

TEST_CASE("em: two tight clusters") {
  std::vector<double> xs(8, 0.1);
  xs.insert(xs.end(), 8, 0.9);
  const GmmFit fit = em_fit(xs);
  CHECK_FALSE(fit.fallback);
  CHECK(std::abs(fit.params.mean[0] - 0.1) <= 0.02);
  CHECK(std::abs(fit.params.mean[1] - 0.9) <= 0.02);
  CHECK(std::abs(fit.params.weight[0] - 0.5) <= 0.05);
  CHECK(std::abs(fit.params.weight[1] - 0.5) <= 0.05);
}

TEST_CASE("em: planted clusters with spread") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto xs = planted(rng, 64, 0.1, 0.9, 0.03);
    const GmmFit fit = em_fit(xs);
    CHECK(std::abs(fit.params.mean[0] - 0.1) <= 0.02);
    CHECK(std::abs(fit.params.mean[1] - 0.9) <= 0.02);
    CHECK(std::abs(fit.params.weight[0] - 0.5) <= 0.05);
    CHECK(std::abs(std::sqrt(fit.params.variance[0]) - 0.03) <= 0.015);
  }
}

TEST_CASE("em: unbalanced clusters are recovered in proportion") {
  Rng rng(2);
  const auto xs = planted(rng, 200, 0.2, 0.7, 0.04, 0.75);
  const GmmFit fit = em_fit(xs);
  CHECK(std::abs(fit.params.weight[0] - 0.75) <= 0.05);
  CHECK(std::abs(fit.params.mean[0] - 0.2) <= 0.02);
  CHECK(std::abs(fit.params.mean[1] - 0.7) <= 0.02);
}

TEST_CASE("em: identical points") {
  const std::vector<double> xs(10, 0.37);
  const GmmFit fit = em_fit(xs);
  CHECK(fit.params.mean[0] == doctest::Approx(0.37).epsilon(1e-12));
  CHECK(fit.params.mean[1] == doctest::Approx(0.37).epsilon(1e-12));
  CHECK(fit.params.variance[0] == kVarianceFloor);
  CHECK(fit.params.variance[1] == kVarianceFloor);
  for (double p : posteriors(fit, xs)) CHECK(p == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("em: too few points falls back to all matched") {
  const std::vector<double> xs{0.1, 0.9, 0.5};
  const GmmFit fit = em_fit(xs);
  CHECK(fit.fallback);
  CHECK(posteriors(fit, xs) == std::vector<double>{1, 1, 1});
  CHECK_FALSE(em_fit(std::vector<double>{0.1, 0.9, 0.5, 0.2}).fallback);
}

TEST_CASE("em: non-finite losses are rejected") {
  const std::vector<double> xs{0.1, 0.2, NAN, 0.4, 0.5};
  CHECK_THROWS_AS(em_fit(xs), NumericalError);
}

TEST_CASE("em: parameter invariants and monotone log-likelihood") {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> xs(4 + rng.below(60));
    const int kind = trial % 3;
    for (double& x : xs) {
      if (kind == 0) x = rng.uniform();
      else if (kind == 1) x = rng.uniform() < 0.6 ? rng.normal(0.05) + 0.2 : rng.normal(0.1) + 0.8;
      else x = std::floor(rng.uniform() * 4.0) / 4.0;
    }
    const GmmFit fit = em_fit(xs);
    const auto& ll = fit.log_likelihood;
    REQUIRE(!ll.empty());
    for (std::size_t i = 1; i < ll.size(); ++i) CHECK(ll[i] >= ll[i - 1] - 1e-10);
    CHECK(fit.iterations <= 100);
    const GmmParams& g = fit.params;
    CHECK(std::abs(g.weight[0] + g.weight[1] - 1.0) <= 1e-9);
    CHECK(g.variance[0] >= kVarianceFloor);
    CHECK(g.variance[1] >= kVarianceFloor);
    CHECK(g.mean[0] <= g.mean[1]);
  }
}

TEST_CASE("em: iteration cap is honoured") {
  Rng rng(4);
  const auto xs = planted(rng, 50, 0.3, 0.6, 0.15);
  const GmmFit fit = em_fit(xs, {.max_iters = 3, .tol = 0.0});
  CHECK(fit.iterations == 3);
  CHECK(fit.log_likelihood.size() == 4);
}

TEST_CASE("em: the fit is at least as likely as the best coarse grid point") {
  Rng rng(5);
  const auto xs = planted(rng, 64, 0.15, 0.8, 0.05);
  const GmmFit fit = em_fit(xs);
  const double em_ll = log_likelihood(fit.params, xs);

  double best = -1e300;
  GmmParams arg;
  for (int a = 0; a <= 50; ++a) {
    for (int b = a + 1; b <= 50; ++b) {
      for (double sd : {0.02, 0.03, 0.04, 0.05, 0.06, 0.08, 0.1, 0.15}) {
        for (double w : {0.3, 0.4, 0.5, 0.6, 0.7}) {
          GmmParams g;
          g.mean[0] = a / 50.0;
          g.mean[1] = b / 50.0;
          g.variance[0] = g.variance[1] = sd * sd;
          g.weight[0] = w;
          g.weight[1] = 1.0 - w;
          const double ll = log_likelihood(g, xs);
          if (ll > best) {
            best = ll;
            arg = g;
          }
        }
      }
    }
  }
  CHECK(em_ll >= best);
  CHECK(std::abs(fit.params.mean[0] - arg.mean[0]) <= 0.02);
  CHECK(std::abs(fit.params.mean[1] - arg.mean[1]) <= 0.02);
}

TEST_CASE("posterior: symmetry and limits") {
  GmmParams g;
  g.mean[0] = 0.2;
  g.mean[1] = 0.8;
  g.variance[0] = g.variance[1] = 0.01;
  CHECK(std::abs(posterior(g, 0.5) - 0.5) <= 1e-15);
  CHECK(posterior(g, -5.0) == 1.0);
  CHECK(posterior(g, 6.0) < 1e-100);
  CHECK(posterior(g, -1.0) > posterior(g, 0.1));
}

TEST_CASE("posterior: direct density ratio") {
  Rng rng(6);
  for (int trial = 0; trial < 1000; ++trial) {
    const GmmParams g = random_gmm(rng);
    const double x = rng.uniform(-0.1, 1.1);
    const double p0 = g.weight[0] * density(x, g.mean[0], g.variance[0]);
    const double p1 = g.weight[1] * density(x, g.mean[1], g.variance[1]);
    if (p0 + p1 < 1e-250) continue;
    const double post = posterior(g, x);
    CHECK(std::abs(post - p0 / (p0 + p1)) <= 1e-12);
    CHECK(std::abs(post + p1 / (p0 + p1) - 1.0) <= 1e-9);
    CHECK(post >= 0.0);
    CHECK(post <= 1.0);
  }
}

TEST_CASE("posterior: stays in [0, 1] for extreme inputs") {
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    GmmParams g = random_gmm(rng);
    g.variance[0] = kVarianceFloor;
    const double x = rng.uniform(-1e6, 1e6);
    const double p = posterior(g, x);
    CHECK(std::isfinite(p));
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
}

TEST_CASE("sets: worked example") {
  const PairSets s = build_sets(std::vector<double>{0.9, 0.3}, std::vector<double>{0.8, 0.6}, 0.5);
  CHECK(s.matched == std::vector<std::size_t>{0, 1});
  CHECK(s.unmatched.empty());
  CHECK(s.partial == std::vector<std::size_t>{1});
  CHECK(soft_labels(s).labels == std::vector<std::uint8_t>{1, 0});
}

TEST_CASE("sets: unanimous views") {
  const std::vector<double> hi{0.9, 0.7, 0.51}, lo{0.1, 0.5, 0.3};
  PairSets s = build_sets(hi, hi);
  CHECK(s.matched.size() == 3);
  CHECK(s.unmatched.empty());
  CHECK(s.partial.empty());
  CHECK(soft_labels(s).ones() == 3);

  s = build_sets(lo, lo);
  CHECK(s.unmatched.size() == 3);
  CHECK(s.matched.empty());
  CHECK(s.partial.empty());
  CHECK(soft_labels(s).ones() == 0);
}

TEST_CASE("sets: a posterior equal to the threshold is mismatched") {
  const PairSets s = build_sets(std::vector<double>{0.5}, std::vector<double>{0.9}, 0.5);
  CHECK(s.mis == std::vector<std::size_t>{0});
  CHECK(s.partial == std::vector<std::size_t>{0});
}

TEST_CASE("sets: errors") {
  const std::vector<double> a{0.1, 0.2}, b{0.3};
  CHECK_THROWS_AS(build_sets(a, b), ShapeError);
  CHECK_THROWS_AS(build_sets(a, a, 0.0), ConfigError);
  CHECK_THROWS_AS(build_sets(a, a, 1.0), ConfigError);
  CHECK_THROWS_AS(build_sets(a, a, NAN), ConfigError);
}

TEST_CASE("sets: exhaustive truth table of the two memberships") {
  const double above = 0.8, below = 0.2;
  for (int code = 0; code < 4; ++code) {
    const bool m = code & 1, mw = code & 2;
    const PairSets s = build_sets(std::vector<double>{m ? above : below}, std::vector<double>{mw ? above : below});
    CHECK(contains(s.matched, 0) == (m || mw));
    CHECK(contains(s.unmatched, 0) == (!m && !mw));
    CHECK(contains(s.partial, 0) == (m != mw));
    CHECK(soft_labels(s).labels[0] == ((m && mw) ? 1 : 0));
  }
}

TEST_CASE("sets: partition, containment and agreement laws on random posteriors") {
  Rng rng(8);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t b = 1 + rng.below(32);
    std::vector<double> p(b), pw(b);
    for (std::size_t i = 0; i < b; ++i) {
      p[i] = rng.uniform();
      pw[i] = rng.uniform();
    }
    const double theta = trial % 2 ? 0.5 : rng.uniform(0.05, 0.95);
    const PairSets s = build_sets(p, pw, theta);
    const SoftLabelVector l = soft_labels(s);
    for (std::size_t i = 0; i < b; ++i) {
      CHECK(contains(s.match, i) != contains(s.mis, i));
      CHECK(contains(s.match_wcb, i) != contains(s.mis_wcb, i));
      CHECK(contains(s.matched, i) != contains(s.unmatched, i));
      if (contains(s.partial, i)) CHECK(contains(s.matched, i));
      CHECK((l.labels[i] == 1) == (p[i] > theta && pw[i] > theta));
    }
  }
}

TEST_CASE("run_filter: separated losses are labelled by cluster") {
  Rng rng(9);
  std::vector<double> losses, losses_wcb;
  std::vector<bool> noisy;
  for (std::size_t i = 0; i < 64; ++i) {
    const bool bad = i % 4 == 0;
    noisy.push_back(bad);
    losses.push_back((bad ? 4.0 : 1.0) + rng.normal(0.1));
    losses_wcb.push_back((bad ? 3.5 : 0.8) + rng.normal(0.1));
  }
  const FilterResult r = run_filter(losses, losses_wcb);
  for (std::size_t i = 0; i < 64; ++i) CHECK((r.labels.labels[i] == 0) == noisy[i]);
  CHECK(r.post.size() == 64);
  CHECK(r.sets.batch == 64);
}

TEST_CASE("run_filter: small batches keep every pair") {
  const FilterResult r = run_filter(std::vector<double>{1.0, 9.0}, std::vector<double>{1.0, 9.0});
  CHECK(r.fit.fallback);
  CHECK(r.labels.ones() == 2);
}
