#include "ncl/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "ncl/ops.hpp"
#include "ncl/rng.hpp"
#include "ncl/trainer.hpp"
#include "ncl/wcb.hpp"

namespace ncl {

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(-1.0, 1.0);
  return m;
}

// Entries bounded away from zero so ReLU has no kink within the step.
Matrix off_zero_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& v : m.data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
  return m;
}

struct Case {
  std::string op;
  std::size_t rows, cols;  // output shape of the op under test
  std::function<void(ParamStore&, Rng&)> setup;
  std::function<Var(Tape&, ParamStore&, const Matrix& weights)> body;
};

// sum(body ⊙ W) with a fixed random W, so every output entry matters.
Var weighted_sum(Tape& t, Var out, const Matrix& w) { return ops::sum(ops::mul(out, t.constant(w))); }

std::vector<Case> cases() {
  auto p = [](Tape& t, ParamStore& s, const char* name) { return t.parameter(s, name); };
  std::vector<Case> out;
  out.push_back({"sum", 1, 1, [](ParamStore& s, Rng& r) { s.add("x", ParamGroup::other, random_matrix(r, 3, 4)); },
                 [p](Tape& t, ParamStore& s, const Matrix&) { return ops::sum(p(t, s, "x")); }});
  out.push_back({"mul", 1, 1,
                 [](ParamStore& s, Rng& r) {
                   s.add("x", ParamGroup::other, random_matrix(r, 3, 4));
                   s.add("y", ParamGroup::other, random_matrix(r, 3, 4));
                 },
                 [p](Tape& t, ParamStore& s, const Matrix&) { return ops::sum(ops::mul(p(t, s, "x"), p(t, s, "y"))); }});
  out.push_back({"scale", 3, 4, [](ParamStore& s, Rng& r) { s.add("x", ParamGroup::other, random_matrix(r, 3, 4)); },
                 [p](Tape& t, ParamStore& s, const Matrix& w) {
                   return weighted_sum(t, ops::scale(p(t, s, "x"), -0.7), w);
                 }});
  out.push_back({"add", 3, 4,
                 [](ParamStore& s, Rng& r) {
                   s.add("x", ParamGroup::other, random_matrix(r, 3, 4));
                   s.add("y", ParamGroup::other, random_matrix(r, 3, 4));
                 },
                 [p](Tape& t, ParamStore& s, const Matrix& w) {
                   return weighted_sum(t, ops::add(p(t, s, "x"), p(t, s, "y")), w);
                 }});
  out.push_back({"matmul", 3, 2,
                 [](ParamStore& s, Rng& r) {
                   s.add("x", ParamGroup::other, random_matrix(r, 3, 4));
                   s.add("y", ParamGroup::other, random_matrix(r, 4, 2));
                 },
                 [p](Tape& t, ParamStore& s, const Matrix& w) {
                   return weighted_sum(t, ops::matmul(p(t, s, "x"), p(t, s, "y")), w);
                 }});
  out.push_back({"add_bias", 3, 4,
                 [](ParamStore& s, Rng& r) {
                   s.add("x", ParamGroup::other, random_matrix(r, 3, 4));
                   s.add("b", ParamGroup::other, random_matrix(r, 1, 4));
                 },
                 [p](Tape& t, ParamStore& s, const Matrix& w) {
                   return weighted_sum(t, ops::add_bias(p(t, s, "x"), p(t, s, "b")), w);
                 }});
  out.push_back({"relu", 3, 4, [](ParamStore& s, Rng& r) { s.add("x", ParamGroup::other, off_zero_matrix(r, 3, 4)); },
                 [p](Tape& t, ParamStore& s, const Matrix& w) { return weighted_sum(t, ops::relu(p(t, s, "x")), w); }});
  out.push_back({"concat_cols", 3, 5,
                 [](ParamStore& s, Rng& r) {
                   s.add("x", ParamGroup::other, random_matrix(r, 3, 2));
                   s.add("y", ParamGroup::other, random_matrix(r, 3, 3));
                 },
                 [p](Tape& t, ParamStore& s, const Matrix& w) {
                   return weighted_sum(t, ops::concat_cols(p(t, s, "x"), p(t, s, "y")), w);
                 }});
  out.push_back({"maxpool_rows", 1, 4, [](ParamStore& s, Rng& r) { s.add("x", ParamGroup::other, random_matrix(r, 5, 4)); },
                 [p](Tape& t, ParamStore& s, const Matrix& w) {
                   return weighted_sum(t, ops::maxpool_rows(p(t, s, "x")), w);
                 }});
  out.push_back({"segment_maxpool", 2, 4,
                 [](ParamStore& s, Rng& r) { s.add("x", ParamGroup::other, random_matrix(r, 6, 4)); },
                 [p](Tape& t, ParamStore& s, const Matrix& w) {
                   return weighted_sum(t, ops::segment_maxpool(p(t, s, "x"), {2, 4}), w);
                 }});
  out.push_back({"select_rows", 3, 3, [](ParamStore& s, Rng& r) { s.add("x", ParamGroup::other, random_matrix(r, 5, 3)); },
                 [p](Tape& t, ParamStore& s, const Matrix& w) {
                   const std::size_t rows[] = {0, 2, 3};
                   return weighted_sum(t, select_rows(p(t, s, "x"), rows), w);
                 }});
  out.push_back({"cosine_matrix", 3, 3,
                 [](ParamStore& s, Rng& r) {
                   s.add("q", ParamGroup::other, random_matrix(r, 3, 4));
                   s.add("g", ParamGroup::other, random_matrix(r, 3, 4));
                 },
                 [p](Tape& t, ParamStore& s, const Matrix& w) {
                   return weighted_sum(t, ops::cosine_matrix(p(t, s, "q"), p(t, s, "g")), w);
                 }});
  out.push_back({"nce_rows", 4, 1, [](ParamStore& s, Rng& r) { s.add("s", ParamGroup::other, random_matrix(r, 4, 4)); },
                 [p](Tape& t, ParamStore& s, const Matrix& w) {
                   return weighted_sum(t, ops::nce_rows(p(t, s, "s"), 0.5), w);
                 }});
  out.push_back({"masked_mean", 1, 1, [](ParamStore& s, Rng& r) { s.add("x", ParamGroup::other, random_matrix(r, 4, 1)); },
                 [p](Tape& t, ParamStore& s, const Matrix&) {
                   const double mask[] = {1.0, 0.0, 1.0, 1.0};
                   return ops::masked_mean(p(t, s, "x"), mask);
                 }});
  return out;
}

}  // namespace

std::vector<OpCheck> check_ops(std::uint64_t seed, const GradCheckOptions& options) {
  std::vector<OpCheck> out;
  std::uint64_t index = 0;
  for (const Case& c : cases()) {
    Rng rng(derive_seed(seed, kStreamCheck, index++));
    ParamStore store;
    c.setup(store, rng);
    const Matrix weights = random_matrix(rng, c.rows, c.cols);
    const ScalarFn f = [&](Tape& t) { return c.body(t, store, weights); };
    out.push_back({c.op, grad_check(f, store, options)});
  }
  return out;
}

const OpCheck* first_failure(const std::vector<OpCheck>& checks) {
  for (const auto& c : checks) {
    if (!c.report.pass) return &c;
  }
  return nullptr;
}

GradCheckReport check_pipeline(std::uint64_t seed, std::size_t batch, std::size_t dim,
                               const GradCheckOptions& options) {
  DatasetSpec spec;
  spec.dim = dim;
  spec.num_concepts = 4;
  spec.text_tokens = 4;
  spec.image_patches = 6;
  spec.triplets = batch + 2;
  spec.eval_fraction = 0.0;
  spec.mismatch_rate = 0.3;
  spec.seed = seed;
  const Dataset data = generate_dataset(spec);

  TrainConfig config;
  config.batch_size = batch;
  config.seed = seed;
  Trainer trainer(data, config);

  Rng rng(derive_seed(seed, kStreamCheck, 1000));
  SoftLabelVector labels{std::vector<std::uint8_t>(batch)};
  for (auto& l : labels.labels) l = rng.uniform() < 0.5 ? 1 : 0;
  labels.labels[rng.below(batch)] = 1;

  std::vector<std::size_t> idx(batch);
  for (std::size_t i = 0; i < batch; ++i) idx[i] = i;
  const double tau = config.tau;
  const ScalarFn f = [&](Tape& t) {
    const BatchForward fw = trainer.forward(t, idx);
    return soft_nce_loss({fw.queries, fw.targets}, {*fw.queries_wcb, *fw.targets_wcb}, labels, tau);
  };
  return grad_check(f, trainer.params(), options);
}

}  // namespace ncl
