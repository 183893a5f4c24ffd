#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ncl/errors.hpp"
#include "ncl/grad_check.hpp"
#include "ncl/gradcheck_suite.hpp"
#include "ncl/kernels.hpp"
#include "ncl/matrix.hpp"
#include "ncl/mlp.hpp"
#include "ncl/ops.hpp"
#include "ncl/param_store.hpp"
#include "ncl/tape.hpp"
#include "support.hpp"

using namespace ncl;
using ncl::test::random_matrix;

TEST_CASE("matmul: identity and hand arithmetic") {
  Rng rng(1);
  const Matrix m = random_matrix(rng, 3, 3);
  CHECK(matmul(Matrix::identity(3), m) == m);
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{1}, {1}};
  CHECK(matmul(a, b) == Matrix{{3}, {7}});
}

TEST_CASE("matmul: dimension mismatch") {
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
  Tape t;
  CHECK_THROWS_AS(ops::matmul(t.constant(Matrix(2, 3)), t.constant(Matrix(2, 3))), ShapeError);
}

TEST_CASE("matmul: tape gradient matches central differences") {
  Rng rng(2);
  ParamStore s;
  s.add("a", ParamGroup::other, random_matrix(rng, 4, 5));
  s.add("b", ParamGroup::other, random_matrix(rng, 5, 2));
  const Matrix w = random_matrix(rng, 4, 2);
  auto f = [&](Tape& t) { return ops::sum(ops::mul(ops::matmul(t.parameter(s, "a"), t.parameter(s, "b")), t.constant(w))); };
  GradCheckOptions opt;
  opt.tol = 1e-6;
  const auto r = grad_check(f, s, opt);
  CHECK(r.pass);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("matmul is associative") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.below(6), k = 1 + rng.below(6), n = 1 + rng.below(6), p = 1 + rng.below(6);
    const Matrix a = random_matrix(rng, m, k), b = random_matrix(rng, k, n), c = random_matrix(rng, n, p);
    CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) <= 1e-10);
  }
}

TEST_CASE("cosine: closed forms and zero norm") {
  const std::vector<double> v{0.3, -1.2, 2.5};
  CHECK(cosine(v, v) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  CHECK(std::abs(cosine(std::vector<double>{1, 1}, std::vector<double>{1, 0}) - 0.7071067811865475) < 1e-15);
  CHECK_THROWS_AS(cosine(std::vector<double>{0, 0}, std::vector<double>{1, 0}), DegenerateInputError);
  Tape t;
  CHECK_THROWS_AS(ops::cosine(t.constant(Matrix{{0, 0}}), t.constant(Matrix{{1, 0}})), DegenerateInputError);
}

TEST_CASE("cosine stays in [-1, 1]") {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const Matrix u = random_matrix(rng, 1, 5), w = u * (0.1 + rng.uniform());
    const double c = cosine(u.row(0), w.row(0));
    CHECK(c <= 1.0);
    CHECK(c >= -1.0);
  }
}

TEST_CASE("mlp: zero weights annihilate") {
  ParamStore s;
  add_zero_mlp(s, "m", 4, 4, 3, ParamGroup::other);
  Rng rng(5);
  Tape t;
  Var y = mlp_forward(t.constant(random_matrix(rng, 6, 4)), s, "m");
  CHECK(y.value() == Matrix(6, 3));
}

TEST_CASE("mlp: identity layers pass nonnegative input through") {
  ParamStore s;
  add_zero_mlp(s, "m", 5, 5, 5, ParamGroup::other);
  s.at("m.w1").value = Matrix::identity(5);
  s.at("m.w2").value = Matrix::identity(5);
  Rng rng(6);
  const Matrix x = random_matrix(rng, 3, 5, 0.0, 2.0);
  Tape t;
  CHECK(mlp_forward(t.constant(x), s, "m").value() == x);
}

TEST_CASE("mlp: errors") {
  ParamStore s;
  Rng rng(7);
  add_mlp(s, "m", 4, 4, 4, ParamGroup::other, rng);
  Tape t;
  CHECK_THROWS_AS(mlp_forward(t.constant(Matrix(2, 4)), s, "missing"), ConfigError);
  CHECK_THROWS_AS(mlp_forward(t.constant(Matrix(2, 3)), s, "m"), ShapeError);
  CHECK(mlp_input_width(s, "m") == 4);
  CHECK(mlp_output_width(s, "m") == 4);
}

TEST_CASE("mlp: gradient of every weight on a random 3x8 input") {
  ParamStore s;
  Rng rng(8);
  add_mlp(s, "m", 8, 8, 8, ParamGroup::other, rng);
  for (auto& p : s) {
    if (p.name.ends_with(".b1") || p.name.ends_with(".b2")) p.value = random_matrix(rng, 1, 8, -0.1, 0.1);
  }
  const Matrix x = random_matrix(rng, 3, 8);
  const Matrix w = random_matrix(rng, 3, 8);
  auto f = [&](Tape& t) { return ops::sum(ops::mul(mlp_forward(t.constant(x), s, "m"), t.constant(w))); };
  const auto r = grad_check(f, s);
  CHECK(r.pass);
  CHECK(r.max_rel_error <= 1e-5);
}

TEST_CASE("maxpool_rows: examples") {
  Tape t;
  CHECK(ops::maxpool_rows(t.constant(Matrix{{1, -2, 3}})).value() == Matrix{{1, -2, 3}});
  CHECK(ops::maxpool_rows(t.constant(Matrix{{1, 5}, {3, 2}})).value() == Matrix{{3, 5}});
  CHECK_THROWS(ops::maxpool_rows(t.constant(Matrix(0, 3))));
}

TEST_CASE("maxpool_rows: ties route the gradient to the lowest row") {
  ParamStore s;
  s.add("x", ParamGroup::other, Matrix{{2, 1}, {2, 4}, {0, 4}});
  Tape t;
  Var y = ops::sum(ops::maxpool_rows(t.parameter(s, "x")));
  t.backward(y);
  CHECK(s.at("x").grad == Matrix{{1, 0}, {0, 1}, {0, 0}});

  // Away from the tie the winning row is unambiguous and differences agree.
  s.zero_grad();
  s.at("x").value(0, 0) += 1e-3;
  s.at("x").value(1, 1) += 1e-3;
  auto f = [&](Tape& tt) { return ops::sum(ops::maxpool_rows(tt.parameter(s, "x"))); };
  const auto r = grad_check(f, s);
  CHECK(r.pass);
  CHECK(s.at("x").grad == Matrix{{1, 0}, {0, 1}, {0, 0}});
}

TEST_CASE("grad_check: closed form and constant function") {
  ParamStore s;
  s.add("x", ParamGroup::other, Matrix{{3.0}});
  auto square = [&](Tape& t) {
    Var x = t.parameter(s, "x");
    return ops::sum(ops::mul(x, x));
  };
  auto r = grad_check(square, s);
  CHECK(s.at("x").grad(0, 0) == doctest::Approx(6.0));
  CHECK(r.max_rel_error < 1e-9);
  CHECK(r.pass);

  auto constant = [&](Tape& t) {
    (void)t.parameter(s, "x");
    return t.constant(Matrix{{2.5}});
  };
  r = grad_check(constant, s);
  CHECK(r.pass);
  CHECK(s.at("x").grad(0, 0) == 0.0);
  CHECK(r.max_abs_error == 0.0);
}

TEST_CASE("grad_check: non-finite evaluation is an error") {
  ParamStore s;
  s.add("x", ParamGroup::other, Matrix{{1.0}});
  auto f = [&](Tape& t) { return ops::scale(ops::sum(t.parameter(s, "x")), std::numeric_limits<double>::infinity()); };
  CHECK_THROWS_AS(grad_check(f, s), NumericalError);
}

TEST_CASE("every differentiable op passes its gradient check") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (const auto& c : check_ops(seed)) {
      INFO(c.op << " seed " << seed);
      CHECK(c.report.pass);
    }
  }
}

TEST_CASE("a corrupted backward rule is caught and named") {
  for (const char* op : {"sum", "matmul", "relu", "maxpool_rows", "cosine_matrix", "nce_rows", "masked_mean"}) {
    fault::corrupt_backward(op);
    const auto checks = check_ops(0);
    fault::clear();
    const OpCheck* bad = first_failure(checks);
    REQUIRE(bad != nullptr);
    CHECK(bad->op == op);
  }
  CHECK(first_failure(check_ops(0)) == nullptr);
}

TEST_CASE("tape: backward visits nodes in reverse recording order") {
  Rng rng(9);
  ParamStore s;
  s.add("w", ParamGroup::other, random_matrix(rng, 3, 3));
  Tape t;
  Var x = t.constant(random_matrix(rng, 2, 3));
  Var h = ops::relu(ops::matmul(x, t.parameter(s, "w")));
  Var y = ops::sum(ops::scale(h, 2.0));
  t.backward(y);
  std::vector<std::size_t> expected(t.size());
  std::iota(expected.rbegin(), expected.rend(), 0);
  CHECK(t.last_visit_order() == expected);
}

TEST_CASE("tape: gradient slots are reset before each backward") {
  Rng rng(10);
  Tape t;
  Var x = t.constant(random_matrix(rng, 2, 2));
  Var y = ops::sum(ops::mul(x, x));
  t.backward(y);
  const Matrix first = x.grad();
  t.backward(y);
  CHECK(x.grad() == first);
  CHECK_THROWS_AS(t.backward(x), ShapeError);
}

TEST_CASE("tape: backward of a sum equals the sum of backwards") {
  Rng rng(11);
  ParamStore s;
  s.add("w", ParamGroup::other, random_matrix(rng, 4, 3));
  const Matrix x = random_matrix(rng, 5, 4);
  const Matrix c1 = random_matrix(rng, 5, 3), c2 = random_matrix(rng, 5, 3);
  auto branch = [&](Tape& t, const Matrix& c) {
    return ops::sum(ops::mul(ops::relu(ops::matmul(t.constant(x), t.parameter(s, "w"))), t.constant(c)));
  };
  Matrix separate(4, 3);
  for (const Matrix* c : {&c1, &c2}) {
    s.zero_grad();
    Tape t;
    t.backward(branch(t, *c));
    separate += s.at("w").grad;
  }
  s.zero_grad();
  Tape t;
  t.backward(ops::add(branch(t, c1), branch(t, c2)));
  CHECK(max_abs_diff(s.at("w").grad, separate) <= 1e-12);
}

TEST_CASE("ops keep finite inputs finite") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    Tape t;
    Var a = t.constant(random_matrix(rng, 4, 4, -50, 50));
    Var b = t.constant(random_matrix(rng, 4, 4, -50, 50));
    Var sims = ops::cosine_matrix(a, b);
    Var l = ops::nce_rows(sims, 0.01);
    Var y = ops::add(ops::sum(ops::relu(ops::matmul(a, b))), ops::sum(ops::concat_cols(l, l)));
    t.backward(ops::sum(l));
    CHECK(y.value().all_finite());
    CHECK(a.grad().all_finite());
  }
}

TEST_CASE("param store: groups, shapes, duplicates") {
  ParamStore s;
  s.add("a", ParamGroup::wcb, Matrix(2, 3));
  s.add("b", ParamGroup::other, Matrix(1, 4));
  CHECK_THROWS_AS(s.add("a", ParamGroup::other, Matrix(1, 1)), ConfigError);
  CHECK_THROWS_AS(s.at("zzz"), ConfigError);
  CHECK(s.at("a").group == ParamGroup::wcb);
  for (const auto& p : s) CHECK(p.grad.same_shape(p.value));
  CHECK(s.scalar_count() == 10);
  CHECK(parse_param_group(to_string(ParamGroup::wcb)) == ParamGroup::wcb);
}

TEST_CASE("kernels: parallel and serial agree bit for bit") {
  Rng rng(13);
  struct Shape {
    std::size_t m, k, n;
  };
  for (const Shape sh : {Shape{3, 4, 5}, Shape{64, 64, 64}, Shape{130, 70, 90}, Shape{1, 300, 200}}) {
    const Matrix a = random_matrix(rng, sh.m, sh.k), b = random_matrix(rng, sh.k, sh.n);
    const Matrix bt = random_matrix(rng, sh.n, sh.k), at = random_matrix(rng, sh.k, sh.m);
    Matrix p(sh.m, sh.n), q(sh.m, sh.n);
    kernels::matmul(a.data(), b.data(), p.data(), sh.m, sh.k, sh.n);
    kernels::serial::matmul(a.data(), b.data(), q.data(), sh.m, sh.k, sh.n);
    CHECK(p == q);
    kernels::matmul_bt(a.data(), bt.data(), p.data(), sh.m, sh.k, sh.n);
    kernels::serial::matmul_bt(a.data(), bt.data(), q.data(), sh.m, sh.k, sh.n);
    CHECK(p == q);
    Matrix pa = random_matrix(rng, sh.m, sh.n), qa = pa;
    kernels::matmul_at_accumulate(at.data(), b.data(), pa.data(), sh.k, sh.m, sh.n);
    kernels::serial::matmul_at_accumulate(at.data(), b.data(), qa.data(), sh.k, sh.m, sh.n);
    CHECK(pa == qa);

    const Matrix g = random_matrix(rng, sh.n, sh.k);
    Matrix cp(sh.m, sh.n), cq(sh.m, sh.n);
    kernels::cosine_matrix(a.data(), g.data(), cp.data(), sh.m, sh.n, sh.k);
    kernels::serial::cosine_matrix(a.data(), g.data(), cq.data(), sh.m, sh.n, sh.k);
    CHECK(cp == cq);
    if (sh.m <= sh.n) {
      std::vector<std::size_t> rp(sh.m), rq(sh.m);
      kernels::true_match_ranks(cp.data(), rp, sh.m, sh.n);
      kernels::serial::true_match_ranks(cq.data(), rq, sh.m, sh.n);
      CHECK(rp == rq);
    }
  }
}

TEST_CASE("kernels: matmul against a naive triple loop") {
  Rng rng(14);
  const Matrix a = random_matrix(rng, 17, 9), b = random_matrix(rng, 9, 11);
  const Matrix c = matmul(a, b);
  for (std::size_t i = 0; i < 17; ++i) {
    for (std::size_t j = 0; j < 11; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 9; ++k) s += a(i, k) * b(k, j);
      CHECK(std::abs(c(i, j) - s) <= 1e-13);
    }
  }
}
