#include "ncl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "ncl/errors.hpp"
#include "ncl/kernels.hpp"

namespace ncl::ops {

namespace {

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) throw ShapeError(std::string(op) + ": operands on different tapes");
}

std::vector<double> row_norms(const Matrix& m) {
  std::vector<double> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = norm(m.row(r));
  return out;
}

}  // namespace

Var matmul(Var a, Var b) {
  same_tape(a, b, "matmul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) throw ShapeError("matmul: " + shape(av) + " x " + shape(bv));
  Matrix out = ncl::matmul(av, bv);
  return a.tape().record("matmul", std::move(out), {a.id(), b.id()}, [](Tape& t, std::size_t self) {
    const auto& in = t.inputs(self);
    const Matrix& A = t.value(in[0]);
    const Matrix& B = t.value(in[1]);
    const Matrix& G = t.grad(self);
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    Matrix dA(m, k);
    kernels::matmul_bt(G.data(), B.data(), dA.data(), m, n, k);
    t.grad(in[0]) += dA;
    kernels::matmul_at_accumulate(A.data(), G.data(), t.grad(in[1]).data(), m, k, n);
  });
}

Var add_bias(Var x, Var bias) {
  same_tape(x, bias, "add_bias");
  const Matrix& xv = x.value();
  const Matrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw ShapeError("add_bias: " + shape(xv) + " + " + shape(bv));
  }
  Matrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv(0, c);
  return x.tape().record("add_bias", std::move(out), {x.id(), bias.id()}, [](Tape& t, std::size_t self) {
    const auto& in = t.inputs(self);
    const Matrix& G = t.grad(self);
    t.grad(in[0]) += G;
    Matrix& gb = t.grad(in[1]);
    for (std::size_t r = 0; r < G.rows(); ++r)
      for (std::size_t c = 0; c < G.cols(); ++c) gb(0, c) += G(r, c);
  });
}

Var relu(Var x) {
  Matrix out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return x.tape().record("relu", std::move(out), {x.id()}, [](Tape& t, std::size_t self) {
    const std::size_t in = t.inputs(self)[0];
    const auto xv = t.value(in).data();
    const auto g = t.grad(self).data();
    auto gx = t.grad(in).data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var add(Var a, Var b) {
  same_tape(a, b, "add");
  if (!a.value().same_shape(b.value())) {
    throw ShapeError("add: " + shape(a.value()) + " + " + shape(b.value()));
  }
  Matrix out = a.value() + b.value();
  return a.tape().record("add", std::move(out), {a.id(), b.id()}, [](Tape& t, std::size_t self) {
    const auto& in = t.inputs(self);
    t.grad(in[0]) += t.grad(self);
    t.grad(in[1]) += t.grad(self);
  });
}

Var mul(Var a, Var b) {
  same_tape(a, b, "mul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (!av.same_shape(bv)) throw ShapeError("mul: " + shape(av) + " * " + shape(bv));
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = av.data()[i] * bv.data()[i];
  return a.tape().record("mul", std::move(out), {a.id(), b.id()}, [](Tape& t, std::size_t self) {
    const auto& in = t.inputs(self);
    const auto g = t.grad(self).data();
    const auto ad = t.value(in[0]).data();
    const auto bd = t.value(in[1]).data();
    // Read both operands before writing: a and b may be the same node.
    std::vector<double> ga(g.size()), gb(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] = g[i] * bd[i];
      gb[i] = g[i] * ad[i];
    }
    auto gad = t.grad(in[0]).data();
    for (std::size_t i = 0; i < g.size(); ++i) gad[i] += ga[i];
    auto gbd = t.grad(in[1]).data();
    for (std::size_t i = 0; i < g.size(); ++i) gbd[i] += gb[i];
  });
}

Var scale(Var x, double s) {
  Matrix out = x.value() * s;
  return x.tape().record("scale", std::move(out), {x.id()}, [s](Tape& t, std::size_t self) {
    t.grad(t.inputs(self)[0]) += t.grad(self) * s;
  });
}

Var concat_cols(Var a, Var b) {
  same_tape(a, b, "concat_cols");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) throw ShapeError("concat_cols: " + shape(av) + " | " + shape(bv));
  Matrix out(av.rows(), av.cols() + bv.cols());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    std::copy(av.row(r).begin(), av.row(r).end(), out.row(r).begin());
    std::copy(bv.row(r).begin(), bv.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(av.cols()));
  }
  return a.tape().record("concat_cols", std::move(out), {a.id(), b.id()}, [](Tape& t, std::size_t self) {
    const auto& in = t.inputs(self);
    const Matrix& G = t.grad(self);
    Matrix& ga = t.grad(in[0]);
    const std::size_t ac = ga.cols();
    for (std::size_t r = 0; r < G.rows(); ++r)
      for (std::size_t c = 0; c < ac; ++c) ga(r, c) += G(r, c);
    Matrix& gb = t.grad(in[1]);
    for (std::size_t r = 0; r < G.rows(); ++r)
      for (std::size_t c = 0; c < gb.cols(); ++c) gb(r, c) += G(r, ac + c);
  });
}

Var segment_maxpool(Var x, std::vector<std::size_t> segment_rows) {
  const Matrix& xv = x.value();
  if (segment_rows.empty()) throw ShapeError("segment_maxpool: no segments");
  const std::size_t total = std::accumulate(segment_rows.begin(), segment_rows.end(), std::size_t{0});
  if (total != xv.rows()) throw ShapeError("segment_maxpool: segments do not cover the rows");
  if (std::find(segment_rows.begin(), segment_rows.end(), 0u) != segment_rows.end()) {
    throw ShapeError("segment_maxpool: empty segment");
  }
  const std::size_t cols = xv.cols();
  Matrix out(segment_rows.size(), cols);
  std::vector<std::size_t> argmax(segment_rows.size() * cols);
  std::size_t start = 0;
  for (std::size_t s = 0; s < segment_rows.size(); ++s) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::size_t best = start;
      for (std::size_t r = start + 1; r < start + segment_rows[s]; ++r) {
        if (xv(r, c) > xv(best, c)) best = r;
      }
      out(s, c) = xv(best, c);
      argmax[s * cols + c] = best;
    }
    start += segment_rows[s];
  }
  const char* name = segment_rows.size() == 1 ? "maxpool_rows" : "segment_maxpool";
  return x.tape().record(name, std::move(out), {x.id()},
                         [argmax = std::move(argmax), cols](Tape& t, std::size_t self) {
                           const Matrix& G = t.grad(self);
                           Matrix& gx = t.grad(t.inputs(self)[0]);
                           for (std::size_t s = 0; s < G.rows(); ++s)
                             for (std::size_t c = 0; c < cols; ++c) gx(argmax[s * cols + c], c) += G(s, c);
                         });
}

Var maxpool_rows(Var x) {
  if (x.value().rows() == 0) throw ShapeError("maxpool_rows: empty matrix");
  return segment_maxpool(x, {x.value().rows()});
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape().record("sum", Matrix(1, 1, s), {x.id()}, [](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    for (double& v : t.grad(t.inputs(self)[0]).data()) v += g;
  });
}

Var cosine_matrix(Var queries, Var targets) {
  same_tape(queries, targets, "cosine_matrix");
  const Matrix& q = queries.value();
  const Matrix& g = targets.value();
  if (q.cols() != g.cols()) throw ShapeError("cosine_matrix: " + shape(q) + " vs " + shape(g));
  for (double n : row_norms(q)) {
    if (n == 0.0) throw DegenerateInputError("cosine_matrix: zero-norm query row");
  }
  for (double n : row_norms(g)) {
    if (n == 0.0) throw DegenerateInputError("cosine_matrix: zero-norm target row");
  }
  Matrix out(q.rows(), g.rows());
  kernels::cosine_matrix(q.data(), g.data(), out.data(), q.rows(), g.rows(), q.cols());
  return queries.tape().record(
      "cosine_matrix", std::move(out), {queries.id(), targets.id()}, [](Tape& t, std::size_t self) {
        const auto& in = t.inputs(self);
        const Matrix& Q = t.value(in[0]);
        const Matrix& T = t.value(in[1]);
        const Matrix& S = t.value(self);
        const Matrix& G = t.grad(self);
        const std::size_t d = Q.cols();
        const auto qn = row_norms(Q);
        const auto tn = row_norms(T);
        // dS_ij/dq_i = (t̂_j − S_ij q̂_i)/|q_i|, symmetric for t_j.
        Matrix gq(Q.rows(), d), gt(T.rows(), d);
        for (std::size_t i = 0; i < Q.rows(); ++i) {
          for (std::size_t j = 0; j < T.rows(); ++j) {
            const double gij = G(i, j);
            if (gij == 0.0) continue;
            const double sij = S(i, j);
            for (std::size_t p = 0; p < d; ++p) {
              const double qh = Q(i, p) / qn[i];
              const double th = T(j, p) / tn[j];
              gq(i, p) += gij * (th - sij * qh) / qn[i];
              gt(j, p) += gij * (qh - sij * th) / tn[j];
            }
          }
        }
        t.grad(in[0]) += gq;
        t.grad(in[1]) += gt;
      });
}

Var cosine(Var u, Var v) {
  if (u.value().rows() != 1 || v.value().rows() != 1) throw ShapeError("cosine: expects row vectors");
  return cosine_matrix(u, v);
}

Var nce_rows(Var sims, double tau) {
  if (!(tau > 0.0)) throw ConfigError("nce: temperature must be positive");
  const Matrix& s = sims.value();
  if (s.rows() != s.cols()) throw ShapeError("nce: similarity matrix must be square, got " + shape(s));
  if (s.rows() < 2) throw ShapeError("nce: batch size must be at least 2");
  const std::size_t b = s.rows();
  Matrix out(b, 1);
  Matrix softmax(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b; ++j) mx = std::max(mx, s(i, j) / tau);
    double z = 0.0;
    for (std::size_t j = 0; j < b; ++j) z += std::exp(s(i, j) / tau - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < b; ++j) softmax(i, j) = std::exp(s(i, j) / tau - lse);
    if (s(i, i) / tau == mx) {
      // The diagonal is the row max; log1p keeps tiny losses from rounding to 0.
      double rest = 0.0;
      for (std::size_t j = 0; j < b; ++j) {
        if (j != i) rest += std::exp(s(i, j) / tau - mx);
      }
      out(i, 0) = std::log1p(rest);
    } else {
      out(i, 0) = lse - s(i, i) / tau;
    }
  }
  return sims.tape().record("nce_rows", std::move(out), {sims.id()},
                            [softmax = std::move(softmax), tau](Tape& t, std::size_t self) {
                              const Matrix& G = t.grad(self);
                              Matrix& gs = t.grad(t.inputs(self)[0]);
                              const std::size_t n = G.rows();
                              for (std::size_t i = 0; i < n; ++i) {
                                const double gi = G(i, 0);
                                if (gi == 0.0) continue;
                                for (std::size_t j = 0; j < n; ++j) {
                                  const double delta = i == j ? 1.0 : 0.0;
                                  gs(i, j) += gi * (softmax(i, j) - delta) / tau;
                                }
                              }
                            });
}

Var masked_mean(Var x, std::span<const double> weights) {
  const Matrix& xv = x.value();
  if (xv.cols() != 1 || xv.rows() != weights.size()) {
    throw ShapeError("masked_mean: " + shape(xv) + " with " + std::to_string(weights.size()) + " weights");
  }
  const double inv_b = 1.0 / static_cast<double>(xv.rows());
  double s = 0.0;
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    if (weights[i] != 0.0) s += weights[i] * xv(i, 0);
  }
  std::vector<double> w(weights.begin(), weights.end());
  return x.tape().record("masked_mean", Matrix(1, 1, s * inv_b), {x.id()},
                         [w = std::move(w), inv_b](Tape& t, std::size_t self) {
                           const double g = t.grad(self)(0, 0);
                           Matrix& gx = t.grad(t.inputs(self)[0]);
                           for (std::size_t i = 0; i < w.size(); ++i) gx(i, 0) += g * w[i] * inv_b;
                         });
}

}  // namespace ncl::ops
