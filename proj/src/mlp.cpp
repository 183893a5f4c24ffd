#include "ncl/mlp.hpp"

#include <cmath>

#include "ncl/errors.hpp"

namespace ncl {

namespace {

Matrix glorot(std::size_t in, std::size_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix w(in, out);
  for (double& v : w.data()) v = rng.uniform(-limit, limit);
  return w;
}

std::string key(std::string_view name, const char* suffix) { return std::string(name) + suffix; }

void require_mlp(const ParamStore& store, std::string_view name) {
  for (const char* s : {".w1", ".b1", ".w2", ".b2"}) {
    if (!store.contains(key(name, s))) throw ConfigError("unknown MLP '" + std::string(name) + "'");
  }
}

}  // namespace

void add_mlp(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden,
             std::size_t out, ParamGroup group, Rng& rng) {
  store.add(name + ".w1", group, glorot(in, hidden, rng));
  store.add(name + ".b1", group, Matrix(1, hidden));
  store.add(name + ".w2", group, glorot(hidden, out, rng));
  store.add(name + ".b2", group, Matrix(1, out));
}

void add_zero_mlp(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                  std::size_t out, ParamGroup group) {
  store.add(name + ".w1", group, Matrix(in, hidden));
  store.add(name + ".b1", group, Matrix(1, hidden));
  store.add(name + ".w2", group, Matrix(hidden, out));
  store.add(name + ".b2", group, Matrix(1, out));
}

std::size_t mlp_input_width(const ParamStore& store, std::string_view name) {
  require_mlp(store, name);
  return store.at(key(name, ".w1")).value.rows();
}

std::size_t mlp_output_width(const ParamStore& store, std::string_view name) {
  require_mlp(store, name);
  return store.at(key(name, ".w2")).value.cols();
}

Var mlp_forward(Var x, ParamStore& store, std::string_view name) {
  const std::size_t in = mlp_input_width(store, name);
  if (x.cols() != in) {
    throw ShapeError("MLP '" + std::string(name) + "' expects width " + std::to_string(in) + ", got " +
                     std::to_string(x.cols()));
  }
  Tape& t = x.tape();
  Var h = ops::relu(ops::add_bias(ops::matmul(x, t.parameter(store, key(name, ".w1"))),
                                  t.parameter(store, key(name, ".b1"))));
  return ops::add_bias(ops::matmul(h, t.parameter(store, key(name, ".w2"))), t.parameter(store, key(name, ".b2")));
}

}  // namespace ncl
