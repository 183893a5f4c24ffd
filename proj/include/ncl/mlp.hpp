#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "ncl/ops.hpp"
#include "ncl/param_store.hpp"
#include "ncl/rng.hpp"

namespace ncl {

// A named MLP is four parameters: <name>.w1 [in×hidden], <name>.b1 [1×hidden],
// <name>.w2 [hidden×out], <name>.b2 [1×out]. Layout is linear → ReLU → linear.

/// Glorot-uniform weights, zero biases.
void add_mlp(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden,
             std::size_t out, ParamGroup group, Rng& rng);

/// Same shapes, every entry zero.
void add_zero_mlp(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                  std::size_t out, ParamGroup group);

std::size_t mlp_input_width(const ParamStore& store, std::string_view name);
std::size_t mlp_output_width(const ParamStore& store, std::string_view name);

/// Row-wise two-layer perceptron. Throws ConfigError for an unknown name and
/// ShapeError when x.cols() differs from the first layer's input width.
Var mlp_forward(Var x, ParamStore& store, std::string_view name);

}  // namespace ncl
