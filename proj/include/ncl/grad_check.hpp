#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "ncl/param_store.hpp"
#include "ncl/tape.hpp"

namespace ncl {

struct GradCheckOptions {
  double step = 1e-6;
  double tol = 1e-5;
  // Below this analytic magnitude the comparison switches to absolute error.
  double small_grad = 1e-6;
  double abs_tol = 1e-8;
};

struct ParamCheck {
  std::string name;
  ParamGroup group = ParamGroup::other;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;  // over entries compared on the absolute branch
  bool pass = true;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool pass = true;
  std::size_t entries_checked = 0;
  std::vector<ParamCheck> per_param;

  /// Worst relative error among parameters of one group (0 if none).
  double worst_rel_error(ParamGroup group) const;
  const ParamCheck* worst_param() const;
};

/// Builds a 1×1 scalar on the given tape from parameters of the store.
using ScalarFn = std::function<Var(Tape&)>;

/// Compares tape gradients against central differences for every entry of
/// every parameter. Parameter values are restored afterwards; grad slots are
/// left holding the analytic gradient. Throws NumericalError if f is ever
/// non-finite.
GradCheckReport grad_check(const ScalarFn& f, ParamStore& params, const GradCheckOptions& options = {});

}  // namespace ncl
