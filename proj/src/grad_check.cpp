#include "ncl/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "ncl/errors.hpp"

namespace ncl {

namespace {

double evaluate(const ScalarFn& f) {
  Tape tape;
  const double v = f(tape).value()(0, 0);
  if (!std::isfinite(v)) throw NumericalError("grad_check: function evaluated to a non-finite value");
  return v;
}

}  // namespace

double GradCheckReport::worst_rel_error(ParamGroup group) const {
  double w = 0.0;
  for (const auto& p : per_param) {
    if (p.group == group) w = std::max(w, p.max_rel_error);
  }
  return w;
}

const ParamCheck* GradCheckReport::worst_param() const {
  const ParamCheck* worst = nullptr;
  for (const auto& p : per_param) {
    if (worst == nullptr || p.max_rel_error > worst->max_rel_error) worst = &p;
  }
  return worst;
}

GradCheckReport grad_check(const ScalarFn& f, ParamStore& params, const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ConfigError("grad_check: step must be positive");

  params.zero_grad();
  {
    Tape tape;
    Var out = f(tape);
    if (!std::isfinite(out.value()(0, 0))) {
      throw NumericalError("grad_check: function evaluated to a non-finite value");
    }
    tape.backward(out);
  }

  GradCheckReport report;
  for (auto& p : params) {
    ParamCheck pc{p.name, p.group};
    auto values = p.value.data();
    const auto analytic = p.grad.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = evaluate(f);
      values[i] = saved - options.step;
      const double down = evaluate(f);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[i];
      const double diff = std::abs(a - numeric);
      if (std::abs(a) < options.small_grad) {
        pc.max_abs_error = std::max(pc.max_abs_error, diff);
        if (diff > options.abs_tol) pc.pass = false;
      } else {
        const double rel = diff / std::max(std::abs(a), std::abs(numeric));
        pc.max_rel_error = std::max(pc.max_rel_error, rel);
        if (rel > options.tol) pc.pass = false;
      }
      ++report.entries_checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, pc.max_rel_error);
    report.max_abs_error = std::max(report.max_abs_error, pc.max_abs_error);
    report.pass = report.pass && pc.pass;
    report.per_param.push_back(std::move(pc));
  }
  return report;
}

}  // namespace ncl
