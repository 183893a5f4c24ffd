#pragma once

// Ready-made gradient checks: one per differentiable op, and one over the
// whole training objective (WCB, query fusion, soft-label NCE).

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ncl/grad_check.hpp"

namespace ncl {

struct OpCheck {
  std::string op;
  GradCheckReport report;
};

/// Ordered so that each check only composes the op under test with ops
/// checked before it; the first failure therefore names the faulty op.
std::vector<OpCheck> check_ops(std::uint64_t seed, const GradCheckOptions& options = {});

/// First failing entry of check_ops output, or nullptr.
const OpCheck* first_failure(const std::vector<OpCheck>& checks);

/// Full objective on a freshly initialised model and a small synthetic batch
/// with random soft labels (at least one label is 1).
GradCheckReport check_pipeline(std::uint64_t seed, std::size_t batch = 4, std::size_t dim = 8,
                               const GradCheckOptions& options = {});

}  // namespace ncl
