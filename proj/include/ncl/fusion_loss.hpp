#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "ncl/ops.hpp"

namespace ncl {

/// Which pair of embeddings a query is built from.
enum class QueryView { global, wcb };

inline constexpr std::string_view kFuseGlobalMlp = "fuse.global";
inline constexpr std::string_view kFuseWcbMlp = "fuse.wcb";

std::string_view fusion_mlp_for(QueryView view);
std::string_view to_string(QueryView view);

inline constexpr double kDefaultTemperature = 0.2;

/// Per-sample contrastive losses of one view, detached from any tape.
using LossVector = std::vector<double>;

/// Binary per-pair training mask.
struct SoftLabelVector {
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t ones() const;
  std::vector<double> weights() const;
  static SoftLabelVector all_ones(std::size_t n);

  friend bool operator==(const SoftLabelVector&, const SoftLabelVector&) = default;
};

/// Q = MLP([text | image]) with the view's fusion MLP. Inputs B×d each.
Var fuse_query(Var text, Var image, ParamStore& params, QueryView view);

/// Row-wise InfoNCE of queries against index-aligned targets, B×1.
Var nce_per_sample(Var queries, Var targets, double tau);
/// Value-only form.
LossVector nce_per_sample(const Matrix& queries, const Matrix& targets, double tau);

struct ViewPair {
  Var queries;
  Var targets;
};

/// (1/B)Σ l_i ℓ_i + (1/B)Σ l_i ℓ_wcb,i. Throws ShapeError on inconsistent B.
Var soft_nce_loss(ViewPair global, ViewPair wcb, const SoftLabelVector& labels, double tau);
/// Single-view objective, used when the compensated view is disabled.
Var soft_nce_loss(ViewPair global, const SoftLabelVector& labels, double tau);

}  // namespace ncl
