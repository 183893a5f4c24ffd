#include "ncl/fusion_loss.hpp"

#include "ncl/errors.hpp"
#include "ncl/mlp.hpp"

namespace ncl {

std::string_view fusion_mlp_for(QueryView view) { return view == QueryView::global ? kFuseGlobalMlp : kFuseWcbMlp; }

std::string_view to_string(QueryView view) { return view == QueryView::global ? "global" : "wcb"; }

std::size_t SoftLabelVector::ones() const {
  std::size_t n = 0;
  for (auto l : labels) n += l;
  return n;
}

std::vector<double> SoftLabelVector::weights() const { return {labels.begin(), labels.end()}; }

SoftLabelVector SoftLabelVector::all_ones(std::size_t n) { return {std::vector<std::uint8_t>(n, 1)}; }

Var fuse_query(Var text, Var image, ParamStore& params, QueryView view) {
  if (text.cols() != image.cols() || text.rows() != image.rows()) {
    throw ShapeError("fuse_query: text and image embeddings differ in shape");
  }
  return mlp_forward(ops::concat_cols(text, image), params, fusion_mlp_for(view));
}

Var nce_per_sample(Var queries, Var targets, double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
  if (queries.rows() != targets.rows()) throw ShapeError("nce: query and target counts differ");
  return ops::nce_rows(ops::cosine_matrix(queries, targets), tau);
}

LossVector nce_per_sample(const Matrix& queries, const Matrix& targets, double tau) {
  Tape tape;
  Var l = nce_per_sample(tape.constant(queries), tape.constant(targets), tau);
  const auto v = l.value().data();
  return {v.begin(), v.end()};
}

Var soft_nce_loss(ViewPair global, const SoftLabelVector& labels, double tau) {
  if (global.queries.rows() != labels.size()) throw ShapeError("soft_nce_loss: label count differs from batch size");
  const auto w = labels.weights();
  return ops::masked_mean(nce_per_sample(global.queries, global.targets, tau), w);
}

Var soft_nce_loss(ViewPair global, ViewPair wcb, const SoftLabelVector& labels, double tau) {
  if (wcb.queries.rows() != labels.size() || wcb.targets.rows() != labels.size()) {
    throw ShapeError("soft_nce_loss: views disagree on batch size");
  }
  const auto w = labels.weights();
  Var first = soft_nce_loss(global, labels, tau);
  Var second = ops::masked_mean(nce_per_sample(wcb.queries, wcb.targets, tau), w);
  return ops::add(first, second);
}

}  // namespace ncl
