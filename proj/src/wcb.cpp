#include "ncl/wcb.hpp"

#include "ncl/errors.hpp"
#include "ncl/mlp.hpp"

namespace ncl {

std::string_view wcb_mlp_for(Modality m) { return m == Modality::text ? kWcbTextMlp : kWcbImageMlp; }

Matrix weight_relocate(const TokenBundle& bundle) {
  if (bundle.attention.size() != bundle.tokens.rows()) {
    throw ShapeError("weight_relocate: attention length differs from token count");
  }
  Matrix out = bundle.tokens;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const double a = bundle.attention[r];
    for (double& v : out.row(r)) v *= a;
  }
  return out;
}

std::vector<std::size_t> pooled_rows(const TokenBundle& bundle, const WcbOptions& options) {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < bundle.length(); ++r) {
    if (options.pool_global_row || r != bundle.global_index) rows.push_back(r);
  }
  return rows;
}

Var select_rows(Var x, std::span<const std::size_t> rows) {
  const Matrix& xv = x.value();
  Matrix out(rows.size(), xv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= xv.rows()) throw ShapeError("select_rows: row index out of range");
    std::copy(xv.row(rows[i]).begin(), xv.row(rows[i]).end(), out.row(i).begin());
  }
  std::vector<std::size_t> picked(rows.begin(), rows.end());
  return x.tape().record("select_rows", std::move(out), {x.id()},
                         [picked = std::move(picked)](Tape& t, std::size_t self) {
                           const Matrix& G = t.grad(self);
                           Matrix& gx = t.grad(t.inputs(self)[0]);
                           for (std::size_t i = 0; i < picked.size(); ++i)
                             for (std::size_t c = 0; c < G.cols(); ++c) gx(picked[i], c) += G(i, c);
                         });
}

Var wcb_fuse(Var weighted, std::span<const std::size_t> rows, Var global_token, ParamStore& params,
             std::string_view mlp) {
  if (global_token.rows() != 1 || global_token.cols() != weighted.cols()) {
    throw ShapeError("wcb_fuse: global token must be 1x" + std::to_string(weighted.cols()));
  }
  if (rows.empty()) throw ShapeError("wcb_fuse: nothing to pool");
  Var pooled = ops::maxpool_rows(mlp_forward(select_rows(weighted, rows), params, mlp));
  return ops::add(pooled, global_token);
}

Var wcb_fuse_batch(Var stacked, std::vector<std::size_t> segment_rows, Var globals, ParamStore& params,
                   std::string_view mlp) {
  if (globals.rows() != segment_rows.size()) throw ShapeError("wcb_fuse_batch: one global row per segment");
  Var pooled = ops::segment_maxpool(mlp_forward(stacked, params, mlp), std::move(segment_rows));
  return ops::add(pooled, globals);
}

Matrix global_tokens(std::span<const TokenBundle* const> bundles) {
  if (bundles.empty()) throw ShapeError("global_tokens: no bundles");
  Matrix out(bundles.size(), bundles.front()->tokens.cols());
  for (std::size_t b = 0; b < bundles.size(); ++b) {
    const auto g = bundles[b]->global_token();
    if (g.size() != out.cols()) throw ShapeError("global_tokens: width mismatch");
    std::copy(g.begin(), g.end(), out.row(b).begin());
  }
  return out;
}

Var compensate_bundles(Tape& tape, std::span<const TokenBundle* const> bundles, ParamStore& params,
                       const WcbOptions& options) {
  if (bundles.empty()) throw ShapeError("compensate_bundles: no bundles");
  const Modality modality = bundles.front()->modality;
  const std::size_t d = bundles.front()->tokens.cols();
  std::vector<double> data;
  std::vector<std::size_t> segments;
  for (const TokenBundle* b : bundles) {
    if (b->modality != modality) throw ShapeError("compensate_bundles: mixed modalities");
    const Matrix weighted = weight_relocate(*b);
    const auto rows = pooled_rows(*b, options);
    for (std::size_t r : rows) data.insert(data.end(), weighted.row(r).begin(), weighted.row(r).end());
    segments.push_back(rows.size());
  }
  const std::size_t total = data.size() / d;
  Var stacked = tape.constant(Matrix(total, d, std::move(data)));
  Var globals = tape.constant(global_tokens(bundles));
  return wcb_fuse_batch(stacked, std::move(segments), globals, params, wcb_mlp_for(modality));
}

CompensatedTriplet compensate_all(const TripletSample& sample, ParamStore& params, const WcbOptions& options) {
  auto one = [&](const TokenBundle& b, Provenance p) {
    Tape tape;
    const TokenBundle* ptr = &b;
    Var v = compensate_bundles(tape, std::span<const TokenBundle* const>(&ptr, 1), params, options);
    const auto row = v.value().row(0);
    return CompensatedEmbedding{{row.begin(), row.end()}, b.modality, p};
  };
  return {one(sample.mod_text, Provenance::mod_text), one(sample.ref_image, Provenance::ref_image),
          one(sample.tar_image, Provenance::tar_image)};
}

}  // namespace ncl
