#pragma once

// Weight Compensation Block.
//
// Each token row is scaled by its attention weight, the non-global rows go
// through a modality MLP, are max-pooled per column, and the pooled vector is
// added to the bundle's global token:
//
//   X*      = diag(att) · X
//   wcb(X)  = maxpool_rows(MLP(X*[non-global rows])) + X[global]
//
// Text bundles use the "wcb.text" MLP; reference and target images share
// "wcb.image".

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ncl/ops.hpp"
#include "ncl/synth.hpp"

namespace ncl {

inline constexpr std::string_view kWcbTextMlp = "wcb.text";
inline constexpr std::string_view kWcbImageMlp = "wcb.image";

std::string_view wcb_mlp_for(Modality m);

/// Row i of the result is attention[i] · tokens[i].
Matrix weight_relocate(const TokenBundle& bundle);

struct WcbOptions {
  // When false the global row is left out of the pooled branch, since it is
  // added back on its own.
  bool pool_global_row = false;
};

/// Rows of the relocated bundle that enter the pooled branch.
std::vector<std::size_t> pooled_rows(const TokenBundle& bundle, const WcbOptions& options = {});

/// Fuses one relocated bundle: maxpool(MLP(weighted[rows])) + global.
/// `weighted` is L×d, `global_token` 1×d. Returns 1×d.
Var wcb_fuse(Var weighted, std::span<const std::size_t> rows, Var global_token, ParamStore& params,
             std::string_view mlp);

/// Batched form: `stacked` holds the already-selected rows of B bundles back
/// to back (segment_rows[b] rows each), `globals` is B×d. Returns B×d.
Var wcb_fuse_batch(Var stacked, std::vector<std::size_t> segment_rows, Var globals, ParamStore& params,
                   std::string_view mlp);

/// Rows picked from a matrix, differentiably.
Var select_rows(Var x, std::span<const std::size_t> rows);

enum class Provenance { mod_text, ref_image, tar_image };

struct CompensatedEmbedding {
  std::vector<double> values;  // length d
  Modality modality = Modality::image;
  Provenance provenance = Provenance::ref_image;
};

struct CompensatedTriplet {
  CompensatedEmbedding text;
  CompensatedEmbedding ref;
  CompensatedEmbedding tar;
};

CompensatedTriplet compensate_all(const TripletSample& sample, ParamStore& params, const WcbOptions& options = {});

/// Records WCB embeddings for several bundles of one modality → B×d.
Var compensate_bundles(Tape& tape, std::span<const TokenBundle* const> bundles, ParamStore& params,
                       const WcbOptions& options = {});

/// Global tokens of several bundles as a B×d constant.
Matrix global_tokens(std::span<const TokenBundle* const> bundles);

}  // namespace ncl
