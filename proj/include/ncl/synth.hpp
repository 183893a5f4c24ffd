#pragma once

// Synthetic stand-in for a frozen text/image encoder. Emits token bundles with
// the encoder's layout (text: sot, n words, eot; image: cls, m patches) and a
// per-token attention map, over a planted concept space with controlled
// corruption of the target image.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "ncl/matrix.hpp"

namespace ncl {

enum class Modality : std::uint8_t { text, image };

struct TokenBundle {
  Matrix tokens;                 // L×d
  std::vector<double> attention; // length L, nonnegative, sums to 1
  std::size_t global_index = 0;  // eot row for text, cls row for image
  Modality modality = Modality::image;

  std::size_t length() const { return tokens.rows(); }
  std::span<const double> global_token() const { return tokens.row(global_index); }
  /// Throws DataError when an invariant is broken.
  void validate() const;

  friend bool operator==(const TokenBundle&, const TokenBundle&) = default;
};

enum class Truth : std::uint8_t { clean, mismatched, partial };
enum class Split : std::uint8_t { train, eval };

std::string_view to_string(Truth t);
Truth parse_truth(std::string_view s);
std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct TripletSample {
  TokenBundle mod_text;
  TokenBundle ref_image;
  TokenBundle tar_image;
  Truth truth = Truth::clean;
  std::size_t ref_concept = 0;
  std::size_t target_concept = 0;  // concept the edit text asks for
  std::size_t image_concept = 0;   // concept the target image actually shows
  std::size_t blend_concept = 0;   // second anchor of a partial blend, else == image_concept
  Split split = Split::train;

  bool noisy() const { return truth != Truth::clean; }
  friend bool operator==(const TripletSample&, const TripletSample&) = default;
};

struct DatasetSpec {
  std::size_t num_concepts = 16;
  std::size_t dim = 32;
  std::size_t text_tokens = 8;     // n
  std::size_t image_patches = 16;  // m
  std::size_t triplets = 2000;
  double mismatch_rate = 0.0;
  double partial_rate = 0.0;
  double distractor_fraction = 0.25;
  double noise_scale = 0.05;
  std::uint64_t seed = 0;
  // Trailing fraction of triplets held out for retrieval evaluation; never corrupted.
  double eval_fraction = 0.2;
  // Norm of the per-triplet appearance offset shared by reference and target.
  double instance_scale = 1.0;
  // Norm of a pure-noise distractor token.
  double distractor_scale = 1.0;
  // Noise added to the cls/eot row on top of the informative-token mean.
  double global_noise_scale = 0.1;

  /// Throws ConfigError.
  void validate() const;
  std::size_t eval_count() const;
  std::size_t train_count() const { return triplets - eval_count(); }
  std::size_t text_length() const { return text_tokens + 2; }
  std::size_t image_length() const { return image_patches + 1; }

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct ConceptTable {
  Matrix anchors;  // C×d, unit rows
  double max_pairwise_cosine = -1.0;
  /// Set when anchors are too close to be told apart reliably.
  bool crowded = false;
};

inline constexpr double kCrowdedCosine = 0.95;

ConceptTable make_concepts(const DatasetSpec& spec);

/// Pure in (concepts, spec, index).
TripletSample synth_triplet(const ConceptTable& concepts, const DatasetSpec& spec, std::size_t index);

struct Dataset {
  DatasetSpec spec;
  std::vector<TripletSample> samples;

  std::vector<std::size_t> indices(Split split) const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Generates all triplets, parallel over indices.
Dataset generate_dataset(const DatasetSpec& spec);
/// Single-threaded reference for generate_dataset.
Dataset generate_dataset_serial(const DatasetSpec& spec);

struct TruthHistogram {
  std::size_t clean = 0;
  std::size_t mismatched = 0;
  std::size_t partial = 0;
  std::size_t total() const { return clean + mismatched + partial; }
};

TruthHistogram truth_histogram(const Dataset& data, Split split);

}  // namespace ncl
