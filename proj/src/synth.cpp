#include "ncl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ncl/errors.hpp"
#include "ncl/rng.hpp"

namespace ncl {

namespace {

std::vector<double> gaussian_vector(Rng& rng, std::size_t d, double stddev) {
  std::vector<double> v(d);
  for (double& x : v) x = rng.normal(stddev);
  return v;
}

std::size_t other_concept(Rng& rng, std::size_t num_concepts, std::size_t avoid) {
  return (avoid + 1 + rng.below(num_concepts - 1)) % num_concepts;
}

struct Layout {
  std::size_t length;
  std::size_t global;
  std::size_t first_content;  // rows [first_content, first_content + content) carry content
  std::size_t content;
};

// Fills one bundle. Content rows are `signal` + N(0, σ²) except for a random
// subset of distractors, which are pure noise with near-zero attention. Any
// row outside content and global (text sot) is low-attention noise as well.
TokenBundle make_bundle(std::span<const double> signal, const Layout& layout, Modality modality,
                        const DatasetSpec& spec, Rng& rng) {
  const std::size_t d = spec.dim;
  const std::size_t L = layout.length;
  const auto distractors = static_cast<std::size_t>(
      std::ceil(spec.distractor_fraction * static_cast<double>(layout.content)));

  std::vector<std::size_t> order(layout.content);
  std::iota(order.begin(), order.end(), layout.first_content);
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<bool> is_distractor(L, false);
  for (std::size_t k = 0; k < std::min(distractors, order.size()); ++k) is_distractor[order[k]] = true;

  TokenBundle b;
  b.modality = modality;
  b.global_index = layout.global;
  b.tokens = Matrix(L, d);
  b.attention.assign(L, 0.0);

  const double low = 1.0 / (10.0 * static_cast<double>(L));
  std::vector<double> mean(d, 0.0);
  std::size_t informative = 0;
  double low_mass = 0.0;
  for (std::size_t r = 0; r < L; ++r) {
    if (r == layout.global) continue;
    const bool content_row = r >= layout.first_content && r < layout.first_content + layout.content;
    auto row = b.tokens.row(r);
    if (content_row && !is_distractor[r]) {
      for (std::size_t c = 0; c < d; ++c) {
        row[c] = signal[c] + rng.normal(spec.noise_scale);
        mean[c] += row[c];
      }
      ++informative;
      b.attention[r] = 1.0 + 0.5 * rng.uniform();
    } else {
      const double scale = content_row ? spec.distractor_scale : spec.noise_scale * std::sqrt(double(d));
      for (std::size_t c = 0; c < d; ++c) row[c] = rng.normal(scale / std::sqrt(double(d)));
      b.attention[r] = low * rng.uniform(0.5, 1.0);
      low_mass += b.attention[r];
    }
  }

  auto global = b.tokens.row(layout.global);
  for (std::size_t c = 0; c < d; ++c) {
    const double m = informative > 0 ? mean[c] / static_cast<double>(informative) : signal[c];
    global[c] = m + rng.normal(spec.global_noise_scale);
  }
  b.attention[layout.global] = 1.0 + 0.5 * rng.uniform();

  // Informative and global rows share the mass left over by the low rows.
  double high_raw = 0.0;
  for (std::size_t r = 0; r < L; ++r) {
    if (r == layout.global || (r >= layout.first_content && r < layout.first_content + layout.content &&
                               !is_distractor[r])) {
      high_raw += b.attention[r];
    }
  }
  const double high_scale = (1.0 - low_mass) / high_raw;
  for (std::size_t r = 0; r < L; ++r) {
    if (r == layout.global || (r >= layout.first_content && r < layout.first_content + layout.content &&
                               !is_distractor[r])) {
      b.attention[r] *= high_scale;
    }
  }
  return b;
}

Layout text_layout(const DatasetSpec& s) { return {s.text_length(), s.text_tokens + 1, 1, s.text_tokens}; }
Layout image_layout(const DatasetSpec& s) { return {s.image_length(), 0, 1, s.image_patches}; }

}  // namespace

std::string_view to_string(Truth t) {
  switch (t) {
    case Truth::clean: return "clean";
    case Truth::mismatched: return "mismatched";
    case Truth::partial: return "partial";
  }
  return "?";
}

Truth parse_truth(std::string_view s) {
  if (s == "clean") return Truth::clean;
  if (s == "mismatched") return Truth::mismatched;
  if (s == "partial") return Truth::partial;
  throw DataError("unknown truth label '" + std::string(s) + "'");
}

std::string_view to_string(Split s) { return s == Split::train ? "train" : "eval"; }

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "eval") return Split::eval;
  throw DataError("unknown split '" + std::string(s) + "'");
}

void TokenBundle::validate() const {
  const std::size_t L = tokens.rows();
  if (attention.size() != L) throw DataError("bundle: attention length differs from token count");
  if (global_index >= L) throw DataError("bundle: global index out of range");
  double s = 0.0;
  for (double a : attention) {
    if (!(a >= 0.0)) throw DataError("bundle: negative or NaN attention");
    s += a;
  }
  if (std::abs(s - 1.0) > 1e-9) throw DataError("bundle: attention does not sum to 1");
  if (!tokens.all_finite()) throw DataError("bundle: non-finite token");
}

void DatasetSpec::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("dataset spec: " + m); };
  if (num_concepts < 1 || text_tokens < 1 || image_patches < 1 || triplets < 1) fail("all counts must be >= 1");
  if (dim < 4) fail("dim must be >= 4");
  auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!unit(mismatch_rate) || !unit(partial_rate)) fail("rates must lie in [0, 1]");
  if (mismatch_rate + partial_rate > 1.0) fail("mismatch_rate + partial_rate must be <= 1");
  if (!unit(distractor_fraction)) fail("distractor_fraction must lie in [0, 1]");
  if (!(noise_scale >= 0.0) || !(instance_scale >= 0.0) || !(distractor_scale >= 0.0) ||
      !(global_noise_scale >= 0.0)) {
    fail("scales must be >= 0");
  }
  if (!(eval_fraction >= 0.0 && eval_fraction < 1.0)) fail("eval_fraction must lie in [0, 1)");
}

std::size_t DatasetSpec::eval_count() const {
  return static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(triplets)));
}

ConceptTable make_concepts(const DatasetSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, kStreamConcepts));
  ConceptTable table;
  table.anchors = Matrix(spec.num_concepts, spec.dim);
  for (std::size_t c = 0; c < spec.num_concepts; ++c) {
    auto row = table.anchors.row(c);
    double n = 0.0;
    while (n < 1e-8) {
      for (double& x : row) x = rng.normal();
      n = norm(row);
    }
    for (double& x : row) x /= n;
  }
  for (std::size_t a = 0; a < spec.num_concepts; ++a)
    for (std::size_t b = a + 1; b < spec.num_concepts; ++b)
      table.max_pairwise_cosine =
          std::max(table.max_pairwise_cosine, cosine(table.anchors.row(a), table.anchors.row(b)));
  table.crowded = table.max_pairwise_cosine > kCrowdedCosine;
  return table;
}

TripletSample synth_triplet(const ConceptTable& concepts, const DatasetSpec& spec, std::size_t index) {
  if (spec.num_concepts < 2) throw ConfigError("dataset spec: triplets need at least 2 concepts");
  if (index >= spec.triplets) throw ConfigError("synth_triplet: index out of range");
  const std::size_t d = spec.dim;
  const double inst_sd = spec.instance_scale / std::sqrt(static_cast<double>(d));
  Rng rng(derive_seed(spec.seed, kStreamSample, index));

  TripletSample s;
  s.split = index >= spec.triplets - spec.eval_count() ? Split::eval : Split::train;
  s.ref_concept = rng.below(spec.num_concepts);
  s.target_concept = other_concept(rng, spec.num_concepts, s.ref_concept);
  s.image_concept = s.target_concept;
  s.blend_concept = s.target_concept;

  const auto ref = concepts.anchors.row(s.ref_concept);
  const auto tgt = concepts.anchors.row(s.target_concept);
  const auto instance = gaussian_vector(rng, d, inst_sd);

  std::vector<double> ref_signal(d), edit(d), tar_signal(d);
  for (std::size_t c = 0; c < d; ++c) {
    ref_signal[c] = ref[c] + instance[c];
    edit[c] = tgt[c] - ref[c];
    tar_signal[c] = tgt[c] + instance[c];
  }

  const double u = rng.uniform();
  if (s.split == Split::train && u < spec.mismatch_rate) {
    // A different image altogether: other concept, fresh appearance.
    s.truth = Truth::mismatched;
    s.image_concept = other_concept(rng, spec.num_concepts, s.target_concept);
    s.blend_concept = s.image_concept;
    const auto other = concepts.anchors.row(s.image_concept);
    const auto fresh = gaussian_vector(rng, d, inst_sd);
    for (std::size_t c = 0; c < d; ++c) tar_signal[c] = other[c] + fresh[c];
  } else if (s.split == Split::train && u < spec.mismatch_rate + spec.partial_rate) {
    s.truth = Truth::partial;
    s.blend_concept = other_concept(rng, spec.num_concepts, s.target_concept);
    const auto other = concepts.anchors.row(s.blend_concept);
    for (std::size_t c = 0; c < d; ++c) tar_signal[c] = 0.5 * tgt[c] + 0.5 * other[c] + instance[c];
  }

  s.mod_text = make_bundle(edit, text_layout(spec), Modality::text, spec, rng);
  s.ref_image = make_bundle(ref_signal, image_layout(spec), Modality::image, spec, rng);
  s.tar_image = make_bundle(tar_signal, image_layout(spec), Modality::image, spec, rng);
  return s;
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == split) out.push_back(i);
  }
  return out;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  const ConceptTable concepts = make_concepts(spec);
  if (spec.num_concepts < 2) throw ConfigError("dataset spec: triplets need at least 2 concepts");
  Dataset data{spec, std::vector<TripletSample>(spec.triplets)};
  const auto n = static_cast<std::ptrdiff_t>(spec.triplets);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    data.samples[static_cast<std::size_t>(i)] = synth_triplet(concepts, spec, static_cast<std::size_t>(i));
  }
  return data;
}

Dataset generate_dataset_serial(const DatasetSpec& spec) {
  const ConceptTable concepts = make_concepts(spec);
  Dataset data{spec, {}};
  data.samples.reserve(spec.triplets);
  for (std::size_t i = 0; i < spec.triplets; ++i) data.samples.push_back(synth_triplet(concepts, spec, i));
  return data;
}

TruthHistogram truth_histogram(const Dataset& data, Split split) {
  TruthHistogram h;
  for (const auto& s : data.samples) {
    if (s.split != split) continue;
    switch (s.truth) {
      case Truth::clean: ++h.clean; break;
      case Truth::mismatched: ++h.mismatched; break;
      case Truth::partial: ++h.partial; break;
    }
  }
  return h;
}

}  // namespace ncl
