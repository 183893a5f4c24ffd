#include "ncl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ncl/errors.hpp"
#include "ncl/mlp.hpp"
#include "ncl/rng.hpp"

namespace ncl {

namespace {

constexpr std::size_t kEvalChunk = 256;

std::vector<const TokenBundle*> bundles_of(const Dataset& data, std::span<const std::size_t> idx,
                                           const TokenBundle TripletSample::*member) {
  std::vector<const TokenBundle*> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(&(data.samples[i].*member));
  return out;
}

void normalize_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double n = norm(m.row(r));
    if (n == 0.0) throw DegenerateInputError("zero-norm embedding during evaluation");
    for (double& v : m.row(r)) v /= n;
  }
}

Matrix hconcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy(a.row(r).begin(), a.row(r).end(), out.row(r).begin());
    std::copy(b.row(r).begin(), b.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

GmmParams average(const std::vector<GmmParams>& fits) {
  GmmParams avg{{0, 0}, {0, 0}, {0, 0}};
  if (fits.empty()) return GmmParams{};
  for (const auto& g : fits) {
    for (int k = 0; k < 2; ++k) {
      avg.weight[k] += g.weight[k];
      avg.mean[k] += g.mean[k];
      avg.variance[k] += g.variance[k];
    }
  }
  const double n = static_cast<double>(fits.size());
  for (int k = 0; k < 2; ++k) {
    avg.weight[k] /= n;
    avg.mean[k] /= n;
    avg.variance[k] /= n;
  }
  return avg;
}

// Accumulates one view's filter statistics over an epoch.
struct ViewTally {
  std::vector<GmmParams> fits;
  std::vector<std::uint8_t> predicted_clean;
};

SoftLabelVector view_labels(std::span<const double> post, double theta) {
  SoftLabelVector l{std::vector<std::uint8_t>(post.size())};
  for (std::size_t i = 0; i < post.size(); ++i) l.labels[i] = post[i] > theta ? 1 : 0;
  return l;
}

}  // namespace

std::string_view to_string(FilterScope s) { return s == FilterScope::batch ? "batch" : "epoch"; }

FilterScope parse_filter_scope(std::string_view s) {
  if (s == "batch") return FilterScope::batch;
  if (s == "epoch") return FilterScope::epoch;
  throw ConfigError("filter_scope must be 'batch' or 'epoch'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (batch_size < 4) fail("batch_size must be >= 4");
  if (!(lr_wcb > 0.0) || !(lr_other > 0.0)) fail("learning rates must be > 0");
  if (!(tau > 0.0)) fail("tau must be > 0");
  if (!(theta > 0.0 && theta < 1.0)) fail("theta must lie in (0, 1)");
  if (warmup_epochs < 1) fail("warmup_epochs must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
  if (!(em_tol > 0.0)) fail("em_tol must be > 0");
}

ParamStore init_model(std::size_t dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kStreamInit));
  ParamStore store;
  add_mlp(store, std::string(kWcbTextMlp), dim, dim, dim, ParamGroup::wcb, rng);
  add_mlp(store, std::string(kWcbImageMlp), dim, dim, dim, ParamGroup::wcb, rng);
  add_mlp(store, std::string(kFuseGlobalMlp), 2 * dim, dim, dim, ParamGroup::other, rng);
  add_mlp(store, std::string(kFuseWcbMlp), 2 * dim, dim, dim, ParamGroup::other, rng);
  return store;
}

Trainer::Trainer(const Dataset& data, TrainConfig config)
    : Trainer(data, config, init_model(data.spec.dim, config.seed)) {}

Trainer::Trainer(const Dataset& data, TrainConfig config, ParamStore params)
    : data_(data), config_(config), params_(std::move(params)) {
  config_.validate();
  for (const auto& p : params_) {
    adam_m_.emplace_back(p.value.rows(), p.value.cols());
    adam_v_.emplace_back(p.value.rows(), p.value.cols());
  }
  train_ = data_.indices(Split::train);
  eval_ = data_.indices(Split::eval);
}

std::vector<std::vector<std::size_t>> Trainer::epoch_batches(std::size_t epoch) const {
  std::vector<std::size_t> order = train_;
  Rng rng(derive_seed(config_.seed, kStreamShuffle, epoch));
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<std::vector<std::size_t>> batches;
  const std::size_t b = config_.batch_size;
  for (std::size_t start = 0; start + b <= order.size(); start += b) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(start + b));
  }
  return batches;
}

BatchForward Trainer::forward(Tape& tape, std::span<const std::size_t> samples) {
  const auto text = bundles_of(data_, samples, &TripletSample::mod_text);
  const auto ref = bundles_of(data_, samples, &TripletSample::ref_image);
  const auto tar = bundles_of(data_, samples, &TripletSample::tar_image);

  BatchForward f;
  Var text_global = tape.constant(global_tokens(text));
  Var ref_global = tape.constant(global_tokens(ref));
  f.queries = fuse_query(text_global, ref_global, params_, QueryView::global);
  f.targets = tape.constant(global_tokens(tar));
  if (config_.enable_wcb) {
    Var text_wcb = compensate_bundles(tape, text, params_);
    Var ref_wcb = compensate_bundles(tape, ref, params_);
    f.queries_wcb = fuse_query(text_wcb, ref_wcb, params_, QueryView::wcb);
    f.targets_wcb = compensate_bundles(tape, tar, params_);
  }
  return f;
}

std::pair<LossVector, LossVector> Trainer::pair_losses(std::span<const std::size_t> samples) {
  Tape tape;
  const BatchForward f = forward(tape, samples);
  auto values = [](Var v) {
    const auto d = v.value().data();
    return LossVector(d.begin(), d.end());
  };
  LossVector global = values(nce_per_sample(f.queries, f.targets, config_.tau));
  LossVector wcb = f.queries_wcb ? values(nce_per_sample(*f.queries_wcb, *f.targets_wcb, config_.tau)) : global;
  return {std::move(global), std::move(wcb)};
}

double Trainer::accumulate_gradients(std::span<const std::size_t> samples, const SoftLabelVector& labels) {
  Tape tape;
  const BatchForward f = forward(tape, samples);
  Var loss = f.queries_wcb
                 ? soft_nce_loss({f.queries, f.targets}, {*f.queries_wcb, *f.targets_wcb}, labels, config_.tau)
                 : soft_nce_loss({f.queries, f.targets}, labels, config_.tau);
  const double value = loss.value()(0, 0);
  if (!std::isfinite(value)) {
    throw NumericalError("non-finite training loss");
  }
  tape.backward(loss);
  return value;
}

void Trainer::adam_step() {
  ++adam_t_;
  const double b1 = config_.adam_beta1, b2 = config_.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = params_.at(i);
    const double lr = p.group == ParamGroup::wcb ? config_.lr_wcb : config_.lr_other;
    auto w = p.value.data();
    const auto g = p.grad.data();
    auto m = adam_m_[i].data();
    auto v = adam_v_[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.adam_eps);
    }
  }
}

MetricsRecord Trainer::train_epoch(std::size_t epoch) {
  MetricsRecord rec;
  rec.epoch = epoch + 1;
  rec.warmup = epoch < config_.warmup_epochs;
  rec.filter_enabled = config_.enable_nfb;
  const bool filtering = config_.enable_nfb && !rec.warmup;

  const auto batches = epoch_batches(epoch);
  const EmOptions em{config_.em_max_iters, config_.em_tol};

  ViewTally tally[2];
  std::size_t sets_matched = 0, sets_unmatched = 0, sets_partial = 0;
  auto tally_filter = [&](const FilterResult& r) {
    tally[0].fits.push_back(r.fit.params);
    tally[1].fits.push_back(r.fit_wcb.params);
    auto a = view_labels(r.post, config_.theta).labels;
    auto b = view_labels(r.post_wcb, config_.theta).labels;
    tally[0].predicted_clean.insert(tally[0].predicted_clean.end(), a.begin(), a.end());
    tally[1].predicted_clean.insert(tally[1].predicted_clean.end(), b.begin(), b.end());
    sets_matched += r.sets.matched.size();
    sets_unmatched += r.sets.unmatched.size();
    sets_partial += r.sets.partial.size();
  };

  // Epoch scope: one fit over the detached losses of every pair, computed
  // with the parameters at the start of the epoch.
  std::vector<SoftLabelVector> epoch_labels;
  if (filtering && config_.filter_scope == FilterScope::epoch) {
    LossVector all, all_wcb;
    for (const auto& b : batches) {
      auto [l, lw] = pair_losses(b);
      all.insert(all.end(), l.begin(), l.end());
      all_wcb.insert(all_wcb.end(), lw.begin(), lw.end());
    }
    const FilterResult r = run_filter(all, all_wcb, config_.theta, em);
    tally_filter(r);
    for (std::size_t k = 0; k < batches.size(); ++k) {
      const auto first = r.labels.labels.begin() + static_cast<std::ptrdiff_t>(k * config_.batch_size);
      epoch_labels.push_back({{first, first + static_cast<std::ptrdiff_t>(config_.batch_size)}});
    }
  }

  double loss_sum = 0.0;
  std::size_t ones = 0, total = 0;
  std::vector<std::uint8_t> applied;
  std::vector<bool> noisy;
  for (std::size_t k = 0; k < batches.size(); ++k) {
    const auto& batch = batches[k];
    SoftLabelVector labels = SoftLabelVector::all_ones(batch.size());
    if (filtering) {
      if (config_.filter_scope == FilterScope::epoch) {
        labels = epoch_labels[k];
      } else {
        auto [l, lw] = pair_losses(batch);
        const FilterResult r = run_filter(l, lw, config_.theta, em);
        tally_filter(r);
        labels = r.labels;
      }
    }
    params_.zero_grad();
    double value = 0.0;
    try {
      value = accumulate_gradients(batch, labels);
    } catch (const NumericalError& e) {
      std::ostringstream msg;
      msg << e.what() << " at epoch " << epoch + 1 << ", batch " << k;
      for (const auto& p : params_) msg << "; |" << p.name << "|=" << norm(p.value.data());
      throw NumericalError(msg.str());
    }
    adam_step();
    loss_sum += value;
    ones += labels.ones();
    total += labels.size();
    applied.insert(applied.end(), labels.labels.begin(), labels.labels.end());
    for (std::size_t i : batch) noisy.push_back(data_.samples[i].noisy());
  }
  params_.zero_grad();

  rec.train_loss = batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size());
  rec.label1_fraction = total == 0 ? 1.0 : static_cast<double>(ones) / static_cast<double>(total);
  if (config_.enable_nfb) rec.filter = evaluate_filter(SoftLabelVector{applied}, noisy);

  if (filtering) {
    // Per-view truth follows the epoch's pair order, the same as `noisy`.
    const std::size_t views = config_.enable_wcb ? 2 : 1;
    for (std::size_t v = 0; v < views; ++v) {
      FilterReportRow row;
      row.epoch = rec.epoch;
      row.view = v == 0 ? QueryView::global : QueryView::wcb;
      row.gmm = average(tally[v].fits);
      row.matched = sets_matched;
      row.unmatched = sets_unmatched;
      row.partial = sets_partial;
      row.quality = evaluate_filter(SoftLabelVector{tally[v].predicted_clean}, noisy);
      filter_report_.push_back(row);
    }
  }

  rec.retrieval = evaluate();
  return rec;
}

std::vector<MetricsRecord> Trainer::fit() {
  std::vector<MetricsRecord> history;
  for (std::size_t e = 0; e < config_.epochs; ++e) history.push_back(train_epoch(e));
  return history;
}

Matrix Trainer::eval_embeddings(std::span<const std::size_t> samples, bool gallery) {
  std::vector<Matrix> chunks;
  for (std::size_t start = 0; start < samples.size(); start += kEvalChunk) {
    const auto part = samples.subspan(start, std::min(kEvalChunk, samples.size() - start));
    Tape tape;
    const BatchForward f = forward(tape, part);
    Matrix global = gallery ? f.targets.value() : f.queries.value();
    normalize_rows(global);
    if (config_.enable_wcb) {
      Matrix wcb = gallery ? f.targets_wcb->value() : f.queries_wcb->value();
      normalize_rows(wcb);
      global = hconcat(global, wcb);
    }
    chunks.push_back(std::move(global));
  }
  return concat_rows(chunks);
}

RetrievalMetrics Trainer::evaluate() {
  RetrievalMetrics m;
  if (eval_.empty()) return m;
  const Matrix queries = eval_embeddings(eval_, false);
  const Matrix gallery = eval_embeddings(eval_, true);
  const auto ranks = true_match_ranks(queries, gallery);
  // k is capped at the gallery size, where recall is 1 by definition.
  m.recall_1 = recall_from_ranks(ranks, 1);
  m.recall_10 = recall_from_ranks(ranks, 10);
  m.recall_50 = recall_from_ranks(ranks, 50);
  return m;
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::wcb_only: return "wcb_only";
    case Variant::nfb_only: return "nfb_only";
    case Variant::full: return "full";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  for (Variant v : kAllVariants) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown variant '" + std::string(s) + "' (baseline, wcb_only, nfb_only, full)");
}

TrainConfig with_variant(TrainConfig config, Variant v) {
  config.enable_wcb = v == Variant::wcb_only || v == Variant::full;
  config.enable_nfb = v == Variant::nfb_only || v == Variant::full;
  return config;
}

const AblationRow& AblationTable::row(Variant v) const {
  for (const auto& r : rows) {
    if (r.variant == v) return r;
  }
  throw ConfigError("ablation table has no row '" + std::string(to_string(v)) + "'");
}

AblationTable run_ablation(const Dataset& data, const TrainConfig& config) {
  AblationTable table;
  for (Variant v : kAllVariants) {
    Trainer trainer(data, with_variant(config, v));
    AblationRow row{v, {}, trainer.fit()};
    row.retrieval = row.history.empty() ? trainer.evaluate() : row.history.back().retrieval;
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace ncl
