#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ncl/eval.hpp"
#include "ncl/fusion_loss.hpp"
#include "ncl/nfb.hpp"
#include "ncl/param_store.hpp"
#include "ncl/synth.hpp"
#include "ncl/wcb.hpp"

namespace ncl {

/// Where the mixture is fitted: on each batch's losses, or once per epoch on
/// the losses of every training pair (then applied batch by batch).
enum class FilterScope { batch, epoch };

std::string_view to_string(FilterScope s);
FilterScope parse_filter_scope(std::string_view s);

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  double lr_wcb = 1e-3;
  double lr_other = 1e-3;
  double tau = kDefaultTemperature;
  double theta = kDefaultThreshold;
  FilterScope filter_scope = FilterScope::epoch;
  std::size_t warmup_epochs = 3;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t em_max_iters = 100;
  double em_tol = 1e-6;
  bool enable_wcb = true;
  bool enable_nfb = true;

  /// Throws ConfigError.
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct RetrievalMetrics {
  double recall_1 = 0.0;
  double recall_10 = 0.0;
  double recall_50 = 0.0;
  double average() const { return (recall_1 + recall_10 + recall_50) / 3.0; }
  friend bool operator==(const RetrievalMetrics&, const RetrievalMetrics&) = default;
};

struct MetricsRecord {
  std::size_t epoch = 0;  // 1-based count of completed epochs
  double train_loss = 0.0;
  double label1_fraction = 1.0;
  RetrievalMetrics retrieval;
  bool warmup = false;
  bool filter_enabled = false;
  std::optional<FilterQuality> filter;  // only with the filter enabled and truth known
};

/// One line of the per-epoch filter report.
struct FilterReportRow {
  std::size_t epoch = 0;
  QueryView view = QueryView::global;
  GmmParams gmm;  // averaged over fits when the scope is per batch
  std::size_t matched = 0;
  std::size_t unmatched = 0;
  std::size_t partial = 0;
  std::optional<FilterQuality> quality;
};

/// All four MLPs with deterministic initialization: WCB text/image MLPs
/// (d→d→d, group wcb) and the global/wcb fusion MLPs (2d→d→d, group other).
ParamStore init_model(std::size_t dim, std::uint64_t seed);

struct BatchForward {
  Var queries;
  Var targets;
  std::optional<Var> queries_wcb;
  std::optional<Var> targets_wcb;
};

class Trainer {
 public:
  Trainer(const Dataset& data, TrainConfig config);
  Trainer(const Dataset& data, TrainConfig config, ParamStore params);

  /// Runs one epoch (0-based index) and returns its metrics.
  MetricsRecord train_epoch(std::size_t epoch);
  /// Runs config.epochs epochs from the start.
  std::vector<MetricsRecord> fit();

  RetrievalMetrics evaluate();

  /// Records both views for the given samples.
  BatchForward forward(Tape& tape, std::span<const std::size_t> samples);
  /// Detached per-pair losses (global, wcb). Without WCB the second equals the first.
  std::pair<LossVector, LossVector> pair_losses(std::span<const std::size_t> samples);
  /// Backward pass of the objective for one batch; gradients land in params().
  double accumulate_gradients(std::span<const std::size_t> samples, const SoftLabelVector& labels);

  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }
  const TrainConfig& config() const { return config_; }
  const std::vector<FilterReportRow>& filter_report() const { return filter_report_; }
  /// Training-pair order for an epoch, complete batches only.
  std::vector<std::vector<std::size_t>> epoch_batches(std::size_t epoch) const;

 private:
  void adam_step();
  Matrix eval_embeddings(std::span<const std::size_t> samples, bool gallery);

  const Dataset& data_;
  TrainConfig config_;
  ParamStore params_;
  std::vector<Matrix> adam_m_;
  std::vector<Matrix> adam_v_;
  std::size_t adam_t_ = 0;
  std::vector<std::size_t> train_;
  std::vector<std::size_t> eval_;
  std::vector<FilterReportRow> filter_report_;
};

enum class Variant { baseline, wcb_only, nfb_only, full };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);
TrainConfig with_variant(TrainConfig config, Variant v);
inline constexpr Variant kAllVariants[] = {Variant::baseline, Variant::wcb_only, Variant::nfb_only, Variant::full};

struct AblationRow {
  Variant variant;
  RetrievalMetrics retrieval;
  std::vector<MetricsRecord> history;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  const AblationRow& row(Variant v) const;
};

/// Trains the four variants with identical seeds and epochs.
AblationTable run_ablation(const Dataset& data, const TrainConfig& config);

}  // namespace ncl
