#include "ncl/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ncl/container.hpp"
#include "ncl/errors.hpp"
#include "ncl/gradcheck_suite.hpp"
#include "ncl/io.hpp"
#include "ncl/tape.hpp"
#include "ncl/trainer.hpp"

namespace ncl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::string dataset;
  std::string out;
  std::string variant;
  std::optional<std::uint64_t> seed;
  // gradcheck only
  std::string fault_op;
  double step = GradCheckOptions{}.step;
  double tol = GradCheckOptions{}.tol;
};

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

RunConfig resolve_config(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) c.set_seed(*o.seed);
  if (!o.variant.empty()) c.train = with_variant(c.train, parse_variant(o.variant));
  if (!o.dataset.empty()) c.dataset_path = o.dataset;
  if (!o.out.empty()) c.out_dir = o.out;
  return c;
}

void require(const std::string& value, const char* what) {
  if (value.empty()) throw ConfigError(std::string("missing ") + what);
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create run directory " + dir.string());
}

json metrics_json(const MetricsRecord& r) {
  json j = {{"epoch", r.epoch},
            {"train_loss", r.train_loss},
            {"label1_fraction", r.label1_fraction},
            {"recall_1", r.retrieval.recall_1},
            {"recall_10", r.retrieval.recall_10},
            {"recall_50", r.retrieval.recall_50},
            {"warmup", r.warmup},
            {"filter_enabled", r.filter_enabled}};
  if (!r.filter_enabled) {
    j["note"] = "filter disabled";
  } else if (r.filter) {
    j["filter"] = {{"precision", r.filter->precision},
                   {"recall", r.filter->recall},
                   {"f1", r.filter->f1},
                   {"true_positive", r.filter->true_positive},
                   {"false_positive", r.filter->false_positive},
                   {"false_negative", r.filter->false_negative}};
  }
  return j;
}

constexpr char kSummaryHeader[] = "epoch,train_loss,label1_fraction,R@1,R@10,R@50,Avg,precision,recall,F1\n";

std::string summary_row(const MetricsRecord& r) {
  std::string s = std::to_string(r.epoch) + "," + fixed(r.train_loss) + "," + fixed(r.label1_fraction) + "," +
                  fixed(r.retrieval.recall_1) + "," + fixed(r.retrieval.recall_10) + "," +
                  fixed(r.retrieval.recall_50) + "," + fixed(r.retrieval.average()) + ",";
  if (r.filter) {
    s += fixed(r.filter->precision) + "," + fixed(r.filter->recall) + "," + fixed(r.filter->f1);
  } else {
    s += ",,";
  }
  return s + "\n";
}

std::string final_row(const RetrievalMetrics& m) {
  return "final,,," + fixed(m.recall_1) + "," + fixed(m.recall_10) + "," + fixed(m.recall_50) + "," +
         fixed(m.average()) + ",,,\n";
}

std::string filter_report_csv(const std::vector<FilterReportRow>& rows) {
  std::string s = "epoch,view,mu0,mu1,sigma0,sigma1,pi0,matched,unmatched,partial,precision,recall,F1\n";
  for (const auto& r : rows) {
    s += std::to_string(r.epoch) + "," + std::string(to_string(r.view)) + "," + fixed(r.gmm.mean[0]) + "," +
         fixed(r.gmm.mean[1]) + "," + fixed(std::sqrt(r.gmm.variance[0])) + "," +
         fixed(std::sqrt(r.gmm.variance[1])) + "," + fixed(r.gmm.weight[0]) + "," + std::to_string(r.matched) +
         "," + std::to_string(r.unmatched) + "," + std::to_string(r.partial) + ",";
    if (r.quality) {
      s += fixed(r.quality->precision) + "," + fixed(r.quality->recall) + "," + fixed(r.quality->f1);
    } else {
      s += ",,";
    }
    s += "\n";
  }
  return s;
}

void print_histogram(std::ostream& out, const Dataset& data, Split split) {
  const TruthHistogram h = truth_histogram(data, split);
  const double n = static_cast<double>(std::max<std::size_t>(h.total(), 1));
  out << "  " << to_string(split) << ": " << h.total() << " triplets, clean " << h.clean << " ("
      << fixed(h.clean / n) << "), mismatched " << h.mismatched << " (" << fixed(h.mismatched / n) << "), partial "
      << h.partial << " (" << fixed(h.partial / n) << ")\n";
}

int cmd_generate(const Options& o, std::ostream& out) {
  RunConfig c = resolve_config(o);
  // --out names the dataset file here, not a run directory.
  if (!o.out.empty()) c.dataset_path = o.out;
  require(c.dataset_path, "output path (--out)");
  const Dataset data = generate_dataset(c.dataset);
  write_dataset(data, c.dataset_path);
  const DatasetSpec& s = data.spec;
  out << "wrote " << c.dataset_path << "\n"
      << "  N=" << s.triplets << " d=" << s.dim << " n=" << s.text_tokens << " m=" << s.image_patches
      << " C=" << s.num_concepts << " seed=" << s.seed << "\n"
      << "  mismatch_rate=" << s.mismatch_rate << " partial_rate=" << s.partial_rate
      << " distractor_fraction=" << s.distractor_fraction << " noise_scale=" << s.noise_scale << "\n";
  print_histogram(out, data, Split::train);
  print_histogram(out, data, Split::eval);
  return kExitOk;
}

struct TrainArtifacts {
  std::string epochs_jsonl;
  std::string summary = kSummaryHeader;
  std::string log;
};

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig c = resolve_config(o);
  require(c.dataset_path, "dataset path (--dataset)");
  require(c.out_dir, "run directory (--out)");
  const Dataset data = read_dataset(c.dataset_path);
  const fs::path dir = c.out_dir;
  make_dir(dir);

  TrainArtifacts a;
  a.log += "dataset " + c.dataset_path + " (N=" + std::to_string(data.samples.size()) + ")\n";
  a.log += "config " + to_json(c.train).dump() + "\n";
  if (!c.train.enable_nfb) a.log += "filter disabled\n";

  Trainer trainer(data, c.train);
  std::size_t done = 0;
  try {
    for (std::size_t e = 0; e < c.train.epochs; ++e) {
      const MetricsRecord r = trainer.train_epoch(e);
      done = r.epoch;
      a.epochs_jsonl += metrics_json(r).dump() + "\n";
      a.summary += summary_row(r);
      std::string line = "epoch " + std::to_string(r.epoch) + " loss " + fixed(r.train_loss) + " R@10 " +
                         fixed(r.retrieval.recall_10);
      if (r.filter) line += " F1 " + fixed(r.filter->f1);
      if (r.warmup && c.train.enable_nfb) line += " (warm-up)";
      a.log += line + "\n";
      out << line << "\n";
      write_text_atomic(dir / "epochs.jsonl", a.epochs_jsonl);
    }
  } catch (const NumericalError& e) {
    json diag = {{"error", e.what()}, {"completed_epochs", done}, {"config", to_json(c)}};
    json norms = json::object();
    for (const auto& p : trainer.params()) norms[p.name] = norm(p.value.data());
    diag["param_norms"] = norms;
    write_text_atomic(dir / "diagnostics.json", diag.dump(2) + "\n");
    write_text_atomic(dir / "epochs.jsonl", a.epochs_jsonl);
    write_text_atomic(dir / "run.log", a.log + "numerical failure: " + e.what() + "\n");
    throw;
  }

  const RetrievalMetrics final_metrics = trainer.evaluate();
  a.summary += final_row(final_metrics);
  write_text_atomic(dir / "epochs.jsonl", a.epochs_jsonl);
  write_text_atomic(dir / "summary.csv", a.summary);
  if (c.train.enable_nfb) write_text_atomic(dir / "filter_report.csv", filter_report_csv(trainer.filter_report()));
  save_weights(trainer.params(), dir / "weights.nclw");
  a.log += "final R@1 " + fixed(final_metrics.recall_1) + " R@10 " + fixed(final_metrics.recall_10) + " R@50 " +
           fixed(final_metrics.recall_50) + "\n";
  write_text_atomic(dir / "run.log", a.log);
  out << "final R@1 " << fixed(final_metrics.recall_1) << " R@10 " << fixed(final_metrics.recall_10) << " R@50 "
      << fixed(final_metrics.recall_50) << "\n";
  return kExitOk;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  if (!o.variant.empty()) throw ConfigError("--variant does not apply to ablate");
  const RunConfig c = resolve_config(o);
  require(c.dataset_path, "dataset path (--dataset)");
  require(c.out_dir, "run directory (--out)");
  const Dataset data = read_dataset(c.dataset_path);
  const fs::path dir = c.out_dir;
  make_dir(dir);

  const AblationTable table = run_ablation(data, c.train);
  std::string csv = "variant,R@1,R@10,R@50,Avg\n";
  for (const auto& row : table.rows) {
    const auto& m = row.retrieval;
    csv += std::string(to_string(row.variant)) + "," + fixed(m.recall_1) + "," + fixed(m.recall_10) + "," +
           fixed(m.recall_50) + "," + fixed(m.average()) + "\n";
  }
  write_text_atomic(dir / "ablation.csv", csv);
  out << csv;
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  if (!(o.step > 0.0) || !(o.tol > 0.0)) throw ConfigError("--step and --tol must be positive");
  GradCheckOptions opts;
  opts.step = o.step;
  opts.tol = o.tol;
  const std::uint64_t seed = o.seed.value_or(0);

  struct FaultGuard {
    ~FaultGuard() { fault::clear(); }
  } guard;
  if (!o.fault_op.empty()) fault::corrupt_backward(o.fault_op);

  const GradCheckReport r = check_pipeline(seed, 4, 8, opts);
  out << "full pipeline, B=4 d=8 seed=" << seed << ": " << r.entries_checked << " entries, step " << opts.step
      << ", tol " << opts.tol << "\n";
  out << "max relative error " << sci(r.max_rel_error) << "\n";
  out << "worst relative error [wcb] " << sci(r.worst_rel_error(ParamGroup::wcb)) << "\n";
  out << "worst relative error [other] " << sci(r.worst_rel_error(ParamGroup::other)) << "\n";
  if (const ParamCheck* w = r.worst_param()) out << "worst parameter " << w->name << "\n";

  const auto ops = check_ops(seed, opts);
  const OpCheck* bad = first_failure(ops);
  if (bad) {
    out << "offending op: " << bad->op << " (relative error " << sci(bad->report.max_rel_error) << ")\n";
  } else {
    out << "per-op checks: all " << ops.size() << " pass\n";
  }
  const bool pass = r.pass && !bad;
  out << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? kExitOk : kExitNumerical;
}

int cmd_report(const Options& o, std::ostream& out) {
  const RunConfig c = resolve_config(o);
  require(c.out_dir, "run directory (--out)");
  const fs::path dir = c.out_dir;
  bool any = false;
  for (const char* name : {"summary.csv", "filter_report.csv", "ablation.csv"}) {
    const fs::path p = dir / name;
    if (!fs::exists(p)) continue;
    const auto bytes = read_file(p);
    out << "== " << name << "\n" << std::string(bytes.begin(), bytes.end());
    any = true;
  }
  if (!any) throw IoError("no reports found in " + dir.string());
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Noisy-correspondence filtering toolkit for composed image retrieval"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool needs_dataset) {
    sub->add_option("--config", o.config, "JSON run config");
    sub->add_option("--seed", o.seed, "overrides the config seed");
    if (needs_dataset) sub->add_option("--dataset", o.dataset, "dataset file");
  };
  CLI::App* gen = app.add_subcommand("generate", "generate a synthetic dataset");
  common(gen, false);
  gen->add_option("--out", o.out, "dataset file to write");
  CLI::App* train = app.add_subcommand("train", "train one variant and write run artifacts");
  common(train, true);
  train->add_option("--out", o.out, "run directory");
  train->add_option("--variant", o.variant, "baseline, wcb_only, nfb_only or full");
  CLI::App* ablate = app.add_subcommand("ablate", "train all four variants and write the ablation table");
  common(ablate, true);
  ablate->add_option("--out", o.out, "run directory");
  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference check of the training objective");
  grad->add_option("--seed", o.seed, "initialisation seed");
  grad->add_option("--step", o.step, "central-difference step");
  grad->add_option("--tol", o.tol, "relative error tolerance");
  grad->add_option("--inject-fault", o.fault_op, "test hook: corrupt the backward rule of this op");
  CLI::App* report = app.add_subcommand("report", "print the reports of a run directory");
  report->add_option("--config", o.config, "JSON run config");
  report->add_option("--out", o.out, "run directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_generate(o, out);
    if (train->parsed()) return cmd_train(o, out);
    if (ablate->parsed()) return cmd_ablate(o, out);
    if (grad->parsed()) return cmd_gradcheck(o, out);
    return cmd_report(o, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const DataError& e) {
    err << "invalid data: " << e.what() << "\n";
    return kExitData;
  } catch (const DegenerateInputError& e) {
    err << "invalid data: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace ncl
