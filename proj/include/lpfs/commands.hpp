#pragma once

// The four pipeline commands behind the command-line tool. Each takes a
// RunConfig, writes its artifacts under the output directory and returns
// what it computed.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lpfs/checkpoint.hpp"
#include "lpfs/config.hpp"
#include "lpfs/ctr_model.hpp"
#include "lpfs/data.hpp"
#include "lpfs/errors.hpp"
#include "lpfs/gates.hpp"
#include "lpfs/metrics.hpp"
#include "lpfs/report_io.hpp"
#include "lpfs/selection.hpp"

namespace lpfs {

inline constexpr const char* kOutputDirEnv = "LPFS_OUTPUT_DIR";

inline std::filesystem::path output_dir(const RunConfig& c) {
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return c.output.dir;
}

struct RunData {
  Dataset pretrain;
  Dataset select;
  Dataset eval;
  std::optional<GroundTruth> truth;  // synthetic sources only
};

inline RunData load_run_data(const RunConfig& c) {
  validate_config(c);
  RunData d;
  if (c.data.source == "synthetic") {
    const SyntheticSpec spec = synthetic_spec(c);
    d.truth = make_ground_truth(spec);
    const std::uint64_t s = c.synthetic.seed * 4;
    d.pretrain = synth_generate(spec, *d.truth, c.synthetic.n_pretrain, s + 1);
    d.select = synth_generate(spec, *d.truth, c.synthetic.n_select, s + 2);
    d.eval = synth_generate(spec, *d.truth, c.synthetic.n_eval, s + 3);
    return d;
  }
  if (c.data.source != "tsv") throw UsageError("data.source must be synthetic or tsv, got '" + c.data.source + "'");
  if (c.data.paths.empty()) throw UsageError("data.source = tsv needs data.paths");
  for (const std::string& path : c.data.paths)
    if (!std::filesystem::is_regular_file(path)) throw UsageError("data path '" + path + "' does not exist");
  const TsvFormat format = TsvFormat::criteo(c.data.hash_cardinality);
  Dataset all(format.n_categorical, format.n_numeric);
  for (std::size_t day = 0; day < c.data.paths.size(); ++day) {
    Dataset part = read_tsv_file(c.data.paths[day], format, static_cast<int>(day), c.data.max_rows_per_file);
    if (c.data.negative_keep_rate < 1.0)
      part = downsample_negatives(part, c.data.negative_keep_rate, c.data.downsample_seed + day);
    all.append(part);
  }
  const DayRange pre = parse_day_range(c.data.pretrain_days), sel = parse_day_range(c.data.select_days),
                 ev = parse_day_range(c.data.eval_days);
  if (pre.overlaps(sel) || pre.overlaps(ev) || sel.overlaps(ev)) throw UsageError("data day ranges overlap");
  DaySplits split = day_split(all, pre, sel, ev);
  d.pretrain = std::move(split.pretrain);
  d.select = std::move(split.select);
  d.eval = std::move(split.eval);
  return d;
}

inline FeatureSchema schema_for(const RunConfig& c) {
  FeatureSchema s;
  if (c.data.source == "synthetic") {
    s = make_uniform_schema(c.synthetic.n_fields, c.synthetic.cardinality, c.model.embedding_dim,
                            c.synthetic.n_continuous, c.model.cross);
  } else {
    s = make_uniform_schema(26, c.data.hash_cardinality, c.model.embedding_dim, 13, c.model.cross);
  }
  s.dense_rep_dim = c.model.dense_rep_dim;
  s.validate();
  return s;
}

inline ModelInit model_init(const RunConfig& c) {
  ModelInit init;
  init.top_hidden = c.model.top_hidden;
  init.dense_hidden = c.model.dense_hidden;
  init.adagrad.lr = c.train.adagrad_lr;
  init.seed = c.model.init_seed;
  return init;
}

inline GateTrainOptions gate_options(const RunConfig& c) {
  GateTrainOptions o;
  o.max_steps = c.selection.max_steps;
  o.batch_size = c.train.batch_size;
  o.rms_interval = c.gates.rms_interval;
  o.stability_window = c.selection.stability_window;
  o.histogram_bins = c.selection.histogram_bins;
  return o;
}

inline GateState initial_gates(const RunConfig& c, std::size_t slots) {
  GateState g = make_gate_state(c.gates.kind, slots, c.gates.epsilon_initial,
                                c.gates.kind == GateKind::kLpfsPlusPlus ? c.gates.alpha : 0.0);
  g.rms_rescale = c.gates.rms_rescale;
  return g;
}

namespace detail {

inline void require_data(const Dataset& d, const char* what) {
  if (d.empty()) throw DataError(std::string(what) + " split is empty");
}

inline void check_compatible(const ModelParams& model, const Dataset& data) {
  if (model.schema.field_count() != data.n_fields || model.schema.continuous_dim != data.continuous_dim) {
    throw DataError("checkpoint schema (" + std::to_string(model.schema.field_count()) + " fields, " +
                    std::to_string(model.schema.continuous_dim) + " continuous) does not match the data (" +
                    std::to_string(data.n_fields) + " fields, " + std::to_string(data.continuous_dim) + " continuous)");
  }
}

inline std::string csv_number(double v) { return detail::fmt(v); }

}  // namespace detail

// ---------------------------------------------------------------------------

struct PretrainResult {
  std::filesystem::path checkpoint;
  Metrics eval;
  std::vector<double> losses;
};

inline PretrainResult cmd_pretrain(const RunConfig& c, std::ostream& log = std::cout) {
  const RunData data = load_run_data(c);
  detail::require_data(data.pretrain, "pretrain");
  detail::require_data(data.eval, "eval");
  const std::filesystem::path dir = output_dir(c);
  ModelParams model = init_model(schema_for(c), model_init(c));
  PretrainResult out;
  out.losses = pretrain(model, data.pretrain, c.train.pretrain_steps, c.train.batch_size);
  out.eval = evaluate(model, nullptr, data.eval);
  out.checkpoint = dir / "pretrain.ckpt";
  save_checkpoint(out.checkpoint, Checkpoint{model, std::nullopt, c.train.pretrain_steps});

  std::string losses = "step,loss\n";
  for (std::size_t i = 0; i < out.losses.size(); ++i)
    losses += std::to_string(i) + "," + detail::csv_number(out.losses[i]) + "\n";
  atomic_write(dir / "pretrain_loss.csv", losses);
  const std::pair<std::string, Metrics> row{"pretrain_eval", out.eval};
  atomic_write(dir / "pretrain_metrics.csv", metrics_csv(std::span(&row, 1)));
  atomic_write(dir / "config.txt", render_config(c));
  if (data.truth) {
    std::ostringstream gt;
    write_ground_truth(gt, *data.truth);
    atomic_write(dir / "ground_truth.txt", gt.str());
  }
  log << "pretrain: " << c.train.pretrain_steps << " steps, eval auc " << out.eval.auc << " logloss "
      << out.eval.logloss << " accuracy " << out.eval.accuracy << "\n"
      << "checkpoint: " << out.checkpoint.string() << "\n";
  return out;
}

// ---------------------------------------------------------------------------

struct SelectResult {
  SelectionReport report;
  ModelParams selected;  // gated (or trained) model
  std::optional<GateState> gates;
  ModelParams pruned;    // absorbed / column-dropped model
  std::filesystem::path dir;
};

inline SelectResult run_selection(const RunConfig& c, const ModelParams& pretrained, const RunData& data,
                                  std::ostream& log) {
  detail::require_data(data.select, "select");
  detail::require_data(data.eval, "eval");
  detail::check_compatible(pretrained, data.select);
  SelectResult out;
  switch (c.selection.method) {
    case SelectMethod::kGate: {
      if (c.prox.lambda == 0.0 && c.selection.budget == 0)
        log << "warning: prox.lambda = 0 so no gate can reach exact zero; every slot will be kept\n";
      const GateState init = initial_gates(c, pretrained.slot_count());
      if (c.selection.budget > 0) {
        BudgetSearch search{c.selection.lambda_lo, c.selection.lambda_hi, static_cast<int>(c.selection.bisection_iters)};
        BudgetResult r = select_with_budget(pretrained, init, data.select, prox_config(c), epsilon_schedule(c),
                                            gate_options(c), c.selection.budget, search);
        for (const BudgetProbe& p : r.probes) log << "budget probe: lambda " << p.lambda << " kept " << p.kept << "\n";
        out.report = std::move(r.report);
        out.selected = std::move(r.model);
        out.gates = std::move(r.gates);
      } else {
        out.selected = pretrained;
        out.gates = init;
        out.report = run_gate_selection(out.selected, *out.gates, data.select, prox_config(c), epsilon_schedule(c),
                                        gate_options(c));
      }
      out.report.metrics_before = evaluate(out.selected, &*out.gates, data.eval);
      out.pruned = absorb_gates(out.selected, *out.gates, out.report.mask);
      out.report.metrics_after = evaluate(out.pruned, nullptr, data.eval);
      break;
    }
    case SelectMethod::kGroupLasso: {
      GroupLassoConfig g;
      g.lambda = c.selection.group_lambda;
      g.lr = c.selection.group_lr;
      g.steps = c.selection.group_steps;
      g.batch_size = c.train.batch_size;
      g.histogram_bins = c.selection.histogram_bins;
      out.selected = pretrained;
      out.report = group_lasso_select(out.selected, data.select, g);
      out.report.metrics_before = evaluate(out.selected, nullptr, data.eval);
      out.pruned = drop_slots(out.selected, out.report.mask.bits);
      out.report.metrics_after = evaluate(out.pruned, nullptr, data.eval);
      break;
    }
    case SelectMethod::kPermutation: {
      if (c.selection.budget == 0) throw UsageError("selection.method = permutation needs selection.budget > 0");
      if (c.selection.budget > pretrained.slot_count()) throw UsageError("selection.budget exceeds the slot count");
      out.selected = pretrained;
      out.report.method = "permutation";
      out.report.final_gates = permutation_ranking(pretrained, data.select, c.selection.permutation_repeats,
                                                   c.train.batch_size, c.selection.permutation_seed);
      out.report.mask = top_k_mask(out.report.final_gates, c.selection.budget, pretrained.slot_names());
      out.report.gate_histogram = make_histogram(out.report.final_gates, c.selection.histogram_bins, 0.0);
      out.report.metrics_before = evaluate(out.selected, nullptr, data.eval);
      out.pruned = drop_slots(out.selected, out.report.mask.bits);
      out.report.metrics_after = evaluate(out.pruned, nullptr, data.eval);
      break;
    }
  }
  out.report.config_snapshot = render_config(c);
  return out;
}

inline SelectResult cmd_select(const RunConfig& c, const std::filesystem::path& checkpoint,
                               std::ostream& log = std::cout) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  if (ckpt.gates) throw DataError("checkpoint '" + checkpoint.string() + "' already carries gates; select needs a pretrained model");
  const RunData data = load_run_data(c);
  SelectResult out = run_selection(c, ckpt.model, data, log);
  out.dir = output_dir(c);
  write_report(out.dir, out.report);
  const std::int64_t step = ckpt.global_step + out.report.steps_run;
  save_checkpoint(out.dir / "selected.ckpt", Checkpoint{out.selected, out.gates, step});
  save_checkpoint(out.dir / "pruned.ckpt", Checkpoint{out.pruned, std::nullopt, step});
  const SelectionReport& r = out.report;
  log << r.method << ": kept " << r.mask.kept() << " of " << r.mask.size() << " slots, mask " << r.mask.to_string()
      << "\n";
  if (c.selection.method == SelectMethod::kGate)
    log << "steps " << r.steps_run << (r.converged ? ", converged at " + std::to_string(r.converged_step) : ", not converged")
        << "\n";
  log << "eval auc before " << r.metrics_before->auc << " after " << r.metrics_after->auc << "\n";
  return out;
}

// ---------------------------------------------------------------------------

inline Metrics cmd_evaluate(const RunConfig& c, const std::filesystem::path& checkpoint,
                            std::ostream& log = std::cout) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const RunData data = load_run_data(c);
  detail::require_data(data.eval, "eval");
  detail::check_compatible(ckpt.model, data.eval);
  const GateState* gates = ckpt.gates ? &*ckpt.gates : nullptr;
  const Metrics m = evaluate(ckpt.model, gates, data.eval);
  const std::pair<std::string, Metrics> row{"eval", m};
  atomic_write(output_dir(c) / (checkpoint.stem().string() + "_eval.csv"), metrics_csv(std::span(&row, 1)));
  log << "auc " << m.auc << "\nlogloss " << m.logloss << "\naccuracy " << m.accuracy << "\n";
  return m;
}

// ---------------------------------------------------------------------------

struct SweepRow {
  double alpha = 0.0;
  double lambda = 0.0;
  std::size_t kept = 0;
  double eval_auc = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  bool kept_nonincreasing_in_lambda = true;
};

// True when, for every alpha, kept-count never rises as lambda grows.
inline bool kept_nonincreasing_in_lambda(std::vector<SweepRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return a.alpha != b.alpha ? a.alpha < b.alpha : a.lambda < b.lambda;
  });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].alpha == rows[i - 1].alpha && rows[i].lambda > rows[i - 1].lambda && rows[i].kept > rows[i - 1].kept)
      return false;
  }
  return true;
}

inline std::string sweep_csv(const SweepResult& r) {
  std::string s = "alpha,lambda,kept,eval_auc\n";
  for (const SweepRow& row : r.rows) {
    s += detail::csv_number(row.alpha) + "," + detail::csv_number(row.lambda) + "," + std::to_string(row.kept) + "," +
         detail::csv_number(row.eval_auc) + "\n";
  }
  s += std::string("# kept_nonincreasing_in_lambda=") + (r.kept_nonincreasing_in_lambda ? "true" : "false") + "\n";
  return s;
}

inline SweepResult cmd_sweep(const RunConfig& c, const std::filesystem::path& checkpoint,
                             std::ostream& log = std::cout) {
  if (c.sweep.lambdas.empty() || c.sweep.alphas.empty()) throw UsageError("sweep grid is empty");
  if (c.selection.method != SelectMethod::kGate) throw UsageError("sweep runs gate selection only");
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  if (ckpt.gates) throw DataError("sweep needs a pretrained checkpoint without gates");
  const RunData data = load_run_data(c);
  const std::filesystem::path dir = output_dir(c);
  SweepResult out;
  for (double alpha : c.sweep.alphas) {
    for (double lambda : c.sweep.lambdas) {
      RunConfig point = c;
      point.gates.alpha = alpha;
      point.prox.lambda = lambda;
      point.selection.budget = 0;
      const SelectResult r = run_selection(point, ckpt.model, data, log);
      const SweepRow row{alpha, lambda, r.report.mask.kept(), r.report.metrics_before->auc};
      out.rows.push_back(row);
      write_report(dir / "sweep" / ("alpha_" + detail::csv_number(alpha) + "_lambda_" + detail::csv_number(lambda)),
                   r.report);
      log << "alpha " << alpha << " lambda " << lambda << ": kept " << row.kept << ", eval auc " << row.eval_auc << "\n";
    }
  }
  out.kept_nonincreasing_in_lambda = kept_nonincreasing_in_lambda(out.rows);
  atomic_write(dir / "sweep.csv", sweep_csv(out));
  log << "kept-count nonincreasing in lambda: " << (out.kept_nonincreasing_in_lambda ? "yes" : "NO") << "\n";
  return out;
}

}  // namespace lpfs
