#pragma once

// Selection pipelines: pretraining, gate training with proximal updates,
// threshold-free mask extraction, lossless gate absorption, the group-LASSO
// and permutation-importance baselines, and the resurrection diagnostic.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lpfs/ctr_model.hpp"
#include "lpfs/data.hpp"
#include "lpfs/errors.hpp"
#include "lpfs/gates.hpp"
#include "lpfs/metrics.hpp"
#include "lpfs/prox_optim.hpp"

namespace lpfs {

struct FeatureMask {
  std::vector<std::uint8_t> bits;  // 1 = kept
  std::vector<std::string> slot_names;

  std::size_t size() const noexcept { return bits.size(); }
  std::size_t kept() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }

  // One '0'/'1' character per slot, in slot order (dense first).
  std::string to_string() const {
    std::string s;
    s.reserve(bits.size());
    for (auto b : bits) s.push_back(b ? '1' : '0');
    return s;
  }

  static FeatureMask from_string(std::string_view text, std::vector<std::string> names = {}) {
    FeatureMask m;
    for (char c : text) {
      if (c != '0' && c != '1') throw DataError("mask string may only contain '0' and '1'");
      m.bits.push_back(c == '1' ? 1 : 0);
    }
    if (!names.empty() && names.size() != m.bits.size())
      throw DataError("mask length does not match slot count");
    m.slot_names = std::move(names);
    return m;
  }
};

struct TrajectoryPoint {
  std::int64_t step = 0;
  std::size_t zero_count = 0;
};

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

struct SelectionReport {
  std::string method;
  FeatureMask mask;
  std::vector<double> final_gates;  // normalized gates, or group norms for group LASSO
  std::vector<TrajectoryPoint> zero_count_trajectory;
  std::vector<HistogramBin> gate_histogram;
  std::optional<Metrics> metrics_before;
  std::optional<Metrics> metrics_after;
  std::string config_snapshot;

  double lambda = 0.0;
  double final_epsilon = 0.0;
  std::int64_t steps_run = 0;
  bool converged = false;
  std::int64_t converged_step = -1;
  std::size_t revival_events = 0;  // steps where the zero-gate count went down
  std::vector<double> loss_trajectory;  // mean batch loss per log interval
};

// Equal-width bins over [0, max(upper, max value)]; the last bin is closed.
inline std::vector<HistogramBin> make_histogram(std::span<const double> values, std::size_t bins, double upper) {
  if (bins == 0) throw ContractViolation("histogram needs at least one bin");
  double hi = upper;
  for (double v : values) hi = std::max(hi, std::fabs(v));
  std::vector<HistogramBin> out(bins);
  const double width = hi / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lo = width * static_cast<double>(b);
    out[b].hi = b + 1 == bins ? hi : width * static_cast<double>(b + 1);
  }
  for (double v : values) {
    auto b = static_cast<std::size_t>(std::fabs(v) / width);
    out[std::min(b, bins - 1)].count++;
  }
  return out;
}

// bit k = 0 iff normalized gate k is exactly zero.
inline FeatureMask extract_mask(const GateState& gates, std::vector<std::string> names = {}) {
  FeatureMask mask;
  mask.bits.resize(gates.size());
  for (std::size_t k = 0; k < gates.size(); ++k) mask.bits[k] = normalized_gate(gates, k) == 0.0 ? 0 : 1;
  if (names.empty()) {
    for (std::size_t k = 0; k < gates.size(); ++k) names.push_back("slot_" + std::to_string(k));
  }
  if (names.size() != gates.size()) throw ContractViolation("slot name count does not match gate count");
  mask.slot_names = std::move(names);
  return mask;
}

// ---------------------------------------------------------------------------
// Pretraining

// Adagrad training of an ungated model over `data` in order. Returns the
// per-step batch loss.
inline std::vector<double> pretrain(ModelParams& model, const Dataset& data, std::int64_t steps,
                                    std::size_t batch_size = 512) {
  if (data.empty()) throw DataError("pretrain: empty training data");
  std::vector<double> losses;
  if (steps <= 0) return losses;
  losses.reserve(static_cast<std::size_t>(steps));
  BatchCursor cursor(data, batch_size);
  TrainWorkspace ws;
  for (std::int64_t t = 0; t < steps; ++t) {
    const LossAndGrads& lg = loss_and_grads(model, nullptr, cursor.next(), ws);
    if (!std::isfinite(lg.loss))
      throw NumericalError("pretrain: non-finite loss at step " + std::to_string(t));
    apply_adagrad(model, lg.grads);
    losses.push_back(lg.loss);
  }
  return losses;
}

// ---------------------------------------------------------------------------
// Gate training

struct GateTrainOptions {
  std::int64_t max_steps = 300000;
  std::size_t batch_size = 512;
  std::int64_t start_step = 0;         // global step of the first update
  std::int64_t log_interval = 100;
  std::int64_t rms_interval = 100;
  std::int64_t stability_window = 2000;
  bool stop_when_converged = true;
  std::size_t histogram_bins = 20;
  double histogram_max = 2.0;
};

struct GateStepResult {
  double loss = 0.0;
  std::vector<double> grad_x;
  std::vector<double> grad_gate;
};

// One joint update: Adagrad on the model, momentum + l1 prox on the gate
// parameters, then the epsilon schedule and the periodic RMS refresh.
// `global_step` is the index of this update.
inline GateStepResult gate_train_step(ModelParams& model, GateState& gates, const Minibatch& batch,
                                      const ProxConfig& prox, const EpsilonSchedule& eps,
                                      std::int64_t global_step, std::int64_t rms_interval,
                                      TrainWorkspace& ws) {
  const LossAndGrads& lg = loss_and_grads(model, &gates, batch, ws);
  if (!std::isfinite(lg.loss)) {
    std::ostringstream msg;
    msg << "gate training diverged: non-finite loss at step " << global_step << " (epsilon=" << gates.epsilon
        << ", lr=" << lr_at(prox, global_step) << ")";
    throw NumericalError(msg.str());
  }
  apply_adagrad(model, lg.grads);
  const double lr = lr_at(prox, global_step);
  MomentumStep ms = momentum_loss_step(gates.x, lg.grad_x, gates.velocity, lr, prox.momentum);
  gates.x = prox_l1(ms.x_tilde, prox_threshold(prox.lambda, lr));
  gates.velocity = std::move(ms.velocity);

  const std::int64_t done = global_step + 1;
  gates.epsilon = epsilon_step(eps, done, gates.epsilon);
  if (gates.rms_rescale && !gates.rms_frozen && rms_interval > 0 && done % rms_interval == 0) {
    gates.rms_value = gate_rms(gates);
    if (epsilon_at_floor(eps, gates.epsilon)) gates.rms_frozen = true;
  }
  return GateStepResult{lg.loss, lg.grad_x, lg.grad_gate};
}

// Trains gates and model jointly on `data` (in order, wrapping) until the run
// converges or max_steps is reached. Converged means epsilon sits at its floor
// and the zero-gate count has not changed for stability_window steps.
inline SelectionReport run_gate_selection(ModelParams& model, GateState& gates, const Dataset& data,
                                          const ProxConfig& prox, const EpsilonSchedule& eps,
                                          const GateTrainOptions& opts = {}) {
  if (data.empty()) throw DataError("gate selection: selection data is empty");
  prox.validate();
  eps.validate();
  gates.validate();
  if (gates.size() != model.slot_count()) throw ContractViolation("gate count does not match model slots");

  SelectionReport report;
  report.method = std::string(to_string(gates.kind));
  report.lambda = prox.lambda;
  BatchCursor cursor(data, opts.batch_size);

  std::size_t zeros = zero_gate_count(gates);
  std::int64_t last_change = opts.start_step;
  report.zero_count_trajectory.push_back({opts.start_step, zeros});
  double loss_sum = 0.0;
  std::int64_t loss_n = 0;

  std::int64_t step = opts.start_step;
  TrainWorkspace ws;
  for (std::int64_t t = 0; t < opts.max_steps; ++t) {
    const GateStepResult r = gate_train_step(model, gates, cursor.next(), prox, eps, step, opts.rms_interval, ws);
    ++step;
    loss_sum += r.loss;
    ++loss_n;

    const std::size_t now = zero_gate_count(gates);
    if (now != zeros) {
      if (now < zeros) ++report.revival_events;
      zeros = now;
      last_change = step;
    }
    if (opts.log_interval > 0 && step % opts.log_interval == 0) {
      report.zero_count_trajectory.push_back({step, zeros});
      report.loss_trajectory.push_back(loss_sum / static_cast<double>(loss_n));
      loss_sum = 0.0;
      loss_n = 0;
    }
    if (!report.converged && epsilon_at_floor(eps, gates.epsilon) && step - last_change >= opts.stability_window) {
      report.converged = true;
      report.converged_step = step;
      if (opts.stop_when_converged) break;
    }
  }
  if (report.zero_count_trajectory.back().step != step) report.zero_count_trajectory.push_back({step, zeros});

  report.steps_run = step - opts.start_step;
  report.final_epsilon = gates.epsilon;
  report.mask = extract_mask(gates, model.slot_names());
  report.final_gates = normalized_gates(gates);
  report.gate_histogram = make_histogram(report.final_gates, opts.histogram_bins, opts.histogram_max);
  return report;
}

// Count-decrease events in a logged trajectory.
inline std::size_t count_decreases(std::span<const TrajectoryPoint> trajectory) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < trajectory.size(); ++i) {
    if (trajectory[i].zero_count < trajectory[i - 1].zero_count) ++n;
  }
  return n;
}

// ---------------------------------------------------------------------------
// Structural pruning and absorption

// Removes slots with keep[k] == 0: drops their top-MLP first-layer columns,
// and any embedding table or dense MLP no surviving slot reads.
inline ModelParams drop_slots(const ModelParams& model, std::span<const std::uint8_t> keep) {
  if (keep.size() != model.slot_count()) throw ContractViolation("keep mask length does not match slot count");
  ModelParams out = model;
  out.slots.clear();
  std::vector<std::pair<Eigen::Index, Eigen::Index>> kept_cols;  // {offset, width}
  Eigen::Index offset = 0;
  for (std::size_t k = 0; k < model.slot_count(); ++k) {
    const auto w = static_cast<Eigen::Index>(model.schema.slot_width(model.slots[k]));
    if (keep[k]) {
      out.slots.push_back(model.slots[k]);
      kept_cols.emplace_back(offset, w);
    }
    offset += w;
  }
  Eigen::Index new_in = 0;
  for (const auto& kc : kept_cols) new_in += kc.second;

  auto select_cols = [&](const Matrix& src) {
    Matrix dst(src.rows(), new_in);
    Eigen::Index at = 0;
    for (const auto& [off, w] : kept_cols) {
      dst.middleCols(at, w) = src.middleCols(off, w);
      at += w;
    }
    return dst;
  };
  out.top_mlp.layers[0].weight = select_cols(model.top_mlp.layers[0].weight);
  out.adagrad.top[0].weight = select_cols(model.adagrad.top[0].weight);

  const detail::SlotUsage use = detail::slot_usage(out);
  for (std::size_t f = 0; f < out.tables.size(); ++f) {
    if (!use.field[f]) {
      out.tables[f].resize(out.tables[f].rows(), 0);
      out.adagrad.tables[f].resize(out.adagrad.tables[f].rows(), 0);
    }
  }
  if (!use.dense) {
    out.dense_mlp.layers.clear();
    out.adagrad.dense.clear();
  }
  return out;
}

// Folds the surviving gates into the model and removes zero-gate slots. The
// result has no gate structure and reproduces the gated logits:
//  - a kept categorical slot's table is scaled by its gate times the active
//    RMS rescale; negative gates flip the sign of the stored embeddings,
//  - a kept dense slot scales the dense MLP output layer,
//  - a kept cross slot rescales its first-layer columns so the product
//    of the (possibly scaled) base values is corrected back to its gate.
inline ModelParams absorb_gates(const ModelParams& model, const GateState& gates, const FeatureMask& mask) {
  if (gates.size() != model.slot_count() || mask.size() != model.slot_count())
    throw ContractViolation("absorb_gates: gate/mask/slot counts differ");
  for (std::size_t k = 0; k < gates.size(); ++k) {
    if ((normalized_gate(gates, k) != 0.0) != (mask.bits[k] != 0))
      throw ContractViolation("absorb_gates: mask is inconsistent with gates at slot " + std::to_string(k));
  }
  const FeatureSchema& schema = model.schema;
  const SignSplit split = sign_split(gates);
  const double cat_scale = categorical_scale(gates);
  ModelParams out = model;

  // Factor by which each base value is scaled in the absorbed model.
  std::vector<double> base_factor(schema.base_slot_count(), 1.0);
  for (std::size_t k = 0; k < model.slot_count(); ++k) {
    const SlotRef& slot = model.slots[k];
    if (!mask.bits[k] || slot.kind == SlotKind::kCross) continue;
    const double magnitude = split.magnitudes[k];
    const double sign = split.signs[k];
    if (slot.kind == SlotKind::kCategorical) {
      // e' = sign(g) e, then scale by |g| and the RMS divisor
      Matrix& table = out.tables[slot.first];
      table = (magnitude * cat_scale) * (sign * table);
      base_factor[slot.first + (schema.has_dense() ? 1 : 0)] = sign * magnitude * cat_scale;
    } else {
      Linear& last = out.dense_mlp.layers.back();
      last.weight = magnitude * (sign * last.weight);
      last.bias = magnitude * (sign * last.bias);
      base_factor[0] = sign * magnitude;
    }
  }
  Eigen::Index offset = 0;
  Matrix& w1 = out.top_mlp.layers[0].weight;
  for (std::size_t k = 0; k < model.slot_count(); ++k) {
    const SlotRef& slot = model.slots[k];
    const auto w = static_cast<Eigen::Index>(schema.slot_width(slot));
    if (mask.bits[k] && slot.kind == SlotKind::kCross) {
      const double g = split.magnitudes[k] * split.signs[k];
      const double correction = g / (base_factor[slot.first] * base_factor[slot.second]);
      w1.middleCols(offset, w) *= correction;
    }
    offset += w;
  }
  return drop_slots(out, mask.bits);
}

// ---------------------------------------------------------------------------
// Group LASSO baseline

struct GroupLassoConfig {
  double lambda = 0.01;
  double lr = 0.01;
  std::int64_t steps = 10000;
  std::size_t batch_size = 512;
  std::int64_t log_interval = 100;
  std::size_t histogram_bins = 20;
};

// Per-slot column-group norms of the top MLP's first layer.
inline std::vector<double> first_layer_group_norms(const ModelParams& model) {
  std::vector<double> norms;
  const Matrix& w1 = model.top_mlp.layers[0].weight;
  Eigen::Index offset = 0;
  for (const SlotRef& slot : model.slots) {
    const auto w = static_cast<Eigen::Index>(model.schema.slot_width(slot));
    norms.push_back(w1.middleCols(offset, w).norm());
    offset += w;
  }
  return norms;
}

// Applies the group prox to each slot's column block of the first layer.
inline void group_prox_first_layer(ModelParams& model, double threshold) {
  Matrix& w1 = model.top_mlp.layers[0].weight;
  Eigen::Index offset = 0;
  for (const SlotRef& slot : model.slots) {
    const auto w = static_cast<Eigen::Index>(model.schema.slot_width(slot));
    auto block = w1.middleCols(offset, w);
    const double factor = group_shrink_factor(block.norm(), threshold);
    if (factor == 0.0) {
      block.setZero();
    } else if (factor != 1.0) {
      block *= factor;
    }
    offset += w;
  }
}

// First-layer weights take an SGD step then the group prox with threshold
// lr * lambda; every other tensor uses Adagrad. A slot is removed iff its
// group norm is exactly zero at the end.
inline SelectionReport group_lasso_select(ModelParams& model, const Dataset& data, const GroupLassoConfig& cfg) {
  if (data.empty()) throw DataError("group lasso: empty data");
  if (cfg.lambda < 0.0 || !(cfg.lr > 0.0)) throw ContractViolation("group lasso: bad lambda or lr");
  SelectionReport report;
  report.method = "group_lasso";
  report.lambda = cfg.lambda;
  BatchCursor cursor(data, cfg.batch_size);
  auto zero_groups = [&] {
    const auto norms = first_layer_group_norms(model);
    return static_cast<std::size_t>(std::count(norms.begin(), norms.end(), 0.0));
  };
  report.zero_count_trajectory.push_back({0, zero_groups()});
  double loss_sum = 0.0;
  std::int64_t loss_n = 0;
  TrainWorkspace ws;
  for (std::int64_t t = 0; t < cfg.steps; ++t) {
    LossAndGrads& lg = ws.result;
    loss_and_grads(model, nullptr, cursor.next(), ws);
    if (!std::isfinite(lg.loss))
      throw NumericalError("group lasso diverged at step " + std::to_string(t));
    const Matrix w1_grad = lg.grads.top[0].weight;
    lg.grads.top[0].weight.setZero();
    apply_adagrad(model, lg.grads);
    model.top_mlp.layers[0].weight -= cfg.lr * w1_grad;
    group_prox_first_layer(model, cfg.lr * cfg.lambda);
    loss_sum += lg.loss;
    ++loss_n;
    if (cfg.log_interval > 0 && (t + 1) % cfg.log_interval == 0) {
      report.zero_count_trajectory.push_back({t + 1, zero_groups()});
      report.loss_trajectory.push_back(loss_sum / static_cast<double>(loss_n));
      loss_sum = 0.0;
      loss_n = 0;
    }
  }
  report.steps_run = cfg.steps;
  report.final_gates = first_layer_group_norms(model);
  report.mask.slot_names = model.slot_names();
  for (double n : report.final_gates) report.mask.bits.push_back(n == 0.0 ? 0 : 1);
  report.gate_histogram = make_histogram(report.final_gates, cfg.histogram_bins, 0.0);
  return report;
}

// ---------------------------------------------------------------------------
// Permutation importance baseline

// Mean AUC drop when `slot` is shuffled across rows inside each evaluation
// batch, over `repeats` independent shuffles.
inline double permutation_importance(const ModelParams& model, const Dataset& data, std::size_t slot,
                                     std::size_t repeats = 5, std::size_t batch_size = 512,
                                     std::uint64_t seed = 17) {
  if (repeats < 1) throw ContractViolation("permutation importance needs repeats >= 1");
  if (slot >= model.slot_count()) throw ContractViolation("permutation importance: slot out of range");
  if (data.empty()) throw DataError("permutation importance: empty data");
  const double base = evaluate(model, nullptr, data, batch_size).auc;
  std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ull * (slot + 1)));
  double drop = 0.0;
  std::vector<double> logits(data.size());
  std::vector<std::size_t> perm;
  for (std::size_t r = 0; r < repeats; ++r) {
    for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
      const std::size_t count = std::min(batch_size, data.size() - begin);
      perm.resize(count);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      ForwardOptions opts;
      opts.permute_slot = slot;
      opts.permutation = perm;
      const Vector z = forward(model, nullptr, data.batch(begin, count), opts);
      std::copy(z.data(), z.data() + z.size(), logits.begin() + static_cast<std::ptrdiff_t>(begin));
    }
    drop += base - auc(logits, data.labels);
  }
  return drop / static_cast<double>(repeats);
}

inline std::vector<double> permutation_ranking(const ModelParams& model, const Dataset& data,
                                               std::size_t repeats = 5, std::size_t batch_size = 512,
                                               std::uint64_t seed = 17) {
  std::vector<double> imp(model.slot_count());
  for (std::size_t k = 0; k < imp.size(); ++k) imp[k] = permutation_importance(model, data, k, repeats, batch_size, seed);
  return imp;
}

// Keeps the k most important slots (ties broken by lower slot index).
inline FeatureMask top_k_mask(std::span<const double> importance, std::size_t k, std::vector<std::string> names) {
  if (k > importance.size()) throw ContractViolation("budget exceeds slot count");
  std::vector<std::size_t> order(importance.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });
  FeatureMask mask;
  mask.bits.assign(importance.size(), 0);
  for (std::size_t i = 0; i < k; ++i) mask.bits[order[i]] = 1;
  mask.slot_names = std::move(names);
  return mask;
}

// ---------------------------------------------------------------------------
// Resurrection probe

struct ProbeResult {
  bool revived = false;
  std::int64_t revived_at = -1;         // probe step of the first nonzero x
  std::vector<double> grad_trace;       // d loss / d x_slot per step
  std::vector<double> grad_gate_trace;  // d loss / d g_slot per step
  std::vector<double> epsilon_trace;    // epsilon used at each step
};

// Forces x_slot (and its momentum) to zero, then trains `steps` more updates
// with lambda = 0 and reports whether x_slot ever leaves zero.
inline ProbeResult resurrection_probe(ModelParams model, GateState gates, const Dataset& data, std::size_t slot,
                                      std::int64_t steps, ProxConfig prox, const EpsilonSchedule& eps,
                                      std::size_t batch_size = 512, std::int64_t start_step = 0) {
  if (slot >= gates.size()) throw ContractViolation("probe slot out of range");
  gates.x[slot] = 0.0;
  gates.velocity[slot] = 0.0;
  prox.lambda = 0.0;
  ProbeResult out;
  BatchCursor cursor(data, batch_size);
  TrainWorkspace ws;
  for (std::int64_t t = 0; t < steps; ++t) {
    out.epsilon_trace.push_back(gates.epsilon);
    const GateStepResult r = gate_train_step(model, gates, cursor.next(), prox, eps, start_step + t, 100, ws);
    out.grad_trace.push_back(r.grad_x[slot]);
    out.grad_gate_trace.push_back(r.grad_gate[slot]);
    if (!out.revived && gates.x[slot] != 0.0) {
      out.revived = true;
      out.revived_at = t;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Budgeted selection

struct BudgetSearch {
  double lambda_lo = 1e-3;
  double lambda_hi = 1.0;
  int max_iters = 8;
};

struct BudgetProbe {
  double lambda = 0.0;
  std::size_t kept = 0;
};

struct BudgetResult {
  SelectionReport report;
  ModelParams model;
  GateState gates;
  double lambda = 0.0;
  std::vector<BudgetProbe> probes;
};

// Bisects lambda on a log scale until a fresh gate run keeps exactly
// `target` slots; returns the closest run if the budget is never hit. Each
// probe restarts from `pretrained` and `init_gates`.
inline BudgetResult select_with_budget(const ModelParams& pretrained, const GateState& init_gates,
                                       const Dataset& data, ProxConfig prox, const EpsilonSchedule& eps,
                                       const GateTrainOptions& opts, std::size_t target,
                                       const BudgetSearch& search = {}) {
  if (!(search.lambda_lo > 0.0 && search.lambda_hi > search.lambda_lo))
    throw ContractViolation("budget search needs 0 < lambda_lo < lambda_hi");
  double lo = search.lambda_lo;
  double hi = search.lambda_hi;
  std::optional<BudgetResult> best;
  std::vector<BudgetProbe> probes;
  for (int it = 0; it < search.max_iters; ++it) {
    const double mid = std::sqrt(lo * hi);
    prox.lambda = mid;
    BudgetResult cand{SelectionReport{}, pretrained, init_gates, mid, {}};
    cand.report = run_gate_selection(cand.model, cand.gates, data, prox, eps, opts);
    const std::size_t kept = cand.report.mask.kept();
    probes.push_back({mid, kept});
    auto dist = [&](std::size_t k) { return k > target ? k - target : target - k; };
    if (!best || dist(kept) < dist(best->report.mask.kept())) best = std::move(cand);
    if (kept == target) break;
    if (kept > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  best->probes = std::move(probes);
  return std::move(*best);
}

}  // namespace lpfs
