#pragma once

// Run configuration: a flat, sectioned key=value text format.
//
//   # comment
//   [section]
//   key = value
//
// Every key lives in exactly one section. Reals are rendered in shortest
// round-trip form, so parse(render(c)) == c holds bit-for-bit.

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "lpfs/data.hpp"
#include "lpfs/errors.hpp"
#include "lpfs/gates.hpp"
#include "lpfs/prox_optim.hpp"

namespace lpfs {

enum class SelectMethod : std::uint8_t { kGate, kGroupLasso, kPermutation };

inline std::string_view to_string(SelectMethod m) {
  switch (m) {
    case SelectMethod::kGate: return "gate";
    case SelectMethod::kGroupLasso: return "group_lasso";
    case SelectMethod::kPermutation: return "permutation";
  }
  return "?";
}

inline SelectMethod select_method_from_string(std::string_view s) {
  if (s == "gate") return SelectMethod::kGate;
  if (s == "group_lasso") return SelectMethod::kGroupLasso;
  if (s == "permutation") return SelectMethod::kPermutation;
  throw UsageError("unknown selection method '" + std::string(s) + "' (gate, group_lasso, permutation)");
}

struct RunConfig {
  struct Data {
    std::string source = "synthetic";  // synthetic | tsv
    std::vector<std::string> paths;    // tsv: one file per day, day tag = position
    std::string pretrain_days = "0-17";
    std::string select_days = "18-22";
    std::string eval_days = "23";
    double negative_keep_rate = 1.0;
    std::uint64_t downsample_seed = 3;
    std::size_t hash_cardinality = 100000;
    std::size_t max_rows_per_file = 0;  // 0 = no limit
  } data;

  struct Synthetic {
    std::size_t n_fields = 30;
    std::size_t n_informative = 10;
    std::size_t cardinality = 100;
    std::size_t n_continuous = 0;
    double weight_scale = 2.0;
    double label_noise = 0.05;
    std::uint64_t seed = 1;
    std::size_t n_pretrain = 200000;
    std::size_t n_select = 200000;
    std::size_t n_eval = 50000;
  } synthetic;

  struct Model {
    std::size_t embedding_dim = 16;
    std::size_t dense_rep_dim = 16;
    std::vector<std::size_t> top_hidden{256, 128};
    std::vector<std::size_t> dense_hidden{32};
    bool cross = false;
    std::uint64_t init_seed = 7;
  } model;

  struct Train {
    std::size_t batch_size = 512;
    double adagrad_lr = 0.01;
    std::int64_t pretrain_steps = 20000;
  } train;

  struct Gates {
    GateKind kind = GateKind::kLpfsPlusPlus;
    double alpha = 10.0;
    double epsilon_initial = 0.1;
    double epsilon_decay = 0.9978;
    std::int64_t epsilon_interval = 100;
    double epsilon_floor = 1e-5;
    bool rms_rescale = true;
    std::int64_t rms_interval = 100;
  } gates;

  struct Prox {
    double lambda = 0.004;
    std::optional<double> lr;  // unset: 0.01 for LPFS++, 0.005 otherwise
    double lr_decay = 0.9991;
    std::int64_t lr_interval = 100;
    double lr_floor = 5e-4;
    double momentum = 0.9;
  } prox;

  struct Selection {
    SelectMethod method = SelectMethod::kGate;
    std::int64_t max_steps = 600000;
    std::int64_t stability_window = 2000;
    std::size_t budget = 0;  // 0 = no budget; gate method bisects lambda
    double lambda_lo = 1e-4;
    double lambda_hi = 1.0;
    std::size_t bisection_iters = 8;
    std::size_t permutation_repeats = 5;
    std::uint64_t permutation_seed = 17;
    double group_lambda = 0.01;
    double group_lr = 0.01;
    std::int64_t group_steps = 20000;
    std::size_t histogram_bins = 20;
  } selection;

  struct Sweep {
    std::vector<double> lambdas{1e-4, 1e-3, 1e-2};
    std::vector<double> alphas{10.0};
  } sweep;

  struct Output {
    std::string dir = "runs/default";
  } output;

  bool operator==(const RunConfig&) const;
};

namespace detail {

inline std::string render_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <class T>
T parse_value(std::string_view key, std::string_view text) {
  T v{};
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size())
    throw UsageError("config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
  return v;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw UsageError("config key '" + std::string(key) + "': expected true or false, got '" + std::string(text) + "'");
}

inline std::vector<std::string_view> split_list(std::string_view text) {
  std::vector<std::string_view> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    out.push_back(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

struct ConfigField {
  std::string section;
  std::string key;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;

  std::string name() const { return section + "." + key; }
};

namespace detail {

inline std::vector<ConfigField> build_fields() {
  std::vector<ConfigField> f;
  const auto add_string = [&](std::string sec, std::string key, std::string help, auto member) {
    f.push_back({sec, key, help, [member](const RunConfig& c) { return std::string(member(c)); },
                 [member](RunConfig& c, std::string_view v) { member(c) = std::string(v); }});
  };
  const auto add_double = [&](std::string sec, std::string key, std::string help, auto member) {
    f.push_back({sec, key, help, [member](const RunConfig& c) { return render_double(member(c)); },
                 [member, key](RunConfig& c, std::string_view v) { member(c) = parse_value<double>(key, v); }});
  };
  const auto add_integer = [&](std::string sec, std::string key, std::string help, auto member) {
    f.push_back({sec, key, help,
                 [member](const RunConfig& c) { return std::to_string(member(c)); },
                 [member, key](RunConfig& c, std::string_view v) {
                   using T = std::remove_reference_t<decltype(member(c))>;
                   member(c) = parse_value<T>(key, v);
                 }});
  };
  const auto add_bool = [&](std::string sec, std::string key, std::string help, auto member) {
    f.push_back({sec, key, help,
                 [member](const RunConfig& c) { return std::string(member(c) ? "true" : "false"); },
                 [member, key](RunConfig& c, std::string_view v) { member(c) = parse_bool(key, v); }});
  };
  const auto add_size_list = [&](std::string sec, std::string key, std::string help, auto member) {
    f.push_back({sec, key, help,
                 [member](const RunConfig& c) {
                   std::string s;
                   for (std::size_t v : member(c)) s += (s.empty() ? "" : ",") + std::to_string(v);
                   return s;
                 },
                 [member, key](RunConfig& c, std::string_view v) {
                   std::vector<std::size_t> out;
                   for (std::string_view part : split_list(v)) out.push_back(parse_value<std::size_t>(key, trim(part)));
                   member(c) = std::move(out);
                 }});
  };
  const auto add_double_list = [&](std::string sec, std::string key, std::string help, auto member) {
    f.push_back({sec, key, help,
                 [member](const RunConfig& c) {
                   std::string s;
                   for (double v : member(c)) s += (s.empty() ? "" : ",") + render_double(v);
                   return s;
                 },
                 [member, key](RunConfig& c, std::string_view v) {
                   std::vector<double> out;
                   for (std::string_view part : split_list(v)) out.push_back(parse_value<double>(key, trim(part)));
                   member(c) = std::move(out);
                 }});
  };

  add_string("data", "source", "synthetic or tsv", [](auto& c) -> auto& { return c.data.source; });
  f.push_back({"data", "paths", "comma-separated TSV files, one per day in day order",
               [](const RunConfig& c) {
                 std::string s;
                 for (const auto& p : c.data.paths) s += (s.empty() ? "" : ",") + p;
                 return s;
               },
               [](RunConfig& c, std::string_view v) {
                 c.data.paths.clear();
                 for (std::string_view part : split_list(v)) c.data.paths.emplace_back(trim(part));
               }});
  add_string("data", "pretrain_days", "day range used for pretraining", [](auto& c) -> auto& { return c.data.pretrain_days; });
  add_string("data", "select_days", "day range used for selection", [](auto& c) -> auto& { return c.data.select_days; });
  add_string("data", "eval_days", "day range used for evaluation", [](auto& c) -> auto& { return c.data.eval_days; });
  add_double("data", "negative_keep_rate", "fraction of negatives kept", [](auto& c) -> auto& { return c.data.negative_keep_rate; });
  add_integer("data", "downsample_seed", "seed for negative down-sampling", [](auto& c) -> auto& { return c.data.downsample_seed; });
  add_integer("data", "hash_cardinality", "hashed ids per categorical field", [](auto& c) -> auto& { return c.data.hash_cardinality; });
  add_integer("data", "max_rows_per_file", "read at most this many rows per file (0 = all)", [](auto& c) -> auto& { return c.data.max_rows_per_file; });

  add_integer("synthetic", "n_fields", "categorical fields", [](auto& c) -> auto& { return c.synthetic.n_fields; });
  add_integer("synthetic", "n_informative", "fields that drive the label", [](auto& c) -> auto& { return c.synthetic.n_informative; });
  add_integer("synthetic", "cardinality", "categories per field", [](auto& c) -> auto& { return c.synthetic.cardinality; });
  add_integer("synthetic", "n_continuous", "continuous features", [](auto& c) -> auto& { return c.synthetic.n_continuous; });
  add_double("synthetic", "weight_scale", "scale of the ground-truth weights", [](auto& c) -> auto& { return c.synthetic.weight_scale; });
  add_double("synthetic", "label_noise", "label flip probability", [](auto& c) -> auto& { return c.synthetic.label_noise; });
  add_integer("synthetic", "seed", "ground-truth and stream seed", [](auto& c) -> auto& { return c.synthetic.seed; });
  add_integer("synthetic", "n_pretrain", "pretraining samples", [](auto& c) -> auto& { return c.synthetic.n_pretrain; });
  add_integer("synthetic", "n_select", "selection samples", [](auto& c) -> auto& { return c.synthetic.n_select; });
  add_integer("synthetic", "n_eval", "evaluation samples", [](auto& c) -> auto& { return c.synthetic.n_eval; });

  add_integer("model", "embedding_dim", "embedding width", [](auto& c) -> auto& { return c.model.embedding_dim; });
  add_integer("model", "dense_rep_dim", "dense representation width", [](auto& c) -> auto& { return c.model.dense_rep_dim; });
  add_size_list("model", "top_hidden", "top MLP hidden widths", [](auto& c) -> auto& { return c.model.top_hidden; });
  add_size_list("model", "dense_hidden", "dense MLP hidden widths", [](auto& c) -> auto& { return c.model.dense_hidden; });
  add_bool("model", "cross", "add pairwise cross slots", [](auto& c) -> auto& { return c.model.cross; });
  add_integer("model", "init_seed", "parameter init seed", [](auto& c) -> auto& { return c.model.init_seed; });

  add_integer("train", "batch_size", "minibatch size", [](auto& c) -> auto& { return c.train.batch_size; });
  add_double("train", "adagrad_lr", "Adagrad learning rate", [](auto& c) -> auto& { return c.train.adagrad_lr; });
  add_integer("train", "pretrain_steps", "pretraining steps", [](auto& c) -> auto& { return c.train.pretrain_steps; });

  f.push_back({"gates", "kind", "lpfs, lpfs_pp, sl0_exp, sl0_tanh or sl0_sinatan",
               [](const RunConfig& c) { return std::string(to_string(c.gates.kind)); },
               [](RunConfig& c, std::string_view v) {
                 const auto kind = gate_kind_from_string(v);
                 if (!kind) throw UsageError("unknown gate kind '" + std::string(v) + "'");
                 c.gates.kind = *kind;
               }});
  add_double("gates", "alpha", "LPFS++ arctan weight", [](auto& c) -> auto& { return c.gates.alpha; });
  add_double("gates", "epsilon_initial", "initial epsilon", [](auto& c) -> auto& { return c.gates.epsilon_initial; });
  add_double("gates", "epsilon_decay", "epsilon decay factor", [](auto& c) -> auto& { return c.gates.epsilon_decay; });
  add_integer("gates", "epsilon_interval", "steps between epsilon decays", [](auto& c) -> auto& { return c.gates.epsilon_interval; });
  add_double("gates", "epsilon_floor", "epsilon floor", [](auto& c) -> auto& { return c.gates.epsilon_floor; });
  add_bool("gates", "rms_rescale", "divide categorical slots by the gate RMS", [](auto& c) -> auto& { return c.gates.rms_rescale; });
  add_integer("gates", "rms_interval", "steps between RMS refreshes", [](auto& c) -> auto& { return c.gates.rms_interval; });

  add_double("prox", "lambda", "l1 weight on the gate parameters", [](auto& c) -> auto& { return c.prox.lambda; });
  f.push_back({"prox", "lr", "initial gate learning rate, or auto",
               [](const RunConfig& c) { return c.prox.lr ? render_double(*c.prox.lr) : std::string("auto"); },
               [](RunConfig& c, std::string_view v) {
                 if (v == "auto") {
                   c.prox.lr.reset();
                 } else {
                   c.prox.lr = parse_value<double>("lr", v);
                 }
               }});
  add_double("prox", "lr_decay", "gate learning-rate decay factor", [](auto& c) -> auto& { return c.prox.lr_decay; });
  add_integer("prox", "lr_interval", "steps between learning-rate decays", [](auto& c) -> auto& { return c.prox.lr_interval; });
  add_double("prox", "lr_floor", "gate learning-rate floor", [](auto& c) -> auto& { return c.prox.lr_floor; });
  add_double("prox", "momentum", "gate momentum", [](auto& c) -> auto& { return c.prox.momentum; });

  f.push_back({"selection", "method", "gate, group_lasso or permutation",
               [](const RunConfig& c) { return std::string(to_string(c.selection.method)); },
               [](RunConfig& c, std::string_view v) { c.selection.method = select_method_from_string(v); }});
  add_integer("selection", "max_steps", "gate-training step budget", [](auto& c) -> auto& { return c.selection.max_steps; });
  add_integer("selection", "stability_window", "steps without a zero-count change to call a run converged", [](auto& c) -> auto& { return c.selection.stability_window; });
  add_integer("selection", "budget", "number of slots to keep (0 = unconstrained)", [](auto& c) -> auto& { return c.selection.budget; });
  add_double("selection", "lambda_lo", "lower lambda for budget bisection", [](auto& c) -> auto& { return c.selection.lambda_lo; });
  add_double("selection", "lambda_hi", "upper lambda for budget bisection", [](auto& c) -> auto& { return c.selection.lambda_hi; });
  add_integer("selection", "bisection_iters", "budget bisection iterations", [](auto& c) -> auto& { return c.selection.bisection_iters; });
  add_integer("selection", "permutation_repeats", "shuffles per slot", [](auto& c) -> auto& { return c.selection.permutation_repeats; });
  add_integer("selection", "permutation_seed", "shuffle seed", [](auto& c) -> auto& { return c.selection.permutation_seed; });
  add_double("selection", "group_lambda", "group-lasso weight", [](auto& c) -> auto& { return c.selection.group_lambda; });
  add_double("selection", "group_lr", "group-lasso first-layer learning rate", [](auto& c) -> auto& { return c.selection.group_lr; });
  add_integer("selection", "group_steps", "group-lasso training steps", [](auto& c) -> auto& { return c.selection.group_steps; });
  add_integer("selection", "histogram_bins", "bins in the gate histogram", [](auto& c) -> auto& { return c.selection.histogram_bins; });

  add_double_list("sweep", "lambdas", "lambda grid", [](auto& c) -> auto& { return c.sweep.lambdas; });
  add_double_list("sweep", "alphas", "alpha grid", [](auto& c) -> auto& { return c.sweep.alphas; });

  add_string("output", "dir", "output directory", [](auto& c) -> auto& { return c.output.dir; });
  return f;
}

}  // namespace detail

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = detail::build_fields();
  return fields;
}

inline const ConfigField& config_field(std::string_view section, std::string_view key) {
  for (const ConfigField& f : config_fields())
    if (f.section == section && f.key == key) return f;
  throw UsageError("unknown config key '" + std::string(section) + "." + std::string(key) + "'");
}

// Sets "section.key" from text.
inline void set_config_value(RunConfig& c, std::string_view dotted, std::string_view value) {
  const auto dot = dotted.find('.');
  if (dot == std::string_view::npos) throw UsageError("config key '" + std::string(dotted) + "' needs a section");
  config_field(dotted.substr(0, dot), dotted.substr(dot + 1)).set(c, detail::trim(value));
}

inline bool RunConfig::operator==(const RunConfig& o) const {
  for (const ConfigField& f : config_fields())
    if (f.get(*this) != f.get(o)) return false;
  return true;
}

inline std::string render_config(const RunConfig& c) {
  std::ostringstream out;
  std::string section;
  for (const ConfigField& f : config_fields()) {
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(c) << '\n';
  }
  return out.str();
}

// Keys absent from the text keep their defaults.
inline RunConfig parse_config(std::istream& in, RunConfig base = {}) {
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw UsageError("config line " + std::to_string(line_no) + ": unterminated section");
      section = std::string(detail::trim(t.substr(1, t.size() - 2)));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
    if (section.empty())
      throw UsageError("config line " + std::to_string(line_no) + ": key outside any section");
    try {
      config_field(section, detail::trim(t.substr(0, eq))).set(base, detail::trim(t.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw UsageError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

inline RunConfig parse_config(std::string_view text, RunConfig base = {}) {
  std::istringstream in{std::string(text)};
  return parse_config(in, std::move(base));
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config '" + path + "'");
  return parse_config(in, std::move(base));
}

// Range checks on values the parser accepts but the pipeline cannot run with.
inline void validate_config(const RunConfig& c) {
  const auto need = [](bool ok, const char* what) {
    if (!ok) throw UsageError(std::string("config: ") + what);
  };
  need(c.data.negative_keep_rate > 0.0 && c.data.negative_keep_rate <= 1.0, "data.negative_keep_rate must lie in (0,1]");
  need(c.data.hash_cardinality >= 2, "data.hash_cardinality must be at least 2");
  need(c.synthetic.n_fields > 0, "synthetic.n_fields must be positive");
  need(c.synthetic.n_informative <= c.synthetic.n_fields, "synthetic.n_informative exceeds synthetic.n_fields");
  need(c.synthetic.cardinality > 0, "synthetic.cardinality must be positive");
  need(c.synthetic.weight_scale > 0.0, "synthetic.weight_scale must be positive");
  need(c.synthetic.label_noise >= 0.0 && c.synthetic.label_noise < 0.5, "synthetic.label_noise must lie in [0,0.5)");
  need(c.model.embedding_dim > 0 && c.model.dense_rep_dim > 0, "model widths must be positive");
  for (std::size_t w : c.model.top_hidden) need(w > 0, "model.top_hidden entries must be positive");
  for (std::size_t w : c.model.dense_hidden) need(w > 0, "model.dense_hidden entries must be positive");
  need(c.train.batch_size > 0, "train.batch_size must be positive");
  need(c.train.adagrad_lr > 0.0, "train.adagrad_lr must be positive");
  need(c.train.pretrain_steps >= 0, "train.pretrain_steps must be nonnegative");
  need(c.gates.alpha >= 0.0, "gates.alpha must be nonnegative");
  need(c.gates.epsilon_initial > 0.0 && c.gates.epsilon_floor > 0.0, "gates epsilon values must be positive");
  need(c.gates.epsilon_floor <= c.gates.epsilon_initial, "gates.epsilon_floor exceeds gates.epsilon_initial");
  need(c.gates.epsilon_decay > 0.0 && c.gates.epsilon_decay < 1.0, "gates.epsilon_decay must lie in (0,1)");
  need(c.gates.epsilon_interval > 0 && c.gates.rms_interval > 0, "gates intervals must be positive");
  need(c.prox.lambda >= 0.0, "prox.lambda must be nonnegative");
  need(!c.prox.lr || *c.prox.lr > 0.0, "prox.lr must be positive");
  need(c.prox.lr_decay > 0.0 && c.prox.lr_decay <= 1.0, "prox.lr_decay must lie in (0,1]");
  need(c.prox.lr_interval > 0, "prox.lr_interval must be positive");
  need(c.prox.lr_floor > 0.0, "prox.lr_floor must be positive");
  need(c.prox.momentum >= 0.0 && c.prox.momentum < 1.0, "prox.momentum must lie in [0,1)");
  need(c.selection.max_steps >= 0 && c.selection.stability_window >= 0, "selection step counts must be nonnegative");
  need(c.selection.lambda_lo > 0.0 && c.selection.lambda_lo < c.selection.lambda_hi,
       "selection needs 0 < lambda_lo < lambda_hi");
  need(c.selection.bisection_iters > 0, "selection.bisection_iters must be positive");
  need(c.selection.permutation_repeats > 0, "selection.permutation_repeats must be positive");
  need(c.selection.group_lambda >= 0.0 && c.selection.group_lr > 0.0, "group lasso needs lambda >= 0 and lr > 0");
  need(c.selection.group_steps >= 0, "selection.group_steps must be nonnegative");
  need(c.selection.histogram_bins > 0, "selection.histogram_bins must be positive");
  for (double v : c.sweep.lambdas) need(v >= 0.0, "sweep.lambdas must be nonnegative");
  for (double v : c.sweep.alphas) need(v >= 0.0, "sweep.alphas must be nonnegative");
}

// Library-level settings derived from a config.

inline double effective_prox_lr(const RunConfig& c) {
  if (c.prox.lr) return *c.prox.lr;
  return c.gates.kind == GateKind::kLpfsPlusPlus ? 0.01 : 0.005;
}

inline ProxConfig prox_config(const RunConfig& c) {
  ProxConfig p;
  p.lambda = c.prox.lambda;
  p.lr = effective_prox_lr(c);
  p.lr_decay_factor = c.prox.lr_decay;
  p.lr_decay_interval = c.prox.lr_interval;
  p.lr_floor = c.prox.lr_floor;
  p.momentum = c.prox.momentum;
  return p;
}

inline EpsilonSchedule epsilon_schedule(const RunConfig& c) {
  EpsilonSchedule e;
  e.decay_factor = c.gates.epsilon_decay;
  e.interval_steps = c.gates.epsilon_interval;
  e.floor = c.gates.epsilon_floor;
  e.initial = c.gates.epsilon_initial;
  return e;
}

inline SyntheticSpec synthetic_spec(const RunConfig& c) {
  SyntheticSpec s;
  s.n_fields = c.synthetic.n_fields;
  s.n_informative = c.synthetic.n_informative;
  s.cardinality.assign(c.synthetic.n_fields, c.synthetic.cardinality);
  s.n_continuous = c.synthetic.n_continuous;
  s.weight_scale = c.synthetic.weight_scale;
  s.label_noise = c.synthetic.label_noise;
  s.seed = c.synthetic.seed;
  return s;
}

}  // namespace lpfs
