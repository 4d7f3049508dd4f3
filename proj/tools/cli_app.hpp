#pragma once

// Command-line front-end. Every RunConfig key is also a flag, spelled
// --section.key; flags are applied after --config and --set, in that order.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lpfs/commands.hpp"

namespace lpfs::cli {

enum ExitCode : int {
  kOk = 0,
  kOther = 1,
  kUsage = 2,
  kData = 3,
  kNumerical = 4,
  kSweepNotMonotone = 5,
};

struct Invocation {
  std::string config_path;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;  // config key -> raw value
  std::string checkpoint;
  bool print_config = false;
};

inline RunConfig build_config(const Invocation& inv) {
  RunConfig c = inv.config_path.empty() ? RunConfig{} : load_config(inv.config_path);
  for (const std::string& kv : inv.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects section.key=value, got '" + kv + "'");
    set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [key, value] : inv.flags) set_config_value(c, key, value);
  validate_config(c);
  return c;
}

inline std::filesystem::path checkpoint_path(const Invocation& inv, const RunConfig& c) {
  return inv.checkpoint.empty() ? output_dir(c) / "pretrain.ckpt" : std::filesystem::path(inv.checkpoint);
}

inline void add_common(CLI::App* sub, Invocation& inv, bool wants_checkpoint) {
  sub->add_option("--config", inv.config_path, "run configuration file")->check(CLI::ExistingFile);
  sub->add_option("--set", inv.sets, "override, section.key=value (repeatable)");
  sub->add_flag("--print-config", inv.print_config, "print the resolved configuration before running");
  if (wants_checkpoint)
    sub->add_option("--checkpoint", inv.checkpoint, "input checkpoint (default: <output.dir>/pretrain.ckpt)");
  for (const ConfigField& f : config_fields()) {
    const std::string key = f.name();
    sub->add_option_function<std::string>(
           "--" + key, [&inv, key](const std::string& v) { inv.flags[key] = v; }, f.help)
        ->type_name(f.get(RunConfig{}).empty() ? "TEXT" : "[" + f.get(RunConfig{}) + "]");
  }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"gated feature selection for CTR models"};
  app.require_subcommand(1);
  Invocation inv;
  CLI::App* pre = app.add_subcommand("pretrain", "train the ungated model and save a checkpoint");
  CLI::App* sel = app.add_subcommand("select", "run feature selection from a pretrained checkpoint");
  CLI::App* ev = app.add_subcommand("evaluate", "report AUC, logloss and accuracy of a checkpoint");
  CLI::App* sw = app.add_subcommand("sweep", "one gate selection run per (alpha, lambda) grid point");
  add_common(pre, inv, false);
  add_common(sel, inv, true);
  add_common(ev, inv, true);
  add_common(sw, inv, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    const RunConfig c = build_config(inv);
    if (inv.print_config) out << render_config(c);
    if (pre->parsed()) {
      cmd_pretrain(c, out);
    } else if (sel->parsed()) {
      cmd_select(c, checkpoint_path(inv, c), out);
    } else if (ev->parsed()) {
      cmd_evaluate(c, checkpoint_path(inv, c), out);
    } else if (sw->parsed()) {
      const SweepResult r = cmd_sweep(c, checkpoint_path(inv, c), out);
      if (!r.kept_nonincreasing_in_lambda) {
        err << "error: kept-count rises with lambda somewhere in the sweep\n";
        return kSweepNotMonotone;
      }
    }
    return kOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const ScheduleError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kOther;
  }
}

}  // namespace lpfs::cli
