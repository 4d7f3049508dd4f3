#pragma once

// On-disk report artifacts. Every file is written to a sibling temporary and
// renamed into place, so a reader never sees a truncated file.
//
//   mask.txt        one line of '0'/'1', one character per slot, dense first
//   gates.csv       slot_name,final_gate
//   trajectory.csv  step,zero_count
//   histogram.csv   bin_lo,bin_hi,count
//   metrics.csv     phase,auc,logloss,accuracy (gated/absorbed, or full/pruned)
//   summary.txt     key = value run facts
//   config.txt      the run configuration

#include <charconv>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "lpfs/checkpoint.hpp"
#include "lpfs/errors.hpp"
#include "lpfs/metrics.hpp"
#include "lpfs/selection.hpp"

#if defined(__unix__) || defined(__APPLE__)
#include <unistd.h>
#endif

namespace lpfs {

namespace detail {

inline std::string temp_sibling(const std::filesystem::path& path) {
#if defined(__unix__) || defined(__APPLE__)
  const long pid = static_cast<long>(::getpid());
#else
  const long pid = 0;
#endif
  return path.string() + ".tmp." + std::to_string(pid);
}

inline std::string fmt(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace detail

inline void atomic_write(const std::filesystem::path& path, std::string_view content, bool binary = false) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string tmp = detail::temp_sibling(path);
  {
    std::ofstream out(tmp, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw DataError("failed while writing '" + path.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw DataError("cannot move '" + tmp + "' into place: " + ec.message());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  atomic_write(path, checkpoint_bytes(ckpt), true);
}

inline std::string mask_text(const FeatureMask& mask) { return mask.to_string() + "\n"; }

inline FeatureMask read_mask(const std::filesystem::path& path, std::vector<std::string> names = {}) {
  std::string text = read_file(path);
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  return FeatureMask::from_string(text, std::move(names));
}

inline std::string gates_csv(const FeatureMask& mask, std::span<const double> gates) {
  if (mask.slot_names.size() != gates.size()) throw ContractViolation("gates_csv: name/value count mismatch");
  std::string s = "slot_name,final_gate\n";
  for (std::size_t k = 0; k < gates.size(); ++k) s += mask.slot_names[k] + "," + detail::fmt(gates[k]) + "\n";
  return s;
}

inline std::string trajectory_csv(std::span<const TrajectoryPoint> points) {
  std::string s = "step,zero_count\n";
  for (const auto& p : points) s += std::to_string(p.step) + "," + std::to_string(p.zero_count) + "\n";
  return s;
}

inline std::string histogram_csv(std::span<const HistogramBin> bins) {
  std::string s = "bin_lo,bin_hi,count\n";
  for (const auto& b : bins) s += detail::fmt(b.lo) + "," + detail::fmt(b.hi) + "," + std::to_string(b.count) + "\n";
  return s;
}

inline std::string metrics_line(std::string_view phase, const Metrics& m) {
  return std::string(phase) + "," + detail::fmt(m.auc) + "," + detail::fmt(m.logloss) + "," + detail::fmt(m.accuracy) + "\n";
}

inline std::string metrics_csv(std::span<const std::pair<std::string, Metrics>> rows) {
  std::string s = "phase,auc,logloss,accuracy\n";
  for (const auto& [phase, m] : rows) s += metrics_line(phase, m);
  return s;
}

inline std::string summary_text(const SelectionReport& r) {
  std::ostringstream s;
  s << "method = " << r.method << "\n"
    << "slots = " << r.mask.size() << "\n"
    << "kept = " << r.mask.kept() << "\n"
    << "lambda = " << detail::fmt(r.lambda) << "\n"
    << "final_epsilon = " << detail::fmt(r.final_epsilon) << "\n"
    << "steps_run = " << r.steps_run << "\n"
    << "converged = " << (r.converged ? "true" : "false") << "\n"
    << "converged_step = " << r.converged_step << "\n"
    << "revival_events = " << r.revival_events << "\n";
  return s.str();
}

// Writes every report artifact into `dir`.
inline void write_report(const std::filesystem::path& dir, const SelectionReport& r) {
  atomic_write(dir / "mask.txt", mask_text(r.mask));
  atomic_write(dir / "gates.csv", gates_csv(r.mask, r.final_gates));
  atomic_write(dir / "trajectory.csv", trajectory_csv(r.zero_count_trajectory));
  atomic_write(dir / "histogram.csv", histogram_csv(r.gate_histogram));
  std::vector<std::pair<std::string, Metrics>> rows;
  const bool dropped = r.method == "permutation";
  if (r.metrics_before) rows.emplace_back(dropped ? "full" : "gated", *r.metrics_before);
  if (r.metrics_after) rows.emplace_back(dropped ? "pruned" : "absorbed", *r.metrics_after);
  atomic_write(dir / "metrics.csv", metrics_csv(rows));
  atomic_write(dir / "summary.txt", summary_text(r));
  if (!r.config_snapshot.empty()) atomic_write(dir / "config.txt", r.config_snapshot);
}

}  // namespace lpfs
