#pragma once

// Gate families used to modulate feature-slot embeddings.
//
// Every gate maps a learnable scalar x to a multiplier g(x) with g(0) == 0
// exactly. As the annealing parameter epsilon shrinks, the even families tend
// to the l0 indicator (0 at the origin, 1 elsewhere). The odd LPFS++ gate
// tends to sign(x) and keeps a nonzero slope alpha * sqrt(epsilon) at the
// origin so a zeroed gate can still receive gradient.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lpfs/errors.hpp"

namespace lpfs {

enum class GateKind : std::uint8_t {
  kLpfs,        // x^2 / (x^2 + eps)
  kLpfsPlusPlus,  // odd extension plus alpha * sqrt(eps) * atan(x)
  kSl0Exp,      // 1 - exp(-x^2 / (2 eps^2))
  kSl0Tanh,     // tanh(x^2 / (2 eps^2))
  kSl0SinAtan,  // sin(atan(|x| / eps))
};

inline constexpr GateKind kAllGateKinds[] = {
    GateKind::kLpfs, GateKind::kLpfsPlusPlus, GateKind::kSl0Exp,
    GateKind::kSl0Tanh, GateKind::kSl0SinAtan};

inline std::string_view to_string(GateKind kind) {
  switch (kind) {
    case GateKind::kLpfs: return "lpfs";
    case GateKind::kLpfsPlusPlus: return "lpfs_pp";
    case GateKind::kSl0Exp: return "sl0_exp";
    case GateKind::kSl0Tanh: return "sl0_tanh";
    case GateKind::kSl0SinAtan: return "sl0_sinatan";
  }
  return "unknown";
}

inline std::optional<GateKind> gate_kind_from_string(std::string_view name) {
  for (GateKind kind : kAllGateKinds) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

namespace detail {

inline void check_epsilon(double epsilon) {
  if (!(epsilon > 0.0)) {
    throw ScheduleError("gate epsilon must be positive, got " +
                        std::to_string(epsilon));
  }
}

}  // namespace detail

inline double gate_value(GateKind kind, double x, double epsilon, double alpha = 0.0) {
  detail::check_epsilon(epsilon);
  const double x2 = x * x;
  switch (kind) {
    case GateKind::kLpfs:
      return x2 / (x2 + epsilon);
    case GateKind::kLpfsPlusPlus: {
      const double rational = x2 / (x2 + epsilon);
      const double slope = alpha * std::sqrt(epsilon) * std::atan(x);
      return (x >= 0.0 ? rational : -rational) + slope;
    }
    case GateKind::kSl0Exp:
      return -std::expm1(-x2 / (2.0 * epsilon * epsilon));
    case GateKind::kSl0Tanh:
      return std::tanh(x2 / (2.0 * epsilon * epsilon));
    case GateKind::kSl0SinAtan:
      return std::sin(std::atan(std::fabs(x) / epsilon));
  }
  return 0.0;
}

// Analytic derivative of gate_value with respect to x. The sin(atan) family
// has a kink at the origin; its symmetric derivative 0 is returned there.
inline double gate_grad(GateKind kind, double x, double epsilon, double alpha = 0.0) {
  detail::check_epsilon(epsilon);
  const double x2 = x * x;
  switch (kind) {
    case GateKind::kLpfs: {
      const double d = x2 + epsilon;
      return 2.0 * x * epsilon / (d * d);
    }
    case GateKind::kLpfsPlusPlus: {
      const double d = x2 + epsilon;
      return 2.0 * std::fabs(x) * epsilon / (d * d) +
             alpha * std::sqrt(epsilon) / (x2 + 1.0);
    }
    case GateKind::kSl0Exp: {
      const double e2 = epsilon * epsilon;
      return x / e2 * std::exp(-x2 / (2.0 * e2));
    }
    case GateKind::kSl0Tanh: {
      const double e2 = epsilon * epsilon;
      const double t = std::tanh(x2 / (2.0 * e2));
      return x / e2 * (1.0 - t * t);
    }
    case GateKind::kSl0SinAtan: {
      if (x == 0.0) return 0.0;
      const double e2 = epsilon * epsilon;
      const double r = std::sqrt(x2 + e2);
      return std::copysign(e2 / (r * r * r), x);
    }
  }
  return 0.0;
}

// Multiplicative annealing: epsilon *= decay_factor every interval_steps,
// never below floor.
struct EpsilonSchedule {
  double decay_factor = 0.9978;
  std::int64_t interval_steps = 100;
  double floor = 1e-5;
  double initial = 0.1;

  void validate() const {
    if (!(decay_factor > 0.0 && decay_factor < 1.0))
      throw ContractViolation("epsilon decay factor must lie in (0,1)");
    if (interval_steps <= 0)
      throw ContractViolation("epsilon interval must be positive");
    if (!(floor > 0.0) || !(initial > 0.0))
      throw ScheduleError("epsilon floor and initial value must be positive");
    if (floor > initial)
      throw ContractViolation("epsilon floor exceeds the initial value");
  }
};

inline double epsilon_step(const EpsilonSchedule& schedule, std::int64_t global_step,
                           double current) {
  if (global_step < 0) throw ContractViolation("global step must be nonnegative");
  detail::check_epsilon(current);
  if (global_step == 0 || global_step % schedule.interval_steps != 0) return current;
  const double next = current * schedule.decay_factor;
  return next < schedule.floor ? schedule.floor : next;
}

inline bool epsilon_at_floor(const EpsilonSchedule& schedule, double current) {
  return current <= schedule.floor;
}

// Learnable gate vector plus everything needed to evaluate it. The
// embedding-RMS fields implement the optional categorical-embedding rescale:
// when enabled, categorical slots are divided by rms_value, which is
// refreshed periodically during training and frozen once epsilon bottoms out.
struct GateState {
  std::vector<double> x;
  double epsilon = 0.1;
  double alpha = 0.0;
  std::vector<double> velocity;
  std::vector<double> init_norm;
  GateKind kind = GateKind::kLpfsPlusPlus;

  bool rms_rescale = false;
  double rms_value = 1.0;
  bool rms_frozen = false;

  std::size_t size() const noexcept { return x.size(); }

  void validate() const {
    detail::check_epsilon(epsilon);
    if (alpha < 0.0) throw ContractViolation("gate alpha must be nonnegative");
    if (velocity.size() != x.size() || init_norm.size() != x.size())
      throw ContractViolation("gate state vectors have inconsistent lengths");
    for (double v : init_norm) {
      if (!(v > 0.0)) throw ContractViolation("gate init_norm entries must be positive");
    }
  }
};

// Builds a gate vector of length n with every x at initial_x. init_norm
// records each gate's starting value so normalized gates start at exactly 1.
inline GateState make_gate_state(GateKind kind, std::size_t n, double epsilon,
                                 double alpha = 0.0, double initial_x = 1.0) {
  GateState state;
  state.kind = kind;
  state.epsilon = epsilon;
  state.alpha = alpha;
  state.x.assign(n, initial_x);
  state.velocity.assign(n, 0.0);
  const double start = gate_value(kind, initial_x, epsilon, alpha);
  state.init_norm.assign(n, start);
  state.validate();
  return state;
}

inline double normalized_gate(const GateState& state, std::size_t i) {
  if (i >= state.x.size()) throw ContractViolation("gate index out of range");
  return gate_value(state.kind, state.x[i], state.epsilon, state.alpha) / state.init_norm[i];
}

inline std::vector<double> normalized_gates(const GateState& state) {
  std::vector<double> out(state.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = normalized_gate(state, i);
  return out;
}

// d normalized_gate(i) / d x_i.
inline double normalized_gate_grad(const GateState& state, std::size_t i) {
  return gate_grad(state.kind, state.x[i], state.epsilon, state.alpha) / state.init_norm[i];
}

inline double gate_rms(const GateState& state) {
  if (state.size() == 0) throw ContractViolation("gate_rms needs at least one gate");
  double sum = 0.0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    const double g = normalized_gate(state, i);
    sum += g * g;
  }
  return std::sqrt(sum / static_cast<double>(state.size()));
}

// RMS values this small are treated as degenerate and no rescale is applied.
inline constexpr double kMinRmsForRescale = 1e-12;

// Factor applied to categorical slots: 1/rms_value when rescaling is on.
inline double categorical_scale(const GateState& state) {
  if (!state.rms_rescale || state.rms_value < kMinRmsForRescale) return 1.0;
  return 1.0 / state.rms_value;
}

struct SignSplit {
  std::vector<double> magnitudes;
  std::vector<int> signs;
};

// magnitudes[i] * signs[i] == normalized_gate(i) exactly; sign(0) is +1.
inline SignSplit sign_split(const GateState& state) {
  SignSplit split;
  split.magnitudes.resize(state.size());
  split.signs.resize(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) {
    const double g = normalized_gate(state, i);
    split.signs[i] = std::signbit(g) && g != 0.0 ? -1 : 1;
    split.magnitudes[i] = std::fabs(g);
  }
  return split;
}

inline std::size_t zero_gate_count(const GateState& state) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (normalized_gate(state, i) == 0.0) ++n;
  }
  return n;
}

}  // namespace lpfs
