#pragma once

// Optimizers: proximal SGD with momentum for gate parameters and Adagrad for
// model parameters, plus the proximal-rate schedule.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "lpfs/errors.hpp"

namespace lpfs {

struct ProxConfig {
  double lambda = 0.004;
  double lr = 0.01;
  double lr_decay_factor = 0.9991;
  std::int64_t lr_decay_interval = 100;
  double lr_floor = 5e-4;
  double momentum = 0.9;

  void validate() const {
    if (lambda < 0.0) throw ContractViolation("prox lambda must be nonnegative");
    if (!(lr > 0.0)) throw ContractViolation("prox lr must be positive");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
      throw ContractViolation("prox lr decay factor must lie in (0,1]");
    if (lr_decay_interval <= 0) throw ContractViolation("prox lr interval must be positive");
    if (!(lr_floor > 0.0)) throw ContractViolation("prox lr floor must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw ContractViolation("momentum must lie in [0,1)");
  }
};

// lr * decay^(floor(step / interval)), never below lr_floor.
inline double lr_at(const ProxConfig& config, std::int64_t global_step) {
  if (global_step < 0) throw ContractViolation("global step must be nonnegative");
  const auto decays = static_cast<double>(global_step / config.lr_decay_interval);
  const double lr = config.lr * std::pow(config.lr_decay_factor, decays);
  return lr < config.lr_floor ? config.lr_floor : lr;
}

// Soft-threshold width used by the gate update: the l1 term lambda*|x|_1 is
// applied as a 2*lambda*lr shrinkage after each loss step.
inline double prox_threshold(double lambda, double lr) { return 2.0 * lambda * lr; }

struct MomentumStep {
  std::vector<double> x_tilde;
  std::vector<double> velocity;
};

// Heavy-ball step on the data loss only:
//   v' = momentum * v + grad,  x~ = x - lr * v'.
inline MomentumStep momentum_loss_step(std::span<const double> x,
                                       std::span<const double> grad_loss,
                                       std::span<const double> velocity, double lr,
                                       double momentum) {
  if (x.size() != grad_loss.size() || x.size() != velocity.size())
    throw ContractViolation("momentum_loss_step: length mismatch");
  MomentumStep out;
  out.x_tilde.resize(x.size());
  out.velocity.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.velocity[i] = momentum * velocity[i] + grad_loss[i];
    out.x_tilde[i] = x[i] - lr * out.velocity[i];
  }
  return out;
}

inline double soft_threshold(double value, double threshold) {
  if (value >= threshold) return value - threshold;
  if (value <= -threshold) return value + threshold;
  return 0.0;
}

// Componentwise soft-thresholding; entries inside (-t, t) become exactly 0.
inline std::vector<double> prox_l1(std::span<const double> x_tilde, double threshold) {
  if (threshold < 0.0) throw ContractViolation("prox_l1: negative threshold");
  std::vector<double> out(x_tilde.size());
  for (std::size_t i = 0; i < x_tilde.size(); ++i) out[i] = soft_threshold(x_tilde[i], threshold);
  return out;
}

// Multiplier of the group prox of t*||u||_2: max(0, 1 - t/||v||_2).
inline double group_shrink_factor(double norm, double threshold) {
  if (threshold < 0.0) throw ContractViolation("group prox: negative threshold");
  if (threshold == 0.0) return 1.0;
  if (norm <= threshold) return 0.0;
  return 1.0 - threshold / norm;
}

inline std::vector<double> group_soft_threshold(std::span<const double> v, double threshold) {
  double sq = 0.0;
  for (double e : v) sq += e * e;
  const double factor = group_shrink_factor(std::sqrt(sq), threshold);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = factor == 0.0 ? 0.0 : v[i] * factor;
  return out;
}

struct AdagradConfig {
  double lr = 0.01;
  double epsilon_stability = 1e-10;
};

// acc += g^2; param -= lr * g / (sqrt(acc) + eps). Operates on contiguous
// storage of one tensor.
inline void adagrad_step(std::span<double> param, std::span<const double> grad,
                         std::span<double> accumulator, const AdagradConfig& config) {
  if (param.size() != grad.size() || param.size() != accumulator.size())
    throw ContractViolation("adagrad_step: shape mismatch");
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    accumulator[i] += g * g;
    param[i] -= config.lr * g / (std::sqrt(accumulator[i]) + config.epsilon_stability);
  }
}

}  // namespace lpfs
