#pragma once

// Finite-difference check of every gradient loss_and_grads returns.

#include <algorithm>
#include <string>
#include <vector>

#include "fd.hpp"
#include "lpfs/ctr_model.hpp"

namespace lpfs::testing {

struct TensorCheck {
  std::string name;
  double worst = 0.0;
  std::size_t entries = 0;
};

struct GradCheck {
  std::vector<TensorCheck> tensors;
  double worst() const {
    double w = 0.0;
    for (const auto& t : tensors) w = std::max(w, t.worst);
    return w;
  }
};

namespace detail {

inline double fd_of(double& slot, double h, const auto& loss) {
  const double saved = slot;
  const double d = ridders_derivative(
      [&](double v) {
        slot = v;
        return loss();
      },
      saved, h);
  slot = saved;
  return d;
}

inline void check_matrix(GradCheck& out, const std::string& name, Matrix& param, const Matrix& grad, double h,
                         const auto& loss) {
  TensorCheck t{name, 0.0, 0};
  for (Eigen::Index c = 0; c < param.cols(); ++c)
    for (Eigen::Index r = 0; r < param.rows(); ++r) {
      const double fd = fd_of(param(r, c), h, loss);
      t.worst = std::max(t.worst, relative_error(grad(r, c), fd));
      ++t.entries;
    }
  out.tensors.push_back(t);
}

}  // namespace detail

// Central differences (initial step h, Ridders-extrapolated) of the batch loss
// against the analytic gradients of every table, weight, bias and gate.
inline GradCheck check_gradients(ModelParams model, GateState* gates, const Minibatch& batch, double h = 1e-4) {
  const LossAndGrads lg = loss_and_grads(model, gates, batch);
  const auto loss = [&] { return loss_and_grads(model, gates, batch).loss; };
  GradCheck out;
  for (std::size_t f = 0; f < model.tables.size(); ++f) {
    Matrix dense = Matrix::Zero(model.tables[f].rows(), model.tables[f].cols());
    if (f < lg.grads.tables.size()) {
      const SparseColumns& sc = lg.grads.tables[f];
      for (std::size_t u = 0; u < sc.ids.size(); ++u) dense.col(sc.ids[u]) += sc.values.col(static_cast<Eigen::Index>(u));
    }
    detail::check_matrix(out, "table" + std::to_string(f), model.tables[f], dense, h, loss);
  }
  for (std::size_t l = 0; l < model.dense_mlp.layers.size(); ++l) {
    detail::check_matrix(out, "dense.w" + std::to_string(l), model.dense_mlp.layers[l].weight, lg.grads.dense.at(l).weight,
                         h, loss);
    Matrix b = model.dense_mlp.layers[l].bias;
    TensorCheck t{"dense.b" + std::to_string(l), 0.0, 0};
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      t.worst = std::max(t.worst, relative_error(lg.grads.dense[l].bias(i),
                                                 detail::fd_of(model.dense_mlp.layers[l].bias(i), h, loss)));
      ++t.entries;
    }
    out.tensors.push_back(t);
  }
  for (std::size_t l = 0; l < model.top_mlp.layers.size(); ++l) {
    detail::check_matrix(out, "top.w" + std::to_string(l), model.top_mlp.layers[l].weight, lg.grads.top.at(l).weight, h,
                         loss);
    TensorCheck t{"top.b" + std::to_string(l), 0.0, 0};
    for (Eigen::Index i = 0; i < model.top_mlp.layers[l].bias.size(); ++i) {
      t.worst = std::max(t.worst, relative_error(lg.grads.top[l].bias(i),
                                                 detail::fd_of(model.top_mlp.layers[l].bias(i), h, loss)));
      ++t.entries;
    }
    out.tensors.push_back(t);
  }
  if (gates) {
    TensorCheck t{"grad_x", 0.0, 0};
    for (std::size_t k = 0; k < gates->size(); ++k) {
      t.worst = std::max(t.worst, relative_error(lg.grad_x[k], detail::fd_of(gates->x[k], h, loss)));
      ++t.entries;
    }
    out.tensors.push_back(t);
  }
  return out;
}

}  // namespace lpfs::testing
