#pragma once

// DLRM-style CTR network with input gates.
//
//   categorical ids --lookup--> field embeddings ----------------+
//   continuous      --dense MLP--> dense representation ---------+--> slots
//   (optional) pairwise element-wise products of the above ------+
//
// Each slot k is multiplied by its normalized gate, the gated slots are
// concatenated and the top MLP maps them to one click logit. Backward is an
// explicit reverse pass over this fixed topology.
//
// Activations are stored feature-major (rows = features, cols = batch).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lpfs/data.hpp"
#include "lpfs/errors.hpp"
#include "lpfs/gates.hpp"
#include "lpfs/metrics.hpp"
#include "lpfs/prox_optim.hpp"

namespace lpfs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct CategoricalField {
  std::string name;
  std::size_t cardinality = 0;
  std::size_t embedding_dim = 0;

  bool operator==(const CategoricalField&) const = default;
};

enum class SlotKind : std::uint8_t { kDense = 0, kCategorical = 1, kCross = 2 };

// One selectable input unit. For kCategorical `first` is the field index; for
// kCross `first < second` are base-slot indices (dense first when present,
// then the categorical fields in schema order).
struct SlotRef {
  SlotKind kind = SlotKind::kCategorical;
  std::size_t first = 0;
  std::size_t second = 0;

  bool operator==(const SlotRef&) const = default;
};

struct FeatureSchema {
  std::vector<CategoricalField> categorical_fields;
  std::size_t continuous_dim = 0;
  std::size_t dense_rep_dim = 16;
  bool cross_enabled = false;

  bool operator==(const FeatureSchema&) const = default;

  bool has_dense() const noexcept { return continuous_dim > 0; }
  std::size_t field_count() const noexcept { return categorical_fields.size(); }
  std::size_t base_slot_count() const noexcept { return field_count() + (has_dense() ? 1 : 0); }
  std::size_t cross_slot_count() const noexcept {
    const std::size_t base = base_slot_count();
    return cross_enabled ? base * (base - 1) / 2 : 0;
  }
  std::size_t slot_count() const noexcept { return base_slot_count() + cross_slot_count(); }

  // Base slot index -> {is_dense, field}.
  SlotRef base_slot(std::size_t base_index) const {
    if (base_index >= base_slot_count()) throw ContractViolation("base slot index out of range");
    if (has_dense()) {
      if (base_index == 0) return SlotRef{SlotKind::kDense, 0, 0};
      return SlotRef{SlotKind::kCategorical, base_index - 1, 0};
    }
    return SlotRef{SlotKind::kCategorical, base_index, 0};
  }

  std::size_t base_width(std::size_t base_index) const {
    const SlotRef s = base_slot(base_index);
    return s.kind == SlotKind::kDense ? dense_rep_dim : categorical_fields[s.first].embedding_dim;
  }

  std::size_t slot_width(const SlotRef& slot) const {
    switch (slot.kind) {
      case SlotKind::kDense: return dense_rep_dim;
      case SlotKind::kCategorical: return categorical_fields.at(slot.first).embedding_dim;
      case SlotKind::kCross: return base_width(slot.first);
    }
    return 0;
  }

  std::string slot_name(const SlotRef& slot) const {
    auto base_name = [&](std::size_t b) {
      const SlotRef s = base_slot(b);
      return s.kind == SlotKind::kDense ? std::string("dense") : categorical_fields[s.first].name;
    };
    switch (slot.kind) {
      case SlotKind::kDense: return "dense";
      case SlotKind::kCategorical: return categorical_fields.at(slot.first).name;
      case SlotKind::kCross: return base_name(slot.first) + "*" + base_name(slot.second);
    }
    return "";
  }

  void validate() const {
    if (base_slot_count() == 0) throw ContractViolation("schema has no feature slots");
    for (const auto& f : categorical_fields) {
      if (f.cardinality == 0 || f.embedding_dim == 0)
        throw ContractViolation("field '" + f.name + "' needs positive cardinality and width");
    }
    if (has_dense() && dense_rep_dim == 0) throw ContractViolation("dense_rep_dim must be positive");
    if (cross_enabled) {
      const std::size_t w = base_width(0);
      for (std::size_t b = 1; b < base_slot_count(); ++b) {
        if (base_width(b) != w)
          throw ContractViolation("cross features need one shared embedding width");
      }
    }
  }
};

// Uniform schema: n fields named C1..Cn of one cardinality and width.
inline FeatureSchema make_uniform_schema(std::size_t n_fields, std::size_t cardinality,
                                         std::size_t dim, std::size_t continuous_dim = 0,
                                         bool cross = false) {
  FeatureSchema schema;
  for (std::size_t f = 0; f < n_fields; ++f)
    schema.categorical_fields.push_back({"C" + std::to_string(f + 1), cardinality, dim});
  schema.continuous_dim = continuous_dim;
  schema.dense_rep_dim = dim;
  schema.cross_enabled = cross;
  return schema;
}

// Index of cross pair (i, j), i < j, among the C(base, 2) cross slots.
inline std::size_t cross_pair_index(std::size_t i, std::size_t j, std::size_t base) {
  if (!(i < j && j < base)) throw ContractViolation("cross pair must satisfy i < j < base");
  return i * base - i * (i + 1) / 2 + (j - i - 1);
}

inline std::pair<std::size_t, std::size_t> cross_pair_at(std::size_t k, std::size_t base) {
  for (std::size_t i = 0; i + 1 < base; ++i) {
    const std::size_t row = base - i - 1;
    if (k < row) return {i, i + 1 + k};
    k -= row;
  }
  throw ContractViolation("cross slot index out of range");
}

// Full slot layout: dense, categorical fields, then crosses in lexicographic
// pair order.
inline std::vector<SlotRef> all_slots(const FeatureSchema& schema) {
  std::vector<SlotRef> slots;
  slots.reserve(schema.slot_count());
  for (std::size_t b = 0; b < schema.base_slot_count(); ++b) slots.push_back(schema.base_slot(b));
  if (schema.cross_enabled) {
    const std::size_t base = schema.base_slot_count();
    for (std::size_t i = 0; i < base; ++i)
      for (std::size_t j = i + 1; j < base; ++j) slots.push_back(SlotRef{SlotKind::kCross, i, j});
  }
  return slots;
}

inline std::vector<std::string> slot_names(const FeatureSchema& schema, std::span<const SlotRef> slots) {
  std::vector<std::string> names;
  names.reserve(slots.size());
  for (const SlotRef& s : slots) names.push_back(schema.slot_name(s));
  return names;
}

// ---------------------------------------------------------------------------
// Parameters

struct Linear {
  Matrix weight;  // out x in
  Vector bias;    // out

  bool operator==(const Linear& o) const { return weight == o.weight && bias == o.bias; }
};

// ReLU between layers, linear output.
struct Mlp {
  std::vector<Linear> layers;

  bool empty() const noexcept { return layers.empty(); }
  std::size_t input_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.cols()); }
  std::size_t output_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.rows()); }
  bool operator==(const Mlp& o) const { return layers == o.layers; }
};

struct AdagradState {
  AdagradConfig config;
  std::vector<Matrix> tables;
  std::vector<Linear> dense;
  std::vector<Linear> top;

  bool operator==(const AdagradState& o) const {
    return config.lr == o.config.lr && config.epsilon_stability == o.config.epsilon_stability &&
           tables == o.tables && dense == o.dense && top == o.top;
  }
};

// A model is a schema, the ordered list of slots it feeds to the top MLP, and
// all tensors. Tables of fields no slot references are kept with zero columns.
struct ModelParams {
  FeatureSchema schema;
  std::vector<SlotRef> slots;
  std::vector<Matrix> tables;  // per field: width x cardinality
  Mlp dense_mlp;
  Mlp top_mlp;
  AdagradState adagrad;

  std::size_t slot_count() const noexcept { return slots.size(); }

  std::size_t top_input_dim() const {
    std::size_t w = 0;
    for (const SlotRef& s : slots) w += schema.slot_width(s);
    return w;
  }

  std::vector<std::string> slot_names() const { return lpfs::slot_names(schema, slots); }

  bool operator==(const ModelParams& o) const {
    return schema == o.schema && slots == o.slots && tables == o.tables && dense_mlp == o.dense_mlp &&
           top_mlp == o.top_mlp && adagrad == o.adagrad;
  }
};

struct ModelInit {
  std::vector<std::size_t> top_hidden{256, 128};
  std::vector<std::size_t> dense_hidden{32};
  AdagradConfig adagrad{};
  std::uint64_t seed = 7;
};

namespace detail {

inline Linear make_linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Linear l{Matrix(out, in), Vector::Zero(static_cast<Eigen::Index>(out))};
  for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) l.weight(r, c) = dist(rng);
  return l;
}

inline Mlp make_mlp(std::size_t in, std::span<const std::size_t> hidden, std::size_t out,
                    std::mt19937_64& rng) {
  Mlp mlp;
  std::size_t prev = in;
  for (std::size_t h : hidden) {
    mlp.layers.push_back(make_linear(prev, h, rng));
    prev = h;
  }
  mlp.layers.push_back(make_linear(prev, out, rng));
  return mlp;
}

inline std::vector<Linear> zeros_like(const std::vector<Linear>& layers) {
  std::vector<Linear> out;
  out.reserve(layers.size());
  for (const Linear& l : layers)
    out.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  return out;
}

}  // namespace detail

inline void reset_adagrad(ModelParams& model) {
  model.adagrad.tables.clear();
  for (const Matrix& t : model.tables) model.adagrad.tables.push_back(Matrix::Zero(t.rows(), t.cols()));
  model.adagrad.dense = detail::zeros_like(model.dense_mlp.layers);
  model.adagrad.top = detail::zeros_like(model.top_mlp.layers);
}

// Embeddings ~ U(+-1/sqrt(width)); linear layers ~ U(+-1/sqrt(fan_in)) with
// zero bias.
inline ModelParams init_model(const FeatureSchema& schema, const ModelInit& init = {}) {
  schema.validate();
  ModelParams model;
  model.schema = schema;
  model.slots = all_slots(schema);
  std::mt19937_64 rng(init.seed);
  for (const auto& f : schema.categorical_fields) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(f.embedding_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix t(f.embedding_dim, f.cardinality);
    for (Eigen::Index c = 0; c < t.cols(); ++c)
      for (Eigen::Index r = 0; r < t.rows(); ++r) t(r, c) = dist(rng);
    model.tables.push_back(std::move(t));
  }
  if (schema.has_dense())
    model.dense_mlp = detail::make_mlp(schema.continuous_dim, init.dense_hidden, schema.dense_rep_dim, rng);
  model.top_mlp = detail::make_mlp(model.top_input_dim(), init.top_hidden, 1, rng);
  model.adagrad.config = init.adagrad;
  reset_adagrad(model);
  return model;
}

// ---------------------------------------------------------------------------
// MLP forward/backward
//
// The cache owns every activation buffer, so a cache reused across batches of
// the same size performs no allocation.

struct MlpCache {
  std::vector<Matrix> inputs;  // input to each layer; inputs[0] is the MLP input
  std::vector<Matrix> pre;     // pre-activation of each layer; pre.back() is the output
  std::vector<Matrix> delta;   // delta[l]: d loss / d inputs[l]; delta.back(): d loss / d output

  const Matrix& output() const { return pre.back(); }
};

// Runs the MLP on cache.inputs[0] and returns the output.
inline const Matrix& mlp_forward_cached(const Mlp& mlp, MlpCache& cache) {
  const std::size_t n = mlp.layers.size();
  cache.inputs.resize(n);
  cache.pre.resize(n);
  for (std::size_t l = 0; l < n; ++l) {
    const Linear& layer = mlp.layers[l];
    Matrix& z = cache.pre[l];
    z.resize(layer.weight.rows(), cache.inputs[l].cols());
    z.noalias() = layer.weight * cache.inputs[l];
    z.colwise() += layer.bias;
    if (l + 1 < n) cache.inputs[l + 1] = z.cwiseMax(0.0);
  }
  return cache.pre.back();
}

inline Matrix mlp_forward(const Mlp& mlp, const Matrix& input, MlpCache* cache = nullptr) {
  MlpCache local;
  MlpCache& c = cache ? *cache : local;
  c.inputs.resize(std::max<std::size_t>(1, mlp.layers.size()));
  c.inputs[0] = input;
  return mlp_forward_cached(mlp, c);
}

// Expects d loss / d output in cache.delta.back() (sized by the caller after
// resizing delta to layers + 1). Accumulates parameter gradients into `grads`
// and, when `input_grad` is set, fills cache.delta[0].
inline void mlp_backward_cached(const Mlp& mlp, MlpCache& cache, std::vector<Linear>& grads, bool input_grad = true) {
  const std::size_t n = mlp.layers.size();
  for (std::size_t l = n; l-- > 0;) {
    Matrix& d_out = cache.delta[l + 1];
    if (l + 1 < n) d_out.array() *= (cache.pre[l].array() > 0.0).cast<double>();
    grads[l].weight.noalias() += d_out * cache.inputs[l].transpose();
    grads[l].bias += d_out.rowwise().sum();
    if (l == 0 && !input_grad) break;
    Matrix& d_in = cache.delta[l];
    d_in.resize(mlp.layers[l].weight.cols(), d_out.cols());
    d_in.noalias() = mlp.layers[l].weight.transpose() * d_out;
  }
}

// Accumulates parameter gradients into `grads` and returns d loss / d input.
inline Matrix mlp_backward(const Mlp& mlp, MlpCache& cache, const Matrix& d_out, std::vector<Linear>& grads) {
  cache.delta.resize(mlp.layers.size() + 1);
  cache.delta.back() = d_out;
  mlp_backward_cached(mlp, cache, grads);
  return cache.delta[0];
}

// ---------------------------------------------------------------------------
// Slot construction

namespace detail {

inline void check_batch(const ModelParams& model, const Minibatch& batch) {
  const FeatureSchema& s = model.schema;
  if (batch.size() == 0) throw DataError("empty minibatch");
  if (batch.n_fields != s.field_count() || batch.continuous_dim != s.continuous_dim)
    throw DataError("minibatch layout does not match the model schema");
}

inline void check_gates(const ModelParams& model, const GateState* gates) {
  if (gates && gates->size() != model.slot_count()) {
    throw ContractViolation("gate count " + std::to_string(gates->size()) + " does not match slot count " +
                            std::to_string(model.slot_count()));
  }
}

// Which fields / dense rep the active slots read, including through crosses.
struct SlotUsage {
  std::vector<bool> field;
  bool dense = false;
};

inline SlotUsage slot_usage(const ModelParams& model) {
  SlotUsage use{std::vector<bool>(model.schema.field_count(), false), false};
  auto mark_base = [&](std::size_t b) {
    const SlotRef s = model.schema.base_slot(b);
    if (s.kind == SlotKind::kDense) {
      use.dense = true;
    } else {
      use.field[s.first] = true;
    }
  };
  for (const SlotRef& slot : model.slots) {
    switch (slot.kind) {
      case SlotKind::kDense: use.dense = true; break;
      case SlotKind::kCategorical: use.field[slot.first] = true; break;
      case SlotKind::kCross:
        mark_base(slot.first);
        mark_base(slot.second);
        break;
    }
  }
  return use;
}

inline void gather_into(Matrix& out, const Matrix& table, const Minibatch& batch, std::size_t field,
                        const std::string& name) {
  const auto b = static_cast<Eigen::Index>(batch.size());
  const auto w = static_cast<std::size_t>(table.rows());
  out.resize(table.rows(), b);
  for (Eigen::Index r = 0; r < b; ++r) {
    const std::uint32_t id = batch.id(static_cast<std::size_t>(r), field);
    if (id >= static_cast<std::uint64_t>(table.cols())) {
      throw DataError("id " + std::to_string(id) + " out of range for field '" + name + "' at batch row " +
                      std::to_string(r));
    }
    std::copy_n(table.data() + std::size_t{id} * w, w, out.data() + static_cast<std::size_t>(r) * w);
  }
}

inline void continuous_into(Matrix& out, const Minibatch& batch) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMajor> m(batch.continuous.data(), static_cast<Eigen::Index>(batch.size()),
                               static_cast<Eigen::Index>(batch.continuous_dim));
  out = m.transpose();
}

inline void check_dense(const ModelParams& model) {
  if (model.schema.continuous_dim == 0) throw ContractViolation("dense_rep: schema has no continuous features");
  if (model.dense_mlp.empty()) throw ContractViolation("dense_rep: model has no dense MLP");
}

}  // namespace detail

// Per-field embedding blocks (width x B), one per schema field.
inline std::vector<Matrix> embed_lookup(const ModelParams& model, const Minibatch& batch) {
  detail::check_batch(model, batch);
  std::vector<Matrix> out(model.schema.field_count());
  for (std::size_t f = 0; f < out.size(); ++f)
    detail::gather_into(out[f], model.tables[f], batch, f, model.schema.categorical_fields[f].name);
  return out;
}

// Dense representation (dense_rep_dim x B) of the continuous block.
inline Matrix dense_rep(const ModelParams& model, const Minibatch& batch) {
  detail::check_dense(model);
  MlpCache cache;
  cache.inputs.resize(model.dense_mlp.layers.size());
  detail::continuous_into(cache.inputs[0], batch);
  return mlp_forward_cached(model.dense_mlp, cache);
}

// Element-wise products of every unordered pair of base slots, in
// lexicographic pair order.
inline std::vector<Matrix> cross_slots(std::span<const Matrix> base) {
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < base.size(); ++i)
    for (std::size_t j = i + 1; j < base.size(); ++j) out.push_back(base[i].cwiseProduct(base[j]));
  return out;
}

struct ForwardOptions {
  // When set, the given slot's values are permuted across batch rows:
  // row r reads row permutation[r].
  std::optional<std::size_t> permute_slot;
  std::span<const std::size_t> permutation;
};

struct ForwardCache {
  std::size_t batch = 0;
  std::vector<Matrix> field_emb;  // unscaled lookups, stale for unused fields
  bool uses_dense = false;
  MlpCache dense_cache;
  // Slot k before its gate multiplier is slot_scale[k] * source(k), where the
  // source is owned[slot_owned[k]] for crosses and permuted slots and the base
  // lookup otherwise.
  std::vector<Matrix> owned;
  std::vector<std::ptrdiff_t> slot_owned;
  std::vector<double> slot_scale;
  std::vector<double> slot_mult;  // normalized gate (1 when ungated)
  std::vector<std::size_t> offsets;
  double cat_scale = 1.0;
  MlpCache top_cache;
  Vector logits;

  const Matrix& dense_out() const { return dense_cache.output(); }
};

namespace detail {

inline const Matrix& base_value(const ModelParams& model, const ForwardCache& c, std::size_t b) {
  const SlotRef s = model.schema.base_slot(b);
  return s.kind == SlotKind::kDense ? c.dense_out() : c.field_emb[s.first];
}

inline const Matrix& slot_source(const ModelParams& model, const ForwardCache& c, std::size_t k) {
  if (c.slot_owned[k] >= 0) return c.owned[static_cast<std::size_t>(c.slot_owned[k])];
  const SlotRef& slot = model.slots[k];
  return slot.kind == SlotKind::kDense ? c.dense_out() : c.field_emb[slot.first];
}

}  // namespace detail

// Forward pass that keeps every intermediate needed by the backward pass in `c`.
inline void forward_into(const ModelParams& model, const GateState* gates, const Minibatch& batch,
                         const ForwardOptions& options, ForwardCache& c) {
  detail::check_batch(model, batch);
  detail::check_gates(model, gates);
  const FeatureSchema& schema = model.schema;
  c.batch = batch.size();
  const auto b = static_cast<Eigen::Index>(batch.size());
  const detail::SlotUsage use = detail::slot_usage(model);

  c.field_emb.resize(schema.field_count());
  for (std::size_t f = 0; f < schema.field_count(); ++f) {
    if (use.field[f]) detail::gather_into(c.field_emb[f], model.tables[f], batch, f, schema.categorical_fields[f].name);
  }
  c.uses_dense = use.dense;
  if (use.dense) {
    detail::check_dense(model);
    c.dense_cache.inputs.resize(model.dense_mlp.layers.size());
    detail::continuous_into(c.dense_cache.inputs[0], batch);
    mlp_forward_cached(model.dense_mlp, c.dense_cache);
  }

  c.cat_scale = gates ? categorical_scale(*gates) : 1.0;
  const std::size_t n = model.slot_count();
  std::size_t n_owned = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (model.slots[k].kind == SlotKind::kCross || (options.permute_slot && *options.permute_slot == k)) ++n_owned;
  }
  c.owned.resize(n_owned);
  c.slot_owned.assign(n, -1);
  c.slot_scale.assign(n, 1.0);
  c.slot_mult.assign(n, 1.0);
  c.offsets.assign(n + 1, 0);
  std::size_t next_owned = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const SlotRef& slot = model.slots[k];
    switch (slot.kind) {
      case SlotKind::kDense: break;
      case SlotKind::kCategorical: c.slot_scale[k] = c.cat_scale; break;
      case SlotKind::kCross: {
        Matrix& prod = c.owned[next_owned];
        prod = detail::base_value(model, c, slot.first).cwiseProduct(detail::base_value(model, c, slot.second));
        c.slot_owned[k] = static_cast<std::ptrdiff_t>(next_owned++);
        break;
      }
    }
    if (options.permute_slot && *options.permute_slot == k) {
      if (options.permutation.size() != batch.size())
        throw ContractViolation("slot permutation length must equal the batch size");
      const Matrix& src = detail::slot_source(model, c, k);
      Matrix permuted(src.rows(), b);
      for (Eigen::Index r = 0; r < b; ++r)
        permuted.col(r) = src.col(static_cast<Eigen::Index>(options.permutation[static_cast<std::size_t>(r)]));
      if (slot.kind == SlotKind::kCross) {
        c.owned[next_owned - 1] = std::move(permuted);
      } else {
        c.owned[next_owned] = std::move(permuted);
        c.slot_owned[k] = static_cast<std::ptrdiff_t>(next_owned++);
      }
    }
    if (gates) c.slot_mult[k] = normalized_gate(*gates, k);
    c.offsets[k + 1] = c.offsets[k] + static_cast<std::size_t>(detail::slot_source(model, c, k).rows());
  }

  // Assembled column by column: each batch row is contiguous in both the
  // sources and the concatenation.
  std::vector<const double*> src(n);
  std::vector<double> coef(n);
  for (std::size_t k = 0; k < n; ++k) {
    src[k] = detail::slot_source(model, c, k).data();
    coef[k] = c.slot_mult[k] * c.slot_scale[k];
  }
  c.top_cache.inputs.resize(model.top_mlp.layers.size());
  Matrix& x = c.top_cache.inputs[0];
  x.resize(static_cast<Eigen::Index>(c.offsets[n]), b);
  for (Eigen::Index r = 0; r < b; ++r) {
    double* xc = x.col(r).data();
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t w = c.offsets[k + 1] - c.offsets[k];
      const double* sk = src[k] + static_cast<std::size_t>(r) * w;
      double* out = xc + c.offsets[k];
      for (std::size_t i = 0; i < w; ++i) out[i] = coef[k] * sk[i];
    }
  }
  c.logits = mlp_forward_cached(model.top_mlp, c.top_cache).row(0).transpose();
}

inline ForwardCache forward_cached(const ModelParams& model, const GateState* gates, const Minibatch& batch,
                                   const ForwardOptions& options = {}) {
  ForwardCache c;
  forward_into(model, gates, batch, options, c);
  return c;
}

// Pre-sigmoid click logits for the batch.
inline Vector forward(const ModelParams& model, const GateState* gates, const Minibatch& batch,
                      const ForwardOptions& options = {}) {
  return forward_cached(model, gates, batch, options).logits;
}

// Embedding-table gradient restricted to the columns the batch touched.
struct SparseColumns {
  std::vector<std::uint32_t> ids;  // unique, in order of first appearance
  Matrix values;                   // width x ids.size()
};

struct ModelGrads {
  std::vector<SparseColumns> tables;  // empty ids for fields that got no gradient
  std::vector<Linear> dense;
  std::vector<Linear> top;
};

struct LossAndGrads {
  double loss = 0.0;
  ModelGrads grads;
  std::vector<double> grad_gate;  // d loss / d normalized gate, per slot
  std::vector<double> grad_x;     // d loss / d gate parameter, per slot
};

// Buffers reused across training steps.
struct TrainWorkspace {
  ForwardCache fwd;
  LossAndGrads result;
  std::vector<Matrix> d_field;
  std::vector<char> field_touched;
  std::vector<std::int32_t> position;  // id -> column in SparseColumns, -1 when absent
};

namespace detail {

inline void zero_like(std::vector<Linear>& out, const std::vector<Linear>& layers) {
  out.resize(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    out[l].weight.setZero(layers[l].weight.rows(), layers[l].weight.cols());
    out[l].bias.setZero(layers[l].bias.size());
  }
}

}  // namespace detail

// Mean binary cross-entropy over the batch and its exact gradients. The
// result lives in ws.result and is overwritten by the next call.
inline const LossAndGrads& loss_and_grads(const ModelParams& model, const GateState* gates, const Minibatch& batch,
                                          TrainWorkspace& ws) {
  ForwardCache& c = ws.fwd;
  forward_into(model, gates, batch, {}, c);
  const FeatureSchema& schema = model.schema;
  const auto b = static_cast<Eigen::Index>(batch.size());
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const std::size_t n = model.slot_count();

  LossAndGrads& out = ws.result;
  out.grad_gate.clear();
  out.grad_x.clear();
  MlpCache& top = c.top_cache;
  top.delta.resize(model.top_mlp.layers.size() + 1);
  Matrix& d_logit = top.delta.back();
  d_logit.resize(1, b);
  double loss = 0.0;
  for (Eigen::Index r = 0; r < b; ++r) {
    const double z = c.logits(r);
    const double y = batch.labels[static_cast<std::size_t>(r)];
    loss += bce_with_logit(z, y);
    d_logit(0, r) = (sigmoid(z) - y) * inv_b;
  }
  out.loss = loss * inv_b;
  out.grads.tables.resize(schema.field_count());
  for (SparseColumns& sc : out.grads.tables) sc.ids.clear();
  if (!std::isfinite(out.loss)) return out;

  detail::zero_like(out.grads.top, model.top_mlp.layers);
  mlp_backward_cached(model.top_mlp, top, out.grads.top);
  const Matrix& d_x = top.delta[0];

  // Only bases that receive gradient get a zeroed buffer; a fully gated-off
  // field leaves its table gradient empty.
  ws.d_field.resize(schema.field_count());
  ws.field_touched.assign(schema.field_count(), 0);
  char dense_touched = 0;
  MlpCache& dense = c.dense_cache;
  if (c.uses_dense) dense.delta.resize(model.dense_mlp.layers.size() + 1);
  auto base_grad = [&](std::size_t base) -> Matrix& {
    const SlotRef s = schema.base_slot(base);
    return s.kind == SlotKind::kDense ? dense.delta.back() : ws.d_field[s.first];
  };
  auto touch = [&](std::size_t base) {
    const SlotRef s = schema.base_slot(base);
    char& flag = s.kind == SlotKind::kDense ? dense_touched : ws.field_touched[s.first];
    if (flag) return;
    flag = 1;
    base_grad(base).setZero(detail::base_value(model, c, base).rows(), b);
  };
  const std::size_t dense_offset = schema.has_dense() ? 1 : 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (c.slot_mult[k] == 0.0) continue;
    const SlotRef& slot = model.slots[k];
    switch (slot.kind) {
      case SlotKind::kDense: touch(0); break;
      case SlotKind::kCategorical: touch(slot.first + dense_offset); break;
      case SlotKind::kCross:
        touch(slot.first);
        touch(slot.second);
        break;
    }
  }

  struct SlotPlan {
    const double* value = nullptr;
    const double* a = nullptr;  // cross operands
    const double* b = nullptr;
    double* ga = nullptr;       // gradient targets
    double* gb = nullptr;
    std::size_t width = 0;
    std::size_t wa = 0;
    std::size_t wb = 0;
    double coef = 0.0;
  };
  std::vector<SlotPlan> plan(n);
  for (std::size_t k = 0; k < n; ++k) {
    const SlotRef& slot = model.slots[k];
    SlotPlan& p = plan[k];
    p.value = detail::slot_source(model, c, k).data();
    p.width = c.offsets[k + 1] - c.offsets[k];
    p.coef = c.slot_mult[k];
    if (p.coef == 0.0) continue;
    switch (slot.kind) {
      case SlotKind::kDense: p.ga = base_grad(0).data(); break;
      case SlotKind::kCategorical:
        p.ga = ws.d_field[slot.first].data();
        p.coef *= c.cat_scale;
        break;
      case SlotKind::kCross: {
        const Matrix& va = detail::base_value(model, c, slot.first);
        const Matrix& vb = detail::base_value(model, c, slot.second);
        p.a = va.data();
        p.b = vb.data();
        p.ga = base_grad(slot.first).data();
        p.gb = base_grad(slot.second).data();
        p.wa = static_cast<std::size_t>(va.rows());
        p.wb = static_cast<std::size_t>(vb.rows());
        break;
      }
    }
  }

  std::vector<double> gate_dot(n, 0.0);
  for (Eigen::Index r = 0; r < b; ++r) {
    const auto ru = static_cast<std::size_t>(r);
    const double* dc = d_x.col(r).data();
    for (std::size_t k = 0; k < n; ++k) {
      const SlotPlan& p = plan[k];
      const double* d = dc + c.offsets[k];
      const double* v = p.value + ru * p.width;
      double dot = 0.0;
      for (std::size_t i = 0; i < p.width; ++i) dot += d[i] * v[i];
      gate_dot[k] += dot;
      if (p.coef == 0.0) continue;
      if (p.a == nullptr) {
        double* g = p.ga + ru * p.width;
        for (std::size_t i = 0; i < p.width; ++i) g[i] += p.coef * d[i];
      } else {
        const double* va = p.a + ru * p.wa;
        const double* vb = p.b + ru * p.wb;
        double* ga = p.ga + ru * p.wa;
        double* gb = p.gb + ru * p.wb;
        for (std::size_t i = 0; i < p.width; ++i) {
          ga[i] += p.coef * d[i] * vb[i];
          gb[i] += p.coef * d[i] * va[i];
        }
      }
    }
  }
  if (gates) {
    out.grad_gate.resize(n);
    out.grad_x.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      out.grad_gate[k] = c.slot_scale[k] * gate_dot[k];
      out.grad_x[k] = out.grad_gate[k] * normalized_gate_grad(*gates, k);
    }
  }

  for (std::size_t f = 0; f < schema.field_count(); ++f) {
    if (!ws.field_touched[f]) continue;
    const auto card = static_cast<std::size_t>(model.tables[f].cols());
    if (ws.position.size() < card) ws.position.resize(card, -1);
    SparseColumns& sc = out.grads.tables[f];
    const Matrix& d = ws.d_field[f];
    const auto w = static_cast<std::size_t>(d.rows());
    sc.values.resize(d.rows(), b);
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const std::uint32_t id = batch.id(r, f);
      const double* src = d.data() + r * w;
      std::int32_t& pos = ws.position[id];
      if (pos < 0) {
        pos = static_cast<std::int32_t>(sc.ids.size());
        sc.ids.push_back(id);
        std::copy_n(src, w, sc.values.data() + static_cast<std::size_t>(pos) * w);
      } else {
        double* dst = sc.values.data() + static_cast<std::size_t>(pos) * w;
        for (std::size_t i = 0; i < w; ++i) dst[i] += src[i];
      }
    }
    for (const std::uint32_t id : sc.ids) ws.position[id] = -1;
    sc.values.conservativeResize(Eigen::NoChange, static_cast<Eigen::Index>(sc.ids.size()));
  }
  if (!model.dense_mlp.empty()) {
    detail::zero_like(out.grads.dense, model.dense_mlp.layers);
    if (dense_touched) mlp_backward_cached(model.dense_mlp, dense, out.grads.dense, false);
  } else {
    out.grads.dense.clear();
  }
  return out;
}

inline LossAndGrads loss_and_grads(const ModelParams& model, const GateState* gates, const Minibatch& batch) {
  TrainWorkspace ws;
  loss_and_grads(model, gates, batch, ws);
  return std::move(ws.result);
}

// One Adagrad step on every model tensor; embedding tables only on touched
// columns, which is identical to a dense step with zero gradient elsewhere.
inline void apply_adagrad(ModelParams& model, const ModelGrads& grads) {
  const AdagradConfig& cfg = model.adagrad.config;
  auto step = [&](auto& param, const auto& grad, auto& acc) {
    adagrad_step(std::span<double>(param.data(), static_cast<std::size_t>(param.size())),
                 std::span<const double>(grad.data(), static_cast<std::size_t>(grad.size())),
                 std::span<double>(acc.data(), static_cast<std::size_t>(acc.size())), cfg);
  };
  for (std::size_t f = 0; f < grads.tables.size(); ++f) {
    const SparseColumns& sc = grads.tables[f];
    for (std::size_t u = 0; u < sc.ids.size(); ++u) {
      auto p = model.tables[f].col(sc.ids[u]);
      auto a = model.adagrad.tables[f].col(sc.ids[u]);
      const auto g = sc.values.col(static_cast<Eigen::Index>(u));
      for (Eigen::Index r = 0; r < p.size(); ++r) {
        a(r) += g(r) * g(r);
        p(r) -= cfg.lr * g(r) / (std::sqrt(a(r)) + cfg.epsilon_stability);
      }
    }
  }
  for (std::size_t l = 0; l < grads.dense.size(); ++l) {
    step(model.dense_mlp.layers[l].weight, grads.dense[l].weight, model.adagrad.dense[l].weight);
    step(model.dense_mlp.layers[l].bias, grads.dense[l].bias, model.adagrad.dense[l].bias);
  }
  for (std::size_t l = 0; l < grads.top.size(); ++l) {
    step(model.top_mlp.layers[l].weight, grads.top[l].weight, model.adagrad.top[l].weight);
    step(model.top_mlp.layers[l].bias, grads.top[l].bias, model.adagrad.top[l].bias);
  }
}

inline std::vector<double> predict_logits(const ModelParams& model, const GateState* gates, const Dataset& data,
                                          std::size_t batch_size = 4096) {
  if (data.empty()) throw DataError("cannot predict on an empty dataset");
  std::vector<double> logits;
  logits.reserve(data.size());
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t count = std::min(batch_size, data.size() - begin);
    const Vector z = forward(model, gates, data.batch(begin, count));
    logits.insert(logits.end(), z.data(), z.data() + z.size());
  }
  return logits;
}

// AUC (rank statistic), mean logloss and 0.5-threshold accuracy over a dataset.
inline Metrics evaluate(const ModelParams& model, const GateState* gates, const Dataset& data,
                        std::size_t batch_size = 4096) {
  const std::vector<double> logits = predict_logits(model, gates, data, batch_size);
  return compute_metrics(logits, data.labels);
}

}  // namespace lpfs
