#pragma once

// Small random models and datasets for tests.

#include <cstdint>
#include <random>
#include <vector>

#include "lpfs/ctr_model.hpp"
#include "lpfs/data.hpp"
#include "lpfs/gates.hpp"

namespace lpfs::testing {

inline Dataset random_dataset(std::size_t n, std::size_t fields, std::size_t cardinality, std::size_t cont,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> id(0, static_cast<std::uint32_t>(cardinality - 1));
  std::normal_distribution<double> x;
  Dataset d(fields, cont);
  std::vector<std::uint32_t> ids(fields);
  std::vector<double> c(cont);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : ids) v = id(rng);
    for (auto& v : c) v = x(rng);
    d.push_back(i % 2 == 0 ? 1.0 : 0.0, ids, c);
  }
  return d;
}

inline ModelParams tiny_model(std::size_t fields, std::size_t cardinality, std::size_t dim, std::size_t cont,
                              bool cross, std::uint64_t seed, std::vector<std::size_t> top = {5, 4},
                              std::vector<std::size_t> dense = {3}) {
  FeatureSchema s = make_uniform_schema(fields, cardinality, dim, cont, cross);
  s.dense_rep_dim = dim;
  ModelInit init;
  init.top_hidden = std::move(top);
  init.dense_hidden = std::move(dense);
  init.seed = seed;
  return init_model(s, init);
}

// Gates with mixed-sign parameters away from zero.
inline GateState random_gates(GateKind kind, std::size_t n, double eps, double alpha, std::uint64_t seed) {
  GateState g = make_gate_state(kind, n, eps, alpha);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(0.3, 1.5);
  std::bernoulli_distribution neg(0.3);
  for (double& x : g.x) x = (neg(rng) ? -1.0 : 1.0) * mag(rng);
  return g;
}

}  // namespace lpfs::testing
