#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "lpfs/errors.hpp"

namespace lpfs {

struct Metrics {
  double auc = 0.0;
  double logloss = 0.0;
  double accuracy = 0.0;
};

// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z)));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Binary cross-entropy of a logit against a {0,1} label.
inline double bce_with_logit(double logit, double label) {
  return softplus(logit) - label * logit;
}

// Area under the ROC curve via the Mann-Whitney rank statistic; tied scores
// share their average rank.
inline double auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw ContractViolation("auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  double n_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    // ranks are 1-based: positions i..j share (i+1 + j+1)/2
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] > 0.5) {
        positive_rank_sum += avg_rank;
        n_pos += 1.0;
      }
    }
    i = j + 1;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0)
    throw DataError("AUC is undefined: evaluation stream contains a single class");
  return (positive_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

inline double mean_logloss(std::span<const double> logits, std::span<const double> labels) {
  if (logits.size() != labels.size() || logits.empty())
    throw ContractViolation("logloss: empty or mismatched input");
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += bce_with_logit(logits[i], labels[i]);
  return sum / static_cast<double>(logits.size());
}

// Fraction of samples whose predicted probability lands on the right side of 0.5.
inline double accuracy(std::span<const double> logits, std::span<const double> labels) {
  if (logits.size() != labels.size() || logits.empty())
    throw ContractViolation("accuracy: empty or mismatched input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const bool predicted = logits[i] >= 0.0;
    if (predicted == (labels[i] > 0.5)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.size());
}

inline Metrics compute_metrics(std::span<const double> logits, std::span<const double> labels) {
  return Metrics{auc(logits, labels), mean_logloss(logits, labels), accuracy(logits, labels)};
}

}  // namespace lpfs
