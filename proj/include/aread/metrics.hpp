#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "aread/mask.hpp"

namespace aread {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<int> domains;

  void push(double s, int y, int d) {
    scores.push_back(s);
    labels.push_back(y);
    domains.push_back(d);
  }
  size_t size() const { return scores.size(); }
};

struct SingleClassError : std::runtime_error {
  SingleClassError() : std::runtime_error("auc: input has a single class") {}
};

// Rank-sum AUC with ties counted as half wins: probability that a random
// positive outranks a random negative.
inline double auc(const std::vector<double>& scores,
                  const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("auc: length mismatch");
  size_t n = scores.size();
  long npos = 0;
  for (int y : labels) npos += y ? 1 : 0;
  long nneg = long(n) - npos;
  if (npos == 0 || nneg == 0) throw SingleClassError();

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t(0));
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  double pos_rank_sum = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    double avg_rank = 0.5 * (double(i + 1) + double(j));  // 1-based
    for (size_t k = i; k < j; ++k)
      if (labels[order[k]]) pos_rank_sum += avg_rank;
    i = j;
  }
  return (pos_rank_sum - double(npos) * double(npos + 1) / 2.0) /
         (double(npos) * double(nneg));
}

// Per-domain AUC weighted by sample counts. Domains with a single label
// class are excluded and the weights renormalized; their ids are reported
// through `excluded` when given.
inline double domain_auc(const ScoredSet& ss,
                         std::vector<int>* excluded = nullptr,
                         std::map<int, double>* per_domain = nullptr) {
  if (ss.size() == 0) throw std::invalid_argument("domain_auc: empty input");
  int D = 0;
  for (int d : ss.domains) D = std::max(D, d + 1);
  std::vector<std::vector<double>> sc{size_t(D)};
  std::vector<std::vector<int>> lb{size_t(D)};
  for (size_t i = 0; i < ss.size(); ++i) {
    sc[ss.domains[i]].push_back(ss.scores[i]);
    lb[ss.domains[i]].push_back(ss.labels[i]);
  }
  double wsum = 0.0, acc = 0.0;
  bool any = false;
  for (int d = 0; d < D; ++d) {
    if (sc[d].empty()) continue;
    try {
      double a = auc(sc[d], lb[d]);
      if (per_domain) (*per_domain)[d] = a;
      acc += double(sc[d].size()) * a;
      wsum += double(sc[d].size());
      any = true;
    } catch (const SingleClassError&) {
      if (excluded) excluded->push_back(d);
    }
  }
  if (!any)
    throw std::runtime_error("domain_auc: no domain has both classes");
  return acc / wsum;
}

enum class GroupKind { Largest, Smallest };

// DomainAUC restricted to the K largest (or smallest) domains by
// training-split sample count.
inline double group_auc(const ScoredSet& ss, GroupKind kind, int K,
                        const std::vector<long>& train_counts,
                        std::vector<int>* excluded = nullptr) {
  int D = int(train_counts.size());
  if (K > D) K = D;
  if (K < 1) throw std::invalid_argument("group_auc: K must be >= 1");
  std::vector<int> order(size_t(D), 0);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return kind == GroupKind::Largest ? train_counts[a] > train_counts[b]
                                      : train_counts[a] < train_counts[b];
  });
  std::vector<bool> keep(size_t(D), false);
  for (int i = 0; i < K; ++i) keep[order[i]] = true;

  ScoredSet sub;
  for (size_t i = 0; i < ss.size(); ++i)
    if (ss.domains[i] < D && keep[ss.domains[i]])
      sub.push(ss.scores[i], ss.labels[i], ss.domains[i]);
  return domain_auc(sub, excluded);
}

// Mask Overlap Ratio: kept-position intersection over union at one layer.
inline double overlap_ratio(const HierMask& m1, const HierMask& m2,
                            size_t layer) {
  if (!m1.same_shape(m2))
    throw std::invalid_argument("overlap_ratio: shape mismatch");
  if (layer >= m1.layers.size())
    throw std::invalid_argument("overlap_ratio: no such layer");
  long inter = 0, uni = 0;
  const auto &a = m1.layers[layer], &b = m2.layers[layer];
  for (size_t i = 0; i < a.m.size(); ++i) {
    inter += a.m[i] && b.m[i];
    uni += a.m[i] || b.m[i];
  }
  if (uni == 0)
    throw std::invalid_argument("overlap_ratio: both masks empty at layer");
  return double(inter) / double(uni);
}

// aggregate over all layers
inline double overlap_ratio(const HierMask& m1, const HierMask& m2) {
  if (!m1.same_shape(m2))
    throw std::invalid_argument("overlap_ratio: shape mismatch");
  long inter = 0, uni = 0;
  for (size_t l = 0; l < m1.layers.size(); ++l) {
    const auto &a = m1.layers[l], &b = m2.layers[l];
    for (size_t i = 0; i < a.m.size(); ++i) {
      inter += a.m[i] && b.m[i];
      uni += a.m[i] || b.m[i];
    }
  }
  if (uni == 0)
    throw std::invalid_argument("overlap_ratio: both masks empty");
  return double(inter) / double(uni);
}

}  // namespace aread
