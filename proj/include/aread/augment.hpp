#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "aread/data.hpp"
#include "aread/rng.hpp"

namespace aread {

// Per-domain positive-interaction popularity, normalized by the domain's
// most-popular item. Items below the domain's threshold rho_d count as
// unpopular. Computed from the training split only.
struct PopularityTable {
  // per domain: item id -> positive count
  std::vector<std::map<int, long>> counts;
  std::vector<long> max_count;          // per domain
  std::vector<double> rho;              // per domain threshold (0 = no source)
  double rho_quantile = 0.2;

  double popularity(int domain, int item) const {
    auto it = counts[domain].find(item);
    if (it == counts[domain].end() || max_count[domain] == 0) return 0.0;
    return double(it->second) / double(max_count[domain]);
  }
};

enum class AssignRule { UserHistoryFirst, InverseSizeSampling };

struct AugConfig {
  double r_aug = 0.1;
  double rho_quantile = 0.2;
  AssignRule rule = AssignRule::UserHistoryFirst;
  uint64_t seed = 1;

  void validate() const {
    if (r_aug < 0.0 || r_aug > 1.0)
      throw std::invalid_argument("AugConfig: r_aug in [0,1]");
    if (rho_quantile <= 0.0 || rho_quantile >= 1.0)
      throw std::invalid_argument("AugConfig: rho_quantile in (0,1)");
  }
};

// rho = the smallest distinct popularity strictly above the k-th smallest
// (k = ceil(q * #items)), so the bottom-q items, with ties, fall below it.
// A domain whose items all share one popularity gets rho equal to it, which
// marks nothing unpopular.
inline double popularity_threshold(std::vector<double> pops, double q) {
  if (pops.empty()) return 0.0;
  std::sort(pops.begin(), pops.end());
  size_t k = size_t(std::ceil(q * double(pops.size())));
  if (k < 1) k = 1;
  double vk = pops[k - 1];
  for (size_t i = k; i < pops.size(); ++i)
    if (pops[i] > vk) return pops[i];
  return vk;
}

inline PopularityTable compute_popularity(
    const Dataset& train, double rho_quantile = 0.2,
    std::vector<std::string>* warnings = nullptr) {
  if (train.samples.empty())
    throw std::invalid_argument("compute_popularity: empty dataset");
  int D = train.schema->domain_count;
  PopularityTable pt;
  pt.rho_quantile = rho_quantile;
  pt.counts.resize(size_t(D));
  pt.max_count.assign(size_t(D), 0);
  pt.rho.assign(size_t(D), 0.0);
  for (const Sample& s : train.samples)
    if (s.label == 1) pt.counts[s.domain_id][train.item_of(s)]++;
  for (int d = 0; d < D; ++d) {
    for (const auto& [item, c] : pt.counts[d])
      pt.max_count[d] = std::max(pt.max_count[d], c);
    if (pt.counts[d].empty()) {
      if (warnings)
        warnings->push_back("compute_popularity: domain " +
                            std::to_string(d) +
                            " has no positives; excluded as a source");
      continue;
    }
    std::vector<double> pops;
    for (const auto& [item, c] : pt.counts[d])
      pops.push_back(double(c) / double(pt.max_count[d]));
    pt.rho[d] = popularity_threshold(std::move(pops), rho_quantile);
  }
  return pt;
}

// One augmented copy: the source sample re-labeled into a minor domain.
struct AugmentedDataset {
  std::vector<Sample> samples;          // original domain data first
  std::vector<int> source_domain;       // parallel to the augmented tail
  size_t original_count = 0;            // samples[0..original_count) original

  size_t augmented_count() const { return samples.size() - original_count; }
};

// Builds the per-domain candidate-training datasets A_d. Major domains keep
// their training data unchanged. Minor domains additionally receive copies
// of positive, unpopular-item interactions from major domains, the domain id
// rewritten, labels kept 1, capped at ceil(r_aug * n_d) per minor domain.
inline std::map<int, AugmentedDataset> build_augmented(
    const Dataset& train, const DomainStats& stats, const PopularityTable& pop,
    const AugConfig& cfg, std::vector<std::string>* warnings = nullptr) {
  cfg.validate();
  int D = stats.domain_count();
  std::map<int, AugmentedDataset> out;
  for (int d = 0; d < D; ++d) {
    AugmentedDataset a;
    for (const Sample& s : train.samples)
      if (s.domain_id == d) a.samples.push_back(s);
    a.original_count = a.samples.size();
    out.emplace(d, std::move(a));
  }
  if (cfg.r_aug == 0.0) return out;

  // eligible sources: positive samples from major domains whose item is
  // unpopular within the source domain
  std::vector<size_t> eligible;
  std::vector<bool> is_major(size_t(D), false);
  for (int d : stats.major_set) is_major[d] = true;
  for (size_t i = 0; i < train.samples.size(); ++i) {
    const Sample& s = train.samples[i];
    if (s.label != 1 || !is_major[s.domain_id]) continue;
    if (pop.counts[s.domain_id].empty()) continue;
    if (pop.popularity(s.domain_id, train.item_of(s)) < pop.rho[s.domain_id])
      eligible.push_back(i);
  }

  // users with any interaction per domain, for the history-first rule
  std::vector<std::set<int>> domain_users{size_t(D)};
  for (const Sample& s : train.samples)
    domain_users[s.domain_id].insert(train.user_of(s));

  Rng rng = Rng::substream(cfg.seed, "augmenter");

  auto add_copy = [&](int d, size_t src_idx) {
    Sample s = train.samples[src_idx];
    out.at(d).source_domain.push_back(s.domain_id);
    s.domain_id = d;
    s.label = 1;
    out.at(d).samples.push_back(std::move(s));
  };

  if (cfg.rule == AssignRule::UserHistoryFirst) {
    for (int d : stats.minor_set) {
      long cap = long(std::ceil(cfg.r_aug * double(stats.counts[d])));
      if (cap == 0) continue;
      if (eligible.empty()) {
        if (warnings)
          warnings->push_back("build_augmented: no eligible sources for "
                              "domain " + std::to_string(d));
        continue;
      }
      std::vector<size_t> hist, rest;
      for (size_t i : eligible) {
        if (domain_users[d].count(train.user_of(train.samples[i])))
          hist.push_back(i);
        else
          rest.push_back(i);
      }
      std::vector<size_t> chosen;
      if (long(hist.size()) >= cap) {
        std::vector<int> pick =
            rng.sample_without_replacement(int(hist.size()), int(cap));
        std::sort(pick.begin(), pick.end());
        for (int p : pick) chosen.push_back(hist[p]);
      } else {
        chosen = hist;
        long need = cap - long(hist.size());
        if (need > long(rest.size())) need = long(rest.size());
        std::vector<int> pick =
            rng.sample_without_replacement(int(rest.size()), int(need));
        std::sort(pick.begin(), pick.end());
        for (int p : pick) chosen.push_back(rest[p]);
      }
      for (size_t i : chosen) add_copy(d, i);
    }
  } else {
    // inverse-size sampling: walk sources in random order, assign each to a
    // not-yet-full minor domain with probability proportional to 1/n_d
    std::vector<long> cap(size_t(D), 0), used(size_t(D), 0);
    long open = 0;
    for (int d : stats.minor_set) {
      cap[d] = long(std::ceil(cfg.r_aug * double(stats.counts[d])));
      open += cap[d] > 0 ? 1 : 0;
    }
    std::vector<size_t> order = eligible;
    rng.shuffle(order);
    for (size_t i : order) {
      if (open == 0) break;
      double wsum = 0.0;
      for (int d : stats.minor_set)
        if (used[d] < cap[d]) wsum += 1.0 / double(stats.counts[d]);
      if (wsum == 0.0) break;
      double u = rng.uniform() * wsum;
      int target = -1;
      for (int d : stats.minor_set) {
        if (used[d] >= cap[d]) continue;
        u -= 1.0 / double(stats.counts[d]);
        target = d;
        if (u <= 0.0) break;
      }
      add_copy(target, i);
      if (++used[target] == cap[target]) --open;
    }
    if (warnings)
      for (int d : stats.minor_set)
        if (cap[d] > 0 && used[d] == 0)
          warnings->push_back("build_augmented: no eligible sources for "
                              "domain " + std::to_string(d));
  }
  return out;
}

// A_d rows as CSV with a source_domain provenance column (-1 for originals).
inline void dump_augmented(const AugmentedDataset& a, const Schema& schema,
                           const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("dump_augmented: cannot write " + path);
  for (const auto& fname : schema.spec.fields) f << fname << ",";
  f << schema.spec.domain_col << "," << schema.spec.label_col
    << ",source_domain\n";
  for (size_t i = 0; i < a.samples.size(); ++i) {
    const Sample& s = a.samples[i];
    for (size_t j = 0; j < s.features.size(); ++j) {
      std::string v = schema.decode(int(j), s.features[j]);
      f << (v.empty() ? "oov" : v) << ",";
    }
    int src = i < a.original_count
                  ? -1
                  : a.source_domain[i - a.original_count];
    f << s.domain_id << "," << s.label << "," << src << "\n";
  }
}

}  // namespace aread
