#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "aread/augment.hpp"
#include "aread/mask.hpp"
#include "aread/metrics.hpp"
#include "aread/model.hpp"

namespace aread {

struct HEMPConfig {
  int Z = 4;                   // candidates per domain
  int k = 5;                   // minimum fine-tune batches per candidate
  double S0 = 0.7;             // initial kept-density
  double S = 0.4;              // target kept-density (binding stop condition)
  double alpha = 0.05;         // prune fraction per iteration
  double lr_u = 0.01;          // candidate fine-tune learning rate
  int update_interval = 500;   // batches between mask updates
  int warmup_batches = 100;
  double flip_prob = 0.1;      // candidate randomization
  int max_prune_iters = 64;

  void validate() const {
    if (!(S > 0 && S < S0 && S0 <= 1.0))
      throw std::invalid_argument("HEMPConfig: need 0 < S < S0 <= 1");
    if (!(alpha > 0 && alpha < 1))
      throw std::invalid_argument("HEMPConfig: alpha in (0,1)");
    if (Z < 1 || k < 1)
      throw std::invalid_argument("HEMPConfig: Z, k >= 1");
    if (flip_prob < 0 || flip_prob > 1)
      throw std::invalid_argument("HEMPConfig: flip_prob in [0,1]");
  }
};

// Running per-domain arithmetic means of the softmaxed gate matrices for
// layers 2..L, fed by forward traces during training.
class GateStatsAccumulator {
 public:
  GateStatsAccumulator() = default;
  GateStatsAccumulator(int D, const std::vector<std::pair<int, int>>& shapes)
      : shapes_(shapes), counts_(size_t(D), 0) {
    sums_.resize(size_t(D));
    for (auto& per_domain : sums_)
      for (auto [r, c] : shapes) per_domain.emplace_back(r, c);
  }

  void accumulate(const std::vector<Sample>& batch, const HeiTrace& trace) {
    if (trace.gate_values.size() != shapes_.size())
      throw std::invalid_argument("GateStats: trace layer count mismatch");
    for (size_t b = 0; b < batch.size(); ++b) {
      int d = batch[b].domain_id;
      counts_[d]++;
      for (size_t l = 0; l < shapes_.size(); ++l) {
        auto [np, nl] = shapes_[l];
        const Array2& gv = trace.gate_values[l];
        for (int n = 0; n < nl; ++n)
          for (int i = 0; i < np; ++i)
            sums_[d][l].at(i, n) += gv.at(int(b), n * np + i);
      }
    }
  }

  long count(int d) const { return counts_[d]; }

  // domain means; uniform columns (1/N_prev) when nothing was observed
  std::vector<Array2> means(int d) const {
    std::vector<Array2> out;
    for (size_t l = 0; l < shapes_.size(); ++l) {
      auto [np, nl] = shapes_[l];
      Array2 m(np, nl);
      if (counts_[d] == 0) {
        m.fill(1.0 / double(np));
      } else {
        for (size_t i = 0; i < m.size(); ++i)
          m.data[i] = sums_[d][l].data[i] / double(counts_[d]);
      }
      out.push_back(std::move(m));
    }
    return out;
  }

  void reset() {
    for (auto& per_domain : sums_)
      for (auto& a : per_domain) a.fill(0.0);
    std::fill(counts_.begin(), counts_.end(), 0L);
  }

 private:
  std::vector<std::pair<int, int>> shapes_;
  std::vector<std::vector<Array2>> sums_;
  std::vector<long> counts_;
};

struct CandidateMask {
  HierMask mask;
  int domain = 0;
  int z = 0;
  double score = 0.0;
  bool valid = false;
  std::vector<double> density_history;
  int prune_iters = 0;
  int train_batches = 0;
};

inline double density_of(const HierMask& m) { return density(m); }

// Keep the top-S0 fraction of gate positions by domain-mean gate value
// (ties broken by position order), flip each position with flip_prob, then
// repair path connectivity.
inline HierMask init_candidate(const std::vector<Array2>& gate_means,
                               const std::vector<std::pair<int, int>>& shapes,
                               const HEMPConfig& cfg, Rng& rng) {
  HierMask m;
  for (auto [r, c] : shapes) m.layers.emplace_back(r, c);
  struct Pos {
    double v;
    int l, i, n;
  };
  std::vector<Pos> pos;
  for (size_t l = 0; l < shapes.size(); ++l)
    for (int i = 0; i < shapes[l].first; ++i)
      for (int n = 0; n < shapes[l].second; ++n)
        pos.push_back({gate_means[l].at(i, n), int(l), i, n});
  std::stable_sort(pos.begin(), pos.end(), [](const Pos& a, const Pos& b) {
    return a.v > b.v;
  });
  long keep = long(cfg.S0 * double(pos.size()));
  for (long j = 0; j < keep; ++j)
    m.layers[pos[j].l].at(pos[j].i, pos[j].n) = 1;
  for (auto& layer : m.layers)
    for (auto& bit : layer.m)
      if (rng.bernoulli(cfg.flip_prob)) bit = 1 - bit;
  repair_connectivity(m, gate_means);
  return m;
}

// Removes the ceil(alpha * kept) currently-kept positions with the smallest
// mean masked-gate magnitude, one at a time with dangling-edge cleanup after
// each removal; stops short (flagging *stopped_short) rather than emptying
// the active set. Ties break by (layer, row, col) order.
inline HierMask prune_step(const HierMask& T,
                           const std::vector<Array2>& gate_means,
                           double alpha, bool* stopped_short = nullptr) {
  long kept = T.kept();
  if (kept == 0) throw std::invalid_argument("prune_step: empty mask");
  struct Pos {
    double v;
    int l, i, n;
  };
  std::vector<Pos> order;
  for (size_t l = 0; l < T.layers.size(); ++l)
    for (int i = 0; i < T.layers[l].rows; ++i)
      for (int n = 0; n < T.layers[l].cols; ++n)
        if (T.layers[l].at(i, n))
          order.push_back({gate_means[l].at(i, n), int(l), i, n});
  std::sort(order.begin(), order.end(), [](const Pos& a, const Pos& b) {
    return std::tie(a.v, a.l, a.i, a.n) < std::tie(b.v, b.l, b.i, b.n);
  });
  long target = long(std::ceil(alpha * double(kept)));
  HierMask cur = T;
  long removed = 0;
  for (const Pos& p : order) {
    if (removed >= target) break;
    if (!cur.layers[p.l].at(p.i, p.n)) continue;  // already gone via cleanup
    HierMask next = cur;
    next.layers[p.l].at(p.i, p.n) = 0;
    drop_dangling(next);
    if (active_set(next).empty()) {
      if (stopped_short) *stopped_short = true;
      return cur;
    }
    cur = std::move(next);
    ++removed;
  }
  return cur;
}

struct SearchResult {
  HierMask mask;
  int chosen_z = -1;
  double score = 0.0;
  double mask_density = 0.0;
  int active_count = 0;
  int prune_iters = 0;
  bool kept_previous = false;
  std::vector<CandidateMask> candidates;
  std::vector<uint64_t> start_hashes;  // parameter-state hash per candidate
};

// AUC of the masked model on the eval sample; negative mean BCE when the
// sample is single-class; the training-loss fallback is applied by callers
// when the eval sample is empty.
inline double score_candidate(const Model& model, ParameterStore& store,
                              const HierMask& mask,
                              const std::vector<Sample>& eval_sample) {
  std::vector<double> scores;
  std::vector<int> labels;
  const size_t chunk = 256;
  for (size_t off = 0; off < eval_sample.size(); off += chunk) {
    std::vector<Sample> batch(
        eval_sample.begin() + off,
        eval_sample.begin() + std::min(off + chunk, eval_sample.size()));
    Tape t;
    Value base = model.base_forward(t, store, batch);
    std::vector<Head> heads = model.hei_forward(t, store, base, &mask);
    std::vector<double> p = predict(t, heads);
    for (size_t i = 0; i < batch.size(); ++i) {
      scores.push_back(p[i]);
      labels.push_back(batch[i].label);
    }
  }
  try {
    return auc(scores, labels);
  } catch (const SingleClassError&) {
    double bce_sum = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
      double pc = std::min(1.0 - Tape::kProbClamp,
                           std::max(Tape::kProbClamp, scores[i]));
      bce_sum -= labels[i] ? std::log(pc) : std::log(1.0 - pc);
    }
    return -bce_sum / double(scores.size());
  }
}

// Algorithm: for each of Z candidates, reset parameters to the snapshot,
// initialize a mask from the domain's accumulated gate means, then alternate
// one fine-tune batch from A_d (at lr_u, bagging loss) with one prune step
// using the candidate's own running gate means, until density reaches S
// (at least k batches, at most max_prune_iters prunes). The best-scoring
// candidate wins; ties go to the lowest z. Parameters are restored to the
// snapshot before returning.
inline SearchResult search_domain_mask(
    const Model& model, ParameterStore& store, const ParamSnapshot& snap,
    int domain, const AugmentedDataset& aug,
    const std::vector<Sample>& eval_sample,
    const std::vector<Array2>& domain_gate_means, const HEMPConfig& cfg,
    const AdamConfig& base_adam, int batch_size, uint64_t seed, int round,
    const HierMask* previous = nullptr,
    std::vector<std::string>* warnings = nullptr) {
  cfg.validate();
  if (aug.samples.empty())
    throw std::invalid_argument("search_domain_mask: A_d is empty");
  auto shapes = model.config().hei.mask_shapes();
  AdamConfig opt = base_adam;
  opt.lr = cfg.lr_u;

  SearchResult res;
  for (int z = 0; z < cfg.Z; ++z) {
    store.restore(snap);
    res.start_hashes.push_back(store.state_hash());
    Rng rng = Rng::substream(
        seed, "hemp-cand-r" + std::to_string(round) + "-d" +
                  std::to_string(domain) + "-z" + std::to_string(z));

    CandidateMask cand;
    cand.domain = domain;
    cand.z = z;
    cand.mask = init_candidate(domain_gate_means, shapes, cfg, rng);
    cand.density_history.push_back(density(cand.mask));

    GateStatsAccumulator local(1, shapes);  // single-slot accumulator
    double train_loss_sum = 0.0;
    bool prune_stalled = false;
    while (true) {
      // one fine-tune batch sampled (with replacement) from A_d
      std::vector<Sample> batch;
      batch.reserve(size_t(batch_size));
      for (int i = 0; i < batch_size; ++i)
        batch.push_back(aug.samples[rng.index(int(aug.samples.size()))]);
      std::vector<double> labels;
      for (const Sample& s : batch) labels.push_back(double(s.label));
      std::vector<Sample> keyed = batch;
      for (Sample& s : keyed) s.domain_id = 0;  // one accumulator slot

      Tape t;
      HeiTrace trace;
      Value base = model.base_forward(t, store, batch);
      std::vector<Head> heads =
          model.hei_forward(t, store, base, &cand.mask, &trace);
      Value loss = loss_masked(t, heads, labels);
      train_loss_sum += t.val(loss).data[0];
      t.backward(loss);
      store.adam_step(opt);
      local.accumulate(keyed, trace);
      cand.train_batches++;

      bool at_target = density(cand.mask) <= cfg.S;
      if (!at_target && !prune_stalled &&
          cand.prune_iters < cfg.max_prune_iters) {
        bool short_stop = false;
        cand.mask =
            prune_step(cand.mask, local.means(0), cfg.alpha, &short_stop);
        cand.prune_iters++;
        cand.density_history.push_back(density(cand.mask));
        if (short_stop) prune_stalled = true;
        at_target = density(cand.mask) <= cfg.S;
      }
      bool done_pruning = at_target || prune_stalled ||
                          cand.prune_iters >= cfg.max_prune_iters;
      if (done_pruning && cand.train_batches >= cfg.k) break;
    }

    if (active_set(cand.mask).empty()) {
      cand.valid = false;
    } else if (!eval_sample.empty()) {
      cand.score = score_candidate(model, store, cand.mask, eval_sample);
      cand.valid = true;
    } else {
      // no held-back training sample for this domain: fall back to the
      // candidate's own training loss
      cand.score = -train_loss_sum / double(cand.train_batches);
      cand.valid = true;
    }
    res.candidates.push_back(std::move(cand));
  }
  store.restore(snap);

  int best = -1;
  for (size_t i = 0; i < res.candidates.size(); ++i) {
    if (!res.candidates[i].valid) continue;
    if (best < 0 || res.candidates[i].score > res.candidates[best].score)
      best = int(i);
  }
  if (best < 0) {
    if (warnings)
      warnings->push_back("search_domain_mask: all candidates degenerate for "
                          "domain " + std::to_string(domain) +
                          "; keeping previous mask");
    res.kept_previous = true;
    res.mask = previous ? *previous : HierMask::all_ones(shapes);
  } else {
    res.mask = res.candidates[best].mask;
    res.chosen_z = res.candidates[best].z;
    res.score = res.candidates[best].score;
    res.prune_iters = res.candidates[best].prune_iters;
  }
  res.mask_density = density(res.mask);
  res.active_count = int(active_set(res.mask).size());
  return res;
}

}  // namespace aread
