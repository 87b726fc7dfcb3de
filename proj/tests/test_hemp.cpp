#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>
#include <vector>

#include "aread/hemp.hpp"
#include "helpers.hpp"

using namespace aread;

namespace {

const std::vector<std::pair<int, int>> kShapes = {{3, 6}, {6, 12}};

std::vector<Array2> random_means(uint64_t seed,
                                 const std::vector<std::pair<int, int>>&
                                     shapes = kShapes) {
  Rng rng(seed);
  std::vector<Array2> out;
  for (auto [r, c] : shapes) {
    Array2 a(r, c);
    for (double& v : a.data) v = rng.uniform(0.0, 1.0);
    out.push_back(std::move(a));
  }
  return out;
}

HierMask top_s0_mask(const std::vector<Array2>& means, double s0) {
  struct Pos {
    double v;
    int l, i, n;
  };
  std::vector<Pos> pos;
  for (size_t l = 0; l < kShapes.size(); ++l)
    for (int i = 0; i < kShapes[l].first; ++i)
      for (int n = 0; n < kShapes[l].second; ++n)
        pos.push_back({means[l].at(i, n), int(l), i, n});
  std::stable_sort(pos.begin(), pos.end(),
                   [](const Pos& a, const Pos& b) { return a.v > b.v; });
  HierMask m;
  for (auto [r, c] : kShapes) m.layers.emplace_back(r, c);
  long keep = long(s0 * double(pos.size()));
  for (long j = 0; j < keep; ++j)
    m.layers[pos[j].l].at(pos[j].i, pos[j].n) = 1;
  return m;
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.emb.dim = 3;
  cfg.mmoe.num_experts = 2;
  cfg.mmoe.hidden = {5, 4};
  cfg.hei.L = 3;
  cfg.hei.experts = {2, 3, 4};
  cfg.hei.hidden = {{4, 3}, {3, 2}, {2, 2}};
  return cfg;
}

std::vector<Sample> random_samples(int n, uint64_t seed) {
  Rng rng(seed);
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) {
    Sample s;
    s.features = {1 + rng.index(4), 1 + rng.index(3)};
    s.domain_id = 0;
    s.label = int(rng.bernoulli(0.5));
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("config validation") {
  HEMPConfig cfg;
  cfg.validate();
  cfg.S = 0.8;  // above S0
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = HEMPConfig{};
  cfg.alpha = 0.0;
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = HEMPConfig{};
  cfg.Z = 0;
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = HEMPConfig{};
  cfg.flip_prob = 1.5;
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("init_candidate with no flips keeps exactly the top-S0 gates") {
  auto means = random_means(41);
  HEMPConfig cfg;
  cfg.flip_prob = 0.0;
  Rng rng(42);
  HierMask got = init_candidate(means, kShapes, cfg, rng);
  HierMask want = top_s0_mask(means, cfg.S0);
  repair_connectivity(want, means);
  for (size_t l = 0; l < kShapes.size(); ++l)
    REQUIRE(got.layers[l].m == want.layers[l].m);
  REQUIRE(got.kept() == long(0.7 * 90));
}

TEST_CASE("init_candidate with flip_prob one complements before repair") {
  auto means = random_means(43);
  HEMPConfig cfg;
  cfg.flip_prob = 1.0;
  Rng rng(44);
  HierMask got = init_candidate(means, kShapes, cfg, rng);
  HierMask want = top_s0_mask(means, cfg.S0);
  for (auto& layer : want.layers)
    for (auto& bit : layer.m) bit = 1 - bit;
  repair_connectivity(want, means);
  for (size_t l = 0; l < kShapes.size(); ++l)
    REQUIRE(got.layers[l].m == want.layers[l].m);
}

TEST_CASE("init_candidate mean density concentrates near S0") {
  // each position flips independently with p = 0.1, so the expected density
  // is S0(1-p) + (1-S0)p = 0.66 with sd(density) ~ sqrt(p(1-p)/90) = 0.032
  // per draw; the 200-seed mean sits well inside S0 +- 3 sd
  auto means = random_means(45);
  HEMPConfig cfg;
  double sum = 0.0;
  int trials = 200;
  for (int s = 0; s < trials; ++s) {
    Rng rng(1000 + uint64_t(s));
    sum += density(init_candidate(means, kShapes, cfg, rng));
  }
  double mean = sum / trials;
  double sd = std::sqrt(0.1 * 0.9 / 90.0);
  REQUIRE(mean > cfg.S0 - 3 * sd);
  REQUIRE(mean < cfg.S0 + 3 * sd);
}

TEST_CASE("prune_step matches a sort-and-cut oracle on single-layer masks") {
  // with one mask layer every source is a layer-1 expert, so dangling
  // cleanup never fires and the result is exactly the sorted cut
  for (int trial = 0; trial < 30; ++trial) {
    Rng rng(600 + uint64_t(trial));
    HierMask m;
    m.layers.emplace_back(6, 12);
    for (auto& bit : m.layers[0].m) bit = rng.bernoulli(0.6);
    if (active_set(m).size() < 2) continue;
    std::vector<Array2> means;
    means.emplace_back(6, 12);
    for (double& v : means[0].data) v = rng.uniform(0.0, 1.0);

    double alpha = 0.1;
    HierMask got = prune_step(m, means, alpha);

    struct Pos {
      double v;
      int i, n;
    };
    std::vector<Pos> kept;
    for (int i = 0; i < 6; ++i)
      for (int n = 0; n < 12; ++n)
        if (m.layers[0].at(i, n)) kept.push_back({means[0].at(i, n), i, n});
    std::sort(kept.begin(), kept.end(), [](const Pos& a, const Pos& b) {
      return std::tie(a.v, a.i, a.n) < std::tie(b.v, b.i, b.n);
    });
    long target = long(std::ceil(alpha * double(kept.size())));
    HierMask want = m;
    for (long j = 0; j < target; ++j)
      want.layers[0].at(kept[size_t(j)].i, kept[size_t(j)].n) = 0;
    REQUIRE_FALSE(active_set(want).empty());
    REQUIRE(got.layers[0].m == want.layers[0].m);
  }
}

TEST_CASE("prune_step removes the smallest-mean gate first") {
  HierMask m;
  m.layers.emplace_back(6, 12, 1);
  std::vector<Array2> means;
  means.emplace_back(6, 12);
  for (size_t j = 0; j < means[0].data.size(); ++j)
    means[0].data[j] = 0.5 + double(j) * 1e-3;
  means[0].at(3, 7) = 0.0;
  HierMask out = prune_step(m, means, 0.01);  // ceil(0.01 * 72) = 1 removal
  REQUIRE(out.kept() == 71);
  REQUIRE(out.layers[0].at(3, 7) == 0);
}

TEST_CASE("prune_step removes ceil(alpha * kept) gates from a full mask") {
  // alpha 0.05 on the default 90-gate geometry removes 5; the smallest
  // means are spread across distinct layer-1 columns so cleanup is a no-op
  HierMask m = HierMask::all_ones(kShapes);
  auto means = random_means(46);
  for (auto& a : means)
    for (double& v : a.data) v = 0.5 + v * 0.4;
  for (int n = 0; n < 5; ++n) means[0].at(0, n) = 0.01 * (n + 1);
  HierMask out = prune_step(m, means, 0.05);
  REQUIRE(out.kept() == 85);
  for (int n = 0; n < 5; ++n) REQUIRE(out.layers[0].at(0, n) == 0);
  REQUIRE(int(active_set(out).size()) == 12);
}

TEST_CASE("prune_step stops short of emptying the active set") {
  HierMask path;
  path.layers.emplace_back(3, 6);
  path.layers.emplace_back(6, 12);
  path.layers[0].at(1, 2) = 1;
  path.layers[1].at(2, 5) = 1;
  auto means = random_means(47);
  bool stopped = false;
  HierMask out = prune_step(path, means, 0.9, &stopped);
  REQUIRE(stopped);
  REQUIRE(out.kept() == 2);  // unchanged
  REQUIRE(active_set(out) == std::vector<int>{5});
}

TEST_CASE("gate stats accumulator matches a brute-force recomputation") {
  std::vector<std::pair<int, int>> shapes = {{2, 3}, {3, 4}};
  GateStatsAccumulator acc(2, shapes);
  Rng rng(48);

  std::vector<std::vector<Array2>> sums(2);
  std::vector<long> counts(2, 0);
  for (int d = 0; d < 2; ++d)
    for (auto [r, c] : shapes) sums[size_t(d)].emplace_back(r, c);

  for (int b = 0; b < 10; ++b) {
    int n = 1 + rng.index(4);
    std::vector<Sample> batch{size_t(n)};
    HeiTrace trace;
    for (auto [np, nl] : shapes) trace.gate_values.emplace_back(n, np * nl);
    for (int i = 0; i < n; ++i) {
      batch[size_t(i)].domain_id = rng.index(2);
      for (auto& gv : trace.gate_values)
        for (int j = 0; j < gv.cols; ++j)
          gv.at(i, j) = rng.uniform(0.0, 1.0);
    }
    acc.accumulate(batch, trace);
    for (int i = 0; i < n; ++i) {
      int d = batch[size_t(i)].domain_id;
      counts[size_t(d)]++;
      for (size_t l = 0; l < shapes.size(); ++l) {
        auto [np, nl] = shapes[l];
        for (int tn = 0; tn < nl; ++tn)
          for (int si = 0; si < np; ++si)
            sums[size_t(d)][l].at(si, tn) +=
                trace.gate_values[l].at(i, tn * np + si);
      }
    }
  }
  for (int d = 0; d < 2; ++d) {
    REQUIRE(acc.count(d) == counts[size_t(d)]);
    auto means = acc.means(d);
    for (size_t l = 0; l < shapes.size(); ++l)
      for (size_t j = 0; j < means[l].data.size(); ++j)
        REQUIRE_THAT(means[l].data[j],
                     Catch::Matchers::WithinAbs(
                         sums[size_t(d)][l].data[j] / double(counts[size_t(d)]),
                         1e-12));
  }

  acc.reset();
  REQUIRE(acc.count(0) == 0);
  auto uniform = acc.means(0);
  for (size_t l = 0; l < shapes.size(); ++l)
    for (double v : uniform[l].data)
      REQUIRE_THAT(v, Catch::Matchers::WithinAbs(
                          1.0 / shapes[l].first, 1e-12));
}

TEST_CASE("score_candidate agrees with the pairwise AUC oracle") {
  Model model(tiny_config(), {5, 4});
  ParameterStore store;
  Rng rng(49);
  model.build(store, rng);
  HierMask ones = HierMask::all_ones(model.config().hei.mask_shapes());
  auto sample = random_samples(60, 50);

  double got = score_candidate(model, store, ones, sample);

  std::vector<double> p;
  std::vector<int> y;
  Tape t;
  Value base = model.base_forward(t, store, sample);
  for (double v : predict(t, model.hei_forward(t, store, base, &ones)))
    p.push_back(v);
  for (const Sample& s : sample) y.push_back(s.label);
  long concordant2 = 0, pairs = 0;
  for (size_t i = 0; i < p.size(); ++i)
    for (size_t j = 0; j < p.size(); ++j) {
      if (!(y[i] == 1 && y[j] == 0)) continue;
      pairs++;
      if (p[i] > p[j]) concordant2 += 2;
      else if (p[i] == p[j]) concordant2 += 1;
    }
  REQUIRE_THAT(got, Catch::Matchers::WithinAbs(
                        double(concordant2) / (2.0 * double(pairs)), 1e-12));
}

TEST_CASE("score_candidate falls back to negative BCE on one-class samples") {
  Model model(tiny_config(), {5, 4});
  ParameterStore store;
  Rng rng(51);
  model.build(store, rng);
  HierMask ones = HierMask::all_ones(model.config().hei.mask_shapes());
  auto sample = random_samples(20, 52);
  for (Sample& s : sample) s.label = 1;

  double got = score_candidate(model, store, ones, sample);
  Tape t;
  Value base = model.base_forward(t, store, sample);
  auto p = predict(t, model.hei_forward(t, store, base, &ones));
  double bce = 0.0;
  for (double v : p) bce -= std::log(std::max(Tape::kProbClamp, v));
  REQUIRE_THAT(got,
               Catch::Matchers::WithinAbs(-bce / double(p.size()), 1e-12));
  REQUIRE(got < 0.0);
}

TEST_CASE("search restores parameters and hashes are uniform") {
  Model model(tiny_config(), {5, 4});
  ParameterStore store;
  Rng rng(53);
  model.build(store, rng);
  ParamSnapshot snap = store.snapshot();
  uint64_t h0 = store.state_hash();

  AugmentedDataset aug;
  aug.samples = random_samples(200, 54);
  auto eval = random_samples(64, 55);

  HEMPConfig cfg;
  cfg.Z = 3;
  cfg.k = 2;
  cfg.max_prune_iters = 16;
  GateStatsAccumulator acc(1, model.config().hei.mask_shapes());
  SearchResult res = search_domain_mask(model, store, snap, 0, aug, eval,
                                        acc.means(0), cfg, AdamConfig{}, 16,
                                        777, 0);

  REQUIRE(store.state_equals(snap));
  REQUIRE(store.state_hash() == h0);
  REQUIRE(res.start_hashes.size() == 3);
  for (uint64_t h : res.start_hashes) REQUIRE(h == h0);

  REQUIRE(res.candidates.size() == 3);
  REQUIRE(res.chosen_z >= 0);
  double best = -1e300;
  for (const CandidateMask& c : res.candidates) {
    REQUIRE(c.valid);
    REQUIRE(c.train_batches >= cfg.k);
    REQUIRE_FALSE(c.density_history.empty());
    for (size_t i = 1; i < c.density_history.size(); ++i)
      REQUIRE(c.density_history[i] <= c.density_history[i - 1] + 1e-12);
    best = std::max(best, c.score);
  }
  REQUIRE(res.score == best);
  REQUIRE(res.mask_density <= cfg.S + 1e-12);
  REQUIRE(res.active_count >= 1);
  REQUIRE(res.active_count == int(active_set(res.mask).size()));
}

TEST_CASE("search is deterministic under seed and round") {
  Model model(tiny_config(), {5, 4});
  ParameterStore store;
  Rng rng(56);
  model.build(store, rng);
  ParamSnapshot snap = store.snapshot();
  AugmentedDataset aug;
  aug.samples = random_samples(150, 57);
  auto eval = random_samples(40, 58);
  HEMPConfig cfg;
  cfg.Z = 2;
  cfg.k = 2;
  GateStatsAccumulator acc(1, model.config().hei.mask_shapes());

  SearchResult a = search_domain_mask(model, store, snap, 0, aug, eval,
                                      acc.means(0), cfg, AdamConfig{}, 16,
                                      11, 3);
  SearchResult b = search_domain_mask(model, store, snap, 0, aug, eval,
                                      acc.means(0), cfg, AdamConfig{}, 16,
                                      11, 3);
  REQUIRE(a.chosen_z == b.chosen_z);
  REQUIRE(a.score == b.score);
  for (size_t l = 0; l < a.mask.layers.size(); ++l)
    REQUIRE(a.mask.layers[l].m == b.mask.layers[l].m);
}

TEST_CASE("search with one candidate returns it regardless of score") {
  Model model(tiny_config(), {5, 4});
  ParameterStore store;
  Rng rng(59);
  model.build(store, rng);
  ParamSnapshot snap = store.snapshot();
  AugmentedDataset aug;
  aug.samples = random_samples(100, 60);
  HEMPConfig cfg;
  cfg.Z = 1;
  cfg.k = 1;
  GateStatsAccumulator acc(1, model.config().hei.mask_shapes());
  SearchResult res =
      search_domain_mask(model, store, snap, 0, aug,
                         random_samples(30, 61), acc.means(0), cfg,
                         AdamConfig{}, 8, 5, 0);
  REQUIRE(res.chosen_z == 0);
  REQUIRE(res.candidates.size() == 1);
  REQUIRE_FALSE(res.kept_previous);
}

TEST_CASE("search rejects an empty augmented set") {
  Model model(tiny_config(), {5, 4});
  ParameterStore store;
  Rng rng(62);
  model.build(store, rng);
  ParamSnapshot snap = store.snapshot();
  AugmentedDataset aug;
  HEMPConfig cfg;
  GateStatsAccumulator acc(1, model.config().hei.mask_shapes());
  REQUIRE_THROWS_AS(
      search_domain_mask(model, store, snap, 0, aug, {}, acc.means(0), cfg,
                         AdamConfig{}, 8, 5, 0),
      std::invalid_argument);
}
