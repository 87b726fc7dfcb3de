#pragma once

#include <algorithm>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "aread/data.hpp"
#include "aread/rng.hpp"

namespace aread {

// Synthetic multi-domain world with known cluster structure: domains in the
// same cluster share a planted bilinear preference matrix, domain sizes are
// long-tailed, and items are drawn with power-law popularity.
struct SynthConfig {
  int D = 8;
  std::vector<int> cluster = {0, 0, 0, 0, 1, 1, 1, 1};
  std::vector<long> sizes = {4000, 3000, 2000, 1000, 400, 200, 100, 50};
  int users = 300;
  int items = 400;
  double popularity_exponent = 1.2;
  double noise = 0.1;
  int latent_dim = 8;
  uint64_t seed = 1;

  void validate() const {
    if (D < 2) throw std::invalid_argument("SynthConfig: D must be >= 2");
    if (int(cluster.size()) != D || int(sizes.size()) != D)
      throw std::invalid_argument(
          "SynthConfig: cluster and sizes must have D entries");
    for (long s : sizes)
      if (s < 1) throw std::invalid_argument("SynthConfig: sizes must be >= 1");
    if (noise < 0.0 || noise >= 0.5)
      throw std::invalid_argument("SynthConfig: noise must be in [0, 0.5)");
    if (users < 1 || items < 1)
      throw std::invalid_argument("SynthConfig: users/items must be >= 1");
  }

  int num_clusters() const {
    int c = 0;
    for (int x : cluster) c = std::max(c, x + 1);
    return c;
  }
};

// Ground truth the generator planted; the Bayes-optimal scorer for tests.
struct PlantedModel {
  int latent_dim = 0;
  std::vector<std::vector<double>> user_vec;           // U x m
  std::vector<std::vector<double>> item_vec;           // I x m
  std::vector<std::vector<double>> cluster_w;          // C x (m*m), row-major
  std::vector<double> cluster_median;                  // C
  std::vector<int> cluster_of_domain;

  double score(int user, int item, int domain) const {
    int m = latent_dim;
    const auto& a = user_vec[user];
    const auto& b = item_vec[item];
    const auto& w = cluster_w[cluster_of_domain[domain]];
    double s = 0.0;
    for (int i = 0; i < m; ++i) {
      double acc = 0.0;
      for (int j = 0; j < m; ++j) acc += w[size_t(i) * m + j] * b[j];
      s += a[i] * acc;
    }
    return s;
  }
};

struct SynthResult {
  Dataset dataset;
  PlantedModel planted;
  std::vector<int> raw_user;  // per sample, before schema encoding
  std::vector<int> raw_item;
};

inline SynthResult generate(const SynthConfig& cfg) {
  cfg.validate();
  int m = cfg.latent_dim;
  int C = cfg.num_clusters();

  PlantedModel pm;
  pm.latent_dim = m;
  pm.cluster_of_domain = cfg.cluster;
  Rng rng_u = Rng::substream(cfg.seed, "synth-users");
  Rng rng_i = Rng::substream(cfg.seed, "synth-items");
  Rng rng_w = Rng::substream(cfg.seed, "synth-w");
  pm.user_vec.resize(size_t(cfg.users));
  for (auto& v : pm.user_vec) {
    v.resize(size_t(m));
    for (double& x : v) x = rng_u.normal();
  }
  pm.item_vec.resize(size_t(cfg.items));
  for (auto& v : pm.item_vec) {
    v.resize(size_t(m));
    for (double& x : v) x = rng_i.normal();
  }
  double wscale = 1.0 / std::sqrt(double(m));
  pm.cluster_w.resize(size_t(C));
  for (auto& w : pm.cluster_w) {
    w.resize(size_t(m) * size_t(m));
    for (double& x : w) x = rng_w.normal() * wscale;
  }

  // power-law item frequencies: item r has weight (r+1)^-exponent
  std::vector<double> cum(size_t(cfg.items), 0.0);
  double total = 0.0;
  for (int r = 0; r < cfg.items; ++r) {
    total += std::pow(double(r + 1), -cfg.popularity_exponent);
    cum[r] = total;
  }
  Rng rng_draw = Rng::substream(cfg.seed, "synth-draw");
  auto draw_item = [&]() {
    double u = rng_draw.uniform() * total;
    return int(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
  };

  struct Raw {
    int d, u, i;
    double score;
  };
  std::vector<Raw> raws;
  for (int d = 0; d < cfg.D; ++d)
    for (long t = 0; t < cfg.sizes[d]; ++t) {
      Raw r;
      r.d = d;
      r.u = rng_draw.index(cfg.users);
      r.i = draw_item();
      r.score = 0.0;
      raws.push_back(r);
    }
  for (Raw& r : raws) r.score = pm.score(r.u, r.i, r.d);

  pm.cluster_median.assign(size_t(C), 0.0);
  for (int c = 0; c < C; ++c) {
    std::vector<double> scores;
    for (const Raw& r : raws)
      if (cfg.cluster[r.d] == c) scores.push_back(r.score);
    if (scores.empty()) continue;
    std::sort(scores.begin(), scores.end());
    size_t n = scores.size();
    pm.cluster_median[c] = n % 2 ? scores[n / 2]
                                 : 0.5 * (scores[n / 2 - 1] + scores[n / 2]);
  }

  SynthResult out;
  out.planted = pm;
  auto schema = std::make_shared<Schema>();
  schema->spec.fields = {"user", "item"};
  schema->vocab.resize(2);
  schema->vocab_size = {1, 1};
  schema->domain_count = cfg.D;
  out.dataset.schema = schema;

  Rng rng_noise = Rng::substream(cfg.seed, "synth-noise");
  for (const Raw& r : raws) {
    Sample s;
    s.features = {schema->encode(0, "u" + std::to_string(r.u)),
                  schema->encode(1, "i" + std::to_string(r.i))};
    s.domain_id = r.d;
    int clean = r.score > pm.cluster_median[cfg.cluster[r.d]] ? 1 : 0;
    s.label = rng_noise.bernoulli(cfg.noise) ? 1 - clean : clean;
    out.dataset.samples.push_back(std::move(s));
    out.raw_user.push_back(r.u);
    out.raw_item.push_back(r.i);
  }
  return out;
}

}  // namespace aread
