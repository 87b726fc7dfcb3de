#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "aread/data.hpp"
#include "aread/mask.hpp"
#include "aread/tape.hpp"

namespace aread {

struct EmbeddingConfig {
  int dim = 16;
  void validate() const {
    if (dim < 1) throw std::invalid_argument("EmbeddingConfig: dim >= 1");
  }
};

struct MMoEConfig {
  int num_experts = 4;
  std::vector<int> hidden = {64, 32};
  void validate() const {
    if (num_experts < 1)
      throw std::invalid_argument("MMoEConfig: num_experts >= 1");
    for (int h : hidden)
      if (h < 1) throw std::invalid_argument("MMoEConfig: hidden dims >= 1");
  }
  int out_dim() const { return hidden.back(); }
};

// L layers of experts; layer l has experts[l-1] experts, each a two-layer
// ReLU MLP with the given hidden widths. Expert counts grow with depth while
// widths shrink. Final-layer experts end in a linear scalar head.
struct HEIConfig {
  int L = 3;
  std::vector<int> experts = {3, 6, 12};
  std::vector<std::pair<int, int>> hidden = {{64, 32}, {32, 16}, {16, 8}};

  void validate() const {
    if (L < 2) throw std::invalid_argument("HEIConfig: L >= 2");
    if (int(experts.size()) != L || int(hidden.size()) != L)
      throw std::invalid_argument("HEIConfig: experts/hidden must have L entries");
    for (int l = 1; l < L; ++l) {
      if (experts[l] < experts[l - 1])
        throw std::invalid_argument("HEIConfig: expert counts non-decreasing");
      if (hidden[l].first > hidden[l - 1].first ||
          hidden[l].second > hidden[l - 1].second)
        throw std::invalid_argument("HEIConfig: widths non-increasing");
    }
  }

  // mask shapes for layers 2..L
  std::vector<std::pair<int, int>> mask_shapes() const {
    std::vector<std::pair<int, int>> s;
    for (int l = 1; l < L; ++l) s.push_back({experts[l - 1], experts[l]});
    return s;
  }
};

struct ModelConfig {
  EmbeddingConfig emb;
  MMoEConfig mmoe;
  HEIConfig hei;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"emb_dim", c.emb.dim},
       {"mmoe_experts", c.mmoe.num_experts},
       {"mmoe_hidden", c.mmoe.hidden},
       {"hei_L", c.hei.L},
       {"hei_experts", c.hei.experts},
       {"hei_hidden", c.hei.hidden}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.emb.dim = j.at("emb_dim").get<int>();
  c.mmoe.num_experts = j.at("mmoe_experts").get<int>();
  c.mmoe.hidden = j.at("mmoe_hidden").get<std::vector<int>>();
  c.hei.L = j.at("hei_L").get<int>();
  c.hei.experts = j.at("hei_experts").get<std::vector<int>>();
  c.hei.hidden =
      j.at("hei_hidden").get<std::vector<std::pair<int, int>>>();
}

// Per-forward diagnostics: softmaxed gate values for layers 2..L (columns
// grouped by target expert, column n*N_prev+i is the gate i -> n), the
// number of expert MLP evaluations, and a degenerate-denominator flag.
struct HeiTrace {
  std::vector<Array2> gate_values;
  int experts_evaluated = 0;
  bool degenerate_denominator = false;
};

// One final-layer head: expert index and its logit column (batch x 1).
struct Head {
  int index;
  Value logit;
};

class Model {
 public:
  Model(ModelConfig cfg, std::vector<int> vocab_sizes)
      : cfg_(std::move(cfg)), vocab_sizes_(std::move(vocab_sizes)) {
    cfg_.emb.validate();
    cfg_.mmoe.validate();
    cfg_.hei.validate();
    if (vocab_sizes_.empty())
      throw std::invalid_argument("Model: no feature fields");
  }

  const ModelConfig& config() const { return cfg_; }
  const std::vector<int>& vocab_sizes() const { return vocab_sizes_; }
  int embed_dim() const { return int(vocab_sizes_.size()) * cfg_.emb.dim; }
  int num_heads() const { return cfg_.hei.experts.back(); }

  void build(ParameterStore& store, Rng& rng) {
    for (size_t f = 0; f < vocab_sizes_.size(); ++f)
      store.create_init("emb.f" + std::to_string(f), vocab_sizes_[f],
                        cfg_.emb.dim, rng);
    int in = embed_dim();
    for (int e = 0; e < cfg_.mmoe.num_experts; ++e) {
      std::string p = "mmoe.e" + std::to_string(e);
      int d = in;
      for (size_t h = 0; h < cfg_.mmoe.hidden.size(); ++h) {
        store.create_init(p + ".w" + std::to_string(h), d,
                          cfg_.mmoe.hidden[h], rng);
        store.create(p + ".b" + std::to_string(h), 1,
                     cfg_.mmoe.hidden[h]);
        d = cfg_.mmoe.hidden[h];
      }
    }
    store.create_init("mmoe.gate.w", in, cfg_.mmoe.num_experts, rng);
    store.create("mmoe.gate.b", 1, cfg_.mmoe.num_experts);

    int base = cfg_.mmoe.out_dim();
    for (int l = 0; l < cfg_.hei.L; ++l) {
      int in_l = l == 0 ? base : cfg_.hei.hidden[l - 1].second;
      auto [h1, h2] = cfg_.hei.hidden[l];
      for (int n = 0; n < cfg_.hei.experts[l]; ++n) {
        std::string p = expert_prefix(l, n);
        store.create_init(p + ".w1", in_l, h1, rng);
        store.create(p + ".b1", 1, h1);
        store.create_init(p + ".w2", h1, h2, rng);
        store.create(p + ".b2", 1, h2);
        if (l == cfg_.hei.L - 1) {
          store.create_init(p + ".head_w", h2, 1, rng);
          store.create(p + ".head_b", 1, 1);
        }
      }
      if (l >= 1) {
        int np = cfg_.hei.experts[l - 1], nl = cfg_.hei.experts[l];
        store.create_init(gate_prefix(l) + ".w", base, np * nl, rng);
        store.create(gate_prefix(l) + ".b", 1, np * nl);
      }
    }
    store.create_init("base_head.w", base, 1, rng);
    store.create("base_head.b", 1, 1);
  }

  Value embed(Tape& t, ParameterStore& store,
              const std::vector<Sample>& batch) const {
    std::vector<Value> parts;
    for (size_t f = 0; f < vocab_sizes_.size(); ++f) {
      std::vector<int> idx;
      idx.reserve(batch.size());
      for (const Sample& s : batch) {
        int v = s.features[f];
        if (v < 0 || v >= vocab_sizes_[f])
          throw std::invalid_argument("embed: feature id out of vocabulary");
        idx.push_back(v);
      }
      parts.push_back(
          t.gather_rows(t.param(store, "emb.f" + std::to_string(f)), idx));
    }
    return t.concat_cols(parts);
  }

  // gate-weighted sum of expert outputs, single shared gate head
  Value mmoe_forward(Tape& t, ParameterStore& store, Value x_emb) const {
    Value gate = t.softmax_rows(
        t.add_bias(t.matmul(x_emb, t.param(store, "mmoe.gate.w")),
                   t.param(store, "mmoe.gate.b")));
    Value out{-1};
    for (int e = 0; e < cfg_.mmoe.num_experts; ++e) {
      std::string p = "mmoe.e" + std::to_string(e);
      Value h = x_emb;
      for (size_t l = 0; l < cfg_.mmoe.hidden.size(); ++l) {
        h = t.relu(t.add_bias(
            t.matmul(h, t.param(store, p + ".w" + std::to_string(l))),
            t.param(store, p + ".b" + std::to_string(l))));
      }
      Value weighted = t.mul_colvec(h, t.slice_cols(gate, e, 1));
      out = e == 0 ? weighted : t.add(out, weighted);
    }
    return out;
  }

  Value base_forward(Tape& t, ParameterStore& store,
                     const std::vector<Sample>& batch) const {
    return mmoe_forward(t, store, embed(t, store, batch));
  }

  // base-only ablation: plain logit head on the MMoE output
  Value base_head(Tape& t, ParameterStore& store, Value base) const {
    return t.add_bias(t.matmul(base, t.param(store, "base_head.w")),
                      t.param(store, "base_head.b"));
  }

  // Hierarchical expert forward. With mask == nullptr every expert is
  // evaluated and expert inputs are plain gate-weighted sums; with a mask,
  // kept gate weights are renormalized per target expert and only experts
  // on kept paths are evaluated. Returns the final-layer heads (all of them
  // unmasked, the active set otherwise).
  std::vector<Head> hei_forward(Tape& t, ParameterStore& store, Value base,
                                const HierMask* mask,
                                HeiTrace* trace = nullptr) const {
    const HEIConfig& hc = cfg_.hei;
    std::vector<std::vector<char>> needed = needed_experts(mask);

    // layer 1 consumes the base output directly
    std::map<int, Value> prev;
    for (int n = 0; n < hc.experts[0]; ++n)
      if (needed[0][n]) {
        prev[n] = expert_mlp(t, store, 0, n, base, trace);
      }

    std::vector<Head> heads;
    for (int l = 1; l < hc.L; ++l) {
      int np = hc.experts[l - 1], nl = hc.experts[l];
      Value gate_out = t.add_bias(
          t.matmul(base, t.param(store, gate_prefix(l) + ".w")),
          t.param(store, gate_prefix(l) + ".b"));
      std::map<int, Value> cur;
      Array2 gate_snapshot(t.val(base).rows, np * nl);
      for (int n = 0; n < nl; ++n) {
        Value g = t.softmax_rows(t.slice_cols(gate_out, n * np, np));
        if (trace) {
          const Array2& gv = t.val(g);
          for (int r = 0; r < gv.rows; ++r)
            for (int i = 0; i < np; ++i)
              gate_snapshot.at(r, n * np + i) = gv.at(r, i);
        }
        if (!needed[l][n]) continue;

        Value input{-1};
        if (!mask) {
          for (int i = 0; i < np; ++i) {
            Value term = t.mul_colvec(prev.at(i), t.slice_cols(g, i, 1));
            input = i == 0 ? term : t.add(input, term);
          }
        } else {
          const MaskLayer& ml = mask->layers[l - 1];
          std::vector<double> km(size_t(np), 0.0);
          for (int i = 0; i < np; ++i)
            if (ml.at(i, n) && prev.count(i)) km[i] = 1.0;
          Value masked = t.mul_const_rowvec(g, km);
          Value denom = t.row_sum(masked);
          double dmin = 1e300;
          for (double v : t.val(denom).data) dmin = std::min(dmin, v);
          if (dmin <= 1e-300) {
            // gate weights underflowed: treat the column as all-zero
            if (trace) trace->degenerate_denominator = true;
            continue;
          }
          Value norm = t.div_colvec(masked, denom);
          bool first = true;
          for (int i = 0; i < np; ++i) {
            if (km[i] == 0.0) continue;
            Value term = t.mul_colvec(prev.at(i), t.slice_cols(norm, i, 1));
            input = first ? term : t.add(input, term);
            first = false;
          }
          if (first) continue;
        }
        cur[n] = expert_mlp(t, store, l, n, input, trace);
      }
      if (trace) trace->gate_values.push_back(std::move(gate_snapshot));
      prev = std::move(cur);
    }
    for (auto& [n, v] : prev) heads.push_back({n, v});
    if (heads.empty())
      throw std::runtime_error("hei_forward: active expert set is empty");
    return heads;
  }

  // parameter count of embeddings excluded; used by the capacity check
  long hei_param_count() const {
    const HEIConfig& hc = cfg_.hei;
    int base = cfg_.mmoe.out_dim();
    long n = 0;
    for (int l = 0; l < hc.L; ++l) {
      int in_l = l == 0 ? base : hc.hidden[l - 1].second;
      auto [h1, h2] = hc.hidden[l];
      long per = long(in_l) * h1 + h1 + long(h1) * h2 + h2;
      if (l == hc.L - 1) per += h2 + 1;
      n += per * hc.experts[l];
      if (l >= 1)
        n += (long(base) + 1) * hc.experts[l - 1] * hc.experts[l];
    }
    return n;
  }

 private:
  static std::string expert_prefix(int l, int n) {
    return "hei.l" + std::to_string(l + 1) + ".e" + std::to_string(n);
  }
  static std::string gate_prefix(int l) {
    return "hei.gate.l" + std::to_string(l + 1);
  }

  Value expert_mlp(Tape& t, ParameterStore& store, int l, int n, Value in,
                   HeiTrace* trace) const {
    std::string p = expert_prefix(l, n);
    Value h = t.relu(t.add_bias(t.matmul(in, t.param(store, p + ".w1")),
                                t.param(store, p + ".b1")));
    h = t.relu(t.add_bias(t.matmul(h, t.param(store, p + ".w2")),
               t.param(store, p + ".b2")));
    if (l == cfg_.hei.L - 1)
      h = t.add_bias(t.matmul(h, t.param(store, p + ".head_w")),
                     t.param(store, p + ".head_b"));
    if (trace) trace->experts_evaluated++;
    return h;
  }

  // which experts must be evaluated per layer, walking back from the
  // mask's active final heads; everything when unmasked
  std::vector<std::vector<char>> needed_experts(const HierMask* mask) const {
    const HEIConfig& hc = cfg_.hei;
    std::vector<std::vector<char>> needed{size_t(hc.L)};
    for (int l = 0; l < hc.L; ++l)
      needed[l].assign(size_t(hc.experts[l]), mask ? 0 : 1);
    if (!mask) return needed;
    if (int(mask->layers.size()) != hc.L - 1)
      throw std::invalid_argument("hei_forward: mask layer count mismatch");
    std::vector<int> active = aread::active_set(*mask);
    if (active.empty())
      throw std::runtime_error("hei_forward: mask has empty active set");
    for (int n : active) needed[hc.L - 1][n] = 1;
    for (int l = hc.L - 1; l >= 1; --l) {
      const MaskLayer& ml = mask->layers[l - 1];
      for (int n = 0; n < hc.experts[l]; ++n)
        if (needed[l][n])
          for (int i = 0; i < hc.experts[l - 1]; ++i)
            if (ml.at(i, n)) needed[l - 1][i] = 1;
    }
    return needed;
  }

  ModelConfig cfg_;
  std::vector<int> vocab_sizes_;
};

// Warm-up objective: BCE of the averaged head sigmoids, mean over the batch.
inline Value loss_warmup(Tape& t, const std::vector<Head>& heads,
                         const std::vector<double>& labels) {
  if (heads.empty()) throw std::invalid_argument("loss_warmup: no heads");
  Value p{-1};
  for (size_t i = 0; i < heads.size(); ++i) {
    Value s = t.sigmoid(heads[i].logit);
    p = i == 0 ? s : t.add(p, s);
  }
  p = t.scale(p, 1.0 / double(heads.size()));
  return t.mean_all(t.bce(p, labels));
}

// Bagging-style objective: per-head BCE terms summed, each head receiving
// its own gradient; batch-mean within each term.
inline Value loss_masked(Tape& t, const std::vector<Head>& heads,
                         const std::vector<double>& labels) {
  if (heads.empty())
    throw std::invalid_argument("loss_masked: active set is empty");
  Value total{-1};
  for (size_t i = 0; i < heads.size(); ++i) {
    Value term = t.mean_all(t.bce(t.sigmoid(heads[i].logit), labels));
    total = i == 0 ? term : t.add(total, term);
  }
  return total;
}

// Inference: mean of head sigmoids per sample.
inline std::vector<double> predict(Tape& t, const std::vector<Head>& heads) {
  if (heads.empty()) throw std::invalid_argument("predict: no heads");
  int rows = t.val(heads[0].logit).rows;
  std::vector<double> out(size_t(rows), 0.0);
  for (const Head& h : heads) {
    const Array2& v = t.val(h.logit);
    for (int i = 0; i < rows; ++i)
      out[i] += 1.0 / (1.0 + std::exp(-v.at(i, 0)));
  }
  for (double& v : out) v /= double(heads.size());
  return out;
}

}  // namespace aread
