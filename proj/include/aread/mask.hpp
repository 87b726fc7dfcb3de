#pragma once

#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "aread/array.hpp"
#include "aread/rng.hpp"

namespace aread {

// Binary gate-selection mask for one domain: one {0,1} matrix of shape
// N_{l-1} x N_l per expert layer l = 2..L. Entry [i,n] keeps or drops the
// gate from expert i of the previous layer into expert n.
struct MaskLayer {
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> m;

  MaskLayer() = default;
  MaskLayer(int r, int c, uint8_t fill = 0)
      : rows(r), cols(c), m(size_t(r) * size_t(c), fill) {}
  uint8_t& at(int r, int c) { return m[size_t(r) * cols + c]; }
  uint8_t at(int r, int c) const { return m[size_t(r) * cols + c]; }
};

struct HierMask {
  std::vector<MaskLayer> layers;  // index 0 is expert layer 2

  static HierMask all_ones(const std::vector<std::pair<int, int>>& shapes) {
    HierMask h;
    for (auto [r, c] : shapes) h.layers.emplace_back(r, c, 1);
    return h;
  }

  long kept() const {
    long k = 0;
    for (const auto& l : layers)
      for (uint8_t v : l.m) k += v;
    return k;
  }

  long total() const {
    long t = 0;
    for (const auto& l : layers) t += long(l.rows) * l.cols;
    return t;
  }

  bool same_shape(const HierMask& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (size_t i = 0; i < layers.size(); ++i)
      if (layers[i].rows != o.layers[i].rows ||
          layers[i].cols != o.layers[i].cols)
        return false;
    return true;
  }
};

// kept-entry fraction over all gate positions of layers 2..L
inline double density(const HierMask& m) {
  long t = m.total();
  return t == 0 ? 0.0 : double(m.kept()) / double(t);
}

// final-layer experts with at least one kept incoming gate
inline std::vector<int> active_set(const HierMask& m) {
  if (m.layers.empty()) throw std::invalid_argument("active_set: empty mask");
  const MaskLayer& last = m.layers.back();
  std::vector<int> k;
  for (int n = 0; n < last.cols; ++n)
    for (int i = 0; i < last.rows; ++i)
      if (last.at(i, n)) {
        k.push_back(n);
        break;
      }
  return k;
}

// Drops gates whose source expert is itself unreachable: walking forward
// from layer 2 (whose sources, the layer-1 experts, are always live), an
// expert is live iff it has a kept incoming gate, and gates out of dead
// experts are cleared. If this empties the final layer's active set, the
// single full path with the highest average gate mean is restored.
// gate_means must hold one matrix per mask layer (may be empty to use
// uniform means for the fallback).
inline void drop_dangling(HierMask& m) {
  if (m.layers.empty()) return;
  std::vector<uint8_t> live(size_t(m.layers[0].rows), 1);  // layer-1 experts
  for (auto& layer : m.layers) {
    std::vector<uint8_t> next_live(size_t(layer.cols), 0);
    for (int n = 0; n < layer.cols; ++n)
      for (int i = 0; i < layer.rows; ++i) {
        if (layer.at(i, n) && !live[i]) layer.at(i, n) = 0;
        if (layer.at(i, n)) next_live[n] = 1;
      }
    live = std::move(next_live);
  }
}

inline void repair_connectivity(HierMask& m,
                                const std::vector<Array2>& gate_means) {
  if (m.layers.empty()) return;
  drop_dangling(m);
  if (!active_set(m).empty()) return;

  // restore the best full path by enumerating all (i_2, ..., i_L) chains
  auto mean_at = [&](size_t l, int i, int n) {
    if (l < gate_means.size() && gate_means[l].rows == m.layers[l].rows &&
        gate_means[l].cols == m.layers[l].cols)
      return gate_means[l].at(i, n);
    return 1.0;
  };
  size_t L = m.layers.size();
  std::vector<int> path(L + 1), best_path;
  double best = -1.0;
  std::function<void(size_t, double)> walk = [&](size_t l, double acc) {
    if (l == L) {
      double score = acc / double(L);
      if (score > best) {
        best = score;
        best_path = path;
      }
      return;
    }
    int cols = m.layers[l].cols;
    for (int n = 0; n < cols; ++n) {
      path[l + 1] = n;
      walk(l + 1, acc + mean_at(l, path[l], n));
    }
  };
  for (int i0 = 0; i0 < m.layers[0].rows; ++i0) {
    path[0] = i0;
    walk(0, 0.0);
  }
  for (size_t l = 0; l < L; ++l)
    m.layers[l].at(best_path[l], best_path[l + 1]) = 1;
}

// Text format: "domain <d>" header, then one line per layer of row-major
// 0/1 digits prefixed by "rows cols".
inline void save_mask(const HierMask& m, int domain,
                      const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_mask: cannot write " + path);
  f << "domain " << domain << "\n";
  for (const auto& layer : m.layers) {
    f << layer.rows << " " << layer.cols << " ";
    for (uint8_t v : layer.m) f << int(v);
    f << "\n";
  }
}

inline HierMask load_mask(const std::string& path, int* domain = nullptr) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_mask: cannot open " + path);
  std::string word;
  int d;
  f >> word >> d;
  if (word != "domain") throw std::runtime_error("load_mask: bad header");
  if (domain) *domain = d;
  HierMask m;
  int rows, cols;
  while (f >> rows >> cols) {
    std::string bits;
    f >> bits;
    if (int(bits.size()) != rows * cols)
      throw std::runtime_error("load_mask: bad layer line");
    MaskLayer layer(rows, cols);
    for (size_t i = 0; i < bits.size(); ++i) layer.m[i] = bits[i] == '1';
    m.layers.push_back(std::move(layer));
  }
  return m;
}

}  // namespace aread
