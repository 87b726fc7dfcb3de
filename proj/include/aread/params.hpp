#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "aread/array.hpp"
#include "aread/rng.hpp"

namespace aread {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const {
    if (!(lr > 0)) throw std::invalid_argument("AdamConfig: lr must be > 0");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
      throw std::invalid_argument("AdamConfig: betas must be in [0,1)");
  }
};

struct ParamEntry {
  Array2 value;
  Array2 grad;
  Array2 m;  // Adam first moment
  Array2 v;  // Adam second moment
};

// Snapshot of the full trainable state, including optimizer moments and the
// step counter, so every mask candidate restarts from an identical
// optimization state.
struct ParamSnapshot {
  std::map<std::string, ParamEntry> entries;
  long step_count = 0;
};

// Flat, named collection of all trainable arrays. std::map keeps iteration
// order deterministic, which the update, hashing, and checkpoint paths rely on.
class ParameterStore {
 public:
  Array2& create(const std::string& name, int rows, int cols) {
    if (entries_.count(name))
      throw std::invalid_argument("ParameterStore: duplicate name " + name);
    ParamEntry e;
    e.value = Array2(rows, cols);
    e.grad = Array2(rows, cols);
    e.m = Array2(rows, cols);
    e.v = Array2(rows, cols);
    return entries_.emplace(name, std::move(e)).first->second.value;
  }

  // Glorot-uniform init
  Array2& create_init(const std::string& name, int rows, int cols, Rng& rng) {
    Array2& a = create(name, rows, cols);
    double s = std::sqrt(6.0 / double(rows + cols));
    for (double& v : a.data) v = rng.uniform(-s, s);
    return a;
  }

  bool has(const std::string& name) const { return entries_.count(name) > 0; }

  ParamEntry& entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end())
      throw std::invalid_argument("ParameterStore: no parameter " + name);
    return it->second;
  }
  const ParamEntry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end())
      throw std::invalid_argument("ParameterStore: no parameter " + name);
    return it->second;
  }

  std::map<std::string, ParamEntry>& entries() { return entries_; }
  const std::map<std::string, ParamEntry>& entries() const { return entries_; }
  long step_count() const { return step_count_; }

  void zero_grads() {
    for (auto& [name, e] : entries_) e.grad.fill(0.0);
  }

  // Standard Adam with bias correction; L2 term is added to the gradient
  // before the moment updates. Gradients are zeroed afterwards.
  void adam_step(const AdamConfig& cfg) {
    cfg.validate();
    long t = step_count_ + 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
    double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
    for (auto& [name, e] : entries_) {
      for (size_t i = 0; i < e.value.size(); ++i) {
        double g = e.grad.data[i];
        if (!std::isfinite(g))
          throw std::runtime_error("adam_step: non-finite gradient in " + name);
        g += cfg.weight_decay * e.value.data[i];
        e.m.data[i] = cfg.beta1 * e.m.data[i] + (1.0 - cfg.beta1) * g;
        e.v.data[i] = cfg.beta2 * e.v.data[i] + (1.0 - cfg.beta2) * g * g;
        double mhat = e.m.data[i] / bc1;
        double vhat = e.v.data[i] / bc2;
        e.value.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      }
      e.grad.fill(0.0);
    }
    step_count_ = t;
  }

  ParamSnapshot snapshot() const {
    ParamSnapshot s;
    s.entries = entries_;
    s.step_count = step_count_;
    return s;
  }

  void restore(const ParamSnapshot& s) {
    if (s.entries.size() != entries_.size())
      throw std::runtime_error("restore: snapshot layout mismatch");
    for (auto& [name, e] : entries_) {
      auto it = s.entries.find(name);
      if (it == s.entries.end() || !it->second.value.same_shape(e.value))
        throw std::runtime_error("restore: snapshot layout mismatch at " + name);
      e = it->second;
    }
    step_count_ = s.step_count;
  }

  // Hash over values, moments, and step count.
  uint64_t state_hash() const {
    uint64_t h = 1469598103934665603ull;
    for (const auto& [name, e] : entries_) {
      h = fnv1a_bytes(h, name.data(), name.size());
      h = hash_array(h, e.value);
      h = hash_array(h, e.m);
      h = hash_array(h, e.v);
    }
    h = fnv1a_bytes(h, &step_count_, sizeof(step_count_));
    return h;
  }

  bool state_equals(const ParamSnapshot& s) const {
    if (step_count_ != s.step_count || s.entries.size() != entries_.size())
      return false;
    for (const auto& [name, e] : entries_) {
      auto it = s.entries.find(name);
      if (it == s.entries.end()) return false;
      const ParamEntry& o = it->second;
      if (!(e.value == o.value && e.m == o.m && e.v == o.v)) return false;
    }
    return true;
  }

  // Checkpoint format: magic "ARCK", uint64 little-endian manifest length,
  // JSON manifest, then for each array in manifest order the raw
  // little-endian doubles of value, m, v.
  void save(const std::string& path, const nlohmann::json& meta) const {
    nlohmann::json manifest;
    manifest["step_count"] = step_count_;
    manifest["meta"] = meta;
    auto arrays = nlohmann::json::array();
    for (const auto& [name, e] : entries_)
      arrays.push_back({{"name", name},
                        {"rows", e.value.rows},
                        {"cols", e.value.cols}});
    manifest["arrays"] = arrays;
    std::string js = manifest.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint " + path);
    f.write("ARCK", 4);
    uint64_t n = js.size();
    f.write(reinterpret_cast<const char*>(&n), sizeof(n));
    f.write(js.data(), std::streamsize(js.size()));
    for (const auto& [name, e] : entries_) {
      for (const Array2* a : {&e.value, &e.m, &e.v})
        f.write(reinterpret_cast<const char*>(a->data.data()),
                std::streamsize(a->data.size() * sizeof(double)));
    }
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
  }

  // Loads into an empty store; returns the manifest meta.
  nlohmann::json load(const std::string& path) {
    if (!entries_.empty())
      throw std::runtime_error("load: store must be empty");
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read checkpoint " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::string(magic, 4) != "ARCK")
      throw std::runtime_error("bad checkpoint magic in " + path);
    uint64_t n = 0;
    f.read(reinterpret_cast<char*>(&n), sizeof(n));
    std::string js(n, '\0');
    f.read(js.data(), std::streamsize(n));
    nlohmann::json manifest = nlohmann::json::parse(js);
    step_count_ = manifest.at("step_count").get<long>();
    for (const auto& a : manifest.at("arrays")) {
      std::string name = a.at("name").get<std::string>();
      int rows = a.at("rows").get<int>();
      int cols = a.at("cols").get<int>();
      create(name, rows, cols);
      ParamEntry& e = entries_.at(name);
      for (Array2* arr : {&e.value, &e.m, &e.v}) {
        f.read(reinterpret_cast<char*>(arr->data.data()),
               std::streamsize(arr->data.size() * sizeof(double)));
      }
    }
    if (!f) throw std::runtime_error("truncated checkpoint " + path);
    return manifest.value("meta", nlohmann::json::object());
  }

 private:
  std::map<std::string, ParamEntry> entries_;
  long step_count_ = 0;
};

}  // namespace aread
