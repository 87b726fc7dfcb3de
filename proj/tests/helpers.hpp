#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "aread/params.hpp"
#include "aread/tape.hpp"

namespace testutil {

// Central finite differences over every parameter in the store against the
// analytic gradients from one backward pass. Returns the worst relative
// error; coordinates where both gradients are tiny are skipped.
inline double max_grad_rel_err(
    aread::ParameterStore& store,
    const std::function<aread::Value(aread::Tape&)>& build_loss,
    double h = 1e-6) {
  auto eval = [&]() {
    aread::Tape t;
    aread::Value loss = build_loss(t);
    return t.val(loss).data[0];
  };
  store.zero_grads();
  {
    aread::Tape t;
    aread::Value loss = build_loss(t);
    t.backward(loss);
  }
  double worst = 0.0;
  for (auto& [name, e] : store.entries()) {
    for (size_t i = 0; i < e.value.size(); ++i) {
      double saved = e.value.data[i];
      e.value.data[i] = saved + h;
      double fp = eval();
      e.value.data[i] = saved - h;
      double fm = eval();
      e.value.data[i] = saved;
      double fd = (fp - fm) / (2.0 * h);
      double g = e.grad.data[i];
      double denom = std::max(std::abs(fd), std::abs(g));
      // below central-difference resolution at this h
      if (denom < 1e-5 || std::abs(fd - g) < 1e-8) continue;
      worst = std::max(worst, std::abs(fd - g) / denom);
    }
  }
  store.zero_grads();
  return worst;
}

inline std::string tmpdir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

inline std::string slurp(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) return "";
  std::string s;
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) s.append(buf, n);
  std::fclose(f);
  return s;
}

}  // namespace testutil
