#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace aread {

// Dense row-major matrix of 64-bit floats. The whole compute layer works in
// doubles so finite-difference checks stay tight.
struct Array2 {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Array2() = default;
  Array2(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(size_t(r) * size_t(c), fill) {}

  static Array2 from(int r, int c, std::vector<double> d) {
    if (d.size() != size_t(r) * size_t(c))
      throw std::invalid_argument("Array2::from: data length mismatch");
    Array2 a;
    a.rows = r;
    a.cols = c;
    a.data = std::move(d);
    return a;
  }

  double& at(int r, int c) { return data[size_t(r) * cols + c]; }
  double at(int r, int c) const { return data[size_t(r) * cols + c]; }
  size_t size() const { return data.size(); }

  bool same_shape(const Array2& o) const {
    return rows == o.rows && cols == o.cols;
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool operator==(const Array2& o) const {
    return rows == o.rows && cols == o.cols && data == o.data;
  }
};

inline std::string shape_str(const Array2& a) {
  return std::to_string(a.rows) + "x" + std::to_string(a.cols);
}

// FNV-1a over the raw little-endian bytes of the doubles; used for the
// bitwise snapshot/reset checks.
inline uint64_t fnv1a_bytes(uint64_t h, const void* p, size_t n) {
  const unsigned char* b = static_cast<const unsigned char*>(p);
  for (size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t hash_array(uint64_t h, const Array2& a) {
  h = fnv1a_bytes(h, &a.rows, sizeof(a.rows));
  h = fnv1a_bytes(h, &a.cols, sizeof(a.cols));
  return fnv1a_bytes(h, a.data.data(), a.data.size() * sizeof(double));
}

}  // namespace aread
