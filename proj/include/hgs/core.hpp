#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgs {

/// Base class for all errors raised by the library.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a computation produces NaN/Inf or a state leaves the
/// guarded range (signals trajectory blow-up, see eval::stability_analyze).
struct NonFiniteError : Error {
  explicit NonFiniteError(const std::string& what) : Error(what) {}
};

/// Invalid inputs: malformed graphs, shape mismatches, unknown ids.
struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error(what) {}
};

/// Dense row-major matrix; the only linear-algebra container the project needs.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
  bool empty() const { return rows == 0 || cols == 0; }
  size_t size() const { return v.size(); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

inline double sq(double x) { return x * x; }

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// Squared L2 distance between two equal-shape matrices.
inline double sq_dist(const Mat& a, const Mat& b) {
  double s = 0;
  for (size_t i = 0; i < a.v.size(); ++i) s += sq(a.v[i] - b.v[i]);
  return s;
}

/// 64-bit FNV-1a, used for content hashes in run manifests.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

}  // namespace hgs
