#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "ddn/error.hpp"

namespace ddn {

// Dense row-major tensor, rank 1..5. Dimensions are ints (extents fit easily),
// linear size is 64-bit.
using Shape = std::vector<int>;

constexpr int kMaxRank = 5;

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += ")";
  return out;
}

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline void check_shape(const Shape& s) {
  require(!s.empty() && (int)s.size() <= kMaxRank, "tensor rank must be 1..",
          kMaxRank, ", got rank ", s.size());
  for (int d : s)
    require(d > 0, "tensor extents must be positive, got shape ", shape_str(s));
}

template <class T>
struct Tensor {
  Shape dims;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape d) : dims(std::move(d)) {
    check_shape(dims);
    data.assign(static_cast<size_t>(shape_numel(dims)), T(0));
  }
  Tensor(Shape d, std::vector<T> v) : dims(std::move(d)), data(std::move(v)) {
    check_shape(dims);
    require((int64_t)data.size() == shape_numel(dims),
            "tensor data length ", data.size(), " does not match shape ",
            shape_str(dims));
  }

  static Tensor zeros(Shape d) { return Tensor(std::move(d)); }
  static Tensor full(Shape d, T v) {
    Tensor t(std::move(d));
    for (auto& x : t.data) x = v;
    return t;
  }

  int rank() const { return (int)dims.size(); }
  int dim(int i) const { return dims[i]; }
  int64_t size() const { return (int64_t)data.size(); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator[](int64_t i) { return data[i]; }
  const T& operator[](int64_t i) const { return data[i]; }

  // Convenience multi-index access for non-hot-path code and tests.
  T& at(int i, int j) { return data[(int64_t)i * dims[1] + j]; }
  const T& at(int i, int j) const { return data[(int64_t)i * dims[1] + j]; }
  T& at(int i, int j, int k) {
    return data[((int64_t)i * dims[1] + j) * dims[2] + k];
  }
  const T& at(int i, int j, int k) const {
    return data[((int64_t)i * dims[1] + j) * dims[2] + k];
  }
  T& at(int i, int j, int k, int l) {
    return data[(((int64_t)i * dims[1] + j) * dims[2] + k) * dims[3] + l];
  }
  const T& at(int i, int j, int k, int l) const {
    return data[(((int64_t)i * dims[1] + j) * dims[2] + k) * dims[3] + l];
  }

  bool same_shape(const Tensor& o) const { return dims == o.dims; }

  bool all_finite() const {
    for (const T& x : data)
      if (!std::isfinite((double)x)) return false;
    return true;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.dims = dims;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = (U)data[i];
    return out;
  }
};

template <class T>
void check_finite(const Tensor<T>& t, const char* what) {
  if (!t.all_finite())
    fail_numeric("non-finite value in ", what, " with shape ",
                 shape_str(t.dims));
}

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                      const char* what) {
  require(a.dims == b.dims, what, ": shape mismatch ", shape_str(a.dims),
          " vs ", shape_str(b.dims));
}

template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  T m = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    T d = std::abs(a.data[i] - b.data[i]);
    if (d > m) m = d;
  }
  return m;
}

// Relative error with an absolute floor, used by the gradient checks.
template <class T>
T max_rel_diff(const Tensor<T>& a, const Tensor<T>& b, T floor = T(1e-6)) {
  T m = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    T denom = std::max({std::abs(a.data[i]), std::abs(b.data[i]), floor});
    T d = std::abs(a.data[i] - b.data[i]) / denom;
    if (d > m) m = d;
  }
  return m;
}

}  // namespace ddn
