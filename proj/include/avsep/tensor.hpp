#pragma once

#include <algorithm>
#include <sstream>
#include <vector>

#include "avsep/common.hpp"

namespace avsep {

// Dense row-major tensor; the last axis is contiguous. Audio feature maps are
// [channels x time], video feature maps [channels x height x width x frames].
// Default scalar type for runtime work is float; double instantiations are
// used for verification (gradient checks, golden-vector generation).
template <typename R>
struct tensor {
  std::vector<i64> shape;
  std::vector<R> data;

  tensor() = default;
  explicit tensor(std::vector<i64> s) : shape(std::move(s)) {
    data.assign(size_t(count(shape)), R(0));
  }
  tensor(std::vector<i64> s, std::vector<R> d) : shape(std::move(s)), data(std::move(d)) {
    check_internal(count(shape) == i64(data.size()), "tensor: shape/data mismatch");
  }

  static i64 count(const std::vector<i64>& s) {
    i64 n = 1;
    for (i64 d : s) {
      check_internal(d >= 0, "tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  static tensor zeros(std::vector<i64> s) { return tensor(std::move(s)); }
  static tensor full(std::vector<i64> s, R v) {
    tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  i64 numel() const { return i64(data.size()); }
  int rank() const { return int(shape.size()); }
  i64 dim(int i) const { return shape.at(size_t(i)); }

  // 2-D helpers; most audio ops view tensors as [rows x cols].
  i64 rows() const { return rank() == 1 ? 1 : shape[0]; }
  i64 cols() const { return rank() == 1 ? shape[0] : numel() / std::max<i64>(shape[0], 1); }

  R* ptr() { return data.data(); }
  const R* ptr() const { return data.data(); }

  R& at2(i64 r, i64 c) { return data[size_t(r * cols() + c)]; }
  R at2(i64 r, i64 c) const { return data[size_t(r * cols() + c)]; }

  bool same_shape(const tensor& o) const { return shape == o.shape; }

  void fill(R v) { std::fill(data.begin(), data.end(), v); }

  template <typename To>
  tensor<To> cast() const {
    tensor<To> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = To(data[i]);
    return out;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
  }
};

template <typename R>
tensor<R> random_tensor(rng& g, std::vector<i64> shape, double lo = -1.0, double hi = 1.0) {
  tensor<R> t(std::move(shape));
  for (auto& v : t.data) v = R(g.uniform(lo, hi));
  return t;
}

template <typename R>
tensor<R> random_normal_tensor(rng& g, std::vector<i64> shape, double stddev = 1.0) {
  tensor<R> t(std::move(shape));
  for (auto& v : t.data) v = R(g.normal() * stddev);
  return t;
}

template <typename R>
double max_abs_diff(const tensor<R>& a, const tensor<R>& b) {
  check_internal(a.same_shape(b), "max_abs_diff: shape mismatch");
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(double(a.data[i]) - double(b.data[i])));
  return m;
}

}  // namespace avsep
