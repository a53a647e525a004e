#pragma once

#include <unordered_map>

#include "avsep/autodiff.hpp"

// Named parameter registry. Creation order is deterministic (layers register
// in construction order from one RNG stream), and all random draws happen in
// double before casting so float and double builds see identical values.

namespace avsep {

template <typename R>
struct param_store {
  std::vector<std::pair<std::string, var<R>>> items;
  std::unordered_map<std::string, size_t> index;
  rng gen;

  explicit param_store(u64 seed) : gen(seed) {}

  var<R> add(const std::string& name, tensor<R> init, bool trainable = true) {
    require_cfg(index.find(name) == index.end(), "duplicate parameter name: " + name);
    var<R> v = make_leaf(std::move(init), trainable);
    index[name] = items.size();
    items.emplace_back(name, v);
    return v;
  }

  // Uniform in [-bound, bound].
  var<R> uniform(const std::string& name, std::vector<i64> shape, double bound) {
    tensor<R> t(shape);
    for (i64 i = 0; i < t.numel(); ++i) t.data[size_t(i)] = R((gen.uniform() * 2.0 - 1.0) * bound);
    return add(name, std::move(t));
  }

  // The usual fan-in rule for conv/linear weights.
  var<R> uniform_fan_in(const std::string& name, std::vector<i64> shape, i64 fan_in) {
    check_internal(fan_in > 0, "uniform_fan_in: fan_in must be positive");
    return uniform(name, std::move(shape), std::sqrt(1.0 / double(fan_in)));
  }

  var<R> zeros(const std::string& name, std::vector<i64> shape) {
    return add(name, tensor<R>(std::move(shape)));
  }

  var<R> full(const std::string& name, std::vector<i64> shape, double value) {
    tensor<R> t(std::move(shape));
    t.fill(R(value));
    return add(name, std::move(t));
  }

  var<R> normal(const std::string& name, std::vector<i64> shape, double stddev) {
    tensor<R> t(shape);
    for (i64 i = 0; i < t.numel(); ++i) t.data[size_t(i)] = R(gen.normal() * stddev);
    return add(name, std::move(t));
  }

  bool has(const std::string& name) const { return index.count(name) > 0; }

  var<R> get(const std::string& name) const {
    auto it = index.find(name);
    require_cfg(it != index.end(), "unknown parameter: " + name);
    return items[it->second].second;
  }

  void freeze_prefix(const std::string& prefix) {
    for (auto& [name, v] : items)
      if (name.rfind(prefix, 0) == 0) v->requires_grad = false;
  }

  std::vector<std::pair<std::string, var<R>>> trainable() const {
    std::vector<std::pair<std::string, var<R>>> out;
    for (auto& kv : items)
      if (kv.second->requires_grad) out.push_back(kv);
    return out;
  }

  i64 total_count() const {
    i64 n = 0;
    for (auto& kv : items) n += kv.second->value.numel();
    return n;
  }

  i64 count_prefix(const std::string& prefix) const {
    i64 n = 0;
    for (auto& kv : items)
      if (kv.first.rfind(prefix, 0) == 0) n += kv.second->value.numel();
    return n;
  }

  void zero_grads() {
    for (auto& kv : items) clear_grad(kv.second);
  }
};

}  // namespace avsep
