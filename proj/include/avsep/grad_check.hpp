#pragma once

#include <numeric>
#include <set>

#include "avsep/autodiff.hpp"

// Central-difference gradient verification. The loss builder is re-invoked for
// every probe because graphs are single-use (buffers are freed on backward), so
// it must rebuild the graph from the leaf tensors each call.

namespace avsep {

struct grad_check_report {
  i64 checked = 0;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::string worst;

  bool ok(double tol) const { return checked > 0 && max_rel_err <= tol; }
};

template <typename BuildLoss>
grad_check_report grad_check(BuildLoss build_loss,
                             const std::vector<std::pair<std::string, var<double>>>& leaves,
                             double h = 1e-4, i64 max_per_tensor = 24, u64 seed = 12345) {
  for (auto& [name, v] : leaves) clear_grad(v);
  {
    var<double> loss = build_loss();
    backward(loss, true);
  }
  std::vector<tensor<double>> analytic;
  analytic.reserve(leaves.size());
  for (auto& [name, v] : leaves) {
    analytic.push_back(grad_of(v));
    (void)name;
  }

  grad_check_report rep;
  rng r(seed);
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = leaves[li].second;
    const i64 n = leaf->value.numel();
    std::vector<i64> idx;
    if (n <= max_per_tensor) {
      idx.resize(size_t(n));
      std::iota(idx.begin(), idx.end(), i64(0));
    } else {
      std::set<i64> seen;
      while (i64(seen.size()) < max_per_tensor) seen.insert(r.uniform_int(n));
      idx.assign(seen.begin(), seen.end());
    }
    for (i64 j : idx) {
      const double orig = leaf->value.data[size_t(j)];
      leaf->value.data[size_t(j)] = orig + h;
      const double lp = item(build_loss());
      leaf->value.data[size_t(j)] = orig - h;
      const double lm = item(build_loss());
      leaf->value.data[size_t(j)] = orig;
      const double numeric = (lp - lm) / (2.0 * h);
      const double ana = analytic[li].data[size_t(j)];
      const double abs_err = std::abs(numeric - ana);
      const double rel = abs_err / std::max(std::abs(numeric) + std::abs(ana), 1e-6);
      ++rep.checked;
      rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = leaves[li].first + "[" + std::to_string(j) + "] analytic=" +
                    std::to_string(ana) + " numeric=" + std::to_string(numeric);
      }
    }
  }
  for (auto& [name, v] : leaves) clear_grad(v);
  return rep;
}

}  // namespace avsep
