#pragma once

#include "avsep/param_store.hpp"

namespace avsep {

// Global L2 gradient-norm clipping over a parameter set. Returns the pre-clip
// norm so callers can log or assert on it.
template <typename R>
double clip_global_norm(const std::vector<std::pair<std::string, var<R>>>& params,
                        double threshold) {
  double ss = 0.0;
  for (const auto& [name, p] : params) {
    if (p->grad.data.empty()) continue;
    for (R g : p->grad.data) ss += double(g) * double(g);
  }
  const double norm = std::sqrt(ss);
  if (threshold > 0.0 && norm > threshold) {
    const R k = R(threshold / norm);
    for (const auto& [name, p] : params) {
      if (p->grad.data.empty()) continue;
      for (R& g : p->grad.data) g *= k;
    }
  }
  return norm;
}

template <typename R>
struct adam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  i64 t = 0;
  std::vector<std::pair<std::string, var<R>>> params;
  std::vector<tensor<R>> m, v;

  adam() = default;
  adam(std::vector<std::pair<std::string, var<R>>> trainable, double learning_rate)
      : lr(learning_rate), params(std::move(trainable)) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto& [name, p] : params) {
      m.push_back(tensor<R>(p->value.shape));
      v.push_back(tensor<R>(p->value.shape));
    }
  }

  // Skips parameters whose gradient slot was never touched this step.
  void step() {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, double(t));
    const double bc2 = 1.0 - std::pow(beta2, double(t));
    for (size_t i = 0; i < params.size(); ++i) {
      var<R>& p = params[i].second;
      if (p->grad.data.empty()) continue;
      for (i64 j = 0; j < p->value.numel(); ++j) {
        const double g = double(p->grad.data[size_t(j)]);
        const double mj = beta1 * double(m[i].data[size_t(j)]) + (1.0 - beta1) * g;
        const double vj = beta2 * double(v[i].data[size_t(j)]) + (1.0 - beta2) * g * g;
        m[i].data[size_t(j)] = R(mj);
        v[i].data[size_t(j)] = R(vj);
        p->value.data[size_t(j)] -=
            R(lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps));
      }
    }
  }
};

// Validation-loss plateau logic: halve the learning rate after `patience`
// epochs without improvement, stop after `stop_after`.
struct plateau_tracker {
  i64 patience = 15, stop_after = 30;
  double best = std::numeric_limits<double>::infinity();
  i64 since_best = 0;

  struct decision {
    bool improved = false, halve_lr = false, stop = false;
  };

  decision update(double val_loss) {
    decision d;
    if (val_loss < best) {
      best = val_loss;
      since_best = 0;
      d.improved = true;
      return d;
    }
    ++since_best;
    d.halve_lr = (since_best % patience) == 0;
    d.stop = since_best >= stop_after;
    return d;
  }
};

}  // namespace avsep
