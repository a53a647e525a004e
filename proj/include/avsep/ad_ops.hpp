#pragma once

#include "avsep/autodiff.hpp"
#include "avsep/dct.hpp"
#include "avsep/kernels.hpp"

// Differentiable op library. Audio feature maps are [C x T] (rank 2); scalars
// are rank-1 tensors with one element. Backward closures accumulate (+=) into
// parent gradients so shared nodes sum naturally.

namespace avsep {

namespace detail {
template <typename R>
void check_same_shape(const var<R>& a, const var<R>& b, const char* what) {
  check_internal(a->value.same_shape(b->value), std::string(what) + ": shape mismatch "
                     + a->value.shape_str() + " vs " + b->value.shape_str());
}
}  // namespace detail

// ---- elementwise -------------------------------------------------------------

template <typename R>
var<R> add(var<R> a, var<R> b) {
  detail::check_same_shape(a, b, "add");
  tensor<R> v(a->value.shape);
  for (i64 i = 0; i < v.numel(); ++i) v.data[i] = a->value.data[i] + b->value.data[i];
  return make_op<R>(std::move(v), {a, b}, [a, b](node<R>& n) {
    if (a->requires_grad) {
      auto& g = grad_of(a);
      for (i64 i = 0; i < n.grad.numel(); ++i) g.data[i] += n.grad.data[i];
    }
    if (b->requires_grad) {
      auto& g = grad_of(b);
      for (i64 i = 0; i < n.grad.numel(); ++i) g.data[i] += n.grad.data[i];
    }
  });
}

template <typename R>
var<R> sub(var<R> a, var<R> b) {
  detail::check_same_shape(a, b, "sub");
  tensor<R> v(a->value.shape);
  for (i64 i = 0; i < v.numel(); ++i) v.data[i] = a->value.data[i] - b->value.data[i];
  return make_op<R>(std::move(v), {a, b}, [a, b](node<R>& n) {
    if (a->requires_grad) {
      auto& g = grad_of(a);
      for (i64 i = 0; i < n.grad.numel(); ++i) g.data[i] += n.grad.data[i];
    }
    if (b->requires_grad) {
      auto& g = grad_of(b);
      for (i64 i = 0; i < n.grad.numel(); ++i) g.data[i] -= n.grad.data[i];
    }
  });
}

template <typename R>
var<R> mul(var<R> a, var<R> b) {
  detail::check_same_shape(a, b, "mul");
  tensor<R> v(a->value.shape);
  for (i64 i = 0; i < v.numel(); ++i) v.data[i] = a->value.data[i] * b->value.data[i];
  return make_op<R>(std::move(v), {a, b}, [a, b](node<R>& n) {
    if (a->requires_grad) {
      auto& g = grad_of(a);
      for (i64 i = 0; i < n.grad.numel(); ++i) g.data[i] += n.grad.data[i] * b->value.data[i];
    }
    if (b->requires_grad) {
      auto& g = grad_of(b);
      for (i64 i = 0; i < n.grad.numel(); ++i) g.data[i] += n.grad.data[i] * a->value.data[i];
    }
  });
}

template <typename R>
var<R> div_ew(var<R> a, var<R> b) {
  detail::check_same_shape(a, b, "div");
  tensor<R> v(a->value.shape);
  for (i64 i = 0; i < v.numel(); ++i) v.data[i] = a->value.data[i] / b->value.data[i];
  return make_op<R>(std::move(v), {a, b}, [a, b](node<R>& n) {
    if (a->requires_grad) {
      auto& g = grad_of(a);
      for (i64 i = 0; i < n.grad.numel(); ++i) g.data[i] += n.grad.data[i] / b->value.data[i];
    }
    if (b->requires_grad) {
      auto& g = grad_of(b);
      for (i64 i = 0; i < n.grad.numel(); ++i) {
        const R bv = b->value.data[i];
        g.data[i] -= n.grad.data[i] * a->value.data[i] / (bv * bv);
      }
    }
  });
}

template <typename R>
var<R> scale(var<R> a, double s) {
  tensor<R> v(a->value.shape);
  for (i64 i = 0; i < v.numel(); ++i) v.data[i] = R(double(a->value.data[i]) * s);
  return make_op<R>(std::move(v), {a}, [a, s](node<R>& n) {
    auto& g = grad_of(a);
    for (i64 i = 0; i < n.grad.numel(); ++i) g.data[i] += R(double(n.grad.data[i]) * s);
  });
}

template <typename R>
var<R> add_const(var<R> a, double c) {
  tensor<R> v(a->value.shape);
  for (i64 i = 0; i < v.numel(); ++i) v.data[i] = R(double(a->value.data[i]) + c);
  return make_op<R>(std::move(v), {a}, [a](node<R>& n) {
    auto& g = grad_of(a);
    for (i64 i = 0; i < n.grad.numel(); ++i) g.data[i] += n.grad.data[i];
  });
}

template <typename R>
var<R> neg(var<R> a) {
  return scale(std::move(a), -1.0);
}

namespace detail {
// f: value map; df: derivative from (input, output).
template <typename R, typename F, typename DF>
var<R> unary_ew(var<R> a, F f, DF df) {
  tensor<R> v(a->value.shape);
  for (i64 i = 0; i < v.numel(); ++i) v.data[i] = f(a->value.data[i]);
  return make_op<R>(std::move(v), {a}, [a, df](node<R>& n) {
    auto& g = grad_of(a);
    for (i64 i = 0; i < n.grad.numel(); ++i)
      g.data[i] += n.grad.data[i] * df(a->value.data[i], n.value.data[i]);
  });
}
}  // namespace detail

template <typename R>
var<R> relu(var<R> a) {
  return detail::unary_ew(std::move(a), [](R x) { return x > R(0) ? x : R(0); },
                          [](R x, R) { return x > R(0) ? R(1) : R(0); });
}

template <typename R>
var<R> leaky_relu(var<R> a, double slope = 0.01) {
  const R s = R(slope);
  return detail::unary_ew(std::move(a), [s](R x) { return x > R(0) ? x : s * x; },
                          [s](R x, R) { return x > R(0) ? R(1) : s; });
}

template <typename R>
var<R> elu(var<R> a) {
  return detail::unary_ew(std::move(a),
                          [](R x) { return x > R(0) ? x : std::expm1(x); },
                          [](R x, R y) { return x > R(0) ? R(1) : y + R(1); });
}

template <typename R>
var<R> sigmoid_v(var<R> a) {
  return detail::unary_ew(std::move(a),
                          [](R x) { return R(1) / (R(1) + std::exp(-x)); },
                          [](R, R y) { return y * (R(1) - y); });
}

template <typename R>
var<R> silu(var<R> a) {
  return detail::unary_ew(
      std::move(a),
      [](R x) { return x / (R(1) + std::exp(-x)); },
      [](R x, R) {
        const R s = R(1) / (R(1) + std::exp(-x));
        return s * (R(1) + x * (R(1) - s));
      });
}

template <typename R>
var<R> gelu_v(var<R> a) {
  // Exact erf form.
  const R inv_sqrt2 = R(0.70710678118654752440);
  const R inv_sqrt2pi = R(0.39894228040143267794);
  return detail::unary_ew(
      std::move(a),
      [inv_sqrt2](R x) { return R(0.5) * x * (R(1) + std::erf(x * inv_sqrt2)); },
      [inv_sqrt2, inv_sqrt2pi](R x, R) {
        const R cdf = R(0.5) * (R(1) + std::erf(x * inv_sqrt2));
        return cdf + x * inv_sqrt2pi * std::exp(R(-0.5) * x * x);
      });
}

template <typename R>
var<R> softplus_v(var<R> a) {
  return detail::unary_ew(
      std::move(a),
      [](R x) { return x > R(30) ? x : std::log1p(std::exp(x)); },
      [](R x, R) { return R(1) / (R(1) + std::exp(-x)); });
}

template <typename R>
var<R> exp_v(var<R> a) {
  return detail::unary_ew(std::move(a), [](R x) { return std::exp(x); },
                          [](R, R y) { return y; });
}

template <typename R>
var<R> log_v(var<R> a) {
  return detail::unary_ew(std::move(a), [](R x) { return std::log(x); },
                          [](R x, R) { return R(1) / x; });
}

template <typename R>
var<R> sqrt_v(var<R> a) {
  return detail::unary_ew(std::move(a), [](R x) { return std::sqrt(x); },
                          [](R, R y) { return R(0.5) / y; });
}

template <typename R>
var<R> square_v(var<R> a) {
  return detail::unary_ew(std::move(a), [](R x) { return x * x; },
                          [](R x, R) { return R(2) * x; });
}

// ---- broadcasts ---------------------------------------------------------------

// x: [C x T], b: [C]; adds b[c] to every step of row c.
template <typename R>
var<R> add_rows(var<R> x, var<R> b) {
  const i64 C = x->value.rows(), T = x->value.cols();
  check_internal(b->value.numel() == C, "add_rows: bias size mismatch");
  tensor<R> v(x->value.shape);
  for (i64 c = 0; c < C; ++c) {
    const R bc = b->value.data[c];
    for (i64 t = 0; t < T; ++t) v.data[c * T + t] = x->value.data[c * T + t] + bc;
  }
  return make_op<R>(std::move(v), {x, b}, [x, b, C, T](node<R>& n) {
    if (x->requires_grad) {
      auto& g = grad_of(x);
      for (i64 i = 0; i < n.grad.numel(); ++i) g.data[i] += n.grad.data[i];
    }
    if (b->requires_grad) {
      auto& g = grad_of(b);
      for (i64 c = 0; c < C; ++c) {
        R acc(0);
        for (i64 t = 0; t < T; ++t) acc += n.grad.data[c * T + t];
        g.data[c] += acc;
      }
    }
  });
}

// s holds a single element broadcast across all of x.
template <typename R>
var<R> mul_scalar_v(var<R> x, var<R> s) {
  check_internal(s->value.numel() == 1, "mul_scalar_v: scalar expected");
  const R sv = s->value.data[0];
  tensor<R> v(x->value.shape);
  for (i64 i = 0; i < v.numel(); ++i) v.data[i] = x->value.data[i] * sv;
  return make_op<R>(std::move(v), {x, s}, [x, s](node<R>& n) {
    if (x->requires_grad) {
      auto& g = grad_of(x);
      const R sv = s->value.data[0];
      for (i64 i = 0; i < g.numel(); ++i) g.data[i] += n.grad.data[i] * sv;
    }
    if (s->requires_grad) {
      auto& g = grad_of(s);
      R acc(0);
      for (i64 i = 0; i < n.grad.numel(); ++i) acc += n.grad.data[i] * x->value.data[i];
      g.data[0] += acc;
    }
  });
}

// x: [... x T], s: [T]; multiplies along the last axis.
template <typename R>
var<R> mul_last_bcast(var<R> x, var<R> s) {
  const i64 T = x->value.shape.back();
  check_internal(s->value.numel() == T, "mul_last_bcast: size mismatch");
  const i64 lead = x->value.numel() / T;
  tensor<R> v(x->value.shape);
  for (i64 l = 0; l < lead; ++l)
    for (i64 t = 0; t < T; ++t)
      v.data[l * T + t] = x->value.data[l * T + t] * s->value.data[t];
  return make_op<R>(std::move(v), {x, s}, [x, s, lead, T](node<R>& n) {
    if (x->requires_grad) {
      auto& g = grad_of(x);
      for (i64 l = 0; l < lead; ++l)
        for (i64 t = 0; t < T; ++t)
          g.data[l * T + t] += n.grad.data[l * T + t] * s->value.data[t];
    }
    if (s->requires_grad) {
      auto& g = grad_of(s);
      for (i64 l = 0; l < lead; ++l)
        for (i64 t = 0; t < T; ++t)
          g.data[t] += n.grad.data[l * T + t] * x->value.data[l * T + t];
    }
  });
}

// ---- matmul --------------------------------------------------------------------

template <typename R>
var<R> matmul(var<R> a, var<R> b, bool tA = false, bool tB = false) {
  check_internal(a->value.rank() == 2 && b->value.rank() == 2, "matmul: rank-2 expected");
  const i64 m = tA ? a->value.dim(1) : a->value.dim(0);
  const i64 k = tA ? a->value.dim(0) : a->value.dim(1);
  const i64 kb = tB ? b->value.dim(1) : b->value.dim(0);
  const i64 nn = tB ? b->value.dim(0) : b->value.dim(1);
  check_internal(k == kb, "matmul: inner dimension mismatch");
  tensor<R> v({m, nn});
  matmul_raw(a->value.ptr(), b->value.ptr(), v.ptr(), m, k, nn, tA, tB, false);
  return make_op<R>(std::move(v), {a, b}, [a, b, tA, tB, m, k, nn](node<R>& n) {
    // C = op(A) op(B): dA = dC op(B)^T routed through the transpose flags.
    if (a->requires_grad) {
      auto& g = grad_of(a);
      if (!tA)
        matmul_raw(n.grad.ptr(), b->value.ptr(), g.ptr(), m, nn, k, false, !tB, true);
      else
        matmul_raw(b->value.ptr(), n.grad.ptr(), g.ptr(), k, nn, m, tB, true, true);
    }
    if (b->requires_grad) {
      auto& g = grad_of(b);
      if (!tB)
        matmul_raw(a->value.ptr(), n.grad.ptr(), g.ptr(), k, m, nn, !tA, false, true);
      else
        matmul_raw(n.grad.ptr(), a->value.ptr(), g.ptr(), nn, m, k, true, tA, true);
    }
  });
}

// ---- convolutions ----------------------------------------------------------------

template <typename R>
var<R> conv1d(var<R> x, var<R> w, var<R> b, const conv_spec& cs) {
  cs.validate();
  const i64 T = x->value.cols();
  check_internal(x->value.rows() == cs.in_ch, "conv1d: input channel mismatch");
  check_internal(w->value.numel() == cs.weight_count(), "conv1d: weight count mismatch");
  check_internal(b->value.numel() == cs.out_ch, "conv1d: bias count mismatch");
  tensor<R> v({cs.out_ch, cs.out_len(T)});
  conv1d_fwd(x->value.ptr(), w->value.ptr(), b->value.ptr(), v.ptr(), cs, T);
  return make_op<R>(std::move(v), {x, w, b}, [x, w, b, cs, T](node<R>& n) {
    if (x->requires_grad)
      conv1d_bwd_input(n.grad.ptr(), w->value.ptr(), grad_of(x).ptr(), cs, T);
    if (w->requires_grad || b->requires_grad)
      conv1d_bwd_weight(n.grad.ptr(), x->value.ptr(),
                        w->requires_grad ? grad_of(w).ptr() : nullptr,
                        b->requires_grad ? grad_of(b).ptr() : nullptr, cs, T);
  });
}

template <typename R>
var<R> tconv1d(var<R> x, var<R> w, var<R> b, const conv_spec& cs) {
  cs.validate();
  const i64 T = x->value.cols();
  check_internal(x->value.rows() == cs.in_ch, "tconv1d: input channel mismatch");
  check_internal(w->value.numel() == cs.tconv_weight_count(), "tconv1d: weight count mismatch");
  check_internal(b->value.numel() == cs.out_ch, "tconv1d: bias count mismatch");
  tensor<R> v({cs.out_ch, cs.tconv_out_len(T)});
  tconv1d_fwd(x->value.ptr(), w->value.ptr(), b->value.ptr(), v.ptr(), cs, T);
  return make_op<R>(std::move(v), {x, w, b}, [x, w, b, cs, T](node<R>& n) {
    if (x->requires_grad)
      tconv1d_bwd_input(n.grad.ptr(), w->value.ptr(), grad_of(x).ptr(), cs, T);
    if (w->requires_grad || b->requires_grad)
      tconv1d_bwd_weight(n.grad.ptr(), x->value.ptr(),
                         w->requires_grad ? grad_of(w).ptr() : nullptr,
                         b->requires_grad ? grad_of(b).ptr() : nullptr, cs, T);
  });
}

// conv1d_bwd_weight writes bias gradients only when a buffer is given; guard
// against the mixed case where just one of w/b requires gradients.

// ---- pooling / interpolation -------------------------------------------------------

template <typename R>
var<R> pool_time(var<R> x, i64 factor) {
  const i64 C = x->value.rows(), T = x->value.cols();
  require(factor >= 1, "pool_time: factor must be >= 1");
  if (factor == 1) return x;
  tensor<R> v({C, pool_out_len(T, factor)});
  pool_mean_fwd(x->value.ptr(), v.ptr(), C, T, factor);
  return make_op<R>(std::move(v), {x}, [x, C, T, factor](node<R>& n) {
    pool_mean_bwd(n.grad.ptr(), grad_of(x).ptr(), C, T, factor);
  });
}

enum class interp_mode { nearest, linear };

template <typename R>
var<R> interp_time(var<R> x, i64 To, interp_mode mode) {
  const i64 C = x->value.rows(), T = x->value.cols();
  require(To >= 1, "interp_time: target length must be >= 1");
  if (To == T) return x;
  tensor<R> v({C, To});
  if (mode == interp_mode::nearest)
    interp_nearest_fwd(x->value.ptr(), v.ptr(), C, T, To);
  else
    interp_linear_fwd(x->value.ptr(), v.ptr(), C, T, To);
  return make_op<R>(std::move(v), {x}, [x, C, T, To, mode](node<R>& n) {
    if (mode == interp_mode::nearest)
      interp_nearest_bwd(n.grad.ptr(), grad_of(x).ptr(), C, T, To);
    else
      interp_linear_bwd(n.grad.ptr(), grad_of(x).ptr(), C, T, To);
  });
}

// Mean over K consecutive rows per group: x is [G*K x T], out is [G x T] with
// out[g] = mean_j x[g*K + j]. Matches the group-major channel layout of a
// depthwise conv with channel multiplier K.
template <typename R>
var<R> mean_channel_groups(var<R> x, i64 K) {
  const i64 CK = x->value.rows(), T = x->value.cols();
  require_cfg(K >= 1 && CK % K == 0, "channel count not divisible by K");
  const i64 G = CK / K;
  tensor<R> v({G, T});
  const R inv = R(1) / R(K);
  for (i64 g = 0; g < G; ++g)
    for (i64 t = 0; t < T; ++t) {
      R acc(0);
      for (i64 j = 0; j < K; ++j) acc += x->value.data[(g * K + j) * T + t];
      v.data[g * T + t] = acc * inv;
    }
  return make_op<R>(std::move(v), {x}, [x, K, G, T](node<R>& n) {
    auto& g = grad_of(x);
    const R inv = R(1) / R(K);
    for (i64 gi = 0; gi < G; ++gi)
      for (i64 t = 0; t < T; ++t) {
        const R gv = n.grad.data[gi * T + t] * inv;
        for (i64 j = 0; j < K; ++j) g.data[(gi * K + j) * T + t] += gv;
      }
  });
}

// ---- softmax -----------------------------------------------------------------------

template <typename R>
var<R> softmax_lastdim(var<R> x) {
  const i64 cols = x->value.shape.back();
  const i64 rows = x->value.numel() / cols;
  tensor<R> v(x->value.shape);
  softmax_rows_fwd(x->value.ptr(), v.ptr(), rows, cols);
  return make_op<R>(std::move(v), {x}, [x, rows, cols](node<R>& n) {
    softmax_rows_bwd(n.grad.ptr(), n.value.ptr(), grad_of(x).ptr(), rows, cols);
  });
}

// One distribution across channels per time step of a [C x T] map.
template <typename R>
var<R> softmax_channels(var<R> x) {
  const i64 C = x->value.rows(), T = x->value.cols();
  tensor<R> v(x->value.shape);
  softmax_cols_fwd(x->value.ptr(), v.ptr(), C, T);
  return make_op<R>(std::move(v), {x}, [x, C, T](node<R>& n) {
    softmax_cols_bwd(n.grad.ptr(), n.value.ptr(), grad_of(x).ptr(), C, T);
  });
}

// ---- normalization ------------------------------------------------------------------

template <typename R>
var<R> layer_norm_channels(var<R> x, var<R> gamma, var<R> beta, double eps = 1e-5) {
  const i64 C = x->value.rows(), T = x->value.cols();
  check_internal(gamma->value.numel() == C && beta->value.numel() == C,
                 "layer_norm: affine size mismatch");
  tensor<R> v(x->value.shape);
  auto mean = std::make_shared<std::vector<R>>(size_t(T));
  auto istd = std::make_shared<std::vector<R>>(size_t(T));
  layer_norm_fwd(x->value.ptr(), gamma->value.ptr(), beta->value.ptr(), v.ptr(),
                 mean->data(), istd->data(), C, T, eps);
  return make_op<R>(std::move(v), {x, gamma, beta},
                    [x, gamma, beta, mean, istd, C, T](node<R>& n) {
                      layer_norm_bwd(n.grad.ptr(), x->value.ptr(), gamma->value.ptr(),
                                     mean->data(), istd->data(),
                                     grad_of(x).ptr(), grad_of(gamma).ptr(),
                                     grad_of(beta).ptr(), C, T);
                    });
}

template <typename R>
var<R> rms_norm_channels(var<R> x, var<R> gamma, double eps = 1e-5) {
  const i64 C = x->value.rows(), T = x->value.cols();
  check_internal(gamma->value.numel() == C, "rms_norm: affine size mismatch");
  tensor<R> v(x->value.shape);
  auto irms = std::make_shared<std::vector<R>>(size_t(T));
  rms_norm_fwd(x->value.ptr(), gamma->value.ptr(), v.ptr(), irms->data(), C, T, eps);
  return make_op<R>(std::move(v), {x, gamma}, [x, gamma, irms, C, T](node<R>& n) {
    rms_norm_bwd(n.grad.ptr(), x->value.ptr(), gamma->value.ptr(), irms->data(),
                 grad_of(x).ptr(), grad_of(gamma).ptr(), C, T);
  });
}

// ---- transforms ----------------------------------------------------------------------

// Orthonormal transforms: the adjoint of analysis is synthesis and vice versa.
template <typename R>
var<R> dct2_v(var<R> x) {
  const i64 C = x->value.rows(), T = x->value.cols();
  tensor<R> v(x->value.shape);
  dct2_rows(x->value.ptr(), v.ptr(), C, T);
  return make_op<R>(std::move(v), {x}, [x, C, T](node<R>& n) {
    tensor<R> tmp({C, T});
    idct2_rows(n.grad.ptr(), tmp.ptr(), C, T);
    auto& g = grad_of(x);
    for (i64 i = 0; i < g.numel(); ++i) g.data[i] += tmp.data[i];
  });
}

template <typename R>
var<R> idct2_v(var<R> x) {
  const i64 C = x->value.rows(), T = x->value.cols();
  tensor<R> v(x->value.shape);
  idct2_rows(x->value.ptr(), v.ptr(), C, T);
  return make_op<R>(std::move(v), {x}, [x, C, T](node<R>& n) {
    tensor<R> tmp({C, T});
    dct2_rows(n.grad.ptr(), tmp.ptr(), C, T);
    auto& g = grad_of(x);
    for (i64 i = 0; i < g.numel(); ++i) g.data[i] += tmp.data[i];
  });
}

// filt[c][t] = exp(-k[c] * w2[t]); w2 is a fixed non-negative weight row.
template <typename R>
var<R> exp_neg_outer(var<R> k, var<R> w2) {
  const i64 C = k->value.numel(), T = w2->value.numel();
  tensor<R> v({C, T});
  for (i64 c = 0; c < C; ++c)
    for (i64 t = 0; t < T; ++t)
      v.data[c * T + t] = std::exp(-k->value.data[c] * w2->value.data[t]);
  return make_op<R>(std::move(v), {k, w2}, [k, w2, C, T](node<R>& n) {
    if (k->requires_grad) {
      auto& g = grad_of(k);
      for (i64 c = 0; c < C; ++c) {
        R acc(0);
        for (i64 t = 0; t < T; ++t)
          acc += n.grad.data[c * T + t] * n.value.data[c * T + t] * w2->value.data[t];
        g.data[c] -= acc;
      }
    }
  });
}

// ---- shape ops -------------------------------------------------------------------------

template <typename R>
var<R> slice_rows(var<R> x, i64 r0, i64 count) {
  const i64 C = x->value.rows(), T = x->value.cols();
  check_internal(r0 >= 0 && count > 0 && r0 + count <= C, "slice_rows: out of range");
  tensor<R> v({count, T});
  std::copy(x->value.ptr() + r0 * T, x->value.ptr() + (r0 + count) * T, v.ptr());
  return make_op<R>(std::move(v), {x}, [x, r0, count, T](node<R>& n) {
    auto& g = grad_of(x);
    for (i64 i = 0; i < count * T; ++i) g.data[r0 * T + i] += n.grad.data[i];
  });
}

template <typename R>
var<R> concat_rows(std::vector<var<R>> xs) {
  check_internal(!xs.empty(), "concat_rows: empty list");
  const i64 T = xs[0]->value.cols();
  i64 C = 0;
  for (auto& v : xs) {
    check_internal(v->value.cols() == T, "concat_rows: time mismatch");
    C += v->value.rows();
  }
  tensor<R> v({C, T});
  i64 r = 0;
  for (auto& xv : xs) {
    std::copy(xv->value.data.begin(), xv->value.data.end(), v.ptr() + r * T);
    r += xv->value.rows();
  }
  std::vector<var<R>> parents = xs;
  return make_op<R>(std::move(v), std::move(parents), [xs, T](node<R>& n) {
    i64 r = 0;
    for (auto& xv : xs) {
      const i64 rows = xv->value.rows();
      if (xv->requires_grad) {
        auto& g = grad_of(xv);
        for (i64 i = 0; i < rows * T; ++i) g.data[i] += n.grad.data[r * T + i];
      }
      r += rows;
    }
  });
}

// Slice along the last (time) axis, keeping leading axes.
template <typename R>
var<R> slice_last(var<R> x, i64 t0, i64 count) {
  const i64 T = x->value.shape.back();
  check_internal(t0 >= 0 && count > 0 && t0 + count <= T, "slice_last: out of range");
  const i64 lead = x->value.numel() / T;
  std::vector<i64> shape = x->value.shape;
  shape.back() = count;
  tensor<R> v(shape);
  for (i64 l = 0; l < lead; ++l)
    std::copy(x->value.ptr() + l * T + t0, x->value.ptr() + l * T + t0 + count,
              v.ptr() + l * count);
  return make_op<R>(std::move(v), {x}, [x, t0, count, T, lead](node<R>& n) {
    auto& g = grad_of(x);
    for (i64 l = 0; l < lead; ++l)
      for (i64 i = 0; i < count; ++i) g.data[l * T + t0 + i] += n.grad.data[l * count + i];
  });
}

// Zero-pad along the last axis.
template <typename R>
var<R> pad_last(var<R> x, i64 lo, i64 hi) {
  check_internal(lo >= 0 && hi >= 0, "pad_last: negative padding");
  if (lo == 0 && hi == 0) return x;
  const i64 T = x->value.shape.back();
  const i64 lead = x->value.numel() / T;
  std::vector<i64> shape = x->value.shape;
  shape.back() = T + lo + hi;
  tensor<R> v(shape);
  for (i64 l = 0; l < lead; ++l)
    std::copy(x->value.ptr() + l * T, x->value.ptr() + (l + 1) * T,
              v.ptr() + l * (T + lo + hi) + lo);
  return make_op<R>(std::move(v), {x}, [x, lo, T, lead](node<R>& n) {
    const i64 To = n.grad.shape.back();
    auto& g = grad_of(x);
    for (i64 l = 0; l < lead; ++l)
      for (i64 t = 0; t < T; ++t) g.data[l * T + t] += n.grad.data[l * To + lo + t];
  });
}

template <typename R>
var<R> reshape_v(var<R> x, std::vector<i64> shape) {
  check_internal(tensor<R>::count(shape) == x->value.numel(), "reshape: element count");
  tensor<R> v(std::move(shape), x->value.data);
  return make_op<R>(std::move(v), {x}, [x](node<R>& n) {
    auto& g = grad_of(x);
    for (i64 i = 0; i < g.numel(); ++i) g.data[i] += n.grad.data[i];
  });
}

// ---- reductions ---------------------------------------------------------------------------

template <typename R>
var<R> sum_all(var<R> x) {
  R acc(0);
  for (R v : x->value.data) acc += v;
  tensor<R> v({1});
  v.data[0] = acc;
  return make_op<R>(std::move(v), {x}, [x](node<R>& n) {
    auto& g = grad_of(x);
    const R gv = n.grad.data[0];
    for (i64 i = 0; i < g.numel(); ++i) g.data[i] += gv;
  });
}

template <typename R>
var<R> mean_all(var<R> x) {
  const double n = double(x->value.numel());
  return scale(sum_all(std::move(x)), 1.0 / n);
}

template <typename R>
var<R> dot_all(var<R> a, var<R> b) {
  check_internal(a->value.numel() == b->value.numel(), "dot_all: size mismatch");
  R acc(0);
  for (i64 i = 0; i < a->value.numel(); ++i) acc += a->value.data[i] * b->value.data[i];
  tensor<R> v({1});
  v.data[0] = acc;
  return make_op<R>(std::move(v), {a, b}, [a, b](node<R>& n) {
    const R gv = n.grad.data[0];
    if (a->requires_grad) {
      auto& g = grad_of(a);
      for (i64 i = 0; i < g.numel(); ++i) g.data[i] += gv * b->value.data[i];
    }
    if (b->requires_grad) {
      auto& g = grad_of(b);
      for (i64 i = 0; i < g.numel(); ++i) g.data[i] += gv * a->value.data[i];
    }
  });
}

template <typename R>
var<R> sum_sq(var<R> a) {
  R acc(0);
  for (R v : a->value.data) acc += v * v;
  tensor<R> v({1});
  v.data[0] = acc;
  return make_op<R>(std::move(v), {a}, [a](node<R>& n) {
    const R gv = n.grad.data[0];
    auto& g = grad_of(a);
    for (i64 i = 0; i < g.numel(); ++i) g.data[i] += R(2) * gv * a->value.data[i];
  });
}

// ---- structural ----------------------------------------------------------------------------

template <typename R>
var<R> detach(const var<R>& x) {
  return constant(x->value);
}

template <typename R>
var<R> add_n(std::vector<var<R>> xs) {
  check_internal(!xs.empty(), "add_n: empty list");
  var<R> acc = xs[0];
  for (size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return acc;
}

// Gather codebook rows into columns: cb is [K x d], out is [d x M].
template <typename R>
var<R> vq_gather(var<R> cb, std::vector<i64> idx) {
  const i64 K = cb->value.dim(0), d = cb->value.dim(1);
  const i64 M = i64(idx.size());
  tensor<R> v({d, M});
  for (i64 m = 0; m < M; ++m) {
    check_internal(idx[size_t(m)] >= 0 && idx[size_t(m)] < K, "vq_gather: index range");
    for (i64 j = 0; j < d; ++j) v.data[j * M + m] = cb->value.data[idx[size_t(m)] * d + j];
  }
  return make_op<R>(std::move(v), {cb}, [cb, idx, d, M](node<R>& n) {
    auto& g = grad_of(cb);
    for (i64 m = 0; m < M; ++m)
      for (i64 j = 0; j < d; ++j) g.data[idx[size_t(m)] * d + j] += n.grad.data[j * M + m];
  });
}

// STFT magnitude of a 1-D signal: output [bins x frames].
template <typename R>
var<R> stft_mag_v(var<R> x, const stft_spec& ss) {
  const i64 L = x->value.numel();
  const i64 nf = ss.frames(L), F = ss.bins();
  tensor<R> v({F, nf});
  auto re = std::make_shared<std::vector<R>>(size_t(F * nf));
  auto im = std::make_shared<std::vector<R>>(size_t(F * nf));
  stft_mag_fwd(x->value.ptr(), L, ss, re->data(), im->data(), v.ptr());
  return make_op<R>(std::move(v), {x}, [x, ss, re, im, L](node<R>& n) {
    stft_mag_bwd(n.grad.ptr(), re->data(), im->data(), n.value.ptr(), L, ss,
                 grad_of(x).ptr());
  });
}

}  // namespace avsep
