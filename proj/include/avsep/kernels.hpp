#pragma once

#include <Eigen/Dense>

#include "avsep/tensor.hpp"

// Value-level compute cores shared by the autodiff layer and the tests.
// Conventions:
//   conv weights            [out_ch][in_ch/groups][k]
//   transposed-conv weights [in_ch][out_ch/groups][k]
//   feature maps            [channels x time], row-major
// All cores are deterministic: reductions run in a fixed order.

namespace avsep {

struct conv_spec {
  i64 in_ch = 0, out_ch = 0;
  i64 kernel = 1, stride = 1, dilation = 1, groups = 1;
  i64 pad_lo = 0, pad_hi = 0;

  void validate() const {
    require_cfg(in_ch > 0 && out_ch > 0, "conv: channel counts must be positive");
    require_cfg(kernel > 0 && stride > 0 && dilation > 0 && groups > 0,
                "conv: kernel/stride/dilation/groups must be positive");
    require_cfg(in_ch % groups == 0 && out_ch % groups == 0,
                "conv: channels not divisible by groups");
    require_cfg(pad_lo >= 0 && pad_hi >= 0, "conv: negative padding");
  }

  i64 out_len(i64 T) const {
    i64 n = (T + pad_lo + pad_hi - dilation * (kernel - 1) - 1) / stride + 1;
    require(n > 0, "conv: computed output length is not positive");
    return n;
  }

  // Transposed shape rule; dilation is not used on this path.
  i64 tconv_out_len(i64 T) const {
    i64 n = (T - 1) * stride + kernel - pad_lo - pad_hi;
    require(n > 0, "transposed conv: computed output length is not positive");
    return n;
  }

  i64 weight_count() const { return out_ch * (in_ch / groups) * kernel; }
  i64 tconv_weight_count() const { return in_ch * (out_ch / groups) * kernel; }
};

// ---- matmul ----------------------------------------------------------------

template <typename R>
void matmul_raw(const R* A, const R* B, R* C, i64 m, i64 k, i64 n, bool tA, bool tB,
                bool accumulate) {
  using Mat = Eigen::Matrix<R, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat>;
  Eigen::Map<Mat> Cm(C, m, n);
  auto assign = [&](const auto& prod) {
    if (accumulate)
      Cm.noalias() += prod;
    else
      Cm.noalias() = prod;
  };
  if (!tA && !tB) {
    assign(CMap(A, m, k) * CMap(B, k, n));
  } else if (tA && !tB) {
    assign(CMap(A, k, m).transpose() * CMap(B, k, n));
  } else if (!tA && tB) {
    assign(CMap(A, m, k) * CMap(B, n, k).transpose());
  } else {
    assign(CMap(A, k, m).transpose() * CMap(B, n, k).transpose());
  }
}

// ---- conv1d ----------------------------------------------------------------

namespace detail {
// Valid output range [t0, t1) for x index t'*stride + tap - pad_lo in [0, T).
inline void conv_tap_range(i64 tap_off, i64 pad_lo, i64 stride, i64 T, i64 To, i64& t0,
                           i64& t1) {
  i64 lo = pad_lo - tap_off;  // need t'*stride >= lo
  t0 = lo <= 0 ? 0 : (lo + stride - 1) / stride;
  i64 hi = T + pad_lo - tap_off;  // need t'*stride < hi
  t1 = hi <= 0 ? 0 : (hi + stride - 1) / stride;
  t0 = std::min(t0, To);
  t1 = std::min(t1, To);
}
}  // namespace detail

template <typename R>
void conv1d_fwd(const R* x, const R* w, const R* b, R* y, const conv_spec& cs, i64 T) {
  const i64 To = cs.out_len(T);
  const i64 icg = cs.in_ch / cs.groups, ocg = cs.out_ch / cs.groups;
  for (i64 oc = 0; oc < cs.out_ch; ++oc) {
    R* yr = y + oc * To;
    const R bias = b ? b[oc] : R(0);
    for (i64 t = 0; t < To; ++t) yr[t] = bias;
  }
  if (cs.kernel == 1 && cs.groups == 1 && cs.stride == 1 && cs.pad_lo == 0 && cs.pad_hi == 0) {
    matmul_raw(w, x, y, cs.out_ch, cs.in_ch, T, false, false, true);
    return;
  }
  for (i64 g = 0; g < cs.groups; ++g) {
    for (i64 o = 0; o < ocg; ++o) {
      const i64 oc = g * ocg + o;
      R* yr = y + oc * To;
      for (i64 i = 0; i < icg; ++i) {
        const i64 ic = g * icg + i;
        const R* xr = x + ic * T;
        const R* wr = w + (oc * icg + i) * cs.kernel;
        for (i64 tap = 0; tap < cs.kernel; ++tap) {
          const R wv = wr[tap];
          if (wv == R(0)) continue;
          const i64 off = tap * cs.dilation;
          i64 t0, t1;
          detail::conv_tap_range(off, cs.pad_lo, cs.stride, T, To, t0, t1);
          const R* xs = xr + t0 * cs.stride + off - cs.pad_lo;
          if (cs.stride == 1) {
            for (i64 t = t0; t < t1; ++t) yr[t] += wv * xs[t - t0];
          } else {
            for (i64 t = t0; t < t1; ++t) yr[t] += wv * xs[(t - t0) * cs.stride];
          }
        }
      }
    }
  }
}

template <typename R>
void conv1d_bwd_input(const R* gy, const R* w, R* gx, const conv_spec& cs, i64 T) {
  const i64 To = cs.out_len(T);
  const i64 icg = cs.in_ch / cs.groups, ocg = cs.out_ch / cs.groups;
  if (cs.kernel == 1 && cs.groups == 1 && cs.stride == 1 && cs.pad_lo == 0 && cs.pad_hi == 0) {
    matmul_raw(w, gy, gx, cs.in_ch, cs.out_ch, T, true, false, true);
    return;
  }
  for (i64 g = 0; g < cs.groups; ++g) {
    for (i64 o = 0; o < ocg; ++o) {
      const i64 oc = g * ocg + o;
      const R* gr = gy + oc * To;
      for (i64 i = 0; i < icg; ++i) {
        const i64 ic = g * icg + i;
        R* gxr = gx + ic * T;
        const R* wr = w + (oc * icg + i) * cs.kernel;
        for (i64 tap = 0; tap < cs.kernel; ++tap) {
          const R wv = wr[tap];
          if (wv == R(0)) continue;
          const i64 off = tap * cs.dilation;
          i64 t0, t1;
          detail::conv_tap_range(off, cs.pad_lo, cs.stride, T, To, t0, t1);
          R* xs = gxr + t0 * cs.stride + off - cs.pad_lo;
          if (cs.stride == 1) {
            for (i64 t = t0; t < t1; ++t) xs[t - t0] += wv * gr[t];
          } else {
            for (i64 t = t0; t < t1; ++t) xs[(t - t0) * cs.stride] += wv * gr[t];
          }
        }
      }
    }
  }
}

template <typename R>
void conv1d_bwd_weight(const R* gy, const R* x, R* gw, R* gb, const conv_spec& cs, i64 T) {
  const i64 To = cs.out_len(T);
  const i64 icg = cs.in_ch / cs.groups, ocg = cs.out_ch / cs.groups;
  if (gb) {
    for (i64 oc = 0; oc < cs.out_ch; ++oc) {
      const R* gr = gy + oc * To;
      R acc(0);
      for (i64 t = 0; t < To; ++t) acc += gr[t];
      gb[oc] += acc;
    }
  }
  if (!gw) return;
  if (cs.kernel == 1 && cs.groups == 1 && cs.stride == 1 && cs.pad_lo == 0 && cs.pad_hi == 0) {
    matmul_raw(gy, x, gw, cs.out_ch, T, cs.in_ch, false, true, true);
    return;
  }
  for (i64 g = 0; g < cs.groups; ++g) {
    for (i64 o = 0; o < ocg; ++o) {
      const i64 oc = g * ocg + o;
      const R* gr = gy + oc * To;
      for (i64 i = 0; i < icg; ++i) {
        const i64 ic = g * icg + i;
        const R* xr = x + ic * T;
        R* wr = gw + (oc * icg + i) * cs.kernel;
        for (i64 tap = 0; tap < cs.kernel; ++tap) {
          const i64 off = tap * cs.dilation;
          i64 t0, t1;
          detail::conv_tap_range(off, cs.pad_lo, cs.stride, T, To, t0, t1);
          const R* xs = xr + t0 * cs.stride + off - cs.pad_lo;
          R acc(0);
          if (cs.stride == 1) {
            for (i64 t = t0; t < t1; ++t) acc += gr[t] * xs[t - t0];
          } else {
            for (i64 t = t0; t < t1; ++t) acc += gr[t] * xs[(t - t0) * cs.stride];
          }
          wr[tap] += acc;
        }
      }
    }
  }
}

// ---- transposed conv1d -----------------------------------------------------
// y[oc][t*stride + tap - pad_lo] += x[ic][t] * w[ic][oc'][tap]

template <typename R>
void tconv1d_fwd(const R* x, const R* w, const R* b, R* y, const conv_spec& cs, i64 T) {
  const i64 To = cs.tconv_out_len(T);
  const i64 icg = cs.in_ch / cs.groups, ocg = cs.out_ch / cs.groups;
  for (i64 oc = 0; oc < cs.out_ch; ++oc) {
    R* yr = y + oc * To;
    const R bias = b ? b[oc] : R(0);
    for (i64 t = 0; t < To; ++t) yr[t] = bias;
  }
  for (i64 g = 0; g < cs.groups; ++g) {
    for (i64 i = 0; i < icg; ++i) {
      const i64 ic = g * icg + i;
      const R* xr = x + ic * T;
      for (i64 o = 0; o < ocg; ++o) {
        const i64 oc = g * ocg + o;
        R* yr = y + oc * To;
        const R* wr = w + (ic * ocg + o) * cs.kernel;
        for (i64 tap = 0; tap < cs.kernel; ++tap) {
          const R wv = wr[tap];
          if (wv == R(0)) continue;
          i64 t0, t1;
          detail::conv_tap_range(tap, cs.pad_lo, cs.stride, To, T, t0, t1);
          R* ys = yr + t0 * cs.stride + tap - cs.pad_lo;
          if (cs.stride == 1) {
            for (i64 t = t0; t < t1; ++t) ys[t - t0] += wv * xr[t];
          } else {
            for (i64 t = t0; t < t1; ++t) ys[(t - t0) * cs.stride] += wv * xr[t];
          }
        }
      }
    }
  }
}

template <typename R>
void tconv1d_bwd_input(const R* gy, const R* w, R* gx, const conv_spec& cs, i64 T) {
  const i64 To = cs.tconv_out_len(T);
  const i64 icg = cs.in_ch / cs.groups, ocg = cs.out_ch / cs.groups;
  for (i64 g = 0; g < cs.groups; ++g) {
    for (i64 i = 0; i < icg; ++i) {
      const i64 ic = g * icg + i;
      R* gxr = gx + ic * T;
      for (i64 o = 0; o < ocg; ++o) {
        const i64 oc = g * ocg + o;
        const R* gr = gy + oc * To;
        const R* wr = w + (ic * ocg + o) * cs.kernel;
        for (i64 tap = 0; tap < cs.kernel; ++tap) {
          const R wv = wr[tap];
          if (wv == R(0)) continue;
          i64 t0, t1;
          detail::conv_tap_range(tap, cs.pad_lo, cs.stride, To, T, t0, t1);
          const R* gs = gr + t0 * cs.stride + tap - cs.pad_lo;
          if (cs.stride == 1) {
            for (i64 t = t0; t < t1; ++t) gxr[t] += wv * gs[t - t0];
          } else {
            for (i64 t = t0; t < t1; ++t) gxr[t] += wv * gs[(t - t0) * cs.stride];
          }
        }
      }
    }
  }
}

template <typename R>
void tconv1d_bwd_weight(const R* gy, const R* x, R* gw, R* gb, const conv_spec& cs, i64 T) {
  const i64 To = cs.tconv_out_len(T);
  const i64 icg = cs.in_ch / cs.groups, ocg = cs.out_ch / cs.groups;
  if (gb) {
    for (i64 oc = 0; oc < cs.out_ch; ++oc) {
      const R* gr = gy + oc * To;
      R acc(0);
      for (i64 t = 0; t < To; ++t) acc += gr[t];
      gb[oc] += acc;
    }
  }
  if (!gw) return;
  for (i64 g = 0; g < cs.groups; ++g) {
    for (i64 i = 0; i < icg; ++i) {
      const i64 ic = g * icg + i;
      const R* xr = x + ic * T;
      for (i64 o = 0; o < ocg; ++o) {
        const i64 oc = g * ocg + o;
        const R* gr = gy + oc * To;
        R* wr = gw + (ic * ocg + o) * cs.kernel;
        for (i64 tap = 0; tap < cs.kernel; ++tap) {
          i64 t0, t1;
          detail::conv_tap_range(tap, cs.pad_lo, cs.stride, To, T, t0, t1);
          const R* gs = gr + t0 * cs.stride + tap - cs.pad_lo;
          R acc(0);
          if (cs.stride == 1) {
            for (i64 t = t0; t < t1; ++t) acc += xr[t] * gs[t - t0];
          } else {
            for (i64 t = t0; t < t1; ++t) acc += xr[t] * gs[(t - t0) * cs.stride];
          }
          wr[tap] += acc;
        }
      }
    }
  }
}

// ---- pooling / interpolation -----------------------------------------------
// Non-overlapping mean pooling; a ragged tail is padded on the right with the
// edge value. T' = ceil(T / factor).

inline i64 pool_out_len(i64 T, i64 factor) {
  require(factor >= 1, "pool_time: factor must be >= 1");
  return (T + factor - 1) / factor;
}

template <typename R>
void pool_mean_fwd(const R* x, R* y, i64 C, i64 T, i64 f) {
  const i64 To = pool_out_len(T, f);
  for (i64 c = 0; c < C; ++c) {
    const R* xr = x + c * T;
    R* yr = y + c * To;
    for (i64 wi = 0; wi < To; ++wi) {
      const i64 a = wi * f;
      const i64 bnd = std::min(a + f, T);
      R acc(0);
      for (i64 t = a; t < bnd; ++t) acc += xr[t];
      acc += R(f - (bnd - a)) * xr[T - 1];
      yr[wi] = acc / R(f);
    }
  }
}

template <typename R>
void pool_mean_bwd(const R* gy, R* gx, i64 C, i64 T, i64 f) {
  const i64 To = pool_out_len(T, f);
  for (i64 c = 0; c < C; ++c) {
    const R* gr = gy + c * To;
    R* gxr = gx + c * T;
    for (i64 wi = 0; wi < To; ++wi) {
      const i64 a = wi * f;
      const i64 bnd = std::min(a + f, T);
      const R gv = gr[wi] / R(f);
      for (i64 t = a; t < bnd; ++t) gxr[t] += gv;
      gxr[T - 1] += R(f - (bnd - a)) * gv;
    }
  }
}

// Nearest: output j reads x[floor(j * T / To)].
template <typename R>
void interp_nearest_fwd(const R* x, R* y, i64 C, i64 T, i64 To) {
  for (i64 c = 0; c < C; ++c) {
    const R* xr = x + c * T;
    R* yr = y + c * To;
    for (i64 j = 0; j < To; ++j) yr[j] = xr[std::min((j * T) / To, T - 1)];
  }
}

template <typename R>
void interp_nearest_bwd(const R* gy, R* gx, i64 C, i64 T, i64 To) {
  for (i64 c = 0; c < C; ++c) {
    const R* gr = gy + c * To;
    R* gxr = gx + c * T;
    for (i64 j = 0; j < To; ++j) gxr[std::min((j * T) / To, T - 1)] += gr[j];
  }
}

// Linear with aligned endpoints: position j maps to j*(T-1)/(To-1).
template <typename R>
void interp_linear_fwd(const R* x, R* y, i64 C, i64 T, i64 To) {
  for (i64 c = 0; c < C; ++c) {
    const R* xr = x + c * T;
    R* yr = y + c * To;
    if (T == 1 || To == 1) {
      for (i64 j = 0; j < To; ++j) yr[j] = xr[0];
      continue;
    }
    for (i64 j = 0; j < To; ++j) {
      const double pos = double(j) * double(T - 1) / double(To - 1);
      const i64 lo = std::min(i64(pos), T - 2);
      const double wfrac = pos - double(lo);
      yr[j] = R((1.0 - wfrac) * double(xr[lo]) + wfrac * double(xr[lo + 1]));
    }
  }
}

template <typename R>
void interp_linear_bwd(const R* gy, R* gx, i64 C, i64 T, i64 To) {
  for (i64 c = 0; c < C; ++c) {
    const R* gr = gy + c * To;
    R* gxr = gx + c * T;
    if (T == 1 || To == 1) {
      for (i64 j = 0; j < To; ++j) gxr[0] += gr[j];
      continue;
    }
    for (i64 j = 0; j < To; ++j) {
      const double pos = double(j) * double(T - 1) / double(To - 1);
      const i64 lo = std::min(i64(pos), T - 2);
      const double wfrac = pos - double(lo);
      gxr[lo] += R((1.0 - wfrac) * double(gr[j]));
      gxr[lo + 1] += R(wfrac * double(gr[j]));
    }
  }
}

// ---- softmax ----------------------------------------------------------------

// Softmax along the last axis of each row; subtract-max form.
template <typename R>
void softmax_rows_fwd(const R* x, R* y, i64 rows, i64 cols) {
  for (i64 r = 0; r < rows; ++r) {
    const R* xr = x + r * cols;
    R* yr = y + r * cols;
    R m = xr[0];
    for (i64 j = 1; j < cols; ++j) m = std::max(m, xr[j]);
    R s(0);
    for (i64 j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - m);
      s += yr[j];
    }
    const R inv = R(1) / s;
    for (i64 j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

// d x = y * (g - sum(g * y)) per row.
template <typename R>
void softmax_rows_bwd(const R* gy, const R* y, R* gx, i64 rows, i64 cols) {
  for (i64 r = 0; r < rows; ++r) {
    const R* gr = gy + r * cols;
    const R* yr = y + r * cols;
    R* gxr = gx + r * cols;
    R dot(0);
    for (i64 j = 0; j < cols; ++j) dot += gr[j] * yr[j];
    for (i64 j = 0; j < cols; ++j) gxr[j] += yr[j] * (gr[j] - dot);
  }
}

// Softmax over the channel axis of a [C x T] map, one distribution per step.
template <typename R>
void softmax_cols_fwd(const R* x, R* y, i64 C, i64 T) {
  std::vector<R> m(size_t(T)), s(size_t(T), R(0));
  for (i64 t = 0; t < T; ++t) m[size_t(t)] = x[t];
  for (i64 c = 1; c < C; ++c) {
    const R* xr = x + c * T;
    for (i64 t = 0; t < T; ++t) m[size_t(t)] = std::max(m[size_t(t)], xr[t]);
  }
  for (i64 c = 0; c < C; ++c) {
    const R* xr = x + c * T;
    R* yr = y + c * T;
    for (i64 t = 0; t < T; ++t) {
      yr[t] = std::exp(xr[t] - m[size_t(t)]);
      s[size_t(t)] += yr[t];
    }
  }
  for (i64 c = 0; c < C; ++c) {
    R* yr = y + c * T;
    for (i64 t = 0; t < T; ++t) yr[t] /= s[size_t(t)];
  }
}

template <typename R>
void softmax_cols_bwd(const R* gy, const R* y, R* gx, i64 C, i64 T) {
  std::vector<R> dot(size_t(T), R(0));
  for (i64 c = 0; c < C; ++c) {
    const R* gr = gy + c * T;
    const R* yr = y + c * T;
    for (i64 t = 0; t < T; ++t) dot[size_t(t)] += gr[t] * yr[t];
  }
  for (i64 c = 0; c < C; ++c) {
    const R* gr = gy + c * T;
    const R* yr = y + c * T;
    R* gxr = gx + c * T;
    for (i64 t = 0; t < T; ++t) gxr[t] += yr[t] * (gr[t] - dot[size_t(t)]);
  }
}

// ---- normalization -----------------------------------------------------------
// Channel-wise layer norm: statistics over channels at every time step.

template <typename R>
void layer_norm_fwd(const R* x, const R* gamma, const R* beta, R* y, R* mean, R* inv_std,
                    i64 C, i64 T, double eps) {
  for (i64 t = 0; t < T; ++t) mean[t] = R(0);
  for (i64 c = 0; c < C; ++c) {
    const R* xr = x + c * T;
    for (i64 t = 0; t < T; ++t) mean[t] += xr[t];
  }
  const R invC = R(1) / R(C);
  for (i64 t = 0; t < T; ++t) {
    mean[t] *= invC;
    inv_std[t] = R(0);
  }
  for (i64 c = 0; c < C; ++c) {
    const R* xr = x + c * T;
    for (i64 t = 0; t < T; ++t) {
      const R d = xr[t] - mean[t];
      inv_std[t] += d * d;
    }
  }
  for (i64 t = 0; t < T; ++t) inv_std[t] = R(1) / std::sqrt(inv_std[t] * invC + R(eps));
  for (i64 c = 0; c < C; ++c) {
    const R* xr = x + c * T;
    R* yr = y + c * T;
    const R gc = gamma[c], bc = beta[c];
    for (i64 t = 0; t < T; ++t) yr[t] = gc * (xr[t] - mean[t]) * inv_std[t] + bc;
  }
}

template <typename R>
void layer_norm_bwd(const R* gy, const R* x, const R* gamma, const R* mean, const R* inv_std,
                    R* gx, R* ggamma, R* gbeta, i64 C, i64 T) {
  std::vector<R> s1(size_t(T), R(0)), s2(size_t(T), R(0));
  for (i64 c = 0; c < C; ++c) {
    const R* gr = gy + c * T;
    const R* xr = x + c * T;
    const R gc = gamma[c];
    R accg(0), accb(0);
    for (i64 t = 0; t < T; ++t) {
      const R xh = (xr[t] - mean[t]) * inv_std[t];
      const R gg = gr[t] * gc;
      s1[size_t(t)] += gg;
      s2[size_t(t)] += gg * xh;
      accg += gr[t] * xh;
      accb += gr[t];
    }
    ggamma[c] += accg;
    gbeta[c] += accb;
  }
  const R invC = R(1) / R(C);
  for (i64 c = 0; c < C; ++c) {
    const R* gr = gy + c * T;
    const R* xr = x + c * T;
    R* gxr = gx + c * T;
    const R gc = gamma[c];
    for (i64 t = 0; t < T; ++t) {
      const R xh = (xr[t] - mean[t]) * inv_std[t];
      gxr[t] += inv_std[t] * (gr[t] * gc - (s1[size_t(t)] + xh * s2[size_t(t)]) * invC);
    }
  }
}

// RMS norm over channels (no centering), used inside the video blocks.
template <typename R>
void rms_norm_fwd(const R* x, const R* gamma, R* y, R* inv_rms, i64 C, i64 T, double eps) {
  for (i64 t = 0; t < T; ++t) inv_rms[t] = R(0);
  for (i64 c = 0; c < C; ++c) {
    const R* xr = x + c * T;
    for (i64 t = 0; t < T; ++t) inv_rms[t] += xr[t] * xr[t];
  }
  const R invC = R(1) / R(C);
  for (i64 t = 0; t < T; ++t) inv_rms[t] = R(1) / std::sqrt(inv_rms[t] * invC + R(eps));
  for (i64 c = 0; c < C; ++c) {
    const R* xr = x + c * T;
    R* yr = y + c * T;
    const R gc = gamma[c];
    for (i64 t = 0; t < T; ++t) yr[t] = gc * xr[t] * inv_rms[t];
  }
}

template <typename R>
void rms_norm_bwd(const R* gy, const R* x, const R* gamma, const R* inv_rms, R* gx,
                  R* ggamma, i64 C, i64 T) {
  std::vector<R> dot(size_t(T), R(0));
  for (i64 c = 0; c < C; ++c) {
    const R* gr = gy + c * T;
    const R* xr = x + c * T;
    const R gc = gamma[c];
    R accg(0);
    for (i64 t = 0; t < T; ++t) {
      dot[size_t(t)] += gr[t] * gc * xr[t];
      accg += gr[t] * xr[t] * inv_rms[t];
    }
    ggamma[c] += accg;
  }
  const R invC = R(1) / R(C);
  for (i64 c = 0; c < C; ++c) {
    const R* gr = gy + c * T;
    const R* xr = x + c * T;
    R* gxr = gx + c * T;
    const R gc = gamma[c];
    for (i64 t = 0; t < T; ++t) {
      const R ir = inv_rms[t];
      gxr[t] += ir * gr[t] * gc - xr[t] * ir * ir * ir * invC * dot[size_t(t)];
    }
  }
}

// ---- STFT magnitude ----------------------------------------------------------

struct stft_spec {
  i64 win = 512;
  i64 hop = 128;
  i64 bins() const { return win / 2 + 1; }
  i64 frames(i64 L) const {
    require(win > 0 && hop > 0, "stft: window and hop must be positive");
    require(L >= win, "stft: signal shorter than the analysis window");
    return (L - win) / hop + 1;
  }
};

// Tables baked with a periodic Hann window: C[f][n] = cos(2*pi*f*n/win)*w[n],
// S[f][n] = -sin(2*pi*f*n/win)*w[n]. Cached per window length.
const std::vector<double>& stft_cos_table_d(i64 win);
const std::vector<double>& stft_sin_table_d(i64 win);
const std::vector<float>& stft_cos_table_f(i64 win);
const std::vector<float>& stft_sin_table_f(i64 win);

inline const double* stft_cos_table(i64 win, double) { return stft_cos_table_d(win).data(); }
inline const double* stft_sin_table(i64 win, double) { return stft_sin_table_d(win).data(); }
inline const float* stft_cos_table(i64 win, float) { return stft_cos_table_f(win).data(); }
inline const float* stft_sin_table(i64 win, float) { return stft_sin_table_f(win).data(); }

// re/im/mag are [bins x frames]; x is length L.
template <typename R>
void stft_mag_fwd(const R* x, i64 L, const stft_spec& ss, R* re, R* im, R* mag) {
  const i64 nf = ss.frames(L), F = ss.bins();
  std::vector<R> seg(size_t(ss.win * nf));
  for (i64 n = 0; n < ss.win; ++n) {
    R* sr = seg.data() + n * nf;
    for (i64 fr = 0; fr < nf; ++fr) sr[fr] = x[fr * ss.hop + n];
  }
  const R* ct = stft_cos_table(ss.win, R(0));
  const R* st = stft_sin_table(ss.win, R(0));
  matmul_raw(ct, seg.data(), re, F, ss.win, nf, false, false, false);
  matmul_raw(st, seg.data(), im, F, ss.win, nf, false, false, false);
  for (i64 i = 0; i < F * nf; ++i) mag[i] = std::sqrt(re[i] * re[i] + im[i] * im[i]);
}

template <typename R>
void stft_mag_bwd(const R* gmag, const R* re, const R* im, const R* mag, i64 L,
                  const stft_spec& ss, R* gx) {
  const i64 nf = ss.frames(L), F = ss.bins();
  std::vector<R> gre(size_t(F * nf)), gim(size_t(F * nf));
  for (i64 i = 0; i < F * nf; ++i) {
    const R m = std::max(mag[i], R(1e-12));
    gre[size_t(i)] = gmag[i] * re[i] / m;
    gim[size_t(i)] = gmag[i] * im[i] / m;
  }
  std::vector<R> gseg(size_t(ss.win * nf));
  const R* ct = stft_cos_table(ss.win, R(0));
  const R* st = stft_sin_table(ss.win, R(0));
  matmul_raw(ct, gre.data(), gseg.data(), ss.win, F, nf, true, false, false);
  matmul_raw(st, gim.data(), gseg.data(), ss.win, F, nf, true, false, true);
  for (i64 n = 0; n < ss.win; ++n) {
    const R* sr = gseg.data() + n * nf;
    for (i64 fr = 0; fr < nf; ++fr) gx[fr * ss.hop + n] += sr[fr];
  }
}

}  // namespace avsep
