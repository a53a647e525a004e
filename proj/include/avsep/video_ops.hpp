#pragma once

#include "avsep/ad_ops.hpp"

// Ops on rank-4 video tensors laid out [C x H x W x T] (time fastest). All
// convolutions here are dense (groups=1) and zero-padded.

namespace avsep {

namespace vid {
inline i64 idx4(i64 c, i64 i, i64 j, i64 t, i64 H, i64 W, i64 T) {
  return ((c * H + i) * W + j) * T + t;
}
}  // namespace vid

// ---- cubic 3-D convolution, stride 1, same padding -----------------------------

struct conv3d_spec {
  i64 in_ch = 1, out_ch = 1, k = 3;  // odd kernel

  void validate() const {
    require_cfg(in_ch > 0 && out_ch > 0 && k > 0 && k % 2 == 1, "conv3d: bad spec");
  }
  i64 weight_count() const { return out_ch * in_ch * k * k * k; }
};

template <typename R>
void conv3d_fwd(const R* x, const R* w, const R* b, R* y, const conv3d_spec& cs, i64 H, i64 W,
                i64 T) {
  const i64 p = cs.k / 2;
  for (i64 oc = 0; oc < cs.out_ch; ++oc) {
    const R bias = b ? b[oc] : R(0);
    R* yo = y + oc * H * W * T;
    for (i64 i = 0; i < H * W * T; ++i) yo[i] = bias;
  }
  for (i64 oc = 0; oc < cs.out_ch; ++oc)
    for (i64 ic = 0; ic < cs.in_ch; ++ic)
      for (i64 a = 0; a < cs.k; ++a)
        for (i64 bb = 0; bb < cs.k; ++bb)
          for (i64 cc = 0; cc < cs.k; ++cc) {
            const R wv = w[(((oc * cs.in_ch + ic) * cs.k + a) * cs.k + bb) * cs.k + cc];
            if (wv == R(0)) continue;
            const i64 i0 = std::max<i64>(0, p - a), i1 = std::min(H, H + p - a);
            const i64 j0 = std::max<i64>(0, p - bb), j1 = std::min(W, W + p - bb);
            const i64 t0 = std::max<i64>(0, p - cc), t1 = std::min(T, T + p - cc);
            for (i64 i = i0; i < i1; ++i)
              for (i64 j = j0; j < j1; ++j) {
                R* yr = y + vid::idx4(oc, i, j, t0, H, W, T);
                const R* xr = x + vid::idx4(ic, i + a - p, j + bb - p, t0 + cc - p, H, W, T);
                for (i64 t = 0; t < t1 - t0; ++t) yr[t] += wv * xr[t];
              }
          }
}

template <typename R>
void conv3d_bwd_input(const R* gy, const R* w, R* gx, const conv3d_spec& cs, i64 H, i64 W,
                      i64 T) {
  const i64 p = cs.k / 2;
  for (i64 oc = 0; oc < cs.out_ch; ++oc)
    for (i64 ic = 0; ic < cs.in_ch; ++ic)
      for (i64 a = 0; a < cs.k; ++a)
        for (i64 bb = 0; bb < cs.k; ++bb)
          for (i64 cc = 0; cc < cs.k; ++cc) {
            const R wv = w[(((oc * cs.in_ch + ic) * cs.k + a) * cs.k + bb) * cs.k + cc];
            if (wv == R(0)) continue;
            const i64 i0 = std::max<i64>(0, p - a), i1 = std::min(H, H + p - a);
            const i64 j0 = std::max<i64>(0, p - bb), j1 = std::min(W, W + p - bb);
            const i64 t0 = std::max<i64>(0, p - cc), t1 = std::min(T, T + p - cc);
            for (i64 i = i0; i < i1; ++i)
              for (i64 j = j0; j < j1; ++j) {
                const R* gr = gy + vid::idx4(oc, i, j, t0, H, W, T);
                R* xr = gx + vid::idx4(ic, i + a - p, j + bb - p, t0 + cc - p, H, W, T);
                for (i64 t = 0; t < t1 - t0; ++t) xr[t] += wv * gr[t];
              }
          }
}

template <typename R>
void conv3d_bwd_weight(const R* gy, const R* x, R* gw, R* gb, const conv3d_spec& cs, i64 H,
                       i64 W, i64 T) {
  const i64 p = cs.k / 2;
  if (gb)
    for (i64 oc = 0; oc < cs.out_ch; ++oc) {
      const R* gr = gy + oc * H * W * T;
      R acc(0);
      for (i64 i = 0; i < H * W * T; ++i) acc += gr[i];
      gb[oc] += acc;
    }
  if (!gw) return;
  for (i64 oc = 0; oc < cs.out_ch; ++oc)
    for (i64 ic = 0; ic < cs.in_ch; ++ic)
      for (i64 a = 0; a < cs.k; ++a)
        for (i64 bb = 0; bb < cs.k; ++bb)
          for (i64 cc = 0; cc < cs.k; ++cc) {
            const i64 i0 = std::max<i64>(0, p - a), i1 = std::min(H, H + p - a);
            const i64 j0 = std::max<i64>(0, p - bb), j1 = std::min(W, W + p - bb);
            const i64 t0 = std::max<i64>(0, p - cc), t1 = std::min(T, T + p - cc);
            R acc(0);
            for (i64 i = i0; i < i1; ++i)
              for (i64 j = j0; j < j1; ++j) {
                const R* gr = gy + vid::idx4(oc, i, j, t0, H, W, T);
                const R* xr = x + vid::idx4(ic, i + a - p, j + bb - p, t0 + cc - p, H, W, T);
                for (i64 t = 0; t < t1 - t0; ++t) acc += gr[t] * xr[t];
              }
            gw[(((oc * cs.in_ch + ic) * cs.k + a) * cs.k + bb) * cs.k + cc] += acc;
          }
}

template <typename R>
var<R> conv3d_v(var<R> x, var<R> w, var<R> b, const conv3d_spec& cs) {
  cs.validate();
  check_internal(x->value.rank() == 4 && x->value.dim(0) == cs.in_ch, "conv3d: input shape");
  check_internal(w->value.numel() == cs.weight_count(), "conv3d: weight count");
  const i64 H = x->value.dim(1), W = x->value.dim(2), T = x->value.dim(3);
  tensor<R> v({cs.out_ch, H, W, T});
  conv3d_fwd(x->value.ptr(), w->value.ptr(), b->value.ptr(), v.ptr(), cs, H, W, T);
  return make_op<R>(std::move(v), {x, w, b}, [x, w, b, cs, H, W, T](node<R>& n) {
    if (x->requires_grad) conv3d_bwd_input(n.grad.ptr(), w->value.ptr(), grad_of(x).ptr(), cs, H, W, T);
    if (w->requires_grad || b->requires_grad)
      conv3d_bwd_weight(n.grad.ptr(), x->value.ptr(),
                        w->requires_grad ? grad_of(w).ptr() : nullptr,
                        b->requires_grad ? grad_of(b).ptr() : nullptr, cs, H, W, T);
  });
}

// ---- per-frame 2-D convolution ---------------------------------------------------

struct conv2d_spec {
  i64 in_ch = 1, out_ch = 1, k = 3, stride = 1, pad = 1;

  void validate() const {
    require_cfg(in_ch > 0 && out_ch > 0 && k > 0 && stride > 0 && pad >= 0, "conv2d: bad spec");
  }
  i64 out_hw(i64 H) const { return (H + 2 * pad - k) / stride + 1; }
  i64 weight_count() const { return out_ch * in_ch * k * k; }
};

template <typename R>
void conv2d_frames_fwd(const R* x, const R* w, const R* b, R* y, const conv2d_spec& cs, i64 H,
                       i64 W, i64 T) {
  const i64 Ho = cs.out_hw(H), Wo = cs.out_hw(W);
  for (i64 oc = 0; oc < cs.out_ch; ++oc) {
    const R bias = b ? b[oc] : R(0);
    R* yo = y + oc * Ho * Wo * T;
    for (i64 i = 0; i < Ho * Wo * T; ++i) yo[i] = bias;
  }
  for (i64 oc = 0; oc < cs.out_ch; ++oc)
    for (i64 ic = 0; ic < cs.in_ch; ++ic)
      for (i64 a = 0; a < cs.k; ++a)
        for (i64 bb = 0; bb < cs.k; ++bb) {
          const R wv = w[((oc * cs.in_ch + ic) * cs.k + a) * cs.k + bb];
          if (wv == R(0)) continue;
          for (i64 io = 0; io < Ho; ++io) {
            const i64 ii = io * cs.stride + a - cs.pad;
            if (ii < 0 || ii >= H) continue;
            for (i64 jo = 0; jo < Wo; ++jo) {
              const i64 jj = jo * cs.stride + bb - cs.pad;
              if (jj < 0 || jj >= W) continue;
              R* yr = y + vid::idx4(oc, io, jo, 0, Ho, Wo, T);
              const R* xr = x + vid::idx4(ic, ii, jj, 0, H, W, T);
              for (i64 t = 0; t < T; ++t) yr[t] += wv * xr[t];
            }
          }
        }
}

template <typename R>
void conv2d_frames_bwd_input(const R* gy, const R* w, R* gx, const conv2d_spec& cs, i64 H, i64 W,
                             i64 T) {
  const i64 Ho = cs.out_hw(H), Wo = cs.out_hw(W);
  for (i64 oc = 0; oc < cs.out_ch; ++oc)
    for (i64 ic = 0; ic < cs.in_ch; ++ic)
      for (i64 a = 0; a < cs.k; ++a)
        for (i64 bb = 0; bb < cs.k; ++bb) {
          const R wv = w[((oc * cs.in_ch + ic) * cs.k + a) * cs.k + bb];
          if (wv == R(0)) continue;
          for (i64 io = 0; io < Ho; ++io) {
            const i64 ii = io * cs.stride + a - cs.pad;
            if (ii < 0 || ii >= H) continue;
            for (i64 jo = 0; jo < Wo; ++jo) {
              const i64 jj = jo * cs.stride + bb - cs.pad;
              if (jj < 0 || jj >= W) continue;
              const R* gr = gy + vid::idx4(oc, io, jo, 0, Ho, Wo, T);
              R* xr = gx + vid::idx4(ic, ii, jj, 0, H, W, T);
              for (i64 t = 0; t < T; ++t) xr[t] += wv * gr[t];
            }
          }
        }
}

template <typename R>
void conv2d_frames_bwd_weight(const R* gy, const R* x, R* gw, R* gb, const conv2d_spec& cs,
                              i64 H, i64 W, i64 T) {
  const i64 Ho = cs.out_hw(H), Wo = cs.out_hw(W);
  if (gb)
    for (i64 oc = 0; oc < cs.out_ch; ++oc) {
      const R* gr = gy + oc * Ho * Wo * T;
      R acc(0);
      for (i64 i = 0; i < Ho * Wo * T; ++i) acc += gr[i];
      gb[oc] += acc;
    }
  if (!gw) return;
  for (i64 oc = 0; oc < cs.out_ch; ++oc)
    for (i64 ic = 0; ic < cs.in_ch; ++ic)
      for (i64 a = 0; a < cs.k; ++a)
        for (i64 bb = 0; bb < cs.k; ++bb) {
          R acc(0);
          for (i64 io = 0; io < Ho; ++io) {
            const i64 ii = io * cs.stride + a - cs.pad;
            if (ii < 0 || ii >= H) continue;
            for (i64 jo = 0; jo < Wo; ++jo) {
              const i64 jj = jo * cs.stride + bb - cs.pad;
              if (jj < 0 || jj >= W) continue;
              const R* gr = gy + vid::idx4(oc, io, jo, 0, Ho, Wo, T);
              const R* xr = x + vid::idx4(ic, ii, jj, 0, H, W, T);
              for (i64 t = 0; t < T; ++t) acc += gr[t] * xr[t];
            }
          }
          gw[((oc * cs.in_ch + ic) * cs.k + a) * cs.k + bb] += acc;
        }
}

template <typename R>
var<R> conv2d_frames_v(var<R> x, var<R> w, var<R> b, const conv2d_spec& cs) {
  cs.validate();
  check_internal(x->value.rank() == 4 && x->value.dim(0) == cs.in_ch, "conv2d: input shape");
  const i64 H = x->value.dim(1), W = x->value.dim(2), T = x->value.dim(3);
  tensor<R> v({cs.out_ch, cs.out_hw(H), cs.out_hw(W), T});
  conv2d_frames_fwd(x->value.ptr(), w->value.ptr(), b->value.ptr(), v.ptr(), cs, H, W, T);
  return make_op<R>(std::move(v), {x, w, b}, [x, w, b, cs, H, W, T](node<R>& n) {
    if (x->requires_grad)
      conv2d_frames_bwd_input(n.grad.ptr(), w->value.ptr(), grad_of(x).ptr(), cs, H, W, T);
    if (w->requires_grad || b->requires_grad)
      conv2d_frames_bwd_weight(n.grad.ptr(), x->value.ptr(),
                               w->requires_grad ? grad_of(w).ptr() : nullptr,
                               b->requires_grad ? grad_of(b).ptr() : nullptr, cs, H, W, T);
  });
}

// ---- pixel shuffle x2 --------------------------------------------------------------

// [4C x H x W x T] -> [C x 2H x 2W x T]
template <typename R>
var<R> pixel_shuffle2_v(var<R> x) {
  check_internal(x->value.rank() == 4 && x->value.dim(0) % 4 == 0, "pixel_shuffle: shape");
  const i64 C = x->value.dim(0) / 4, H = x->value.dim(1), W = x->value.dim(2),
            T = x->value.dim(3);
  tensor<R> v({C, 2 * H, 2 * W, T});
  for (i64 c = 0; c < C; ++c)
    for (i64 di = 0; di < 2; ++di)
      for (i64 dj = 0; dj < 2; ++dj)
        for (i64 i = 0; i < H; ++i)
          for (i64 j = 0; j < W; ++j) {
            const R* xr = x->value.ptr() + vid::idx4(c * 4 + di * 2 + dj, i, j, 0, H, W, T);
            R* yr = v.ptr() + vid::idx4(c, 2 * i + di, 2 * j + dj, 0, 2 * H, 2 * W, T);
            std::copy(xr, xr + T, yr);
          }
  return make_op<R>(std::move(v), {x}, [x, C, H, W, T](node<R>& n) {
    auto& g = grad_of(x);
    for (i64 c = 0; c < C; ++c)
      for (i64 di = 0; di < 2; ++di)
        for (i64 dj = 0; dj < 2; ++dj)
          for (i64 i = 0; i < H; ++i)
            for (i64 j = 0; j < W; ++j) {
              R* xr = g.ptr() + vid::idx4(c * 4 + di * 2 + dj, i, j, 0, H, W, T);
              const R* gr = n.grad.ptr() + vid::idx4(c, 2 * i + di, 2 * j + dj, 0, 2 * H, 2 * W, T);
              for (i64 t = 0; t < T; ++t) xr[t] += gr[t];
            }
  });
}

// ---- spatial reductions and broadcasts ----------------------------------------------

// mean over H,W: [C x H x W x T] -> [C x T]
template <typename R>
var<R> spatial_mean_v(var<R> x) {
  check_internal(x->value.rank() == 4, "spatial_mean: rank-4 expected");
  const i64 C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2), T = x->value.dim(3);
  const R inv = R(1) / R(H * W);
  tensor<R> v({C, T});
  for (i64 c = 0; c < C; ++c)
    for (i64 t = 0; t < T; ++t) {
      R acc(0);
      for (i64 p = 0; p < H * W; ++p) acc += x->value.data[(c * H * W + p) * T + t];
      v.data[c * T + t] = acc * inv;
    }
  return make_op<R>(std::move(v), {x}, [x, C, H, W, T](node<R>& n) {
    auto& g = grad_of(x);
    const R inv = R(1) / R(H * W);
    for (i64 c = 0; c < C; ++c)
      for (i64 t = 0; t < T; ++t) {
        const R gv = n.grad.data[c * T + t] * inv;
        for (i64 p = 0; p < H * W; ++p) g.data[(c * H * W + p) * T + t] += gv;
      }
  });
}

// weighted spatial sum: u [C x H x W x T], alpha [H*W x T] -> [C x T]
template <typename R>
var<R> spatial_contract(var<R> u, var<R> alpha) {
  check_internal(u->value.rank() == 4, "spatial_contract: rank-4 expected");
  const i64 C = u->value.dim(0), H = u->value.dim(1), W = u->value.dim(2), T = u->value.dim(3);
  const i64 P = H * W;
  check_internal(alpha->value.rows() == P && alpha->value.cols() == T,
                 "spatial_contract: weight shape");
  tensor<R> v({C, T});
  for (i64 c = 0; c < C; ++c)
    for (i64 t = 0; t < T; ++t) {
      R acc(0);
      for (i64 p = 0; p < P; ++p)
        acc += u->value.data[(c * P + p) * T + t] * alpha->value.data[p * T + t];
      v.data[c * T + t] = acc;
    }
  return make_op<R>(std::move(v), {u, alpha}, [u, alpha, C, P, T](node<R>& n) {
    if (u->requires_grad) {
      auto& g = grad_of(u);
      for (i64 c = 0; c < C; ++c)
        for (i64 t = 0; t < T; ++t) {
          const R gv = n.grad.data[c * T + t];
          for (i64 p = 0; p < P; ++p)
            g.data[(c * P + p) * T + t] += gv * alpha->value.data[p * T + t];
        }
    }
    if (alpha->requires_grad) {
      auto& g = grad_of(alpha);
      for (i64 c = 0; c < C; ++c)
        for (i64 t = 0; t < T; ++t) {
          const R gv = n.grad.data[c * T + t];
          for (i64 p = 0; p < P; ++p)
            g.data[p * T + t] += gv * u->value.data[(c * P + p) * T + t];
        }
    }
  });
}

// g [C x T] broadcast over space to [C x H x W x T]
template <typename R>
var<R> broadcast_spatial_v(var<R> g, i64 H, i64 W) {
  const i64 C = g->value.rows(), T = g->value.cols();
  tensor<R> v({C, H, W, T});
  for (i64 c = 0; c < C; ++c)
    for (i64 p = 0; p < H * W; ++p)
      std::copy(g->value.ptr() + c * T, g->value.ptr() + (c + 1) * T, v.ptr() + (c * H * W + p) * T);
  return make_op<R>(std::move(v), {g}, [g, C, H, W, T](node<R>& n) {
    auto& gg = grad_of(g);
    for (i64 c = 0; c < C; ++c)
      for (i64 p = 0; p < H * W; ++p)
        for (i64 t = 0; t < T; ++t) gg.data[c * T + t] += n.grad.data[(c * H * W + p) * T + t];
  });
}

// stack rank-2 frames [C x P] along a new last axis -> [C x P x T]
template <typename R>
var<R> stack_last(std::vector<var<R>> frames) {
  check_internal(!frames.empty(), "stack_last: empty list");
  const i64 C = frames[0]->value.dim(0), P = frames[0]->value.dim(1);
  const i64 T = i64(frames.size());
  tensor<R> v({C, P, T});
  for (i64 t = 0; t < T; ++t) {
    check_internal(frames[size_t(t)]->value.dim(0) == C && frames[size_t(t)]->value.dim(1) == P,
                   "stack_last: frame shape mismatch");
    for (i64 cp = 0; cp < C * P; ++cp)
      v.data[cp * T + t] = frames[size_t(t)]->value.data[cp];
  }
  std::vector<var<R>> parents = frames;
  return make_op<R>(std::move(v), std::move(parents), [frames, C, P, T](node<R>& n) {
    for (i64 t = 0; t < T; ++t) {
      if (!frames[size_t(t)]->requires_grad) continue;
      auto& g = grad_of(frames[size_t(t)]);
      for (i64 cp = 0; cp < C * P; ++cp) g.data[cp] += n.grad.data[cp * T + t];
    }
  });
}

// frame t of [C x P x T] (or any rank-3) -> [C x P]
template <typename R>
var<R> take_frame(var<R> x, i64 t) {
  check_internal(x->value.rank() == 3, "take_frame: rank-3 expected");
  const i64 C = x->value.dim(0), P = x->value.dim(1);
  return reshape_v(slice_last(std::move(x), t, 1), {C, P});
}

}  // namespace avsep
