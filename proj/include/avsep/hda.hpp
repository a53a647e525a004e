#pragma once

#include "avsep/layers.hpp"

// Heat-diffusion filtering: a per-channel low-pass in the cosine-transform
// domain whose multiplier exp(-k (p*pi/T)^2) is the exact spectral solution of
// the zero-flux heat equation on [0, T] run to diffusion time k.

namespace avsep {

template <typename R>
tensor<R> heat_w2_row(i64 T) {
  tensor<R> w({T});
  for (i64 p = 0; p < T; ++p) {
    const double f = double(p) * kPi / double(T);
    w.data[size_t(p)] = R(f * f);
  }
  return w;
}

// Non-differentiable tensor form. k holds one non-negative coefficient per row.
template <typename R>
tensor<R> heat_diffuse(const tensor<R>& x, const tensor<R>& k) {
  const i64 C = x.rows(), T = x.cols();
  require(k.numel() == C, "heat_diffuse: one coefficient per channel expected");
  for (i64 c = 0; c < C; ++c) require(k.data[size_t(c)] >= R(0), "heat_diffuse: k must be >= 0");
  tensor<R> spec(x.shape), out(x.shape);
  dct2_rows(x.ptr(), spec.ptr(), C, T);
  const tensor<R> w2 = heat_w2_row<R>(T);
  for (i64 c = 0; c < C; ++c)
    for (i64 t = 0; t < T; ++t)
      spec.data[size_t(c * T + t)] *= std::exp(-k.data[size_t(c)] * w2.data[size_t(t)]);
  idct2_rows(spec.ptr(), out.ptr(), C, T);
  return out;
}

template <typename R>
tensor<R> heat_diffuse(const tensor<R>& x, double k) {
  tensor<R> kv({x.rows()});
  kv.fill(R(k));
  return heat_diffuse(x, kv);
}

// Differentiable form; gradients flow to both x and k.
template <typename R>
var<R> heat_diffuse_v(var<R> x, var<R> k) {
  const i64 C = x->value.rows(), T = x->value.cols();
  require(k->value.numel() == C, "heat_diffuse: one coefficient per channel expected");
  for (i64 c = 0; c < C; ++c)
    require(k->value.data[size_t(c)] >= R(0), "heat_diffuse: k must be >= 0");
  var<R> w2 = constant(heat_w2_row<R>(T));
  return idct2_v(mul(dct2_v(std::move(x)), exp_neg_outer(std::move(k), w2)));
}

// Independent oracle: integrates du/dt = u_xx with zero-flux boundaries on a
// refined grid (finite volumes, odd refinement so coarse sample points land on
// fine cell centers) using Crank-Nicolson. The initial condition is the
// cosine-series interpolant of x, which embeds the samples in the continuum
// problem that the spectral filter solves exactly; remaining disagreement is
// O(h^2) + O(dt^2) discretization error.
inline std::vector<double> heat_equation_oracle(const std::vector<double>& x, double k,
                                                int n_steps = 400) {
  const i64 T = i64(x.size());
  require(T >= 1, "heat_equation_oracle: empty input");
  require(k >= 0.0, "heat_equation_oracle: k must be >= 0");
  require(n_steps >= 1, "heat_equation_oracle: n_steps must be >= 1");
  if (k == 0.0 || T == 1) return x;

  // coarse orthonormal DCT-II coefficients
  std::vector<double> A(size_t(T), 0.0);
  for (i64 p = 0; p < T; ++p) {
    double acc = 0.0;
    for (i64 t = 0; t < T; ++t) acc += x[size_t(t)] * std::cos(kPi * p * (t + 0.5) / double(T));
    A[size_t(p)] = acc * (p == 0 ? std::sqrt(1.0 / T) : std::sqrt(2.0 / T));
  }

  const i64 refine = 33;  // odd: coarse center j+0.5 = fine center j*refine+(refine-1)/2
  const i64 Tf = T * refine;
  const double h = 1.0 / double(refine);
  std::vector<double> u(size_t(Tf));
  for (i64 m = 0; m < Tf; ++m) {
    const double tau = (double(m) + 0.5) * h;
    double acc = A[0] * std::sqrt(1.0 / T);
    for (i64 p = 1; p < T; ++p)
      acc += A[size_t(p)] * std::sqrt(2.0 / T) * std::cos(kPi * p * tau / double(T));
    u[size_t(m)] = acc;
  }

  const double dt = k / double(n_steps);
  const double r = dt / (2.0 * h * h);
  // Crank-Nicolson with zero-flux faces: interior rows (-r, 1+2r, -r), boundary
  // rows (1+r, -r). Thomas algorithm, coefficients precomputed once.
  std::vector<double> diag(size_t(Tf)), rhs(size_t(Tf)), cp(size_t(Tf));
  for (i64 m = 0; m < Tf; ++m) diag[size_t(m)] = (m == 0 || m == Tf - 1) ? 1.0 + r : 1.0 + 2.0 * r;
  for (int s = 0; s < n_steps; ++s) {
    for (i64 m = 0; m < Tf; ++m) {
      const double left = (m > 0) ? u[size_t(m - 1)] : u[0];
      const double right = (m < Tf - 1) ? u[size_t(m + 1)] : u[size_t(Tf - 1)];
      rhs[size_t(m)] = u[size_t(m)] + r * (left - 2.0 * u[size_t(m)] + right);
    }
    // forward sweep
    cp[0] = -r / diag[0];
    rhs[0] = rhs[0] / diag[0];
    for (i64 m = 1; m < Tf; ++m) {
      const double denom = diag[size_t(m)] + r * cp[size_t(m - 1)];
      cp[size_t(m)] = -r / denom;
      rhs[size_t(m)] = (rhs[size_t(m)] + r * rhs[size_t(m - 1)]) / denom;
    }
    u[size_t(Tf - 1)] = rhs[size_t(Tf - 1)];
    for (i64 m = Tf - 2; m >= 0; --m)
      u[size_t(m)] = rhs[size_t(m)] - cp[size_t(m)] * u[size_t(m + 1)];
  }

  std::vector<double> y(size_t(T));
  for (i64 j = 0; j < T; ++j) y[size_t(j)] = u[size_t(j * refine + (refine - 1) / 2)];
  return y;
}

// Normalized sampled-Gaussian smoothing with symmetric (half-sample) padding.
inline std::vector<double> gaussian_conv_reference(const std::vector<double>& x, double sigma,
                                                   int kernel_len = 21) {
  const i64 T = i64(x.size());
  require(T >= 1, "gaussian_conv_reference: empty input");
  require(kernel_len >= 1 && kernel_len % 2 == 1, "gaussian kernel length must be odd");
  if (sigma <= 1e-12) return x;
  const i64 c = (kernel_len - 1) / 2;
  std::vector<double> w(size_t(kernel_len));
  double sum = 0.0;
  for (i64 i = 0; i < kernel_len; ++i) {
    const double d = double(i - c);
    w[size_t(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += w[size_t(i)];
  }
  for (double& v : w) v /= sum;
  std::vector<double> y(size_t(T), 0.0);
  for (i64 t = 0; t < T; ++t) {
    double acc = 0.0;
    for (i64 i = 0; i < kernel_len; ++i) {
      i64 idx = t + i - c;
      while (idx < 0 || idx >= T) {
        if (idx < 0) idx = -1 - idx;
        if (idx >= T) idx = 2 * T - 1 - idx;
      }
      acc += w[size_t(i)] * x[size_t(idx)];
    }
    y[size_t(t)] = acc;
  }
  return y;
}

// softplus(k_raw) == 0.1 at init: mild smoothing out of the box.
inline constexpr double kHdaKRawInit = -2.2521684610440906;

// Channel doubling -> split -> per-channel diffusion gated by SiLU of the other
// half -> small depthwise projection network.
template <typename R>
struct hda_layer {
  i64 ch = 0;
  conv_layer<R> proj_in;
  var<R> k_raw;
  conv_layer<R> p_dw1, p_dw2, p_pw;

  hda_layer() = default;
  hda_layer(param_store<R>& ps, const std::string& name, i64 n_a)
      : ch(n_a),
        proj_in(ps, name + ".proj_in", pointwise(n_a, 2 * n_a)),
        k_raw(ps.full(name + ".k_raw", {n_a}, kHdaKRawInit)),
        p_dw1(ps, name + ".p_dw1", depthwise(n_a, 3)),
        p_dw2(ps, name + ".p_dw2", depthwise(n_a, 3)),
        p_pw(ps, name + ".p_pw", pointwise(n_a, n_a)) {}

  var<R> operator()(var<R> f) const {
    require(f->value.rows() == ch, "hda_layer: channel mismatch");
    var<R> y = proj_in(f);
    var<R> xs = slice_rows(y, 0, ch);
    var<R> zs = slice_rows(y, ch, ch);
    var<R> xh = heat_diffuse_v(xs, softplus_v(k_raw));
    var<R> gated = mul(xh, silu(zs));
    return p_pw(p_dw2(silu(p_dw1(gated))));
  }
};

}  // namespace avsep
