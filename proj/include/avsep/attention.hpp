#pragma once

#include "avsep/layers.hpp"

namespace avsep {

// Scaled dot-product self-attention over time. No positional encoding: temporal
// structure is carried by the surrounding convolutions, so the op itself is
// permutation-equivariant.
template <typename R>
struct mhsa_block {
  i64 heads = 0, d_h = 0;
  conv_layer<R> wq, wk, wv, wo;

  mhsa_block() = default;
  mhsa_block(param_store<R>& ps, const std::string& name, i64 n_a, i64 n_heads, i64 head_dim)
      : heads(n_heads),
        d_h(head_dim),
        wq(ps, name + ".wq", pointwise(n_a, n_heads * head_dim)),
        wk(ps, name + ".wk", pointwise(n_a, n_heads * head_dim)),
        wv(ps, name + ".wv", pointwise(n_a, n_heads * head_dim)),
        wo(ps, name + ".wo", pointwise(n_heads * head_dim, n_a)) {}

  var<R> operator()(var<R> x) const {
    var<R> q = wq(x), k = wk(x), v = wv(x);
    std::vector<var<R>> outs;
    outs.reserve(size_t(heads));
    const double inv_sqrt_d = 1.0 / std::sqrt(double(d_h));
    for (i64 h = 0; h < heads; ++h) {
      var<R> qh = slice_rows(q, h * d_h, d_h);
      var<R> kh = slice_rows(k, h * d_h, d_h);
      var<R> vh = slice_rows(v, h * d_h, d_h);
      var<R> scores = scale(matmul(qh, kh, true, false), inv_sqrt_d);  // [T x T]
      var<R> attn = softmax_lastdim(scores);  // rows sum to 1 per query
      outs.push_back(matmul(vh, attn, false, true));
    }
    return wo(concat_rows(std::move(outs)));
  }

  // attention map of the first head, for inspection/tests
  tensor<R> head0_attention(const tensor<R>& x) const {
    var<R> xin = constant(x);
    var<R> q = wq(xin), k = wk(xin);
    var<R> qh = slice_rows(q, 0, d_h);
    var<R> kh = slice_rows(k, 0, d_h);
    var<R> attn = softmax_lastdim(scale(matmul(qh, kh, true, false), 1.0 / std::sqrt(double(d_h))));
    return attn->value;
  }
};

// norm -> expand -> SiLU -> depthwise k3 -> SiLU -> contract, with residual.
template <typename R>
struct ffn_block {
  norm_layer<R> norm;
  conv_layer<R> pw1, dw, pw2;

  ffn_block() = default;
  ffn_block(param_store<R>& ps, const std::string& name, i64 n_a, i64 d_ffn)
      : norm(ps, name + ".norm", n_a),
        pw1(ps, name + ".pw1", pointwise(n_a, d_ffn)),
        dw(ps, name + ".dw", depthwise(d_ffn, 3)),
        pw2(ps, name + ".pw2", pointwise(d_ffn, n_a)) {
    require_cfg(d_ffn >= n_a, "ffn width must be >= channel width");
  }

  var<R> operator()(var<R> x) const {
    return add(x, pw2(silu(dw(silu(pw1(norm(x)))))));
  }
};

// Coarse self-attention: pre-norm, mean-pool by 2^Q, attend, linear-interpolate
// back, residual.
template <typename R>
struct csa_block {
  i64 pool_factor = 1;
  norm_layer<R> norm;
  mhsa_block<R> attn;

  csa_block() = default;
  csa_block(param_store<R>& ps, const std::string& name, i64 n_a, i64 n_heads, i64 head_dim,
            i64 q_levels)
      : pool_factor(i64(1) << q_levels),
        norm(ps, name + ".norm", n_a),
        attn(ps, name + ".attn", n_a, n_heads, head_dim) {}

  var<R> operator()(var<R> x) const {
    const i64 T = x->value.cols();
    require(T >= pool_factor, "csa: sequence shorter than the pooling factor");
    var<R> h = pool_time(norm(x), pool_factor);
    h = attn(h);
    h = interp_time(h, T, interp_mode::linear);
    return add(x, h);
  }
};

// Global-attention block: CSA followed by the convolutional FFN.
template <typename R>
struct ga_block {
  csa_block<R> csa;
  ffn_block<R> ffn;

  ga_block() = default;
  ga_block(param_store<R>& ps, const std::string& name, i64 n_a, i64 n_heads, i64 head_dim,
           i64 q_levels, i64 d_ffn)
      : csa(ps, name + ".csa", n_a, n_heads, head_dim, q_levels),
        ffn(ps, name + ".ffn", n_a, d_ffn) {}

  var<R> operator()(var<R> x) const { return ffn(csa(x)); }
};

}  // namespace avsep
