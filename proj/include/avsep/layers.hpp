#pragma once

#include "avsep/ad_ops.hpp"
#include "avsep/param_store.hpp"

namespace avsep {

inline conv_spec pointwise(i64 in_ch, i64 out_ch) {
  conv_spec cs;
  cs.in_ch = in_ch;
  cs.out_ch = out_ch;
  cs.kernel = 1;
  return cs;
}

inline conv_spec depthwise(i64 ch, i64 kernel, i64 stride = 1) {
  conv_spec cs;
  cs.in_ch = ch;
  cs.out_ch = ch;
  cs.kernel = kernel;
  cs.stride = stride;
  cs.groups = ch;
  cs.pad_lo = (kernel - stride) / 2;
  cs.pad_hi = kernel - stride - cs.pad_lo;
  return cs;
}

template <typename R>
struct conv_layer {
  conv_spec cs;
  var<R> w, b;

  conv_layer() = default;
  conv_layer(param_store<R>& ps, const std::string& name, conv_spec spec) : cs(spec) {
    cs.validate();
    w = ps.uniform_fan_in(name + ".w", {cs.out_ch, cs.in_ch / cs.groups, cs.kernel},
                          (cs.in_ch / cs.groups) * cs.kernel);
    b = ps.zeros(name + ".b", {cs.out_ch});
  }

  var<R> operator()(var<R> x) const { return conv1d(x, w, b, cs); }

  i64 param_count() const { return cs.weight_count() + cs.out_ch; }
};

template <typename R>
struct tconv_layer {
  conv_spec cs;
  var<R> w, b;

  tconv_layer() = default;
  tconv_layer(param_store<R>& ps, const std::string& name, conv_spec spec) : cs(spec) {
    cs.validate();
    w = ps.uniform_fan_in(name + ".w", {cs.in_ch, cs.out_ch / cs.groups, cs.kernel},
                          (cs.in_ch / cs.groups) * cs.kernel);
    b = ps.zeros(name + ".b", {cs.out_ch});
  }

  var<R> operator()(var<R> x) const { return tconv1d(x, w, b, cs); }

  i64 param_count() const { return cs.tconv_weight_count() + cs.out_ch; }
};

template <typename R>
struct norm_layer {
  var<R> gamma, beta;

  norm_layer() = default;
  norm_layer(param_store<R>& ps, const std::string& name, i64 ch) {
    gamma = ps.full(name + ".g", {ch}, 1.0);
    beta = ps.zeros(name + ".b", {ch});
  }

  var<R> operator()(var<R> x) const { return layer_norm_channels(x, gamma, beta); }
};

// GLU on the channel axis: first half gates via sigmoid of the second half.
template <typename R>
var<R> glu_channels(var<R> x) {
  const i64 C = x->value.rows();
  check_internal(C % 2 == 0, "glu: channel count must be even");
  var<R> a = slice_rows(x, 0, C / 2);
  var<R> g = slice_rows(x, C / 2, C / 2);
  return mul(a, sigmoid_v(g));
}

}  // namespace avsep
