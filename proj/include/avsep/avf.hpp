#pragma once

#include "avsep/config.hpp"
#include "avsep/layers.hpp"

namespace avsep {

// Small U-shaped temporal fusion net: pool-by-2 down path with skips, linear
// upsampling back, one depthwise+pointwise conv block per level each way.
template <typename R>
struct fusion_unet {
  i64 depth = 0;
  conv_layer<R> pw_in, pw_out;
  std::vector<conv_layer<R>> down_dw, down_pw, up_dw, up_pw;

  fusion_unet() = default;
  fusion_unet(param_store<R>& ps, const std::string& name, i64 in_ch, i64 hidden, i64 out_ch,
              i64 levels)
      : depth(levels),
        pw_in(ps, name + ".pw_in", pointwise(in_ch, hidden)),
        pw_out(ps, name + ".pw_out", pointwise(hidden, out_ch)) {
    for (i64 l = 0; l < depth; ++l) {
      const std::string lv = std::to_string(l);
      down_dw.push_back(conv_layer<R>(ps, name + ".down_dw" + lv, depthwise(hidden, 3)));
      down_pw.push_back(conv_layer<R>(ps, name + ".down_pw" + lv, pointwise(hidden, hidden)));
      up_dw.push_back(conv_layer<R>(ps, name + ".up_dw" + lv, depthwise(hidden, 3)));
      up_pw.push_back(conv_layer<R>(ps, name + ".up_pw" + lv, pointwise(hidden, hidden)));
    }
  }

  var<R> operator()(var<R> x) const {
    var<R> h = silu(pw_in(x));
    std::vector<var<R>> skips;
    for (i64 l = 0; l < depth; ++l) {
      skips.push_back(h);
      h = pool_time(h, 2);
      h = silu(down_pw[size_t(l)](down_dw[size_t(l)](h)));
    }
    for (i64 l = depth - 1; l >= 0; --l) {
      h = interp_time(h, skips[size_t(l)]->value.cols(), interp_mode::linear);
      h = add(h, skips[size_t(l)]);
      h = silu(up_pw[size_t(l)](up_dw[size_t(l)](h)));
    }
    return pw_out(h);
  }
};

// Audio-visual fusion: merged visual tokens drive a gated pathway and a
// K-sub-feature channel-attention pathway; their sum is the fused feature.
template <typename R>
struct avf_module {
  i64 n_a = 0, K = 1;
  conv_layer<R> tok_proj;
  fusion_unet<R> unet;
  conv_layer<R> w1, w2, w4;  // depthwise k=1
  conv_layer<R> w3;          // depthwise k=1 with channel multiplier K

  avf_module() = default;
  avf_module(param_store<R>& ps, const std::string& name, const model_config& cfg)
      : n_a(cfg.n_a),
        K(cfg.avf_k),
        tok_proj(ps, name + ".tok_proj", pointwise(cfg.d_v(), cfg.d_fuse)),
        unet(ps, name + ".unet", cfg.d_fuse, cfg.fusion_hidden, cfg.n_a, cfg.fusion_depth) {
    conv_spec one = depthwise(cfg.n_a, 1);
    w1 = conv_layer<R>(ps, name + ".w1", one);
    w2 = conv_layer<R>(ps, name + ".w2", one);
    w4 = conv_layer<R>(ps, name + ".w4", one);
    conv_spec mult = one;
    mult.out_ch = cfg.n_a * cfg.avf_k;
    w3 = conv_layer<R>(ps, name + ".w3", mult);
  }

  var<R> merge_visual_tokens(var<R> v_r, var<R> v_s) const {
    detail::check_same_shape(v_r, v_s, "merge_visual_tokens");
    return unet(tok_proj(add(std::move(v_r), std::move(v_s))));
  }

  var<R> gated_fusion_f1(var<R> vt, var<R> x) const {
    const i64 t_a = x->value.cols();
    return mul(interp_time(w1(std::move(vt)), t_a, interp_mode::nearest), w2(std::move(x)));
  }

  var<R> multispace_fusion_f2(var<R> vt, var<R> x) const {
    const i64 t_a = x->value.cols();
    var<R> expanded = w3(std::move(vt));                       // [n_a*K x T_v]
    var<R> mean_k = mean_channel_groups(expanded, K);          // [n_a x T_v]
    var<R> gate = interp_time(softmax_channels(mean_k), t_a, interp_mode::nearest);
    return mul(gate, w4(std::move(x)));
  }

  var<R> operator()(var<R> v_r, var<R> v_s, var<R> x) const {
    var<R> vt = merge_visual_tokens(std::move(v_r), std::move(v_s));
    return add(gated_fusion_f1(vt, x), multispace_fusion_f2(vt, x));
  }
};

}  // namespace avsep
