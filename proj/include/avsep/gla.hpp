#pragma once

#include "avsep/attention.hpp"
#include "avsep/config.hpp"
#include "avsep/hda.hpp"

namespace avsep {

// Local-attention block: heat-diffusion layer feeding the same FFN shape used
// by the GA block. The diffusion layer output goes straight into the FFN; the
// only residual is the FFN's own.
template <typename R>
struct la_block {
  hda_layer<R> hda;
  ffn_block<R> ffn;

  la_block() = default;
  la_block(param_store<R>& ps, const std::string& name, i64 n_a, i64 d_ffn)
      : hda(ps, name + ".hda", n_a), ffn(ps, name + ".ffn", n_a, d_ffn) {}

  var<R> operator()(var<R> x) const { return ffn(hda(x)); }
};

// Global-local composite with the ablation switches: a disabled sub-block is
// replaced by a single depthwise conv (kernel 3, residual add, no other
// parameters); hda_conv1d swaps just the diffusion layer for a depthwise
// kernel-31 conv while keeping the FFN.
template <typename R>
struct gla_block {
  bool use_ga = true, use_la = true, hda_as_conv = false;
  ga_block<R> ga;
  conv_layer<R> ga_sub;
  hda_layer<R> hda;
  conv_layer<R> hda_sub;
  ffn_block<R> la_ffn;
  conv_layer<R> la_sub;
  mutable i64 calls = 0;  // forward-pass instrumentation

  gla_block() = default;
  gla_block(param_store<R>& ps, const std::string& name, const model_config& cfg)
      : use_ga(!cfg.disable_ga), use_la(!cfg.disable_la), hda_as_conv(cfg.hda_conv1d) {
    if (use_ga)
      ga = ga_block<R>(ps, name + ".ga", cfg.n_a, cfg.heads, cfg.head_dim, cfg.q_levels,
                       cfg.ffn_width());
    else
      ga_sub = conv_layer<R>(ps, name + ".ga_sub", depthwise(cfg.n_a, 3));
    if (use_la) {
      if (hda_as_conv)
        hda_sub = conv_layer<R>(ps, name + ".hda_sub", depthwise(cfg.n_a, 31));
      else
        hda = hda_layer<R>(ps, name + ".hda", cfg.n_a);
      la_ffn = ffn_block<R>(ps, name + ".la_ffn", cfg.n_a, cfg.ffn_width());
    } else {
      la_sub = conv_layer<R>(ps, name + ".la_sub", depthwise(cfg.n_a, 3));
    }
  }

  var<R> operator()(var<R> x) const {
    ++calls;
    var<R> y = use_ga ? ga(x) : add(x, ga_sub(x));
    if (use_la)
      y = la_ffn(hda_as_conv ? hda_sub(y) : hda(y));
    else
      y = add(y, la_sub(y));
    return y;
  }
};

}  // namespace avsep
