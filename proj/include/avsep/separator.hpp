#pragma once

#include "avsep/gla.hpp"

namespace avsep {

template <typename R>
struct separator_output {
  var<R> estimate;  // E, same shape as the input features
  var<R> d3;        // decoder state at T_a/8, empty var when Q < 3
};

// Encoder-bottleneck-decoder separator. Feature maps stay at n_a channels
// throughout; the time axis halves per encoder level and doubles back per
// decoder layer.
template <typename R>
struct separator {
  model_config cfg;
  std::vector<std::vector<gla_block<R>>> enc;  // (Q+1) levels x enc_gla blocks
  std::vector<conv_layer<R>> down;             // Q depthwise k4 s2 convs
  ga_block<R> top;
  std::vector<conv_layer<R>> tda_a, tda_b;     // per level, pointwise
  std::vector<conv_layer<R>> dec_c, dec_d;     // per decoder layer, pointwise
  std::vector<std::vector<gla_block<R>>> dec;  // Q layers x dec_gla blocks
  conv_layer<R> head1, head2;

  separator() = default;
  separator(param_store<R>& ps, const std::string& name, const model_config& mc) : cfg(mc) {
    const i64 Q = cfg.q_levels;
    enc.resize(size_t(Q + 1));
    for (i64 q = 0; q <= Q; ++q)
      for (i64 j = 0; j < cfg.enc_gla; ++j)
        enc[size_t(q)].push_back(gla_block<R>(
            ps, name + ".enc" + std::to_string(q) + ".gla" + std::to_string(j), cfg));
    for (i64 q = 0; q < Q; ++q)
      down.push_back(conv_layer<R>(ps, name + ".down" + std::to_string(q),
                                   depthwise(cfg.n_a, 4, 2)));
    top = ga_block<R>(ps, name + ".top", cfg.n_a, cfg.heads, cfg.head_dim, cfg.q_levels,
                      cfg.ffn_width());
    for (i64 q = 0; q <= Q; ++q) {
      tda_a.push_back(conv_layer<R>(ps, name + ".tda_a" + std::to_string(q),
                                    pointwise(cfg.n_a, cfg.n_a)));
      tda_b.push_back(conv_layer<R>(ps, name + ".tda_b" + std::to_string(q),
                                    pointwise(cfg.n_a, cfg.n_a)));
    }
    dec.resize(size_t(Q));
    for (i64 q = Q - 1; q >= 0; --q) {
      dec_c.push_back(conv_layer<R>(ps, name + ".dec_c" + std::to_string(q),
                                    pointwise(cfg.n_a, cfg.n_a)));
      dec_d.push_back(conv_layer<R>(ps, name + ".dec_d" + std::to_string(q),
                                    pointwise(cfg.n_a, cfg.n_a)));
      for (i64 j = 0; j < cfg.dec_gla; ++j)
        dec[size_t(Q - 1 - q)].push_back(gla_block<R>(
            ps, name + ".dec" + std::to_string(q) + ".gla" + std::to_string(j), cfg));
    }
    head1 = conv_layer<R>(ps, name + ".head1", pointwise(cfg.n_a, 2 * cfg.n_a));
    head2 = conv_layer<R>(ps, name + ".head2", pointwise(cfg.n_a, cfg.n_a));
  }

  // fuse (optional) is added to the input of encoder level fuse_level, pooled
  // to that level's resolution by the caller.
  std::vector<var<R>> encode(var<R> f, var<R> fuse = {}, i64 fuse_level = -1) const {
    const i64 Q = cfg.q_levels;
    const i64 T = f->value.cols();
    require(T % (i64(1) << Q) == 0, "separator: feature length must be divisible by 2^Q");
    std::vector<var<R>> levels;
    var<R> x = f;
    for (i64 q = 0; q <= Q; ++q) {
      if (q > 0) x = down[size_t(q - 1)](x);
      if (q == fuse_level && fuse) x = add(x, fuse);
      for (auto& blk : enc[size_t(q)]) x = blk(x);
      levels.push_back(x);
    }
    return levels;
  }

  var<R> bottleneck(const std::vector<var<R>>& levels) const {
    const i64 Q = cfg.q_levels;
    std::vector<var<R>> pooled;
    for (i64 q = 0; q <= Q; ++q) pooled.push_back(pool_time(levels[size_t(q)], i64(1) << (Q - q)));
    return top(add_n(std::move(pooled)));
  }

  var<R> tda_inject(var<R> f_q, var<R> gbar, i64 q) const {
    const i64 target = f_q->value.cols();
    var<R> a = interp_time(tda_a[size_t(q)](gbar), target, interp_mode::nearest);
    var<R> b = interp_time(tda_b[size_t(q)](gbar), target, interp_mode::nearest);
    return add(mul(f_q, sigmoid_v(a)), b);
  }

  // returns (finest decoder state, state at T_a/8 or empty)
  std::pair<var<R>, var<R>> decode(const std::vector<var<R>>& m_levels) const {
    const i64 Q = cfg.q_levels;
    var<R> state = m_levels[size_t(Q)];
    var<R> d3;
    if (Q == 3) d3 = state;
    for (i64 q = Q - 1; q >= 0; --q) {
      const size_t layer = size_t(Q - 1 - q);
      var<R> up = interp_time(state, m_levels[size_t(q)]->value.cols(), interp_mode::linear);
      state = add(mul(m_levels[size_t(q)], sigmoid_v(dec_c[layer](up))), dec_d[layer](up));
      for (auto& blk : dec[layer]) state = blk(state);
      if (q == 3) d3 = state;
    }
    return {state, d3};
  }

  var<R> output_head(var<R> d0, var<R> x_mix) const {
    var<R> e = head2(glu_channels(head1(d0)));
    if (cfg.mask_mode) e = mul(relu(std::move(e)), std::move(x_mix));
    return e;
  }

  separator_output<R> one_pass(var<R> f, var<R> x_mix, var<R> fuse = {},
                               i64 fuse_level = -1) const {
    std::vector<var<R>> levels = encode(f, fuse, fuse_level);
    var<R> gbar = bottleneck(levels);
    std::vector<var<R>> m_levels;
    for (i64 q = 0; q <= cfg.q_levels; ++q)
      m_levels.push_back(tda_inject(levels[size_t(q)], gbar, q));
    auto [d0, d3] = decode(m_levels);
    return {output_head(d0, x_mix), d3};
  }

  separator_output<R> operator()(var<R> f, var<R> x_mix, var<R> fuse = {},
                                 i64 fuse_level = -1) const {
    separator_output<R> out = one_pass(f, x_mix, fuse, fuse_level);
    for (i64 i = 1; i < cfg.iterations; ++i) out = one_pass(out.estimate, x_mix, fuse, fuse_level);
    return out;
  }

  void reset_call_counts() const {
    for (auto& lv : enc)
      for (auto& b : lv) b.calls = 0;
    for (auto& lv : dec)
      for (auto& b : lv) b.calls = 0;
  }

  // every GLA block must have run exactly `expected` times
  bool call_counts_equal(i64 expected) const {
    for (auto& lv : enc)
      for (auto& b : lv)
        if (b.calls != expected) return false;
    for (auto& lv : dec)
      for (auto& b : lv)
        if (b.calls != expected) return false;
    return true;
  }
};

}  // namespace avsep
