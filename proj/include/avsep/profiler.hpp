#pragma once

#include <algorithm>
#include <chrono>
#include <map>

#include "avsep/config.hpp"
#include "avsep/kernels.hpp"
#include "avsep/param_store.hpp"

// Parameter, MAC, and latency accounting. MACs count multiply-accumulate pairs
// (not FLOPs x2) from analytic per-operation formulas; only convolutions,
// matrix products, attention cores, transforms, and the VQ search are counted.
// Elementwise gates/activations are excluded.

namespace avsep {

// ---- parameters ---------------------------------------------------------------

struct param_report {
  i64 total = 0, trainable = 0, frozen = 0;
  std::map<std::string, i64> by_module;  // keyed by the first name segment

  std::string to_string() const {
    std::string s = "params total=" + std::to_string(total) +
                    " trainable=" + std::to_string(trainable) +
                    " frozen=" + std::to_string(frozen) + "\n";
    for (const auto& [k, v] : by_module) s += "  " + k + ": " + std::to_string(v) + "\n";
    return s;
  }
};

template <typename R>
param_report count_params(const param_store<R>& ps) {
  param_report rep;
  for (const auto& [name, v] : ps.items) {
    const i64 n = v->value.numel();
    rep.total += n;
    (v->requires_grad ? rep.trainable : rep.frozen) += n;
    rep.by_module[name.substr(0, name.find('.'))] += n;
  }
  return rep;
}

// ---- MAC formulas -----------------------------------------------------------------

inline i64 conv1d_macs(i64 out_ch, i64 in_ch, i64 groups, i64 k, i64 t_out) {
  return out_ch * t_out * (in_ch / groups) * k;
}

inline i64 matmul_macs(i64 m, i64 k, i64 n) { return m * k * n; }

inline i64 ceil_log2(i64 t) {
  i64 b = 0;
  while ((i64(1) << b) < t) ++b;
  return b;
}

// one forward or inverse transform over C channels, fast-path convention
inline i64 dct_macs(i64 ch, i64 t) { return ch * t * ceil_log2(t); }

// scores QK^T plus the weighted value sum, per the pooled length n
inline i64 attention_core_macs(i64 heads, i64 head_dim, i64 n) {
  return 2 * heads * head_dim * n * n;
}

inline i64 mhsa_macs(i64 width, i64 heads, i64 head_dim, i64 n) {
  const i64 inner = heads * head_dim;
  return 4 * matmul_macs(width, inner, n) + attention_core_macs(heads, head_dim, n);
}

// CSA: attention runs at the pooled length ceil(T / 2^Q).
inline i64 csa_macs(i64 width, i64 heads, i64 head_dim, i64 t, i64 q_levels) {
  return mhsa_macs(width, heads, head_dim, pool_out_len(t, i64(1) << q_levels));
}

inline i64 csa_core_macs(i64 heads, i64 head_dim, i64 t, i64 q_levels) {
  return attention_core_macs(heads, head_dim, pool_out_len(t, i64(1) << q_levels));
}

inline i64 ffn_macs(i64 width, i64 ffn_w, i64 t) {
  return conv1d_macs(ffn_w, width, 1, 1, t) + conv1d_macs(ffn_w, ffn_w, ffn_w, 3, t) +
         conv1d_macs(width, ffn_w, 1, 1, t);
}

inline i64 hda_macs(i64 width, i64 t) {
  i64 m = conv1d_macs(2 * width, width, 1, 1, t);  // split projection
  m += 2 * dct_macs(width, t) + width * t;         // transform pair + spectral filter
  m += 2 * conv1d_macs(width, width, width, 3, t); // depthwise stages of P
  m += conv1d_macs(width, width, 1, 1, t);         // pointwise close
  return m;
}

inline i64 gla_macs(const model_config& cfg, i64 t) {
  const i64 w = cfg.ffn_width();
  i64 m = 0;
  if (cfg.disable_ga) {
    m += conv1d_macs(cfg.n_a, cfg.n_a, cfg.n_a, 3, t);
  } else {
    m += csa_macs(cfg.n_a, cfg.heads, cfg.head_dim, t, cfg.q_levels) + ffn_macs(cfg.n_a, w, t);
  }
  if (cfg.disable_la) {
    m += conv1d_macs(cfg.n_a, cfg.n_a, cfg.n_a, 3, t);
  } else {
    m += (cfg.hda_conv1d ? conv1d_macs(cfg.n_a, cfg.n_a, cfg.n_a, 31, t)
                         : hda_macs(cfg.n_a, t)) +
         ffn_macs(cfg.n_a, w, t);
  }
  return m;
}

// ---- whole-model enumeration ------------------------------------------------------

struct macs_report {
  std::map<std::string, i64> by_module;

  i64 total() const {
    i64 s = 0;
    for (const auto& kv : by_module) s += kv.second;
    return s;
  }
  std::string to_string() const {
    std::string s = "macs total=" + std::to_string(total()) + "\n";
    for (const auto& [k, v] : by_module) s += "  " + k + ": " + std::to_string(v) + "\n";
    return s;
  }
};

// One video-encoder path (either of the two), grayscale input.
inline i64 video_encoder_macs(const model_config& cfg, i64 t_v) {
  const auto& ch = cfg.video_channels;
  i64 hw = cfg.video_size;
  i64 m = ch[0] * hw * hw * t_v * 1 * 343;  // stem conv3d k=7
  for (size_t s = 0; s + 1 < ch.size(); ++s) {
    const i64 c = ch[s], p = hw * hw, hid = std::max<i64>(1, c / 2);
    i64 res = c * p * t_v * c * 27 + c * p * t_v * c;   // conv3d k3 + k1
    res += 1 * p * t_v * c;                             // se logits
    res += c * p * t_v;                                 // se context contraction
    res += (c * hid + hid * c) * t_v;                   // se gate mlp
    m += 2 * res;
    m += (4 * c * c * p + attention_core_macs(1, c, p)) * t_v;  // spatial attention
    m += (c * 4 * c + 2 * c * c) * p * t_v;                     // geglu ffn
    const i64 hw2 = (hw + 2 * 1 - 3) / 2 + 1;
    m += ch[s + 1] * hw2 * hw2 * t_v * c * 9;  // stride-2 conv2d
    hw = hw2;
  }
  return m;
}

inline i64 vq_macs(const model_config& cfg, i64 t_v) {
  const i64 g = cfg.video_size >> cfg.video_stages();
  const i64 tokens = g * g * t_v, c_d = cfg.video_channels.back();
  i64 m = cfg.codebook_size * cfg.embed_dim * tokens;  // nearest-entry search
  m += 2 * c_d * cfg.embed_dim * tokens;               // token projections in/out
  return m;
}

inline i64 avf_macs(const model_config& cfg, i64 t_v, i64 t_a) {
  i64 m = conv1d_macs(cfg.d_fuse, cfg.d_v(), 1, 1, t_v);
  const i64 h = cfg.fusion_hidden;
  m += conv1d_macs(h, cfg.d_fuse, 1, 1, t_v);
  i64 len = t_v;
  std::vector<i64> skip;
  for (i64 l = 0; l < cfg.fusion_depth; ++l) {
    skip.push_back(len);
    len = pool_out_len(len, 2);
    m += conv1d_macs(h, h, h, 3, len) + conv1d_macs(h, h, 1, 1, len);
  }
  for (i64 l = cfg.fusion_depth - 1; l >= 0; --l) {
    len = skip[size_t(l)];
    m += conv1d_macs(h, h, h, 3, len) + conv1d_macs(h, h, 1, 1, len);
  }
  m += conv1d_macs(cfg.n_a, h, 1, 1, t_v);
  m += 2 * cfg.n_a * t_v + cfg.n_a * cfg.avf_k * t_v;  // w1, w3 gates on tokens
  m += 2 * cfg.n_a * t_a;                              // w2, w4 on audio features
  return m;
}

inline i64 separator_macs(const model_config& cfg, i64 t_a) {
  const i64 q_count = cfg.q_levels;
  require((t_a % (i64(1) << q_count)) == 0, "count_macs: T_a must divide by 2^Q");
  i64 m = 0;
  for (i64 q = 0; q <= q_count; ++q) {
    const i64 n = t_a >> q;
    if (q > 0) m += conv1d_macs(cfg.n_a, cfg.n_a, cfg.n_a, 4, n);  // stride-2 downsample
    m += cfg.enc_gla * gla_macs(cfg, n);
  }
  m += (cfg.disable_ga ? conv1d_macs(cfg.n_a, cfg.n_a, cfg.n_a, 3, t_a >> q_count)
                       : csa_macs(cfg.n_a, cfg.heads, cfg.head_dim, t_a >> q_count,
                                  cfg.q_levels) +
                             ffn_macs(cfg.n_a, cfg.ffn_width(), t_a >> q_count));  // top GA
  for (i64 q = 0; q <= q_count; ++q) {
    const i64 n = t_a >> q;
    m += 2 * cfg.n_a * n;  // TDA injection convs (depthwise k=1, two of them)
  }
  for (i64 q = q_count - 1; q >= 0; --q) {
    const i64 n = t_a >> q;
    m += 2 * cfg.n_a * n;  // decoder fusion convs W_c, W_d
    m += cfg.dec_gla * gla_macs(cfg, n);
  }
  m += conv1d_macs(2 * cfg.n_a, cfg.n_a, 1, 1, t_a);  // output head expand
  m += conv1d_macs(cfg.n_a, cfg.n_a, 1, 1, t_a);      // output head close
  return m;
}

// Separation-time MACs for one utterance of the given duration: two video
// encoder passes, VQ, fusion, audio codec, separator. The video decoder and
// training-only heads are excluded.
inline macs_report count_macs(const model_config& cfg, double input_seconds = 1.0) {
  const i64 L = i64(std::llround(input_seconds * double(cfg.sample_rate)));
  require(L > 0 && L % cfg.audio_stride == 0, "count_macs: length must divide by the stride");
  const i64 t_a = L / cfg.audio_stride;
  const i64 t_v = std::max<i64>(1, i64(std::llround(input_seconds * double(cfg.video_fps))));

  macs_report rep;
  const i64 paths = cfg.semantic_only ? 1 : 2;
  rep.by_module["video_encoder"] = paths * video_encoder_macs(cfg, t_v);
  rep.by_module["vq"] = vq_macs(cfg, t_v);
  rep.by_module["avf"] = avf_macs(cfg, t_v, t_a);
  rep.by_module["audio_encoder"] = conv1d_macs(cfg.n_a, 1, 1, cfg.audio_kernel, t_a);
  rep.by_module["separator"] = cfg.iterations * separator_macs(cfg, t_a);
  rep.by_module["audio_decoder"] = cfg.n_a * cfg.audio_kernel * t_a;  // transposed conv
  return rep;
}

// ---- latency ---------------------------------------------------------------------------

struct latency_stats {
  double mean_ms = 0, p50_ms = 0, p95_ms = 0;
  i64 runs = 0;
};

template <typename F>
latency_stats time_inference(F&& fn, i64 runs = 20, i64 warmups = 5) {
  require(runs >= 1, "time_inference: need at least one run");
  for (i64 i = 0; i < warmups; ++i) fn();
  std::vector<double> ms(size_t(runs));
  for (i64 i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    ms[size_t(i)] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  std::sort(ms.begin(), ms.end());
  latency_stats st;
  st.runs = runs;
  for (double v : ms) st.mean_ms += v;
  st.mean_ms /= double(runs);
  st.p50_ms = ms[size_t((runs - 1) / 2)];
  st.p95_ms = ms[size_t((95 * runs + 99) / 100 - 1)];
  return st;
}

}  // namespace avsep
