#pragma once

#include "avsep/attention.hpp"
#include "avsep/config.hpp"
#include "avsep/video_ops.hpp"

// Dual-path video codec: a reconstruction encoder and a semantic encoder with a
// single-step vector quantizer, a shared mirrored decoder, and the pretraining
// losses (commitment + distillation + reconstruction).

namespace avsep {

// ---- building blocks ------------------------------------------------------------

template <typename R>
struct conv3d_layer {
  conv3d_spec cs;
  var<R> w, b;

  conv3d_layer() = default;
  conv3d_layer(param_store<R>& ps, const std::string& name, conv3d_spec spec) : cs(spec) {
    cs.validate();
    w = ps.uniform_fan_in(name + ".w", {cs.out_ch, cs.in_ch, cs.k, cs.k, cs.k},
                          cs.in_ch * cs.k * cs.k * cs.k);
    b = ps.zeros(name + ".b", {cs.out_ch});
  }
  var<R> operator()(var<R> x) const { return conv3d_v(x, w, b, cs); }
};

template <typename R>
struct conv2d_layer {
  conv2d_spec cs;
  var<R> w, b;

  conv2d_layer() = default;
  conv2d_layer(param_store<R>& ps, const std::string& name, conv2d_spec spec) : cs(spec) {
    cs.validate();
    w = ps.uniform_fan_in(name + ".w", {cs.out_ch, cs.in_ch, cs.k, cs.k},
                          cs.in_ch * cs.k * cs.k);
    b = ps.zeros(name + ".b", {cs.out_ch});
  }
  var<R> operator()(var<R> x) const { return conv2d_frames_v(x, w, b, cs); }
};

// Channel gate from a spatial-softmax context vector: per frame, 1x1 logits over
// space -> softmax weights -> weighted channel context -> two-layer gate MLP.
template <typename R>
struct se_gate_block {
  i64 ch = 0;
  conv3d_layer<R> logits;  // k=1, ch -> 1
  conv_layer<R> fc1, fc2;  // pointwise on [C x T]

  se_gate_block() = default;
  se_gate_block(param_store<R>& ps, const std::string& name, i64 channels) : ch(channels) {
    logits = conv3d_layer<R>(ps, name + ".logits", conv3d_spec{channels, 1, 1});
    const i64 hidden = std::max<i64>(1, channels / 2);
    fc1 = conv_layer<R>(ps, name + ".fc1", pointwise(channels, hidden));
    fc2 = conv_layer<R>(ps, name + ".fc2", pointwise(hidden, channels));
  }

  // returns the gate broadcast to u's shape
  var<R> operator()(var<R> u) const {
    const i64 H = u->value.dim(1), W = u->value.dim(2), T = u->value.dim(3);
    var<R> a = softmax_channels(reshape_v(logits(u), {H * W, T}));
    var<R> s = spatial_contract(u, a);
    var<R> g = sigmoid_v(fc2(leaky_relu(fc1(s), 0.01)));
    return broadcast_spatial_v(g, H, W);
  }
};

template <typename R>
struct res3d_block {
  conv3d_layer<R> c1, c2;
  se_gate_block<R> se;

  res3d_block() = default;
  res3d_block(param_store<R>& ps, const std::string& name, i64 ch)
      : c1(ps, name + ".c1", conv3d_spec{ch, ch, 3}),
        c2(ps, name + ".c2", conv3d_spec{ch, ch, 1}),
        se(ps, name + ".se", ch) {}

  var<R> operator()(var<R> x) const {
    var<R> u1 = elu(c1(x));
    var<R> u2 = elu(c2(u1));
    return add(mul(se(u2), u2), x);
  }
};

template <typename R>
var<R> geglu_channels(var<R> x) {
  const i64 C = x->value.rows();
  check_internal(C % 2 == 0, "geglu: channel count must be even");
  return mul(slice_rows(x, 0, C / 2), gelu_v(slice_rows(x, C / 2, C / 2)));
}

// Per-frame self-attention over spatial positions plus a GEGLU FFN, both
// pre-normalized with RMS norm and residual.
template <typename R>
struct spatial_attention_block {
  i64 ch = 0;
  var<R> norm1_g, norm2_g;
  mhsa_block<R> attn;
  conv_layer<R> pw1, pw2;

  spatial_attention_block() = default;
  spatial_attention_block(param_store<R>& ps, const std::string& name, i64 channels)
      : ch(channels) {
    norm1_g = ps.full(name + ".norm1.g", {channels}, 1.0);
    norm2_g = ps.full(name + ".norm2.g", {channels}, 1.0);
    attn = mhsa_block<R>(ps, name + ".attn", channels, 1, channels);
    pw1 = conv_layer<R>(ps, name + ".pw1", pointwise(channels, 4 * channels));
    pw2 = conv_layer<R>(ps, name + ".pw2", pointwise(2 * channels, channels));
  }

  var<R> operator()(var<R> x) const {
    const i64 C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2), T = x->value.dim(3);
    var<R> x3 = reshape_v(x, {C, H * W, T});
    std::vector<var<R>> frames;
    frames.reserve(size_t(T));
    for (i64 t = 0; t < T; ++t) {
      var<R> f = take_frame(x3, t);  // [C x P]
      f = add(f, attn(rms_norm_channels(f, norm1_g)));
      f = add(f, pw2(geglu_channels(pw1(rms_norm_channels(f, norm2_g)))));
      frames.push_back(f);
    }
    return reshape_v(stack_last(std::move(frames)), {C, H, W, T});
  }
};

// ---- encoder / decoder ------------------------------------------------------------

template <typename R>
struct video_encoder {
  std::vector<i64> ch;
  conv3d_layer<R> stem;
  std::vector<res3d_block<R>> res_a, res_b;
  std::vector<spatial_attention_block<R>> attn;
  std::vector<conv2d_layer<R>> down;

  video_encoder() = default;
  video_encoder(param_store<R>& ps, const std::string& name, const model_config& cfg)
      : ch(cfg.video_channels) {
    stem = conv3d_layer<R>(ps, name + ".stem", conv3d_spec{1, ch[0], 7});
    for (size_t s = 0; s + 1 < ch.size(); ++s) {
      const std::string sn = name + ".s" + std::to_string(s);
      res_a.push_back(res3d_block<R>(ps, sn + ".res0", ch[s]));
      res_b.push_back(res3d_block<R>(ps, sn + ".res1", ch[s]));
      attn.push_back(spatial_attention_block<R>(ps, sn + ".attn", ch[s]));
      conv2d_spec dn;
      dn.in_ch = ch[s];
      dn.out_ch = ch[s + 1];
      dn.k = 3;
      dn.stride = 2;
      dn.pad = 1;
      down.push_back(conv2d_layer<R>(ps, sn + ".down", dn));
    }
  }

  var<R> operator()(var<R> v) const {
    require(v->value.rank() == 4 && v->value.dim(0) == 1,
            "encode_video: expected [1 x H x W x T] grayscale input");
    const i64 stages = i64(down.size());
    require((v->value.dim(1) % (i64(1) << stages)) == 0 &&
                (v->value.dim(2) % (i64(1) << stages)) == 0,
            "encode_video: frame size must be divisible by 2^stages");
    var<R> h = elu(stem(v));
    for (size_t s = 0; s < down.size(); ++s) {
      h = res_a[s](h);
      h = res_b[s](h);
      h = attn[s](h);
      h = down[s](h);
    }
    return h;  // [ch.back() x H/2^D x W/2^D x T]
  }
};

template <typename R>
struct video_decoder {
  std::vector<i64> ch;
  std::vector<conv2d_layer<R>> up;  // conv to 4x channels, then pixel shuffle
  std::vector<spatial_attention_block<R>> attn;
  std::vector<res3d_block<R>> res_a, res_b;
  conv3d_layer<R> out_conv;

  video_decoder() = default;
  video_decoder(param_store<R>& ps, const std::string& name, const model_config& cfg)
      : ch(cfg.video_channels) {
    for (size_t i = ch.size() - 1; i > 0; --i) {
      const size_t s = ch.size() - 1 - i;  // construction order: coarse to fine
      const std::string sn = name + ".u" + std::to_string(s);
      conv2d_spec us;
      us.in_ch = ch[i];
      us.out_ch = 4 * ch[i - 1];
      us.k = 3;
      us.stride = 1;
      us.pad = 1;
      up.push_back(conv2d_layer<R>(ps, sn + ".up", us));
      attn.push_back(spatial_attention_block<R>(ps, sn + ".attn", ch[i - 1]));
      res_a.push_back(res3d_block<R>(ps, sn + ".res0", ch[i - 1]));
      res_b.push_back(res3d_block<R>(ps, sn + ".res1", ch[i - 1]));
    }
    out_conv = conv3d_layer<R>(ps, name + ".out", conv3d_spec{ch[0], 1, 7});
  }

  var<R> operator()(var<R> z) const {
    var<R> h = z;
    for (size_t s = 0; s < up.size(); ++s) {
      h = pixel_shuffle2_v(up[s](h));
      h = attn[s](h);
      h = res_a[s](h);
      h = res_b[s](h);
    }
    return out_conv(h);
  }
};

// ---- vector quantizer ---------------------------------------------------------------

// Straight-through: forward takes the quantized values bit-exactly; backward
// passes the output gradient to z_e unchanged.
template <typename R>
var<R> straight_through(var<R> z_e, const tensor<R>& quantized) {
  check_internal(z_e->value.same_shape(quantized), "straight_through: shape mismatch");
  tensor<R> v = quantized;
  return make_op<R>(std::move(v), {z_e}, [z_e](node<R>& n) {
    auto& g = grad_of(z_e);
    for (i64 i = 0; i < g.numel(); ++i) g.data[i] += n.grad.data[i];
  });
}

template <typename R>
struct vq_result {
  var<R> quantized;          // [d_e x M], values are exact codebook copies
  std::vector<i64> indices;  // one per token
  var<R> commit;             // scalar
};

template <typename R>
struct vq_module {
  i64 k_cb = 0, d_e = 0;
  double beta = 1.0;
  var<R> codebook;  // [K x d_e]

  vq_module() = default;
  vq_module(param_store<R>& ps, const std::string& name, i64 codebook_size, i64 embed_dim)
      : k_cb(codebook_size), d_e(embed_dim) {
    codebook = ps.uniform(name + ".codebook", {codebook_size, embed_dim},
                          std::sqrt(1.0 / double(embed_dim)));
  }

  // z_e: [d_e x M] tokens in columns. temperature 0 -> nearest entry (ties to
  // the lowest index); temperature > 0 -> sample from softmax(-d^2/tau).
  vq_result<R> quantize(var<R> z_e, double temperature = 0.0, rng* gen = nullptr) const {
    require_cfg(k_cb > 0, "vq: empty codebook");
    check_internal(z_e->value.rows() == d_e, "vq: embedding dim mismatch");
    const i64 M = z_e->value.cols();
    std::vector<i64> idx(size_t(M));
    std::vector<double> d2(size_t(k_cb));
    for (i64 m = 0; m < M; ++m) {
      for (i64 k = 0; k < k_cb; ++k) {
        double acc = 0.0;
        for (i64 j = 0; j < d_e; ++j) {
          const double diff = double(z_e->value.data[j * M + m]) -
                              double(codebook->value.data[k * d_e + j]);
          acc += diff * diff;
        }
        d2[size_t(k)] = acc;
      }
      if (temperature > 0.0) {
        require(gen != nullptr, "vq: sampling requires a generator");
        double mn = d2[0];
        for (double v : d2) mn = std::min(mn, v);
        double z = 0.0;
        for (i64 k = 0; k < k_cb; ++k) z += std::exp(-(d2[size_t(k)] - mn) / temperature);
        double u = gen->uniform() * z, acc = 0.0;
        i64 pick = k_cb - 1;
        for (i64 k = 0; k < k_cb; ++k) {
          acc += std::exp(-(d2[size_t(k)] - mn) / temperature);
          if (u <= acc) {
            pick = k;
            break;
          }
        }
        idx[size_t(m)] = pick;
      } else {
        i64 best = 0;
        for (i64 k = 1; k < k_cb; ++k)
          if (d2[size_t(k)] < d2[size_t(best)]) best = k;
        idx[size_t(m)] = best;
      }
    }

    var<R> gathered = vq_gather(codebook, idx);  // gradient path into the codebook
    vq_result<R> out;
    out.indices = idx;
    out.quantized = straight_through(z_e, gathered->value);
    const double inv_m = 1.0 / double(M);
    var<R> term1 = scale(sum_sq(sub(constant(z_e->value), gathered)), inv_m);
    var<R> term2 = scale(sum_sq(sub(z_e, constant(gathered->value))), inv_m);
    out.commit = add(std::move(term1), scale(std::move(term2), beta));
    return out;
  }
};

// Lloyd's algorithm, best inertia over independent restarts; empty clusters are
// reseeded from random points.
inline tensor<double> kmeans_init(const tensor<double>& features, i64 K, i64 restarts = 10,
                                  u64 seed = 1) {
  const i64 n = features.dim(0), d = features.dim(1);
  require(n >= K && K >= 1, "kmeans: need at least K feature rows");
  tensor<double> best({K, d});
  double best_inertia = std::numeric_limits<double>::infinity();
  rng gen(seed);
  std::vector<i64> assign(size_t(n));
  for (i64 r = 0; r < restarts; ++r) {
    // sample K distinct start rows
    std::vector<i64> perm(size_t(n));
    std::iota(perm.begin(), perm.end(), i64(0));
    for (i64 i = 0; i < K; ++i) {
      const i64 j = i + gen.uniform_int(n - i);
      std::swap(perm[size_t(i)], perm[size_t(j)]);
    }
    tensor<double> centers({K, d});
    for (i64 k = 0; k < K; ++k)
      std::copy(features.ptr() + perm[size_t(k)] * d, features.ptr() + (perm[size_t(k)] + 1) * d,
                centers.ptr() + k * d);
    double inertia = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      bool changed = (iter == 0);
      inertia = 0.0;
      for (i64 i = 0; i < n; ++i) {
        i64 bk = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (i64 k = 0; k < K; ++k) {
          double acc = 0.0;
          for (i64 j = 0; j < d; ++j) {
            const double diff = features.data[i * d + j] - centers.data[k * d + j];
            acc += diff * diff;
          }
          if (acc < bd) {
            bd = acc;
            bk = k;
          }
        }
        if (assign[size_t(i)] != bk) changed = true;
        assign[size_t(i)] = bk;
        inertia += bd;
      }
      if (!changed && iter > 0) break;
      std::vector<i64> count(size_t(K), 0);
      centers.fill(0.0);
      for (i64 i = 0; i < n; ++i) {
        ++count[size_t(assign[size_t(i)])];
        for (i64 j = 0; j < d; ++j)
          centers.data[assign[size_t(i)] * d + j] += features.data[i * d + j];
      }
      for (i64 k = 0; k < K; ++k) {
        if (count[size_t(k)] == 0) {
          const i64 pick = gen.uniform_int(n);
          std::copy(features.ptr() + pick * d, features.ptr() + (pick + 1) * d,
                    centers.ptr() + k * d);
        } else {
          for (i64 j = 0; j < d; ++j) centers.data[k * d + j] /= double(count[size_t(k)]);
        }
      }
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best = centers;
    }
  }
  return best;
}

// ---- frozen toy teacher ---------------------------------------------------------------

// Stand-in distillation target: a fixed random two-layer 3-D conv net with
// spatial mean pooling. Never trained; deterministic per seed.
template <typename R>
struct toy_teacher {
  i64 d_t, hidden = 8;
  conv3d_spec s1{1, 8, 3}, s2{8, 1, 3};
  tensor<R> w1, b1, w2, b2;

  explicit toy_teacher(i64 out_dim = 32, u64 seed = 77) : d_t(out_dim) {
    s2.out_ch = d_t;
    rng gen(seed);
    auto draw = [&gen](std::vector<i64> shape, double bound) {
      tensor<R> t(std::move(shape));
      for (i64 i = 0; i < t.numel(); ++i) t.data[size_t(i)] = R((gen.uniform() * 2 - 1) * bound);
      return t;
    };
    w1 = draw({s1.out_ch, 1, 3, 3, 3}, std::sqrt(1.0 / 27.0));
    b1 = draw({s1.out_ch}, 0.1);
    w2 = draw({d_t, s1.out_ch, 3, 3, 3}, std::sqrt(1.0 / (27.0 * double(s1.out_ch))));
    b2 = draw({d_t}, 0.1);
  }

  tensor<R> operator()(const tensor<R>& video) const {
    const i64 H = video.dim(1), W = video.dim(2), T = video.dim(3);
    tensor<R> h1({s1.out_ch, H, W, T});
    conv3d_fwd(video.ptr(), w1.ptr(), b1.ptr(), h1.ptr(), s1, H, W, T);
    for (auto& v : h1.data) v = v > R(0) ? v : std::expm1(v);
    tensor<R> h2({d_t, H, W, T});
    conv3d_fwd(h1.ptr(), w2.ptr(), b2.ptr(), h2.ptr(), s2, H, W, T);
    tensor<R> out({d_t, T});
    const R inv = R(1) / R(H * W);
    for (i64 c = 0; c < d_t; ++c)
      for (i64 t = 0; t < T; ++t) {
        R acc(0);
        for (i64 p = 0; p < H * W; ++p) acc += h2.data[(c * H * W + p) * T + t];
        out.data[c * T + t] = acc * inv;
      }
    return out;
  }
};

// ---- full codec -------------------------------------------------------------------------

template <typename R>
struct lipcoder_encode_out {
  var<R> v_r4, v_s4;  // [c_D x h x w x T]; v_r4 empty in semantic-only mode
  var<R> z_e;         // [d_e x M] pre-quantization tokens
  vq_result<R> vq;
};

template <typename R>
struct lipcoder {
  model_config cfg;
  video_encoder<R> recon_enc, sem_enc;
  conv_layer<R> vq_in, vq_out;  // c_D <-> d_e token projections
  vq_module<R> vq;
  video_decoder<R> dec;
  conv_layer<R> distill1, distill2;

  lipcoder() = default;
  lipcoder(param_store<R>& ps, const std::string& name, const model_config& mc) : cfg(mc) {
    if (!cfg.semantic_only) recon_enc = video_encoder<R>(ps, name + ".recon.enc", cfg);
    sem_enc = video_encoder<R>(ps, name + ".sem.enc", cfg);
    const i64 c_d = cfg.video_channels.back();
    vq_in = conv_layer<R>(ps, name + ".sem.vq_in", pointwise(c_d, cfg.embed_dim));
    vq_out = conv_layer<R>(ps, name + ".sem.vq_out", pointwise(cfg.embed_dim, c_d));
    vq = vq_module<R>(ps, name + ".sem.vq", cfg.codebook_size, cfg.embed_dim);
    dec = video_decoder<R>(ps, name + ".dec", cfg);
    distill1 = conv_layer<R>(ps, name + ".distill.pw1", pointwise(cfg.embed_dim, 64));
    distill2 = conv_layer<R>(ps, name + ".distill.pw2", pointwise(64, cfg.teacher_dim));
  }

  lipcoder_encode_out<R> encode(var<R> video, double temperature = 0.0,
                                rng* gen = nullptr) const {
    lipcoder_encode_out<R> out;
    if (!cfg.semantic_only) out.v_r4 = recon_enc(video);
    var<R> se = sem_enc(video);
    const i64 c_d = se->value.dim(0), h = se->value.dim(1), w = se->value.dim(2),
              T = se->value.dim(3);
    var<R> tokens = reshape_v(se, {c_d, h * w * T});
    out.z_e = vq_in(tokens);
    out.vq = vq.quantize(out.z_e, temperature, gen);
    out.v_s4 = reshape_v(vq_out(out.vq.quantized), {c_d, h, w, T});
    return out;
  }

  // [c_D x h x w x T] -> [d_v x T] visual tokens for fusion
  static var<R> flatten_tokens(var<R> z4) {
    const i64 c = z4->value.dim(0), h = z4->value.dim(1), w = z4->value.dim(2),
              T = z4->value.dim(3);
    return reshape_v(std::move(z4), {c * h * w, T});
  }

  var<R> decode(const lipcoder_encode_out<R>& enc) const {
    var<R> z = cfg.semantic_only ? enc.v_s4 : add(enc.v_r4, enc.v_s4);
    return dec(z);
  }

  var<R> distill_features(var<R> z_e, i64 h, i64 w, i64 T) const {
    var<R> z4 = reshape_v(std::move(z_e), {cfg.embed_dim, h, w, T});
    return distill2(silu(distill1(spatial_mean_v(z4))));
  }
};

template <typename R>
var<R> mse_mean(var<R> a, var<R> b) {
  const double n = double(a->value.numel());
  return scale(sum_sq(sub(std::move(a), std::move(b))), 1.0 / n);
}

// L = L_commit + lambda_distill * L_distill + lambda_recon * L_recon, all 1.0.
template <typename R>
struct pretrain_loss_parts {
  var<R> total, commit, distill, recon;
};

template <typename R>
pretrain_loss_parts<R> pretrain_losses(const lipcoder<R>& lc, var<R> video,
                                       const tensor<R>& teacher_out,
                                       double temperature = 0.0, rng* gen = nullptr) {
  lipcoder_encode_out<R> enc = lc.encode(video, temperature, gen);
  const i64 h = enc.v_s4->value.dim(1), w = enc.v_s4->value.dim(2), T = enc.v_s4->value.dim(3);
  pretrain_loss_parts<R> parts;
  parts.commit = enc.vq.commit;
  parts.distill = mse_mean(lc.distill_features(enc.z_e, h, w, T), constant(teacher_out));
  parts.recon = mse_mean(lc.decode(enc), video);
  parts.total = add(parts.commit, add(parts.distill, parts.recon));
  return parts;
}

}  // namespace avsep
