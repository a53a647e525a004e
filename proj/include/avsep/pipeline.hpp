#pragma once

#include <map>
#include <sstream>

#include "avsep/audiocodec.hpp"
#include "avsep/avf.hpp"
#include "avsep/datagen.hpp"
#include "avsep/io.hpp"
#include "avsep/lipcoder.hpp"
#include "avsep/losses.hpp"
#include "avsep/optim.hpp"
#include "avsep/separator.hpp"

namespace avsep {

// Full model: frozen dual-path video codec, audio codec, fusion, separator,
// and the auxiliary low-resolution estimate head used by the frequency loss.
template <typename R>
struct dolphin {
  model_config cfg;
  param_store<R> ps;
  lipcoder<R> video;
  audio_codec<R> codec;
  avf_module<R> fuse;
  separator<R> sep;
  conv_layer<R> aux_head;

  dolphin(const model_config& mc, u64 seed)
      : cfg(mc),
        ps(seed),
        video(ps, "lipcoder", cfg),
        codec(ps, "audio", cfg),
        fuse(ps, "avf", cfg),
        sep(ps, "sep", cfg),
        aux_head(ps, "aux.head", pointwise(cfg.n_a, cfg.n_a)) {}

  void freeze_video() { ps.freeze_prefix("lipcoder."); }

  struct visual_tokens {
    var<R> v_r, v_s;  // [d_v x T_v]
  };

  // Conditioning-path video encode; VQ picks nearest entries (no sampling) so
  // separation is deterministic.
  visual_tokens encode_video(const tensor<R>& frames) const {
    lipcoder_encode_out<R> e = video.encode(constant(frames));
    visual_tokens t;
    t.v_s = lipcoder<R>::flatten_tokens(e.v_s4);
    t.v_r = cfg.semantic_only ? constant(tensor<R>(t.v_s->value.shape))
                              : lipcoder<R>::flatten_tokens(e.v_r4);
    return t;
  }

  struct forward_out {
    var<R> est;   // [1 x L]
    var<R> est3;  // [1 x L]; empty when Q < 3
  };

  forward_out forward(const tensor<R>& mix, const visual_tokens& vt) const {
    const i64 L = mix.cols(), t_v = vt.v_s->value.cols();
    require(L * cfg.video_fps == t_v * cfg.sample_rate,
            "forward: audio and video durations differ (desynchronized inputs)");
    var<R> x = codec.encode(constant(mix));
    var<R> f = fuse(vt.v_r, vt.v_s, x);
    const int pos = int(cfg.fusion_position);
    separator_output<R> so = pos == 0 ? sep(f, x)
                                      : sep(x, x, pool_time(f, i64(1) << pos), pos);
    forward_out out;
    out.est = codec.decode(so.estimate);
    if (so.d3) {
      var<R> up = interp_time(so.d3, x->value.cols(), interp_mode::linear);
      out.est3 = codec.decode(mul(relu(aux_head(up)), x));
    }
    return out;
  }

  // One pass per conditioning video; outputs are independent.
  std::vector<std::vector<double>> separate_multi(const tensor<R>& mix,
                                                  const std::vector<tensor<R>>& videos) const {
    require(!videos.empty(), "separate_multi: need at least one conditioning video");
    std::vector<std::vector<double>> out;
    out.reserve(videos.size());
    for (const auto& v : videos) {
      forward_out fo = forward(mix, encode_video(v));
      std::vector<double> wav(size_t(fo.est->value.numel()));
      for (size_t i = 0; i < wav.size(); ++i) wav[i] = double(fo.est->value.data[i]);
      out.push_back(std::move(wav));
    }
    return out;
  }
};

// Temporarily drops every gradient requirement so evaluation passes stream-free
// their graphs; restores on destruction.
template <typename R>
struct eval_guard {
  std::vector<var<R>> flipped;

  explicit eval_guard(param_store<R>& ps) {
    for (auto& [name, v] : ps.items)
      if (v->requires_grad) {
        v->requires_grad = false;
        flipped.push_back(v);
      }
  }
  ~eval_guard() {
    for (auto& v : flipped) v->requires_grad = true;
  }
};

// ---- shared training plumbing --------------------------------------------------------

namespace detail_train {

template <typename R>
std::vector<double> to_vec(const var<R>& v) {
  std::vector<double> out(size_t(v->value.numel()));
  for (size_t i = 0; i < out.size(); ++i) out[i] = double(v->value.data[i]);
  return out;
}

template <typename R>
tensor<R> row_tensor(const std::vector<double>& v) {
  tensor<R> t({1, i64(v.size())});
  for (size_t i = 0; i < v.size(); ++i) t.data[i] = R(v[i]);
  return t;
}

inline std::vector<size_t> shuffled_indices(size_t n, u64 seed) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t(0));
  rng g(seed);
  for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[size_t(g.uniform_int(i64(i)))]);
  return idx;
}

}  // namespace detail_train

// ---- separation training -----------------------------------------------------------------

struct train_result {
  std::string trace_csv;  // epoch,step,lambda,train_loss,grad_norm + val rows
  i64 steps_run = 0, epochs_run = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double val_sisnri_db = 0.0;
  bool early_stopped = false;
};

// Training examples are (mixture row, conditioning speaker) pairs. Visual
// tokens come from the frozen encoder, so they are computed once per pair and
// cached as plain tensors.
template <typename R>
train_result train_separation(dolphin<R>& model, const manifest& man, const run_config& rc,
                              const std::string& ckpt_dir = "") {
  model.freeze_video();
  const auto train_rows = man.split("train");
  const auto val_rows = man.split("val");
  require(!train_rows.empty(), "train: manifest has no train rows");
  const model_config& cfg = model.cfg;
  require(man.spec.sample_rate == cfg.sample_rate && man.spec.fps == cfg.video_fps &&
              man.spec.video_size == cfg.video_size,
          "train: manifest generation parameters disagree with the model config");

  loss_config lcfg;
  adam<R> opt(model.ps.trainable(), cfg.lr);
  plateau_tracker plateau{cfg.plateau_epochs, cfg.early_stop_epochs};

  std::map<std::pair<u64, i64>, std::pair<tensor<R>, tensor<R>>> token_cache;
  auto tokens_for = [&](const av_sample& src, u64 base, i64 spk) ->
      typename dolphin<R>::visual_tokens {
        auto key = std::make_pair(base, spk);
        auto it = token_cache.find(key);
        if (it == token_cache.end()) {
          eval_guard<R> guard(model.ps);
          auto vt = model.encode_video(src.video.template cast<R>());
          it = token_cache.emplace(key, std::make_pair(vt.v_r->value, vt.v_s->value)).first;
        }
        return {constant(it->second.first), constant(it->second.second)};
      };

  auto example_loss = [&](const manifest_entry& row, i64 spk, i64 epoch, bool with_grad)
      -> var<R> {
    const realized_mix rm = realize(man.spec, row.base_seed);
    const tensor<R> mix = detail_train::row_tensor<R>(rm.mixed.mixture);
    const tensor<R> ref = detail_train::row_tensor<R>(rm.mixed.targets[size_t(spk)]);
    auto vt = tokens_for(rm.sources[size_t(spk)], row.base_seed, spk);
    typename dolphin<R>::forward_out fo = model.forward(mix, vt);
    (void)with_grad;
    return total_loss_v(fo.est, fo.est3, ref, epoch, lcfg);
  };

  // fixed validation objective: epoch-1 lambda, deterministic rows
  auto val_loss = [&]() -> double {
    if (val_rows.empty()) return 0.0;
    eval_guard<R> guard(model.ps);
    double acc = 0.0;
    for (const auto& row : val_rows) acc += double(item(example_loss(row, 0, 1, false)));
    return acc / double(val_rows.size());
  };

  std::vector<std::pair<size_t, i64>> examples;  // (row index, speaker)
  for (size_t r = 0; r < train_rows.size(); ++r)
    for (i64 s = 0; s < man.spec.speakers; ++s) examples.emplace_back(r, s);

  std::ostringstream trace;
  trace << "kind,epoch,step,lambda,value,grad_norm\n";
  train_result res;
  const i64 batch = std::max<i64>(1, cfg.batch_size);
  i64 step = 0;
  bool done = false;
  for (i64 epoch = 1; !done; ++epoch) {
    const auto order = detail_train::shuffled_indices(examples.size(), rc.seed * 7919 + u64(epoch));
    const double lam = lambda_schedule(epoch, lcfg);
    for (size_t at = 0; at < order.size() && !done; at += size_t(batch)) {
      model.ps.zero_grads();
      const i64 in_batch = std::min<i64>(batch, i64(order.size() - at));
      double batch_loss = 0.0;
      for (i64 b = 0; b < in_batch; ++b) {
        const auto [r, s] = examples[order[at + size_t(b)]];
        var<R> loss = scale(example_loss(train_rows[r], s, epoch, true), 1.0 / double(in_batch));
        const double lv = double(item(loss));
        if (!std::isfinite(lv))
          throw internal_error("non-finite training loss at epoch " + std::to_string(epoch) +
                               " step " + std::to_string(step) + ", batch seed " +
                               std::to_string(train_rows[r].base_seed) + " speaker " +
                               std::to_string(s));
        batch_loss += lv;
        backward(loss);
      }
      const double gnorm = clip_global_norm(opt.params, cfg.grad_clip);
      opt.step();
      ++step;
      trace << "train," << epoch << "," << step << "," << lam << "," << batch_loss << ","
            << gnorm << "\n";
      if (step >= rc.steps) done = true;
    }
    res.epochs_run = epoch;
    const double vl = val_loss();
    trace << "val," << epoch << "," << step << "," << lam << "," << vl << ",0\n";
    if (!ckpt_dir.empty()) {
      save_weights(model.ps, ckpt_dir + "/ckpt_last.dlph");
      if (vl < plateau.best) save_weights(model.ps, ckpt_dir + "/ckpt_best.dlph");
    }
    const auto dec = plateau.update(vl);
    res.best_val_loss = plateau.best;
    if (dec.halve_lr) opt.lr *= 0.5;
    if (dec.stop) {
      res.early_stopped = true;
      done = true;
    }
  }
  res.steps_run = step;

  // final quality number: SI-SNR improvement over the mixture on val rows
  if (!val_rows.empty()) {
    eval_guard<R> guard(model.ps);
    double acc = 0.0;
    i64 n = 0;
    for (const auto& row : val_rows) {
      const realized_mix rm = realize(man.spec, row.base_seed);
      const tensor<R> mix = detail_train::row_tensor<R>(rm.mixed.mixture);
      for (i64 s = 0; s < man.spec.speakers; ++s) {
        auto vt = tokens_for(rm.sources[size_t(s)], row.base_seed, s);
        auto fo = model.forward(mix, vt);
        acc += sisnri(rm.mixed.targets[size_t(s)], detail_train::to_vec(fo.est),
                      rm.mixed.mixture);
        ++n;
      }
    }
    res.val_sisnri_db = acc / double(n);
  }
  res.trace_csv = trace.str();
  return res;
}

// Mean SI-SNRi / SDRi of a model over one manifest split.
template <typename R>
std::pair<double, double> evaluate_split(dolphin<R>& model, const manifest& man,
                                         const std::string& split_name) {
  eval_guard<R> guard(model.ps);
  const auto rows = man.split(split_name);
  require(!rows.empty(), "evaluate: split '" + split_name + "' is empty");
  double si = 0.0, sd = 0.0;
  i64 n = 0;
  for (const auto& row : rows) {
    const realized_mix rm = realize(man.spec, row.base_seed);
    const tensor<R> mix = detail_train::row_tensor<R>(rm.mixed.mixture);
    for (i64 s = 0; s < man.spec.speakers; ++s) {
      auto vt = model.encode_video(rm.sources[size_t(s)].video.template cast<R>());
      auto fo = model.forward(mix, vt);
      const std::vector<double> est = detail_train::to_vec(fo.est);
      si += sisnri(rm.mixed.targets[size_t(s)], est, rm.mixed.mixture);
      sd += sdri(rm.mixed.targets[size_t(s)], est, rm.mixed.mixture);
      ++n;
    }
  }
  return {si / double(n), sd / double(n)};
}

// ---- codec pretraining ---------------------------------------------------------------------

struct pretrain_result {
  std::string trace_csv;
  double val_loss_step0 = 0.0, val_loss_step50 = 0.0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  i64 steps_run = 0, epochs_run = 0;
  bool kmeans_ran_before_training = false;
};

// K-means over encoder tokens seeds the codebook before the first gradient
// step; the three-loss objective then trains both paths plus the decoder.
template <typename R>
pretrain_result pretrain_lipcoder(param_store<R>& ps, lipcoder<R>& lc, const toy_teacher<R>& teacher,
                                  const manifest& man, const run_config& rc,
                                  const std::string& ckpt_path = "") {
  const auto train_rows = man.split("train");
  const auto val_rows = man.split("val");
  require(!train_rows.empty(), "pretrain: manifest has no train rows");

  auto video_of = [&](const manifest_entry& row, i64 spk) {
    const av_sample s = synth_utterance(row.base_seed + u64(spk), man.spec.duration_s,
                                        man.spec.sample_rate, man.spec.fps, man.spec.video_size);
    return s.video.template cast<R>();
  };

  pretrain_result res;

  // ---- codebook init from encoder statistics, before any gradient step
  {
    eval_guard<R> guard(ps);
    std::vector<double> feats;
    const i64 want = std::max<i64>(lc.cfg.codebook_size * 4, 256);
    i64 have = 0;
    for (const auto& row : train_rows) {
      if (have >= want) break;
      const tensor<R> v = video_of(row, 0);
      lipcoder_encode_out<R> e = lc.encode(constant(v));
      const i64 m = e.z_e->value.cols(), d = e.z_e->value.rows();
      for (i64 t = 0; t < m; ++t)
        for (i64 j = 0; j < d; ++j) feats.push_back(double(e.z_e->value.data[size_t(j * m + t)]));
      have += m;
    }
    require(have >= lc.cfg.codebook_size, "pretrain: not enough tokens for k-means");
    tensor<double> f({have, lc.cfg.embed_dim});
    std::copy(feats.begin(), feats.end(), f.ptr());
    const tensor<double> centers =
        kmeans_init(f, lc.cfg.codebook_size, 10, rc.seed * 31 + 7);
    lc.vq.codebook->value = centers.template cast<R>();
    res.kmeans_ran_before_training = true;
  }

  adam<R> opt(ps.trainable(), lc.cfg.lr);
  plateau_tracker plateau{lc.cfg.plateau_epochs, 20};  // early stop after 20 stale epochs
  rng sample_gen(rc.seed * 977 + 5);

  auto val_loss = [&]() -> double {
    if (val_rows.empty()) return 0.0;
    eval_guard<R> guard(ps);
    double acc = 0.0;
    for (const auto& row : val_rows) {
      const tensor<R> v = video_of(row, 0);
      auto parts = pretrain_losses(lc, constant(v), teacher(v));
      acc += double(item(parts.total));
    }
    return acc / double(val_rows.size());
  };

  res.val_loss_step0 = val_loss();

  std::ostringstream trace;
  trace << "kind,epoch,step,value,grad_norm\n";
  const i64 batch = std::max<i64>(1, lc.cfg.batch_size);
  i64 step = 0;
  bool done = false;
  for (i64 epoch = 1; !done; ++epoch) {
    const auto order =
        detail_train::shuffled_indices(train_rows.size(), rc.seed * 104729 + u64(epoch));
    for (size_t at = 0; at < order.size() && !done; at += size_t(batch)) {
      ps.zero_grads();
      const i64 in_batch = std::min<i64>(batch, i64(order.size() - at));
      double batch_loss = 0.0;
      for (i64 b = 0; b < in_batch; ++b) {
        const auto& row = train_rows[order[at + size_t(b)]];
        const tensor<R> v = video_of(row, i64(at + size_t(b)) % man.spec.speakers);
        auto parts = pretrain_losses(lc, constant(v), teacher(v), lc.cfg.vq_temperature,
                                     &sample_gen);
        var<R> loss = scale(parts.total, 1.0 / double(in_batch));
        const double lv = double(item(loss));
        if (!std::isfinite(lv))
          throw internal_error("non-finite pretraining loss at epoch " + std::to_string(epoch) +
                               " step " + std::to_string(step) + ", sample seed " +
                               std::to_string(row.base_seed));
        batch_loss += lv;
        backward(loss);
      }
      const double gnorm = clip_global_norm(opt.params, lc.cfg.grad_clip);
      opt.step();
      ++step;
      trace << "train," << epoch << "," << step << "," << batch_loss << "," << gnorm << "\n";
      if (step == 50) res.val_loss_step50 = val_loss();
      if (step >= rc.steps) done = true;
    }
    res.epochs_run = epoch;
    const double vl = val_loss();
    trace << "val," << epoch << "," << step << "," << vl << ",0\n";
    if (!ckpt_path.empty()) save_weights(ps, ckpt_path);
    const auto dec = plateau.update(vl);
    res.best_val_loss = plateau.best;
    if (dec.halve_lr) opt.lr *= 0.5;
    if (dec.stop) done = true;
  }
  res.steps_run = step;
  if (res.val_loss_step50 == 0.0 && step < 50) res.val_loss_step50 = val_loss();
  res.trace_csv = trace.str();
  return res;
}

}  // namespace avsep
