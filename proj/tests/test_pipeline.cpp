#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "avsep/pipeline.hpp"
#include "doctest.h"

using namespace avsep;

namespace {

// 0.2 s at 16 kHz / 25 fps: L = 3200, T_v = 5, t_a = 800
constexpr double kDur = 0.2;
constexpr i64 kLen = 3200;

tensor<double> demo_mix(u64 seed) {
  rng g(seed);
  return random_tensor<double>(g, {1, kLen}, -0.5, 0.5);
}

tensor<double> demo_video(u64 seed) {
  return synth_utterance(seed, kDur, 16000, 25, 8).video;
}

dataset_spec small_spec() {
  dataset_spec sp;
  sp.n_train = 2;
  sp.n_val = 1;
  sp.n_test = 1;
  sp.speakers = 2;
  sp.duration_s = kDur;
  sp.video_size = 8;
  return sp;
}

run_config run_for(i64 steps) {
  run_config rc;
  rc.model = model_config::micro();
  rc.seed = 3;
  rc.steps = steps;
  return rc;
}

struct tmp_dir {
  std::filesystem::path p;
  explicit tmp_dir(const char* name) : p(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
  }
  ~tmp_dir() {
    std::error_code ec;
    std::filesystem::remove_all(p, ec);
  }
  std::string dir() const { return p.string(); }
};

bool all_finite(const tensor<double>& t) {
  for (double v : t.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("forward maps a mixture to an estimate of the same length") {
  dolphin<double> model(model_config::micro(), 11);
  const tensor<double> mix = demo_mix(1);
  auto vt = model.encode_video(demo_video(2));
  CHECK(vt.v_s->value.rows() == model.cfg.d_v());
  CHECK(vt.v_s->value.cols() == 5);
  CHECK(vt.v_r->value.same_shape(vt.v_s->value));

  auto out = model.forward(mix, vt);
  REQUIRE(out.est);
  CHECK(out.est->value.rows() == 1);
  CHECK(out.est->value.cols() == kLen);
  CHECK(all_finite(out.est->value));
  CHECK(!out.est3);  // two levels only, no low-resolution tap
}

TEST_CASE("three or more levels expose the auxiliary low-resolution estimate") {
  model_config mc = model_config::micro();
  mc.q_levels = 3;
  dolphin<double> model(mc, 11);
  auto out = model.forward(demo_mix(1), model.encode_video(demo_video(2)));
  REQUIRE(out.est3);
  CHECK(out.est3->value.rows() == 1);
  CHECK(out.est3->value.cols() == kLen);
  CHECK(all_finite(out.est3->value));
}

TEST_CASE("fusion position one injects at the first encoder level") {
  model_config mc = model_config::micro();
  dolphin<double> base(mc, 11);
  mc.fusion_position = fusion_pos::f1;
  dolphin<double> deep(mc, 11);

  const tensor<double> mix = demo_mix(1);
  const tensor<double> video = demo_video(2);
  auto a = base.forward(mix, base.encode_video(video));
  auto b = deep.forward(mix, deep.encode_video(video));
  CHECK(b.est->value.cols() == kLen);
  CHECK(all_finite(b.est->value));
  CHECK(max_abs_diff(a.est->value, b.est->value) > 0.0);
}

TEST_CASE("desynchronized audio and video are rejected") {
  dolphin<double> model(model_config::micro(), 11);
  auto vt = model.encode_video(demo_video(2));
  rng g(4);
  const tensor<double> short_mix = random_tensor<double>(g, {1, kLen - 128});
  CHECK_THROWS_AS(model.forward(short_mix, vt), input_error);
}

TEST_CASE("identical seeds produce identical models and outputs") {
  dolphin<double> a(model_config::micro(), 5);
  dolphin<double> b(model_config::micro(), 5);
  const tensor<double> mix = demo_mix(9);
  const tensor<double> video = demo_video(10);
  auto ea = a.forward(mix, a.encode_video(video));
  auto eb = b.forward(mix, b.encode_video(video));
  CHECK(ea.est->value.data == eb.est->value.data);

  dolphin<double> c(model_config::micro(), 6);
  auto ec = c.forward(mix, c.encode_video(video));
  CHECK(max_abs_diff(ea.est->value, ec.est->value) > 0.0);
}

TEST_CASE("separate_multi yields an independent estimate per conditioning video") {
  dolphin<double> model(model_config::micro(), 11);
  const realized_mix rm = realize(small_spec(), 500);
  tensor<double> mix({1, i64(rm.mixed.mixture.size())});
  std::copy(rm.mixed.mixture.begin(), rm.mixed.mixture.end(), mix.ptr());

  const std::vector<tensor<double>> videos = {rm.sources[0].video, rm.sources[1].video};
  auto out = model.separate_multi(mix, videos);
  REQUIRE(out.size() == 2);
  CHECK(out[0].size() == rm.mixed.mixture.size());
  CHECK(out[1].size() == rm.mixed.mixture.size());
  CHECK(out[0] != out[1]);

  auto again = model.separate_multi(mix, videos);
  CHECK(again[0] == out[0]);
  CHECK(again[1] == out[1]);

  const std::vector<tensor<double>> none;
  CHECK_THROWS_AS(model.separate_multi(mix, none), input_error);
}

TEST_CASE("eval guard drops and restores gradient requirements") {
  dolphin<double> model(model_config::micro(), 11);
  model.freeze_video();
  std::vector<bool> before;
  for (auto& [name, v] : model.ps.items) before.push_back(v->requires_grad);
  CHECK(std::find(before.begin(), before.end(), true) != before.end());
  CHECK(std::find(before.begin(), before.end(), false) != before.end());

  {
    eval_guard<double> guard(model.ps);
    for (auto& [name, v] : model.ps.items) CHECK(!v->requires_grad);
  }
  for (size_t i = 0; i < model.ps.items.size(); ++i)
    CHECK(model.ps.items[i].second->requires_grad == before[i]);
}

TEST_CASE("training keeps the video codec frozen and moves the separator") {
  const manifest man = manifest::build(small_spec());
  dolphin<double> model(model_config::micro(), 11);

  std::vector<std::pair<std::string, std::vector<double>>> video_before, sep_before;
  for (auto& [name, v] : model.ps.items) {
    if (name.rfind("lipcoder.", 0) == 0) video_before.emplace_back(name, v->value.data);
    if (name.rfind("sep.", 0) == 0) sep_before.emplace_back(name, v->value.data);
  }
  REQUIRE(!video_before.empty());
  REQUIRE(!sep_before.empty());

  train_result res = train_separation(model, man, run_for(2));
  CHECK(res.steps_run == 2);
  CHECK(res.epochs_run == 2);  // 2 rows x 2 speakers = one batch per epoch
  CHECK(std::isfinite(res.best_val_loss));
  CHECK(res.trace_csv.rfind("kind,epoch,step,lambda,value,grad_norm\n", 0) == 0);
  CHECK(res.trace_csv.find("\ntrain,1,1,") != std::string::npos);
  CHECK(res.trace_csv.find("\nval,1,") != std::string::npos);
  CHECK(res.trace_csv.find("\nval,2,") != std::string::npos);

  for (auto& [name, vals] : video_before) {
    CHECK(!model.ps.get(name)->requires_grad);
    CHECK(model.ps.get(name)->value.data == vals);
  }
  bool sep_moved = false;
  for (auto& [name, vals] : sep_before)
    if (model.ps.get(name)->value.data != vals) sep_moved = true;
  CHECK(sep_moved);
}

TEST_CASE("training checkpoints restore bit-identically") {
  tmp_dir dir("avsep_pipe_ckpt");
  const manifest man = manifest::build(small_spec());
  dolphin<double> model(model_config::micro(), 11);
  train_separation(model, man, run_for(1), dir.dir());

  CHECK(std::filesystem::exists(dir.p / "ckpt_last.dlph"));
  CHECK(std::filesystem::exists(dir.p / "ckpt_best.dlph"));

  dolphin<double> twin(model_config::micro(), 999);
  load_weights(twin.ps, dir.dir() + "/ckpt_last.dlph");
  REQUIRE(twin.ps.items.size() == model.ps.items.size());
  for (size_t i = 0; i < model.ps.items.size(); ++i)
    CHECK(twin.ps.items[i].second->value.data == model.ps.items[i].second->value.data);

  // restored weights reproduce the trained model's output exactly
  const tensor<double> mix = demo_mix(1);
  const tensor<double> video = demo_video(2);
  auto a = model.forward(mix, model.encode_video(video));
  auto b = twin.forward(mix, twin.encode_video(video));
  CHECK(a.est->value.data == b.est->value.data);
}

TEST_CASE("a poisoned weight turns into a diagnosed training failure") {
  const manifest man = manifest::build(small_spec());
  dolphin<double> model(model_config::micro(), 11);
  // the decoder is purely linear, so the NaN cannot be masked away downstream
  model.ps.get("audio.dec.w")->value.data[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train_separation(model, man, run_for(1)), internal_error);
}

TEST_CASE("manifests that disagree with the model config are rejected") {
  dataset_spec sp = small_spec();
  sp.video_size = 16;  // model expects 8
  const manifest man = manifest::build(sp);
  dolphin<double> model(model_config::micro(), 11);
  CHECK_THROWS_AS(train_separation(model, man, run_for(1)), input_error);
}

TEST_CASE("evaluate_split reports finite improvements and rejects empty splits") {
  const manifest man = manifest::build(small_spec());
  dolphin<double> model(model_config::micro(), 11);
  auto [si, sd] = evaluate_split(model, man, "test");
  CHECK(std::isfinite(si));
  CHECK(std::isfinite(sd));
  CHECK_THROWS_AS(evaluate_split(model, man, "holdout"), input_error);
}

TEST_CASE("codec pretraining seeds the codebook first and reduces the loss") {
  tmp_dir dir("avsep_pipe_pre");
  const model_config mc = model_config::micro();
  param_store<double> ps(21);
  lipcoder<double> lc(ps, "lc", mc);
  toy_teacher<double> teacher(mc.teacher_dim);

  dataset_spec sp = small_spec();
  sp.n_train = 4;
  const manifest man = manifest::build(sp);

  const std::vector<double> cb_init = lc.vq.codebook->value.data;
  run_config rc = run_for(55);
  const std::string ckpt = dir.dir() + "/pre.dlph";
  pretrain_result res = pretrain_lipcoder(ps, lc, teacher, man, rc, ckpt);

  CHECK(res.kmeans_ran_before_training);
  CHECK(lc.vq.codebook->value.data != cb_init);
  CHECK(res.steps_run == 55);
  CHECK(res.epochs_run >= 1);
  CHECK(std::isfinite(res.val_loss_step0));
  CHECK(res.val_loss_step50 < res.val_loss_step0);
  CHECK(res.best_val_loss <= res.val_loss_step0);
  CHECK(res.trace_csv.rfind("kind,epoch,step,value,grad_norm\n", 0) == 0);
  CHECK(std::filesystem::exists(ckpt));

  param_store<double> ps2(22);
  lipcoder<double> lc2(ps2, "lc", mc);
  load_weights(ps2, ckpt);
  for (size_t i = 0; i < ps.items.size(); ++i)
    CHECK(ps2.items[i].second->value.data == ps.items[i].second->value.data);
}

TEST_CASE("pretraining in semantic-only mode trains without a reconstruction path") {
  model_config mc = model_config::micro();
  mc.semantic_only = true;
  param_store<double> ps(21);
  lipcoder<double> lc(ps, "lc", mc);
  CHECK(ps.count_prefix("lc.recon.") == 0);

  toy_teacher<double> teacher(mc.teacher_dim);
  const tensor<double> video = demo_video(3);
  auto parts = pretrain_losses(lc, constant(video), teacher(video));
  CHECK(std::isfinite(double(item(parts.total))));
  CHECK(double(item(parts.recon)) >= 0.0);
}

TEST_CASE("global norm clipping rescales only when above the threshold") {
  param_store<double> ps(1);
  var<double> a = ps.zeros("a", {2});
  var<double> b = ps.zeros("b", {1});
  var<double> c = ps.zeros("c", {3});  // gradient slot never touched
  a->grad = tensor<double>({2});
  a->grad.data = {3.0, 0.0};
  b->grad = tensor<double>({1});
  b->grad.data = {4.0};

  CHECK(clip_global_norm(ps.items, 10.0) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(a->grad.data[0] == 3.0);  // under the threshold: untouched

  CHECK(clip_global_norm(ps.items, 1.0) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(a->grad.data[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(b->grad.data[0] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(c->grad.data.empty());

  // threshold 0 disables clipping but still reports the norm
  a->grad.data = {3.0, 0.0};
  b->grad.data = {4.0};
  CHECK(clip_global_norm(ps.items, 0.0) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(a->grad.data[0] == 3.0);
}

TEST_CASE("adam steps match the closed form and skip untouched parameters") {
  param_store<double> ps(1);
  var<double> p = ps.full("p", {1}, 1.0);
  var<double> q = ps.full("q", {1}, 2.0);
  adam<double> opt(ps.items, 0.1);

  p->grad = tensor<double>({1});
  p->grad.data = {0.5};
  opt.step();

  const double g = 0.5;
  const double m1 = (1.0 - 0.9) * g;
  const double v1 = (1.0 - 0.999) * g * g;
  const double want = 1.0 - 0.1 * (m1 / (1.0 - 0.9)) / (std::sqrt(v1 / (1.0 - 0.999)) + 1e-8);
  CHECK(std::abs(p->value.data[0] - want) < 1e-12);
  CHECK(q->value.data[0] == 2.0);

  // second step with the same gradient keeps moving the same direction
  clear_grad(p);
  p->grad = tensor<double>({1});
  p->grad.data = {0.5};
  opt.step();
  CHECK(p->value.data[0] < want);
  CHECK(opt.t == 2);
}

TEST_CASE("plateau tracker halves on schedule and stops when stale") {
  plateau_tracker pt{2, 4};
  auto d1 = pt.update(1.0);
  CHECK(d1.improved);
  auto d2 = pt.update(0.9);
  CHECK(d2.improved);
  CHECK(pt.best == 0.9);

  auto s1 = pt.update(0.95);
  CHECK(!s1.improved);
  CHECK(!s1.halve_lr);
  auto s2 = pt.update(0.95);
  CHECK(s2.halve_lr);
  CHECK(!s2.stop);
  auto s3 = pt.update(0.95);
  CHECK(!s3.halve_lr);
  auto s4 = pt.update(0.95);
  CHECK(s4.halve_lr);
  CHECK(s4.stop);

  auto back = pt.update(0.5);
  CHECK(back.improved);
  CHECK(pt.since_best == 0);
}

}  // TEST_SUITE
