#include "avsep/cli.hpp"

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "avsep/datagen.hpp"
#include "avsep/demo.hpp"
#include "avsep/grad_check.hpp"
#include "avsep/io.hpp"
#include "avsep/pipeline.hpp"
#include "avsep/profiler.hpp"

namespace avsep {

namespace {

// Shared model/run configuration flags: an optional config file plus a preset
// shortcut; explicit file keys win over the preset.
struct cfg_source {
  std::string config_path, preset;

  run_config resolve() const {
    run_config rc;
    if (!config_path.empty()) {
      rc = run_config::parse_file(config_path);
      require(preset.empty() || preset == rc.preset,
              "both --preset and a config preset were given and they disagree");
      return rc;
    }
    const std::string p = preset.empty() ? "toy" : preset;
    return run_config::parse_text("preset = " + p + "\n", "<preset flag>");
  }
};

void add_cfg_flags(CLI::App* cmd, cfg_source& src) {
  cmd->add_option("--config", src.config_path, "run configuration file (key = value lines)");
  cmd->add_option("--preset", src.preset, "model preset: toy, micro, or full");
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  size_t at = 0;
  while (at <= s.size()) {
    const size_t next = s.find(',', at);
    if (next == std::string::npos) {
      out.push_back(s.substr(at));
      break;
    }
    out.push_back(s.substr(at, next - at));
    at = next + 1;
  }
  return out;
}

tensor<float> load_video_tensor(const std::string& path) {
  const auto entries = dlph_read(path);
  for (const auto& e : entries)
    if (e.name == "video") {
      require(e.dims.size() == 4 && e.dims[0] == 1,
              path + ": video entry must be rank-4 [1 x H x W x T]");
      return e.as<float>();
    }
  throw input_error(path + ": no 'video' entry in container");
}

dataset_spec spec_from(const run_config& rc) {
  dataset_spec ds;
  ds.n_train = rc.n_train;
  ds.n_val = rc.n_val;
  ds.n_test = rc.n_test;
  ds.speakers = rc.speakers;
  ds.duration_s = rc.duration_s;
  ds.noise_snr_db = rc.noise_snr_db;
  ds.sample_rate = rc.model.sample_rate;
  ds.fps = rc.model.video_fps;
  ds.video_size = rc.model.video_size;
  return ds;
}

// ---- subcommand bodies --------------------------------------------------------------

int cmd_separate(const cfg_source& cfg, const std::string& mix_path,
                 const std::string& video_list, const std::string& weights,
                 const std::string& out_dir) {
  run_config rc = cfg.resolve();
  dolphin<float> model(rc.model, rc.seed);
  load_weights(model.ps, weights);

  const wav_data in = read_wav(mix_path, rc.model.sample_rate);
  tensor<float> mix({1, i64(in.samples.size())});
  for (size_t i = 0; i < in.samples.size(); ++i) mix.data[i] = float(in.samples[i]);

  std::vector<tensor<float>> videos;
  for (const auto& p : split_commas(video_list)) videos.push_back(load_video_tensor(p));

  std::filesystem::create_directories(out_dir);
  const auto outs = model.separate_multi(mix, videos);
  for (size_t i = 0; i < outs.size(); ++i)
    write_wav(out_dir + "/sep_" + std::to_string(i) + ".wav", outs[i], rc.model.sample_rate);
  std::cout << "wrote " << outs.size() << " stream(s) to " << out_dir << "\n";
  return 0;
}

int cmd_train_toy(const cfg_source& cfg, const std::string& out_dir, i64 seed_flag,
                  i64 steps_flag) {
  run_config rc = cfg.resolve();
  if (seed_flag >= 0) rc.seed = u64(seed_flag);
  if (steps_flag > 0) rc.steps = steps_flag;
  std::filesystem::create_directories(out_dir);

  const manifest man = manifest::build(spec_from(rc));
  dolphin<float> model(rc.model, rc.seed);
  const train_result res = train_separation(model, man, rc, out_dir);
  write_text_file(out_dir + "/loss_trace.csv", res.trace_csv);
  save_weights(model.ps, out_dir + "/weights.dlph");
  std::cout << "steps " << res.steps_run << " epochs " << res.epochs_run << " best_val_loss "
            << res.best_val_loss << " val_sisnri_db " << res.val_sisnri_db << "\n";
  return 0;
}

int cmd_pretrain(const cfg_source& cfg, const std::string& out_dir, i64 seed_flag,
                 i64 steps_flag) {
  run_config rc = cfg.resolve();
  if (seed_flag >= 0) rc.seed = u64(seed_flag);
  if (steps_flag > 0) rc.steps = steps_flag;
  std::filesystem::create_directories(out_dir);

  const manifest man = manifest::build(spec_from(rc));
  param_store<float> ps(rc.seed);
  lipcoder<float> lc(ps, "lipcoder", rc.model);
  const toy_teacher<float> teacher(rc.model.teacher_dim, 77);
  const pretrain_result res =
      pretrain_lipcoder(ps, lc, teacher, man, rc, out_dir + "/lipcoder.dlph");
  write_text_file(out_dir + "/pretrain_trace.csv", res.trace_csv);
  std::cout << "steps " << res.steps_run << " val_loss_step0 " << res.val_loss_step0
            << " val_loss_step50 " << res.val_loss_step50 << " best_val " << res.best_val_loss
            << "\n";
  return 0;
}

int cmd_bench(const cfg_source& cfg, double seconds, i64 runs, i64 warmups, bool skip_latency,
              const std::string& out_path) {
  run_config rc = cfg.resolve();
  dolphin<float> model(rc.model, rc.seed);
  const param_report params = count_params(model.ps);
  const macs_report macs = count_macs(rc.model, seconds);

  std::ostringstream md;
  md << "# efficiency report\n\n";
  md << "| quantity | value |\n|---|---|\n";
  const i64 video_params =
      params.by_module.count("lipcoder") ? params.by_module.at("lipcoder") : 0;
  md << "| params_total | " << params.total << " |\n";
  md << "| params_w/o_video_encoder | " << params.total - video_params << " |\n";
  md << "| params_video_encoder | " << video_params << " |\n";
  for (const auto& [k, v] : params.by_module) md << "| params." << k << " | " << v << " |\n";
  md << "| macs_total(" << seconds << "s) | " << macs.total() << " |\n";
  for (const auto& [k, v] : macs.by_module) md << "| macs." << k << " | " << v << " |\n";

  if (!skip_latency) {
    const i64 L = i64(std::llround(seconds * double(rc.model.sample_rate)));
    const i64 t_v = i64(std::llround(seconds * double(rc.model.video_fps)));
    rng g(7);
    tensor<float> mix({1, L});
    for (auto& v : mix.data) v = float(g.uniform() * 0.2 - 0.1);
    tensor<float> vid({1, rc.model.video_size, rc.model.video_size, t_v});
    for (auto& v : vid.data) v = float(g.uniform());
    eval_guard<float> guard(model.ps);
    const auto vt = model.encode_video(vid);
    const latency_stats lat =
        time_inference([&] { (void)model.forward(mix, vt); }, runs, warmups);
    md << "| latency_mean_ms | " << lat.mean_ms << " |\n";
    md << "| latency_p50_ms | " << lat.p50_ms << " |\n";
    md << "| latency_p95_ms | " << lat.p95_ms << " |\n";
  }
  const std::string text = md.str();
  if (!out_path.empty()) write_text_file(out_path, text);
  std::cout << text;
  return 0;
}

int cmd_hda_demo(i64 T, double k, double sigma, i64 kernel_len, u64 seed,
                 const std::string& out_path, const std::string& report_path) {
  const demo_signal_data d = make_demo_signal(T, seed);
  const demo_report r = run_hda_demo(d, k, sigma, kernel_len);
  write_text_file(out_path, demo_csv(d, r));
  const std::string summary = demo_summary(r);
  if (!report_path.empty()) write_text_file(report_path, summary);
  std::cout << summary;
  return 0;
}

int cmd_grad_check(u64 seed) {
  // spot checks over the main trainable surfaces at micro scale, 64-bit
  model_config cfg = model_config::micro();
  double worst = 0.0;
  auto run = [&](const char* name, auto&& fn) {
    const grad_check_report rep = fn();
    std::cout << name << ": checked " << rep.checked << " max_rel " << rep.max_rel_err << " ("
              << rep.worst << ")\n";
    worst = std::max(worst, rep.max_rel_err);
  };

  run("hda_layer", [&] {
    param_store<double> ps(seed);
    hda_layer<double> layer(ps, "hda", cfg.n_a);
    rng g(seed + 1);
    var<double> xv = make_leaf(random_tensor<double>(g, {cfg.n_a, 16}, -0.5, 0.5), true);
    std::vector<std::pair<std::string, var<double>>> leaves{{"x", xv}};
    for (auto& [n, v] : ps.items) leaves.emplace_back(n, v);
    return grad_check<double>([&] { return sum_all(layer(xv)); }, leaves, 1e-4, 6, seed + 2);
  });
  run("ga_block", [&] {
    param_store<double> ps(seed + 10);
    ga_block<double> blk(ps, "ga", cfg.n_a, cfg.heads, cfg.head_dim, cfg.q_levels,
                         cfg.ffn_width());
    rng g(seed + 11);
    var<double> xv = make_leaf(random_tensor<double>(g, {cfg.n_a, 16}, -0.5, 0.5), true);
    std::vector<std::pair<std::string, var<double>>> leaves{{"x", xv}};
    for (auto& [n, v] : ps.items) leaves.emplace_back(n, v);
    return grad_check<double>([&] { return sum_all(blk(xv)); }, leaves, 1e-4, 4, seed + 12);
  });
  run("micro_model", [&] {
    dolphin<double> model(cfg, seed + 20);
    model.freeze_video();  // training freezes it too; the VQ path is not differenced
    const i64 L = 64 * cfg.audio_stride;
    const i64 t_v = 4;
    rng g(seed + 21);
    tensor<double> mix = random_tensor<double>(g, {1, L}, -0.1, 0.1);
    tensor<double> vid = random_tensor<double>(g, {1, cfg.video_size, cfg.video_size, t_v}, 0, 1);
    // keep AV synchrony: treat the clip as one second at both rates
    model.cfg.sample_rate = L;
    model.cfg.video_fps = t_v;
    // snapshot the visual tokens as constants so every probe reuses live buffers
    dolphin<double>::visual_tokens vt;
    {
      eval_guard<double> guard(model.ps);
      auto enc = model.encode_video(vid);
      vt.v_r = constant(enc.v_r->value);
      vt.v_s = constant(enc.v_s->value);
    }
    std::vector<std::pair<std::string, var<double>>> leaves;
    for (const auto& kv : model.ps.items)
      if (kv.second->requires_grad) leaves.push_back(kv);
    return grad_check<double>(
        [&] {
          auto fo = model.forward(mix, vt);
          return sisnr_t_v(fo.est, mix);
        },
        leaves, 1e-4, 2, seed + 23);
  });

  std::cout << "worst max_rel " << worst << "\n";
  if (worst >= 1e-3) {
    std::cerr << "gradient check failed\n";
    return 2;
  }
  return 0;
}

int cmd_gen_data(const cfg_source& cfg, const std::string& out_dir) {
  run_config rc = cfg.resolve();
  const manifest man = manifest::build(spec_from(rc));
  write_dataset(man, out_dir);
  std::cout << "wrote " << man.entries.size() << " mixtures to " << out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& manifest_path, const std::string& out_csv) {
  // line-delimited triples: mix.wav ref.wav est.wav (paths relative to the manifest)
  const std::string text = read_text_file(manifest_path);
  const std::string base = std::filesystem::path(manifest_path).parent_path().string();
  auto resolve = [&base](const std::string& p) {
    return (!base.empty() && !std::filesystem::path(p).is_absolute()) ? base + "/" + p : p;
  };
  std::istringstream in(text);
  std::string line;
  std::ostringstream csv;
  csv << "row,sisnri_db,sdri_db\n";
  double si_acc = 0, sd_acc = 0;
  i64 n = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string mix_p, ref_p, est_p;
    ls >> mix_p >> ref_p >> est_p;
    require(bool(ls) || !est_p.empty(), manifest_path + ": bad row '" + line + "'");
    const wav_data mix = read_wav(resolve(mix_p), 0);
    const wav_data ref = read_wav(resolve(ref_p), 0);
    const wav_data est = read_wav(resolve(est_p), 0);
    require(mix.samples.size() == ref.samples.size() && ref.samples.size() == est.samples.size(),
            manifest_path + ": length mismatch in row '" + line + "'");
    const double si = sisnri(ref.samples, est.samples, mix.samples);
    const double sd = sdri(ref.samples, est.samples, mix.samples);
    csv << n << "," << si << "," << sd << "\n";
    si_acc += si;
    sd_acc += sd;
    ++n;
  }
  require(n > 0, manifest_path + ": no rows");
  csv << "mean," << si_acc / double(n) << "," << sd_acc / double(n) << "\n";
  const std::string out = csv.str();
  if (!out_csv.empty()) write_text_file(out_csv, out);
  std::cout << out;
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"audio-visual speech separation toolkit"};
  app.require_subcommand(1);

  cfg_source sep_cfg, train_cfg, pre_cfg, bench_cfg, gen_cfg;
  std::string mix_path, video_list, weights, out_dir = "out";
  auto* sep = app.add_subcommand("separate", "separate a mixture with conditioning videos");
  add_cfg_flags(sep, sep_cfg);
  sep->add_option("--mix", mix_path, "mixture WAV")->required();
  sep->add_option("--video", video_list, "comma-separated conditioning video tensors")->required();
  sep->add_option("--weights", weights, "weights container")->required();
  sep->add_option("--out", out_dir, "output directory");

  std::string train_out = "train_out";
  i64 train_seed = -1, train_steps = -1;
  auto* tr = app.add_subcommand("train-toy", "train separation on the synthetic corpus");
  add_cfg_flags(tr, train_cfg);
  tr->add_option("--out", train_out, "output directory");
  tr->add_option("--seed", train_seed, "override config seed");
  tr->add_option("--steps", train_steps, "override training step budget");

  std::string pre_out = "pretrain_out";
  i64 pre_seed = -1, pre_steps = -1;
  auto* pre = app.add_subcommand("pretrain-video-toy", "pretrain the video codec");
  add_cfg_flags(pre, pre_cfg);
  pre->add_option("--out", pre_out, "output directory");
  pre->add_option("--seed", pre_seed, "override config seed");
  pre->add_option("--steps", pre_steps, "override training step budget");

  double bench_seconds = 1.0;
  i64 bench_runs = 20, bench_warmups = 5;
  bool bench_no_latency = false;
  std::string bench_out;
  auto* bench = app.add_subcommand("bench", "parameter/MAC/latency report");
  add_cfg_flags(bench, bench_cfg);
  bench->add_option("--seconds", bench_seconds, "input duration for MAC/latency accounting");
  bench->add_option("--runs", bench_runs, "timed runs");
  bench->add_option("--warmups", bench_warmups, "warmup runs");
  bench->add_flag("--skip-latency", bench_no_latency, "report params and MACs only");
  bench->add_option("--out", bench_out, "write the markdown report here too");

  i64 demo_t = 256, demo_kernel = 21;
  double demo_k = 1.2, demo_sigma = 0.0;
  u64 demo_seed = 9;
  std::string demo_out = "demo.csv", demo_report_path;
  auto* demo = app.add_subcommand("hda-demo", "edge-preservation demonstration CSV");
  demo->add_option("--T", demo_t, "signal length");
  demo->add_option("--k", demo_k, "diffusion time");
  demo->add_option("--sigma", demo_sigma, "Gaussian sigma; 0 matches smoothing to the heat filter");
  demo->add_option("--kernel", demo_kernel, "Gaussian kernel length (odd)");
  demo->add_option("--seed", demo_seed, "signal seed");
  demo->add_option("--out", demo_out, "CSV path");
  demo->add_option("--report", demo_report_path, "also write the summary report here");

  u64 gc_seed = 3;
  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient verification");
  gc->add_option("--seed", gc_seed, "probe seed");

  std::string gen_out = "data";
  auto* gen = app.add_subcommand("gen-data", "write the synthetic corpus to disk");
  add_cfg_flags(gen, gen_cfg);
  gen->add_option("--out", gen_out, "output directory");

  std::string eval_manifest, eval_out;
  auto* ev = app.add_subcommand("eval", "score (mix, ref, est) WAV triples");
  ev->add_option("--manifest", eval_manifest, "triple manifest file")->required();
  ev->add_option("--out", eval_out, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sep->parsed()) return cmd_separate(sep_cfg, mix_path, video_list, weights, out_dir);
    if (tr->parsed()) return cmd_train_toy(train_cfg, train_out, train_seed, train_steps);
    if (pre->parsed()) return cmd_pretrain(pre_cfg, pre_out, pre_seed, pre_steps);
    if (bench->parsed())
      return cmd_bench(bench_cfg, bench_seconds, bench_runs, bench_warmups, bench_no_latency,
                       bench_out);
    if (demo->parsed())
      return cmd_hda_demo(demo_t, demo_k, demo_sigma, demo_kernel, demo_seed, demo_out,
                          demo_report_path);
    if (gc->parsed()) return cmd_grad_check(gc_seed);
    if (gen->parsed()) return cmd_gen_data(gen_cfg, gen_out);
    if (ev->parsed()) return cmd_eval(eval_manifest, eval_out);
  } catch (const input_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const internal_error& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace avsep
