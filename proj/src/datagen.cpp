#include "avsep/datagen.hpp"

#include <filesystem>
#include <sstream>

#include "avsep/io.hpp"

namespace avsep {

std::vector<double> smooth_envelope(rng& g, i64 n_frames) {
  // three slow sinusoids with random phase/rate, squared into [0, 1]
  std::vector<double> env(size_t(n_frames), 0.0);
  double amp[3], rate[3], phase[3];
  for (int h = 0; h < 3; ++h) {
    amp[h] = 0.3 + 0.7 * g.uniform();
    rate[h] = (0.5 + 2.0 * g.uniform()) * 2.0 * kPi;  // cycles over the clip
    phase[h] = 2.0 * kPi * g.uniform();
  }
  for (i64 t = 0; t < n_frames; ++t) {
    const double u = double(t) / double(std::max<i64>(1, n_frames - 1));
    double v = 0.0;
    for (int h = 0; h < 3; ++h) v += amp[h] * std::sin(rate[h] * u + phase[h]);
    v /= amp[0] + amp[1] + amp[2];
    env[size_t(t)] = v * v;  // nonnegative, smooth, frequently near zero
  }
  return env;
}

av_sample synth_from_envelope(u64 seed, const std::vector<double>& env_frames,
                              double duration_s, i64 sample_rate, i64 fps, i64 video_size) {
  const i64 L = i64(std::llround(duration_s * double(sample_rate)));
  const i64 T_v = i64(env_frames.size());
  require(T_v == i64(std::llround(duration_s * double(fps))),
          "synth: envelope frame count must match duration * fps");

  // draws happen in a fixed order: pitch parameters first, then video jitter
  rng g(seed ^ 0x5eedf00du);
  const double f0 = 110.0 + 110.0 * g.uniform();
  const double f_dev = 10.0 + 15.0 * g.uniform();
  const double f_rate = 2.0 * kPi * (0.5 + 1.5 * g.uniform());
  const double f_phase = 2.0 * kPi * g.uniform();

  av_sample s;
  s.seed = seed;
  s.speaker_id = i64(seed);
  s.audio.assign(size_t(L), 0.0);
  double phi = 0.0;
  double peak = 0.0;
  for (i64 i = 0; i < L; ++i) {
    const double t = double(i) / double(sample_rate);
    const double f = f0 + f_dev * std::sin(f_rate * t + f_phase);
    phi += 2.0 * kPi * f / double(sample_rate);
    double carrier = 0.0;
    for (int h = 1; h <= 5; ++h) carrier += std::sin(double(h) * phi) / double(h);
    // envelope linearly interpolated from frame rate to sample rate
    const double src = double(i) * double(T_v - 1) / double(std::max<i64>(1, L - 1));
    const i64 e0 = i64(src);
    const i64 e1 = std::min(e0 + 1, T_v - 1);
    const double w = src - double(e0);
    const double env = env_frames[size_t(e0)] * (1.0 - w) + env_frames[size_t(e1)] * w;
    s.audio[size_t(i)] = env * carrier;
    peak = std::max(peak, std::abs(s.audio[size_t(i)]));
  }
  if (peak > 0.0) {
    const double k = 0.7 / peak;
    for (double& v : s.audio) v *= k;
  }

  // lips: soft-edged ellipse whose opening height tracks the envelope
  const double cx = 0.5 * double(video_size - 1);
  const double cy = 0.55 * double(video_size - 1);
  const double mouth_w = 0.30 * double(video_size);
  const double jitter = 0.02 * g.uniform();  // per-speaker mouth placement
  s.video = tensor<double>({1, video_size, video_size, T_v});
  for (i64 t = 0; t < T_v; ++t) {
    const double open_h = (0.02 + 0.28 * env_frames[size_t(t)]) * double(video_size);
    for (i64 y = 0; y < video_size; ++y)
      for (i64 x = 0; x < video_size; ++x) {
        const double dx = (double(x) - cx) / mouth_w;
        const double dy = (double(y) - cy - jitter * double(video_size)) / open_h;
        const double q = dx * dx + dy * dy;
        s.video.data[size_t((y * video_size + x) * T_v + t)] = std::exp(-3.0 * q);
      }
  }
  return s;
}

av_sample synth_utterance(u64 seed, double duration_s, i64 sample_rate, i64 fps,
                          i64 video_size) {
  const double frame_s = 1.0 / double(fps);
  const double frames_exact = duration_s / frame_s;
  const i64 T_v = i64(std::llround(frames_exact));
  require(std::abs(frames_exact - double(T_v)) < 1e-9,
          "synth_utterance: duration must be a whole number of video frames");
  rng g(seed);
  return synth_from_envelope(seed, smooth_envelope(g, T_v), duration_s, sample_rate, fps,
                             video_size);
}

mix_result mix(const std::vector<av_sample>& samples, double noise_snr_db, u64 noise_seed) {
  require(!samples.empty(), "mix: need at least one source");
  const size_t L = samples[0].audio.size();
  for (const auto& s : samples)
    require(s.audio.size() == L, "mix: source lengths differ");

  mix_result out;
  out.mixture.assign(L, 0.0);
  out.targets.reserve(samples.size());
  for (const auto& s : samples) {
    for (size_t i = 0; i < L; ++i) out.mixture[i] += s.audio[i];
    out.targets.push_back(s.audio);
  }

  if (std::isfinite(noise_snr_db)) {
    double p_ref = 0.0;
    for (double v : samples[0].audio) p_ref += v * v;
    rng g(noise_seed ^ 0x90153u);
    std::vector<double> n(L);
    double p_n = 0.0;
    for (size_t i = 0; i < L; ++i) {
      n[i] = g.normal();
      p_n += n[i] * n[i];
    }
    if (p_n > 0.0 && p_ref > 0.0) {
      const double k = std::sqrt(p_ref / (p_n * std::pow(10.0, noise_snr_db / 10.0)));
      for (size_t i = 0; i < L; ++i) out.mixture[i] += k * n[i];
    }
  }

  double peak = 0.0;
  for (double v : out.mixture) peak = std::max(peak, std::abs(v));
  if (peak > 0.99) {
    const double k = 0.99 / peak;
    for (double& v : out.mixture) v *= k;
    for (auto& t : out.targets)
      for (double& v : t) v *= k;
  }
  return out;
}

double av_envelope_correlation(const av_sample& s, i64 sample_rate, i64 fps) {
  const i64 T_v = s.video.dim(3), S = s.video.dim(1);
  const i64 hop = sample_rate / fps;
  std::vector<double> a(size_t(T_v)), v(size_t(T_v));
  for (i64 t = 0; t < T_v; ++t) {
    double acc = 0.0;
    const i64 i0 = t * hop, i1 = std::min<i64>(i64(s.audio.size()), i0 + hop);
    for (i64 i = i0; i < i1; ++i) acc += s.audio[size_t(i)] * s.audio[size_t(i)];
    a[size_t(t)] = std::sqrt(acc / double(std::max<i64>(1, i1 - i0)));
    double m = 0.0;
    for (i64 p = 0; p < S * S; ++p) m += s.video.data[size_t(p * T_v + t)];
    v[size_t(t)] = m / double(S * S);
  }
  double ma = 0, mv = 0;
  for (i64 t = 0; t < T_v; ++t) ma += a[size_t(t)], mv += v[size_t(t)];
  ma /= double(T_v), mv /= double(T_v);
  double sav = 0, saa = 0, svv = 0;
  for (i64 t = 0; t < T_v; ++t) {
    sav += (a[size_t(t)] - ma) * (v[size_t(t)] - mv);
    saa += (a[size_t(t)] - ma) * (a[size_t(t)] - ma);
    svv += (v[size_t(t)] - mv) * (v[size_t(t)] - mv);
  }
  if (saa <= 0.0 || svv <= 0.0) return 0.0;
  return sav / std::sqrt(saa * svv);
}

// ---- manifests ------------------------------------------------------------------------

namespace {
// every mixture reserves a block of seeds: speakers first, noise last
constexpr u64 kSeedStride = 16;
}  // namespace

void dataset_spec::validate() const {
  require_cfg(n_train >= 0 && n_val >= 0 && n_test >= 0, "dataset sizes must be >= 0");
  require_cfg(speakers >= 1, "dataset needs at least one speaker");
  struct range {
    u64 a, b;
  };
  const range rs[3] = {{train_seed0, train_seed0 + u64(n_train) * kSeedStride},
                       {val_seed0, val_seed0 + u64(n_val) * kSeedStride},
                       {test_seed0, test_seed0 + u64(n_test) * kSeedStride}};
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j)
      require_cfg(rs[i].b <= rs[j].a || rs[j].b <= rs[i].a,
                  "dataset split seed ranges overlap");
}

std::vector<manifest_entry> manifest::split(const std::string& name) const {
  std::vector<manifest_entry> out;
  for (const auto& e : entries)
    if (e.split == name) out.push_back(e);
  return out;
}

manifest manifest::build(const dataset_spec& spec) {
  spec.validate();
  manifest m;
  m.spec = spec;
  auto emit = [&m](const char* split, u64 seed0, i64 n) {
    for (i64 k = 0; k < n; ++k)
      m.entries.push_back(manifest_entry{split, seed0 + u64(k) * kSeedStride});
  };
  emit("train", spec.train_seed0, spec.n_train);
  emit("val", spec.val_seed0, spec.n_val);
  emit("test", spec.test_seed0, spec.n_test);
  return m;
}

std::string manifest::serialize() const {
  std::ostringstream o;
  o << "avsep-manifest 1\n";
  o << "speakers " << spec.speakers << "\n";
  o << "duration_s " << spec.duration_s << "\n";
  o << "sample_rate " << spec.sample_rate << "\n";
  o << "fps " << spec.fps << "\n";
  o << "video_size " << spec.video_size << "\n";
  if (std::isfinite(spec.noise_snr_db)) o << "noise_snr_db " << spec.noise_snr_db << "\n";
  for (const auto& e : entries) o << e.split << " " << e.base_seed << "\n";
  return o.str();
}

manifest manifest::parse(const std::string& text, const std::string& origin) {
  manifest m;
  m.spec.n_train = m.spec.n_val = m.spec.n_test = 0;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (!header) {
      require(key == "avsep-manifest", origin + ": not a manifest file");
      header = true;
      continue;
    }
    if (key == "speakers") ls >> m.spec.speakers;
    else if (key == "duration_s") ls >> m.spec.duration_s;
    else if (key == "sample_rate") ls >> m.spec.sample_rate;
    else if (key == "fps") ls >> m.spec.fps;
    else if (key == "video_size") ls >> m.spec.video_size;
    else if (key == "noise_snr_db") ls >> m.spec.noise_snr_db;
    else if (key == "train" || key == "val" || key == "test") {
      u64 seed = 0;
      ls >> seed;
      require(bool(ls), origin + ": bad manifest row '" + line + "'");
      m.entries.push_back(manifest_entry{key, seed});
      if (key == "train") ++m.spec.n_train;
      else if (key == "val") ++m.spec.n_val;
      else ++m.spec.n_test;
    } else {
      throw input_error(origin + ": unknown manifest key '" + key + "'");
    }
  }
  require(header, origin + ": empty manifest");
  return m;
}

realized_mix realize(const dataset_spec& spec, u64 base_seed) {
  realized_mix out;
  out.sources.reserve(size_t(spec.speakers));
  for (i64 i = 0; i < spec.speakers; ++i)
    out.sources.push_back(synth_utterance(base_seed + u64(i), spec.duration_s, spec.sample_rate,
                                          spec.fps, spec.video_size));
  out.mixed = mix(out.sources, spec.noise_snr_db, base_seed + kSeedStride - 1);
  return out;
}

void write_dataset(const manifest& m, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::map<std::string, i64> counter;
  for (const auto& e : m.entries) {
    const realized_mix rm = realize(m.spec, e.base_seed);
    const std::string stem = dir + "/" + e.split + "_" + std::to_string(counter[e.split]++);
    write_wav(stem + "_mix.wav", rm.mixed.mixture, m.spec.sample_rate);
    for (size_t i = 0; i < rm.sources.size(); ++i) {
      write_wav(stem + "_s" + std::to_string(i) + ".wav", rm.mixed.targets[i],
                m.spec.sample_rate);
      dlph_write(stem + "_v" + std::to_string(i) + ".dlph",
                 {dlph_entry::from("video", rm.sources[i].video.template cast<float>())});
    }
  }
  write_text_file(dir + "/manifest.txt", m.serialize());
}

}  // namespace avsep
