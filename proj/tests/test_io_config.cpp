#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "avsep/config.hpp"
#include "avsep/io.hpp"
#include "avsep/tensor.hpp"
#include "doctest.h"

using namespace avsep;

namespace {

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
  std::string file(const char* leaf) const { return (p / leaf).string(); }
};

template <typename T>
void put_le(std::string& s, T v) {
  s.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

// minimal PCM-16 RIFF writer for crafting inputs the library itself never produces
std::string pcm16_wav(const std::vector<int16_t>& interleaved, u16 channels, u32 rate,
                      u16 format = 1, u16 bits = 16) {
  std::string s;
  const u32 data_bytes = u32(interleaved.size() * 2);
  s.append("RIFF");
  put_le<u32>(s, 36 + data_bytes);
  s.append("WAVE");
  s.append("fmt ");
  put_le<u32>(s, 16);
  put_le<u16>(s, format);
  put_le<u16>(s, channels);
  put_le<u32>(s, rate);
  put_le<u32>(s, rate * channels * 2);
  put_le<u16>(s, u16(channels * 2));
  put_le<u16>(s, bits);
  s.append("data");
  put_le<u32>(s, data_bytes);
  for (int16_t v : interleaved) put_le<int16_t>(s, v);
  return s;
}

bool msg_contains(const std::exception& e, const std::string& needle) {
  return std::string(e.what()).find(needle) != std::string::npos;
}

}  // namespace

TEST_SUITE("io_config") {

TEST_CASE("float wav round trip is exact for float-representable samples") {
  tmp_dir dir("avsep_io_wav1");
  std::vector<double> s(300);
  for (size_t i = 0; i < s.size(); ++i) s[i] = double(i64(i) - 150) / 1024.0;
  const std::string f = dir.file("a.wav");
  write_wav(f, s, 16000);

  wav_data w = read_wav(f);  // default target is the file's own rate here
  CHECK(w.sample_rate == 16000);
  REQUIRE(w.samples.size() == s.size());
  for (size_t i = 0; i < s.size(); ++i) CHECK(w.samples[i] == s[i]);
  CHECK(!std::filesystem::exists(f + ".tmp"));
}

TEST_CASE("float wav round trip stays within float precision for arbitrary samples") {
  tmp_dir dir("avsep_io_wav2");
  rng g(31);
  std::vector<double> s(500);
  for (auto& v : s) v = g.uniform() * 1.8 - 0.9;
  const std::string f = dir.file("b.wav");
  write_wav(f, s, 8000);
  wav_data w = read_wav(f, 0);
  CHECK(w.sample_rate == 8000);
  REQUIRE(w.samples.size() == s.size());
  double worst = 0.0;
  for (size_t i = 0; i < s.size(); ++i) worst = std::max(worst, std::abs(w.samples[i] - s[i]));
  CHECK(worst < 1e-6);
}

TEST_CASE("pcm16 samples decode against the 32768 full scale") {
  tmp_dir dir("avsep_io_wav3");
  const std::string f = dir.file("pcm.wav");
  write_text_file(f, pcm16_wav({0, 16384, -16384, 32767, -32768}, 1, 16000));
  wav_data w = read_wav(f, 0);
  CHECK(w.sample_rate == 16000);
  REQUIRE(w.samples.size() == 5);
  CHECK(w.samples[0] == 0.0);
  CHECK(w.samples[1] == 0.5);
  CHECK(w.samples[2] == -0.5);
  CHECK(w.samples[3] == 32767.0 / 32768.0);
  CHECK(w.samples[4] == -1.0);
}

TEST_CASE("stereo input is mean-downmixed to mono") {
  tmp_dir dir("avsep_io_wav4");
  const std::string f = dir.file("st.wav");
  // frames: (1000,3000), (-2000,2000), (32767,32767)
  write_text_file(f, pcm16_wav({1000, 3000, -2000, 2000, 32767, 32767}, 2, 16000));
  wav_data w = read_wav(f, 0);
  REQUIRE(w.samples.size() == 3);
  CHECK(w.samples[0] == 2000.0 / 32768.0);
  CHECK(w.samples[1] == 0.0);
  CHECK(w.samples[2] == 32767.0 / 32768.0);
}

TEST_CASE("unknown riff chunks are skipped with odd-size padding") {
  tmp_dir dir("avsep_io_wav5");
  std::string body = pcm16_wav({100, 200}, 1, 16000);
  // splice a 3-byte chunk (padded to 4) between the fmt and data chunks
  const size_t data_at = body.find("data");
  std::string junk;
  junk.append("junk");
  put_le<u32>(junk, 3);
  junk.append("abc");
  junk.push_back('\0');
  body.insert(data_at, junk);
  const std::string f = dir.file("junk.wav");
  write_text_file(f, body);
  wav_data w = read_wav(f, 0);
  REQUIRE(w.samples.size() == 2);
  CHECK(w.samples[0] == 100.0 / 32768.0);
}

TEST_CASE("resampling preserves a linear ramp and scales the length") {
  tmp_dir dir("avsep_io_wav6");
  std::vector<double> ramp(800);
  for (size_t i = 0; i < ramp.size(); ++i) ramp[i] = double(i) / 799.0;
  const std::string f = dir.file("ramp.wav");
  write_wav(f, ramp, 8000);

  wav_data up = read_wav(f, 16000);
  CHECK(up.sample_rate == 16000);
  REQUIRE(up.samples.size() == 1600);
  double worst = 0.0;
  for (size_t j = 0; j < up.samples.size(); ++j)
    worst = std::max(worst, std::abs(up.samples[j] - double(j) / 1599.0));
  CHECK(worst < 1e-6);
  CHECK(std::abs(up.samples.front()) < 1e-6);
  CHECK(std::abs(up.samples.back() - 1.0) < 1e-6);

  wav_data down = read_wav(f, 4000);
  CHECK(down.sample_rate == 4000);
  CHECK(down.samples.size() == 400);
}

TEST_CASE("target rate zero keeps the file's rate") {
  tmp_dir dir("avsep_io_wav7");
  std::vector<double> s(441, 0.125);
  const std::string f = dir.file("odd.wav");
  write_wav(f, s, 22050);

  wav_data keep = read_wav(f, 0);
  CHECK(keep.sample_rate == 22050);
  CHECK(keep.samples.size() == 441);

  wav_data res = read_wav(f);  // default 16 kHz target
  CHECK(res.sample_rate == 16000);
  CHECK(res.samples.size() == 320);  // 441*16000/22050
}

TEST_CASE("malformed wav inputs are rejected") {
  tmp_dir dir("avsep_io_wav8");
  auto write_and_read = [&](const char* leaf, const std::string& bytes) {
    const std::string f = dir.file(leaf);
    write_text_file(f, bytes);
    return f;
  };

  CHECK_THROWS_AS(read_wav(write_and_read("t1.wav", "RIF"), 0), io_error);
  CHECK_THROWS_AS(read_wav(write_and_read("t2.wav", "RIFXxxxxWAVE"), 0), io_error);

  std::string not_wave = "RIFF";
  put_le<u32>(not_wave, 4);
  not_wave.append("AVI ");
  CHECK_THROWS_AS(read_wav(write_and_read("t3.wav", not_wave), 0), io_error);

  // PCM-8 is not supported
  CHECK_THROWS_AS(read_wav(write_and_read("t4.wav", pcm16_wav({1, 2}, 1, 16000, 1, 8)), 0),
                  io_error);

  // data chunk ahead of fmt
  std::string body = pcm16_wav({5, 6}, 1, 16000);
  const size_t fmt_at = body.find("fmt ");
  const size_t data_at = body.find("data");
  std::string reordered = body.substr(0, fmt_at) + body.substr(data_at) +
                          body.substr(fmt_at, data_at - fmt_at);
  CHECK_THROWS_AS(read_wav(write_and_read("t5.wav", reordered), 0), io_error);

  // fmt but no data chunk at all
  CHECK_THROWS_AS(read_wav(write_and_read("t6.wav", body.substr(0, data_at)), 0), io_error);

  CHECK_THROWS_AS(read_wav(dir.file("missing.wav"), 0), io_error);
  std::vector<double> s(4, 0.0);
  CHECK_THROWS_AS(write_wav(dir.file("bad.wav"), s, 0), input_error);
}

TEST_CASE("dlph container round trips all three dtypes bit-exactly") {
  tmp_dir dir("avsep_io_dlph1");
  rng g(77);
  tensor<double> td = random_tensor<double>(g, {3, 4});
  tensor<float> tf = random_tensor<float>(g, {2, 5});
  std::vector<i64> vi = {1, -2, 3000000000};

  const std::string f = dir.file("pack.dlph");
  dlph_write(f, {dlph_entry::from("big", td), dlph_entry::from("small", tf),
                 dlph_entry::from_i64("ids", vi)});
  CHECK(!std::filesystem::exists(f + ".tmp"));

  auto es = dlph_read(f);
  REQUIRE(es.size() == 3);
  CHECK(es[0].name == "big");
  CHECK(es[0].dtype == 1);
  CHECK(es[0].dims == std::vector<i64>{3, 4});
  CHECK(es[1].name == "small");
  CHECK(es[1].dtype == 0);
  CHECK(es[2].name == "ids");
  CHECK(es[2].dtype == 2);
  CHECK(es[2].numel() == 3);

  tensor<double> rd = es[0].as_f64();
  REQUIRE(rd.numel() == td.numel());
  for (i64 i = 0; i < td.numel(); ++i) CHECK(rd.data[size_t(i)] == td.data[size_t(i)]);
  tensor<float> rf = es[1].as_f32();
  for (i64 i = 0; i < tf.numel(); ++i) CHECK(rf.data[size_t(i)] == tf.data[size_t(i)]);
  CHECK(es[2].as_i64() == vi);

  // typed accessors refuse the wrong dtype; the generic one converts through double
  CHECK_THROWS_AS(es[0].as_f32(), input_error);
  CHECK_THROWS_AS(es[1].as_f64(), input_error);
  CHECK_THROWS_AS(es[2].as_f64(), input_error);
  CHECK_THROWS_AS(es[2].as<double>(), input_error);
  tensor<float> narrowed = es[0].as<float>();
  for (i64 i = 0; i < td.numel(); ++i)
    CHECK(narrowed.data[size_t(i)] == float(td.data[size_t(i)]));
  tensor<double> widened = es[1].as<double>();
  for (i64 i = 0; i < tf.numel(); ++i)
    CHECK(widened.data[size_t(i)] == double(tf.data[size_t(i)]));
}

TEST_CASE("corrupt dlph files are rejected") {
  tmp_dir dir("avsep_io_dlph2");
  tensor<double> t({2, 2});
  t.fill(1.5);
  const std::string good_path = dir.file("ok.dlph");
  dlph_write(good_path, {dlph_entry::from("w", t)});
  const std::string good = read_text_file(good_path);

  auto corrupt = [&](const char* leaf, std::string bytes) {
    const std::string f = dir.file(leaf);
    write_text_file(f, bytes);
    return f;
  };

  std::string magic = good;
  magic[0] = 'X';
  CHECK_THROWS_AS(dlph_read(corrupt("m.dlph", magic)), io_error);

  std::string ver = good;
  ver[4] = 9;
  CHECK_THROWS_AS(dlph_read(corrupt("v.dlph", ver)), io_error);

  // layout: 12-byte header, u16 name_len, "w", then the dtype byte
  std::string dt = good;
  dt[15] = 3;
  CHECK_THROWS_AS(dlph_read(corrupt("d.dlph", dt)), io_error);

  std::string dim = good;
  for (int i = 0; i < 8; ++i) dim[17 + i] = 0;  // first u64 dim -> 0
  CHECK_THROWS_AS(dlph_read(corrupt("z.dlph", dim)), io_error);

  CHECK_THROWS_AS(dlph_read(corrupt("t.dlph", good.substr(0, good.size() - 1))), io_error);
  CHECK_THROWS_AS(dlph_read(corrupt("x.dlph", good + '\0')), io_error);
  CHECK_THROWS_AS(dlph_read(dir.file("absent.dlph")), io_error);

  dlph_entry bad;
  bad.name = "x";
  bad.dtype = 0;
  bad.dims = {2};
  bad.payload.resize(4);  // f32 x2 needs 8 bytes
  CHECK_THROWS_AS(dlph_write(dir.file("short.dlph"), {bad}), input_error);
}

TEST_CASE("writes into a missing directory fail without leaving temp files") {
  tmp_dir dir("avsep_io_atomic");
  const std::string f = dir.file("no_such_subdir/out.bin");
  CHECK_THROWS_AS(write_text_file(f, "abc"), io_error);
  CHECK(!std::filesystem::exists(f));
  CHECK(!std::filesystem::exists(f + ".tmp"));
}

namespace {
template <typename R>
param_store<R> demo_store(u64 seed) {
  param_store<R> ps(seed);
  ps.uniform("enc.w", {3, 2}, 0.5);
  ps.zeros("enc.b", {3});
  ps.full("gate", {2, 2}, 0.25);
  ps.normal("head.w", {4}, 1.0);
  return ps;
}
}  // namespace

TEST_CASE("weights round trip restores every parameter bit-exactly") {
  tmp_dir dir("avsep_io_w1");
  param_store<double> a = demo_store<double>(5);
  const std::string f = dir.file("w.dlph");
  save_weights(a, f);

  param_store<double> b = demo_store<double>(999);
  bool all_equal_before = true;
  for (size_t i = 0; i < a.items.size(); ++i)
    if (a.items[i].second->value.data != b.items[i].second->value.data) all_equal_before = false;
  CHECK(!all_equal_before);

  load_weights(b, f);
  for (size_t i = 0; i < a.items.size(); ++i) {
    CHECK(b.items[i].first == a.items[i].first);
    CHECK(b.items[i].second->value.data == a.items[i].second->value.data);
  }
}

TEST_CASE("weights cross precision through double") {
  tmp_dir dir("avsep_io_w2");
  param_store<double> a = demo_store<double>(5);
  const std::string f64_file = dir.file("w64.dlph");
  save_weights(a, f64_file);

  param_store<float> c = demo_store<float>(1);
  load_weights(c, f64_file);
  for (size_t i = 0; i < a.items.size(); ++i) {
    const auto& want = a.items[i].second->value.data;
    const auto& got = c.items[i].second->value.data;
    REQUIRE(got.size() == want.size());
    for (size_t j = 0; j < want.size(); ++j) CHECK(got[j] == float(want[j]));
  }

  const std::string f32_file = dir.file("w32.dlph");
  save_weights(c, f32_file);
  param_store<double> d = demo_store<double>(2);
  load_weights(d, f32_file);
  for (size_t i = 0; i < d.items.size(); ++i) {
    const auto& got = d.items[i].second->value.data;
    const auto& via = c.items[i].second->value.data;
    for (size_t j = 0; j < got.size(); ++j) CHECK(got[j] == double(via[j]));
  }
}

TEST_CASE("weight loading is strict about names, counts, and shapes") {
  tmp_dir dir("avsep_io_w3");
  param_store<double> a = demo_store<double>(5);
  const std::string f = dir.file("w.dlph");
  save_weights(a, f);

  // an extra tensor the model does not own
  auto es = dlph_read(f);
  tensor<double> spare({1});
  es.push_back(dlph_entry::from("rogue", spare));
  const std::string extra = dir.file("extra.dlph");
  dlph_write(extra, es);
  param_store<double> b1 = demo_store<double>(1);
  try {
    load_weights(b1, extra);
    FAIL("expected a load failure");
  } catch (const input_error& e) {
    CHECK(msg_contains(e, "rogue"));
  }

  // one entry missing: every name is known but the count differs
  es.pop_back();
  es.pop_back();
  const std::string fewer = dir.file("fewer.dlph");
  dlph_write(fewer, es);
  param_store<double> b2 = demo_store<double>(1);
  CHECK_THROWS_AS(load_weights(b2, fewer), input_error);

  // same names, one shape transposed
  param_store<double> b3(1);
  b3.uniform("enc.w", {2, 3}, 0.5);
  b3.zeros("enc.b", {3});
  b3.full("gate", {2, 2}, 0.25);
  b3.normal("head.w", {4}, 1.0);
  try {
    load_weights(b3, f);
    FAIL("expected a shape failure");
  } catch (const input_error& e) {
    CHECK(msg_contains(e, "enc.w"));
  }
}

TEST_CASE("config text parses presets, overrides, and comments") {
  run_config base = run_config::parse_text("", "mem");
  CHECK(base.preset == "full");
  CHECK(base.seed == 1);
  CHECK(base.duration_s == 2.0);
  CHECK(base.speakers == 2);
  CHECK(base.n_train == 64);
  CHECK(base.steps == 400);
  CHECK(std::isinf(base.noise_snr_db));
  CHECK(base.model.n_a == 256);

  run_config toy = run_config::parse_text("preset = toy", "mem");
  CHECK(toy.preset == "toy");
  CHECK(toy.model.n_a == 32);
  CHECK(toy.model.q_levels == 3);
  CHECK(toy.model.video_size == 16);

  run_config micro = run_config::parse_text("preset = micro", "mem");
  CHECK(micro.model.n_a == 8);
  CHECK(micro.model.codebook_size == 16);
  CHECK(micro.model.video_channels == std::vector<i64>{2, 4});

  const std::string text =
      "# run setup\n"
      "preset = micro\n"
      "\n"
      "seed = 9          # inline comment\n"
      "\tn_a = 12\n"
      "mask_mode = yes\n"
      "disable_ga = 0\n"
      "noise_snr_db = 10.5\n"
      "video_channels = 2, 4, 8\n"
      "video_size = 16\n"
      "fusion_position = 2\n";
  run_config rc = run_config::parse_text(text, "mem");
  CHECK(rc.seed == 9);
  CHECK(rc.model.n_a == 12);
  CHECK(rc.model.mask_mode);
  CHECK(!rc.model.disable_ga);
  CHECK(rc.noise_snr_db == 10.5);
  CHECK(rc.model.video_channels == std::vector<i64>{2, 4, 8});
  CHECK(rc.model.fusion_position == fusion_pos::f2);
  CHECK(rc.model.heads == 2);  // untouched micro value survives

  run_config quiet = run_config::parse_text("noise_snr_db = none", "mem");
  CHECK(std::isinf(quiet.noise_snr_db));
  run_config inf2 = run_config::parse_text("noise_snr_db = inf", "mem");
  CHECK(std::isinf(inf2.noise_snr_db));
}

TEST_CASE("config rejects malformed and inconsistent input") {
  auto parse = [](const std::string& t) { return run_config::parse_text(t, "mem"); };
  CHECK_THROWS_AS(parse("preset = giant"), config_error);
  CHECK_THROWS_AS(parse("seed = 1\nseed = 2"), config_error);
  CHECK_THROWS_AS(parse("wheels = 4"), config_error);
  CHECK_THROWS_AS(parse("just a line"), config_error);
  CHECK_THROWS_AS(parse("seed ="), config_error);
  CHECK_THROWS_AS(parse("= 3"), config_error);
  CHECK_THROWS_AS(parse("steps = abc"), config_error);
  CHECK_THROWS_AS(parse("steps = 12x"), config_error);
  CHECK_THROWS_AS(parse("mask_mode = maybe"), config_error);
  CHECK_THROWS_AS(parse("lr = fast"), config_error);
  CHECK_THROWS_AS(parse("fusion_position = 4"), config_error);
  CHECK_THROWS_AS(parse("fusion_position = -1"), config_error);
  // survives parsing but fails model validation
  CHECK_THROWS_AS(parse("preset = micro\nd_ffn = 4"), config_error);
  CHECK_THROWS_AS(parse("preset = micro\nenc_gla = 0"), config_error);
  CHECK_THROWS_AS(parse("preset = toy\nvideo_size = 10"), config_error);
}

TEST_CASE("config files parse like inline text") {
  tmp_dir dir("avsep_io_cfg");
  const std::string f = dir.file("run.cfg");
  write_text_file(f, "preset = toy\nseed = 123\n");
  run_config rc = run_config::parse_file(f);
  CHECK(rc.seed == 123);
  CHECK(rc.model.n_a == 32);
  CHECK_THROWS_AS(run_config::parse_file(dir.file("missing.cfg")), io_error);
}

}  // TEST_SUITE
