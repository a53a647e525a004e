#include "avsep/config.hpp"

#include <fstream>
#include <sstream>

namespace avsep {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw config_error("bad boolean for key '" + key + "': " + v);
}

i64 parse_int(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    i64 r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return r;
  } catch (const std::exception&) {
    throw config_error("bad integer for key '" + key + "': " + v);
  }
}

double parse_real(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return r;
  } catch (const std::exception&) {
    throw config_error("bad real for key '" + key + "': " + v);
  }
}

std::vector<i64> parse_int_list(const std::string& v, const std::string& key) {
  std::vector<i64> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(trim(item), key));
  if (out.empty()) throw config_error("empty list for key '" + key + "'");
  return out;
}

}  // namespace

run_config run_config::parse_text(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error(origin + ":" + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw config_error(origin + ":" + std::to_string(line_no) + ": empty key or value");
    if (kv.count(key))
      throw config_error(origin + ": duplicate key '" + key + "'");
    kv[key] = val;
  }

  run_config rc;
  auto preset_it = kv.find("preset");
  if (preset_it != kv.end()) {
    rc.preset = preset_it->second;
    if (rc.preset == "full")
      rc.model = model_config::full();
    else if (rc.preset == "toy")
      rc.model = model_config::toy();
    else if (rc.preset == "micro")
      rc.model = model_config::micro();
    else
      throw config_error("unknown preset '" + rc.preset + "' (full|toy|micro)");
    kv.erase(preset_it);
  }

  model_config& m = rc.model;
  for (auto& [key, val] : kv) {
    if (key == "seed") rc.seed = u64(parse_int(val, key));
    else if (key == "duration_s") rc.duration_s = parse_real(val, key);
    else if (key == "speakers") rc.speakers = parse_int(val, key);
    else if (key == "data_dir") rc.data_dir = val;
    else if (key == "out_dir") rc.out_dir = val;
    else if (key == "weights") rc.weights_path = val;
    else if (key == "steps") rc.steps = parse_int(val, key);
    else if (key == "n_train") rc.n_train = parse_int(val, key);
    else if (key == "n_val") rc.n_val = parse_int(val, key);
    else if (key == "n_test") rc.n_test = parse_int(val, key);
    else if (key == "noise_snr_db") {
      rc.noise_snr_db = (val == "inf" || val == "none")
                            ? std::numeric_limits<double>::infinity()
                            : parse_real(val, key);
    }
    else if (key == "sample_rate") m.sample_rate = parse_int(val, key);
    else if (key == "n_a") m.n_a = parse_int(val, key);
    else if (key == "audio_kernel") m.audio_kernel = parse_int(val, key);
    else if (key == "audio_stride") m.audio_stride = parse_int(val, key);
    else if (key == "q_levels") m.q_levels = parse_int(val, key);
    else if (key == "heads") m.heads = parse_int(val, key);
    else if (key == "head_dim") m.head_dim = parse_int(val, key);
    else if (key == "d_ffn") m.d_ffn = parse_int(val, key);
    else if (key == "enc_gla") m.enc_gla = parse_int(val, key);
    else if (key == "dec_gla") m.dec_gla = parse_int(val, key);
    else if (key == "disable_ga") m.disable_ga = parse_bool(val, key);
    else if (key == "disable_la") m.disable_la = parse_bool(val, key);
    else if (key == "hda_conv1d") m.hda_conv1d = parse_bool(val, key);
    else if (key == "mask_mode") m.mask_mode = parse_bool(val, key);
    else if (key == "iterations") m.iterations = parse_int(val, key);
    else if (key == "fusion_position") {
      i64 p = parse_int(val, key);
      require_cfg(p >= 0 && p <= 3, "fusion_position must be 0..3");
      m.fusion_position = fusion_pos(int(p));
    }
    else if (key == "avf_k") m.avf_k = parse_int(val, key);
    else if (key == "d_fuse") m.d_fuse = parse_int(val, key);
    else if (key == "fusion_hidden") m.fusion_hidden = parse_int(val, key);
    else if (key == "fusion_depth") m.fusion_depth = parse_int(val, key);
    else if (key == "video_fps") m.video_fps = parse_int(val, key);
    else if (key == "video_size") m.video_size = parse_int(val, key);
    else if (key == "video_channels") m.video_channels = parse_int_list(val, key);
    else if (key == "codebook_size") m.codebook_size = parse_int(val, key);
    else if (key == "embed_dim") m.embed_dim = parse_int(val, key);
    else if (key == "vq_temperature") m.vq_temperature = parse_real(val, key);
    else if (key == "teacher_dim") m.teacher_dim = parse_int(val, key);
    else if (key == "semantic_only") m.semantic_only = parse_bool(val, key);
    else if (key == "lr") m.lr = parse_real(val, key);
    else if (key == "batch_size") m.batch_size = parse_int(val, key);
    else if (key == "grad_clip") m.grad_clip = parse_real(val, key);
    else if (key == "plateau_epochs") m.plateau_epochs = parse_int(val, key);
    else if (key == "early_stop_epochs") m.early_stop_epochs = parse_int(val, key);
    else throw config_error(origin + ": unknown key '" + key + "'");
  }
  m.validate();
  return rc;
}

run_config run_config::parse_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open config file: " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_text(buf.str(), path);
}

}  // namespace avsep
