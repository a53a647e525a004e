#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include "avsep/common.hpp"

namespace avsep {

// Where the fused audio-visual feature enters the separator: position 0 is the
// separator input; positions 1..3 add a pooled copy at that encoder level.
enum class fusion_pos : int { f0 = 0, f1 = 1, f2 = 2, f3 = 3 };

struct model_config {
  // audio front end
  i64 sample_rate = 16000;
  i64 n_a = 256;          // audio feature channels
  i64 audio_kernel = 16;
  i64 audio_stride = 4;

  // separator
  i64 q_levels = 4;       // downsampling levels Q
  i64 heads = 8;
  i64 head_dim = 128;
  i64 d_ffn = 0;          // 0 -> defaults to 2*n_a
  i64 enc_gla = 2;        // GLA blocks per encoder level
  i64 dec_gla = 3;        // GLA blocks per decoder layer
  bool disable_ga = false;   // ablation: GA -> depthwise conv
  bool disable_la = false;   // ablation: LA -> depthwise conv
  bool hda_conv1d = false;   // ablation: HDA layer -> depthwise conv k=31
  bool mask_mode = false;    // ablation: masking head instead of direct mapping
  i64 iterations = 1;        // separator passes (comparison harness)

  // fusion
  fusion_pos fusion_position = fusion_pos::f0;
  i64 avf_k = 4;          // sub-feature count K
  i64 d_fuse = 128;       // visual token projection width
  i64 fusion_hidden = 64; // U-style fusion net hidden width
  i64 fusion_depth = 4;

  // video codec
  i64 video_fps = 25;
  i64 video_size = 88;               // square frames
  std::vector<i64> video_channels = {4, 8, 16, 32};  // stage widths, first is stem
  i64 codebook_size = 256;
  i64 embed_dim = 64;                // codebook entry dim d_e
  double vq_temperature = 0.1;
  i64 teacher_dim = 32;
  bool semantic_only = false;        // drop the reconstruction path

  // training
  double lr = 1e-3;
  i64 batch_size = 4;
  double grad_clip = 5.0;
  i64 plateau_epochs = 15;
  i64 early_stop_epochs = 30;

  i64 ffn_width() const { return d_ffn > 0 ? d_ffn : 2 * n_a; }
  i64 attn_inner() const { return heads * head_dim; }
  i64 video_stages() const { return i64(video_channels.size()) - 1; }
  i64 audio_pad() const { return (audio_kernel - audio_stride) / 2; }
  // encoder output width: channels at the last stage over the final spatial grid
  i64 d_v() const {
    const i64 g = video_size >> video_stages();
    return video_channels.back() * g * g;
  }

  void validate() const {
    require_cfg(n_a > 0 && q_levels >= 0 && heads > 0 && head_dim > 0, "bad core dims");
    require_cfg(ffn_width() >= n_a, "ffn width must be >= channel width");
    require_cfg(enc_gla >= 1 && dec_gla >= 1, "GLA allocation must be >= 1 per layer");
    require_cfg(avf_k >= 1, "K must be >= 1");
    require_cfg(video_channels.size() >= 2, "video codec needs a stem plus >= 1 stage");
    require_cfg((video_size % (i64(1) << video_stages())) == 0,
                "frame size must be divisible by 2^stages");
    require_cfg(iterations >= 1, "iterations must be >= 1");
    require_cfg(int(fusion_position) <= q_levels, "fusion position deeper than encoder");
  }

  static model_config full() { return model_config{}; }

  static model_config toy() {
    model_config c;
    c.n_a = 32;
    c.q_levels = 3;
    c.heads = 2;
    c.head_dim = 16;
    c.avf_k = 2;
    c.d_fuse = 16;
    c.fusion_hidden = 16;
    c.video_size = 16;
    c.video_channels = {4, 8, 32};
    return c;
  }

  // Small enough for finite-difference checks of the whole model.
  static model_config micro() {
    model_config c = toy();
    c.n_a = 8;
    c.q_levels = 2;
    c.heads = 2;
    c.head_dim = 4;
    c.avf_k = 2;
    c.d_fuse = 8;
    c.fusion_hidden = 8;
    c.fusion_depth = 2;
    c.video_size = 8;
    c.video_channels = {2, 4};
    c.codebook_size = 16;
    c.embed_dim = 8;
    c.teacher_dim = 4;
    return c;
  }
};

// Flat key=value run configuration. Unknown keys are rejected so typos cannot
// silently fall back to defaults.
struct run_config {
  model_config model;
  std::string preset = "full";
  u64 seed = 1;
  double duration_s = 2.0;
  i64 speakers = 2;
  i64 n_train = 64, n_val = 16, n_test = 16;
  double noise_snr_db = std::numeric_limits<double>::infinity();  // inf -> no noise
  std::string data_dir, out_dir, weights_path;
  i64 steps = 400;

  static run_config parse_file(const std::string& path);
  static run_config parse_text(const std::string& text, const std::string& origin);
};

}  // namespace avsep
