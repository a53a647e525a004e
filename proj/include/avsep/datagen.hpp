#pragma once

#include "avsep/config.hpp"
#include "avsep/tensor.hpp"

// Synthetic audio-visual corpus: harmonic utterances whose amplitude envelope
// also drives a rendered lip aperture, so the visual stream genuinely
// disambiguates speakers in a mixture. Everything is deterministic per seed.

namespace avsep {

struct av_sample {
  std::vector<double> audio;  // [-1, 1], length duration * rate
  tensor<double> video;       // [1 x S x S x T_v] grayscale in [0, 1]
  i64 speaker_id = 0;
  u64 seed = 0;
};

// Per-frame modulation envelope in [0, 1]; smooth by construction.
std::vector<double> smooth_envelope(rng& g, i64 n_frames);

av_sample synth_from_envelope(u64 seed, const std::vector<double>& env_frames, double duration_s,
                              i64 sample_rate, i64 fps, i64 video_size);
av_sample synth_utterance(u64 seed, double duration_s, i64 sample_rate = 16000, i64 fps = 25,
                          i64 video_size = 88);

struct mix_result {
  std::vector<double> mixture;
  std::vector<std::vector<double>> targets;  // post-normalization scale applied
};

// A = sum of sources + noise; noise power is set against the first source.
// Peak-normalized so |A| <= 0.99 with the same scale applied to every target.
mix_result mix(const std::vector<av_sample>& samples,
               double noise_snr_db = std::numeric_limits<double>::infinity(),
               u64 noise_seed = 0);

// mean per-frame RMS of the audio against the mean lip-opening trace
double av_envelope_correlation(const av_sample& s, i64 sample_rate, i64 fps);

// ---- dataset manifests -----------------------------------------------------------------

struct dataset_spec {
  i64 n_train = 64, n_val = 16, n_test = 16;
  i64 speakers = 2;
  double duration_s = 2.0;
  double noise_snr_db = std::numeric_limits<double>::infinity();
  i64 sample_rate = 16000, fps = 25, video_size = 16;
  u64 train_seed0 = 1000, val_seed0 = 100000, test_seed0 = 200000;

  void validate() const;  // rejects overlapping seed ranges
};

struct manifest_entry {
  std::string split;  // train | val | test
  u64 base_seed = 0;
};

struct manifest {
  dataset_spec spec;
  std::vector<manifest_entry> entries;

  std::vector<manifest_entry> split(const std::string& name) const;
  std::string serialize() const;
  static manifest parse(const std::string& text, const std::string& origin);
  static manifest build(const dataset_spec& spec);
};

struct realized_mix {
  mix_result mixed;
  std::vector<av_sample> sources;
};

// Regenerates one manifest row; bit-identical across calls.
realized_mix realize(const dataset_spec& spec, u64 base_seed);

// Writes WAVs, video tensors, and manifest.txt under dir.
void write_dataset(const manifest& m, const std::string& dir);

}  // namespace avsep
