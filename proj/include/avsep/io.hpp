#pragma once

#include <string>

#include "avsep/param_store.hpp"
#include "avsep/tensor.hpp"

// WAV audio and the DLPH tensor container. All multi-byte fields are
// little-endian; writes go to a temp file and are renamed into place.

namespace avsep {

// ---- WAV ------------------------------------------------------------------------

struct wav_data {
  std::vector<double> samples;  // mono, [-1, 1]
  i64 sample_rate = 0;
};

// PCM-16 or 32-bit float; stereo is mean-downmixed and non-target rates are
// linearly resampled, both with a warning on stderr. target_rate 0 keeps the
// file's rate.
wav_data read_wav(const std::string& path, i64 target_rate = 16000);
void write_wav(const std::string& path, const std::vector<double>& samples, i64 sample_rate);

// ---- DLPH container ------------------------------------------------------------------

struct dlph_entry {
  std::string name;
  u8 dtype = 0;  // 0=f32, 1=f64, 2=i64
  std::vector<i64> dims;
  std::vector<char> payload;  // raw little-endian data

  i64 numel() const {
    i64 n = 1;
    for (i64 d : dims) n *= d;
    return n;
  }
  i64 elem_size() const { return dtype == 0 ? 4 : 8; }

  tensor<float> as_f32() const;
  tensor<double> as_f64() const;
  std::vector<i64> as_i64() const;
  // any numeric entry widened/narrowed through double
  template <typename R>
  tensor<R> as() const;

  static dlph_entry from(const std::string& name, const tensor<float>& t);
  static dlph_entry from(const std::string& name, const tensor<double>& t);
  static dlph_entry from_i64(const std::string& name, const std::vector<i64>& v);
};

std::vector<dlph_entry> dlph_read(const std::string& path);
void dlph_write(const std::string& path, const std::vector<dlph_entry>& entries);

// ---- weights -------------------------------------------------------------------------

// Strict round trip: the file must contain exactly the store's parameter
// names; entries load through double so either precision file fits either
// store (same-precision loads are bit-exact).
template <typename R>
void save_weights(const param_store<R>& ps, const std::string& path) {
  std::vector<dlph_entry> es;
  es.reserve(ps.items.size());
  for (const auto& [name, v] : ps.items) es.push_back(dlph_entry::from(name, v->value));
  dlph_write(path, es);
}

template <typename R>
void load_weights(param_store<R>& ps, const std::string& path) {
  const std::vector<dlph_entry> es = dlph_read(path);
  for (const auto& e : es)
    require(ps.has(e.name), "weights file has unexpected tensor '" + e.name + "'");
  require(es.size() == ps.items.size(),
          "weights file entry count mismatch: file " + std::to_string(es.size()) + ", model " +
              std::to_string(ps.items.size()));
  for (const auto& e : es) {
    var<R> v = ps.get(e.name);
    tensor<R> t = e.template as<R>();
    require(t.same_shape(v->value), "shape mismatch for tensor '" + e.name + "'");
    v->value = std::move(t);
  }
}

// text helpers shared by the CLI and datagen
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace avsep
