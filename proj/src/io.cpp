#include "avsep/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

namespace avsep {

namespace {

void atomic_replace(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open for writing: " + tmp);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw io_error("short write: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw io_error("cannot rename " + tmp + " -> " + path);
}

struct byte_reader {
  const std::string& buf;
  size_t pos = 0;
  const std::string& origin;

  void raw(void* dst, size_t n) {
    if (pos + n > buf.size()) throw io_error("truncated file: " + origin);
    std::memcpy(dst, buf.data() + pos, n);
    pos += n;
  }
  template <typename T>
  T get() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  void skip(size_t n) {
    if (pos + n > buf.size()) throw io_error("truncated file: " + origin);
    pos += n;
  }
};

template <typename T>
void put(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open: " + path);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

void write_text_file(const std::string& path, const std::string& content) {
  atomic_replace(path, content);
}

// ---- WAV --------------------------------------------------------------------------

wav_data read_wav(const std::string& path, i64 target_rate) {
  const std::string buf = read_text_file(path);
  byte_reader r{buf, 0, path};
  char tag[4];
  r.raw(tag, 4);
  if (std::memcmp(tag, "RIFF", 4) != 0) throw io_error("not a RIFF file: " + path);
  r.get<u32>();  // chunk size
  r.raw(tag, 4);
  if (std::memcmp(tag, "WAVE", 4) != 0) throw io_error("not a WAVE file: " + path);

  u16 format = 0, channels = 0, bits = 0;
  u32 rate = 0;
  bool have_fmt = false;
  std::vector<double> mono;
  while (r.pos + 8 <= buf.size()) {
    r.raw(tag, 4);
    const u32 size = r.get<u32>();
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (size < 16) throw io_error("malformed fmt chunk: " + path);
      format = r.get<u16>();
      channels = r.get<u16>();
      rate = r.get<u32>();
      r.get<u32>();  // byte rate
      r.get<u16>();  // block align
      bits = r.get<u16>();
      r.skip(size - 16 + (size % 2));
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw io_error("data chunk before fmt: " + path);
      if (channels == 0) throw io_error("zero channels: " + path);
      const bool pcm16 = (format == 1 && bits == 16);
      const bool f32 = (format == 3 && bits == 32);
      if (!pcm16 && !f32)
        throw io_error("unsupported WAV codec (want PCM-16 or float32): " + path);
      const i64 bytes_per = pcm16 ? 2 : 4;
      const i64 frames = i64(size) / (bytes_per * channels);
      mono.assign(size_t(frames), 0.0);
      for (i64 f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (i64 c = 0; c < channels; ++c) {
          if (pcm16) {
            const i64 s = r.get<int16_t>();
            acc += double(s) / 32768.0;
          } else {
            acc += double(r.get<float>());
          }
        }
        mono[size_t(f)] = acc / double(channels);
      }
      r.skip(size % 2);
      if (channels > 1)
        std::cerr << "warning: " << path << " has " << channels
                  << " channels, mean-downmixing to mono\n";
      break;
    } else {
      r.skip(size + (size % 2));
    }
  }
  if (!have_fmt || mono.empty()) throw io_error("no audio data found: " + path);

  wav_data out;
  out.sample_rate = i64(rate);
  if (target_rate > 0 && i64(rate) != target_rate) {
    std::cerr << "warning: " << path << " sampled at " << rate << " Hz, resampling to "
              << target_rate << " Hz\n";
    const i64 n_in = i64(mono.size());
    const i64 n_out = i64((double(n_in) * double(target_rate)) / double(rate));
    std::vector<double> res(size_t(std::max<i64>(n_out, 1)));
    for (i64 j = 0; j < i64(res.size()); ++j) {
      const double src = n_out <= 1 ? 0.0 : double(j) * double(n_in - 1) / double(n_out - 1);
      const i64 i0 = i64(src);
      const i64 i1 = std::min(i0 + 1, n_in - 1);
      const double w = src - double(i0);
      res[size_t(j)] = mono[size_t(i0)] * (1.0 - w) + mono[size_t(i1)] * w;
    }
    out.samples = std::move(res);
    out.sample_rate = target_rate;
  } else {
    out.samples = std::move(mono);
  }
  return out;
}

void write_wav(const std::string& path, const std::vector<double>& samples, i64 sample_rate) {
  require(sample_rate > 0, "write_wav: bad sample rate");
  std::string out;
  const u32 data_bytes = u32(samples.size() * 4);
  out.append("RIFF");
  put<u32>(out, 36 + data_bytes);
  out.append("WAVE");
  out.append("fmt ");
  put<u32>(out, 16);
  put<u16>(out, 3);  // IEEE float
  put<u16>(out, 1);  // mono
  put<u32>(out, u32(sample_rate));
  put<u32>(out, u32(sample_rate * 4));
  put<u16>(out, 4);
  put<u16>(out, 32);
  out.append("data");
  put<u32>(out, data_bytes);
  for (double s : samples) put<float>(out, float(s));
  atomic_replace(path, out);
}

// ---- DLPH -------------------------------------------------------------------------------

namespace {
constexpr u32 kDlphVersion = 1;

template <typename T, typename S>
dlph_entry entry_from(const std::string& name, const S& shape, const T* src, i64 n, u8 dtype) {
  dlph_entry e;
  e.name = name;
  e.dtype = dtype;
  e.dims.assign(shape.begin(), shape.end());
  e.payload.resize(size_t(n) * sizeof(T));
  std::memcpy(e.payload.data(), src, e.payload.size());
  return e;
}
}  // namespace

dlph_entry dlph_entry::from(const std::string& name, const tensor<float>& t) {
  return entry_from(name, t.shape, t.ptr(), t.numel(), 0);
}
dlph_entry dlph_entry::from(const std::string& name, const tensor<double>& t) {
  return entry_from(name, t.shape, t.ptr(), t.numel(), 1);
}
dlph_entry dlph_entry::from_i64(const std::string& name, const std::vector<i64>& v) {
  std::vector<i64> shape{i64(v.size())};
  return entry_from(name, shape, v.data(), i64(v.size()), 2);
}

tensor<float> dlph_entry::as_f32() const {
  require(dtype == 0, "entry '" + name + "' is not f32");
  tensor<float> t(dims);
  std::memcpy(t.ptr(), payload.data(), payload.size());
  return t;
}

tensor<double> dlph_entry::as_f64() const {
  require(dtype == 1, "entry '" + name + "' is not f64");
  tensor<double> t(dims);
  std::memcpy(t.ptr(), payload.data(), payload.size());
  return t;
}

std::vector<i64> dlph_entry::as_i64() const {
  require(dtype == 2, "entry '" + name + "' is not i64");
  std::vector<i64> v(size_t(numel()));
  std::memcpy(v.data(), payload.data(), payload.size());
  return v;
}

template <typename R>
tensor<R> dlph_entry::as() const {
  require(dtype == 0 || dtype == 1, "entry '" + name + "' is not floating point");
  if (dtype == 0) {
    if constexpr (std::is_same_v<R, float>) return as_f32();
    return as_f32().template cast<R>();
  }
  if constexpr (std::is_same_v<R, double>) return as_f64();
  return as_f64().template cast<R>();
}

template tensor<float> dlph_entry::as<float>() const;
template tensor<double> dlph_entry::as<double>() const;

std::vector<dlph_entry> dlph_read(const std::string& path) {
  const std::string buf = read_text_file(path);
  byte_reader r{buf, 0, path};
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "DLPH", 4) != 0) throw io_error("bad magic (not DLPH): " + path);
  const u32 version = r.get<u32>();
  if (version != kDlphVersion)
    throw io_error("unsupported DLPH version " + std::to_string(version) + ": " + path);
  const u32 count = r.get<u32>();
  std::vector<dlph_entry> entries;
  entries.reserve(count);
  for (u32 i = 0; i < count; ++i) {
    dlph_entry e;
    const u16 name_len = r.get<u16>();
    e.name.resize(name_len);
    r.raw(e.name.data(), name_len);
    e.dtype = r.get<u8>();
    if (e.dtype > 2) throw io_error("unknown dtype code in '" + e.name + "': " + path);
    const u8 rank = r.get<u8>();
    e.dims.resize(rank);
    for (u8 d = 0; d < rank; ++d) {
      e.dims[d] = i64(r.get<u64>());
      if (e.dims[d] <= 0) throw io_error("bad dimension in '" + e.name + "': " + path);
    }
    e.payload.resize(size_t(e.numel() * e.elem_size()));
    r.raw(e.payload.data(), e.payload.size());
    entries.push_back(std::move(e));
  }
  if (r.pos != buf.size()) throw io_error("trailing bytes after last entry: " + path);
  return entries;
}

void dlph_write(const std::string& path, const std::vector<dlph_entry>& entries) {
  std::string out;
  out.append("DLPH");
  put<u32>(out, kDlphVersion);
  put<u32>(out, u32(entries.size()));
  for (const auto& e : entries) {
    require(e.name.size() <= 0xffff, "tensor name too long: " + e.name);
    require(e.dims.size() <= 0xff, "tensor rank too large: " + e.name);
    require(i64(e.payload.size()) == e.numel() * e.elem_size(),
            "payload size mismatch for '" + e.name + "'");
    put<u16>(out, u16(e.name.size()));
    out.append(e.name);
    put<u8>(out, e.dtype);
    put<u8>(out, u8(e.dims.size()));
    for (i64 d : e.dims) put<u64>(out, u64(d));
    out.append(e.payload.data(), e.payload.size());
  }
  atomic_replace(path, out);
}

}  // namespace avsep
