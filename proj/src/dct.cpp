#include "avsep/dct.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <vector>

// FFTW REDFT10 computes Y[p] = 2 * sum_t x[t] cos(pi*p*(t+0.5)/T); REDFT01 is
// its unnormalized inverse. Plans are cached per (length, kind, precision) and
// created with FFTW_UNALIGNED so the new-array execute interface is legal on
// arbitrary heap buffers. Plan creation is serialized; execution is re-entrant.

namespace avsep {
namespace {

std::mutex g_plan_mu;

struct key {
  i64 T;
  int kind;
  bool operator<(const key& o) const { return T != o.T ? T < o.T : kind < o.kind; }
};

fftw_plan plan_d(i64 T, fftw_r2r_kind kind) {
  static std::map<key, fftw_plan> cache;
  std::lock_guard<std::mutex> lock(g_plan_mu);
  auto it = cache.find({T, kind});
  if (it != cache.end()) return it->second;
  std::vector<double> in(size_t(T)), out(size_t(T));
  fftw_plan p = fftw_plan_r2r_1d(int(T), in.data(), out.data(), kind,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
  check_internal(p != nullptr, "fftw plan creation failed");
  cache[{T, kind}] = p;
  return p;
}

fftwf_plan plan_f(i64 T, fftw_r2r_kind kind) {
  static std::map<key, fftwf_plan> cache;
  std::lock_guard<std::mutex> lock(g_plan_mu);
  auto it = cache.find({T, kind});
  if (it != cache.end()) return it->second;
  std::vector<float> in(size_t(T)), out(size_t(T));
  fftwf_plan p = fftwf_plan_r2r_1d(int(T), in.data(), out.data(), kind,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
  check_internal(p != nullptr, "fftwf plan creation failed");
  cache[{T, kind}] = p;
  return p;
}

}  // namespace

void dct2_rows_fast(const double* x, double* out, i64 C, i64 T) {
  check_internal(T >= 1, "dct2: empty axis");
  fftw_plan p = plan_d(T, FFTW_REDFT10);
  const double s0 = 0.5 * std::sqrt(1.0 / double(T));
  const double sp = 0.5 * std::sqrt(2.0 / double(T));
  std::vector<double> buf(size_t(T));
  for (i64 c = 0; c < C; ++c) {
    std::copy(x + c * T, x + (c + 1) * T, buf.data());
    fftw_execute_r2r(p, buf.data(), out + c * T);
    double* orow = out + c * T;
    orow[0] *= s0;
    for (i64 q = 1; q < T; ++q) orow[q] *= sp;
  }
}

void idct2_rows_fast(const double* a, double* out, i64 C, i64 T) {
  check_internal(T >= 1, "idct2: empty axis");
  fftw_plan p = plan_d(T, FFTW_REDFT01);
  const double s0 = std::sqrt(1.0 / double(T));
  const double sp = 0.5 * std::sqrt(2.0 / double(T));
  std::vector<double> buf(size_t(T));
  for (i64 c = 0; c < C; ++c) {
    const double* row = a + c * T;
    buf[0] = row[0] * s0;
    for (i64 q = 1; q < T; ++q) buf[size_t(q)] = row[q] * sp;
    fftw_execute_r2r(p, buf.data(), out + c * T);
  }
}

void dct2_rows_fast(const float* x, float* out, i64 C, i64 T) {
  check_internal(T >= 1, "dct2: empty axis");
  fftwf_plan p = plan_f(T, FFTW_REDFT10);
  const float s0 = float(0.5 * std::sqrt(1.0 / double(T)));
  const float sp = float(0.5 * std::sqrt(2.0 / double(T)));
  std::vector<float> buf(size_t(T));
  for (i64 c = 0; c < C; ++c) {
    std::copy(x + c * T, x + (c + 1) * T, buf.data());
    fftwf_execute_r2r(p, buf.data(), out + c * T);
    float* orow = out + c * T;
    orow[0] *= s0;
    for (i64 q = 1; q < T; ++q) orow[q] *= sp;
  }
}

void idct2_rows_fast(const float* a, float* out, i64 C, i64 T) {
  check_internal(T >= 1, "idct2: empty axis");
  fftwf_plan p = plan_f(T, FFTW_REDFT01);
  const float s0 = float(std::sqrt(1.0 / double(T)));
  const float sp = float(0.5 * std::sqrt(2.0 / double(T)));
  std::vector<float> buf(size_t(T));
  for (i64 c = 0; c < C; ++c) {
    const float* row = a + c * T;
    buf[0] = row[0] * s0;
    for (i64 q = 1; q < T; ++q) buf[size_t(q)] = row[q] * sp;
    fftwf_execute_r2r(p, buf.data(), out + c * T);
  }
}

}  // namespace avsep
