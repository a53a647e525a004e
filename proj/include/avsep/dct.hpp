#pragma once

#include "avsep/tensor.hpp"

namespace avsep {

// Orthonormal DCT-II along the time axis of a [C x T] buffer, and its inverse
// (DCT-III). Coefficient p carries scale sqrt(1/T) for p == 0 and sqrt(2/T)
// otherwise, so analysis and synthesis are exact transposes of each other and
// the transform preserves the l2 norm. Note this deliberately replaces the
// uniform sqrt(2/T) scaling sometimes written for this filter bank: that
// variant is not an isometry and its inverse is not the transpose.
//
// *_direct: literal O(T^2) evaluation of the basis; reference path, also used
//           for small T.
// *_fast:   FFTW-backed O(T log T); must agree with the direct path to 1e-6
//           and is the runtime default.

template <typename R>
void dct2_rows_direct(const R* x, R* out, i64 C, i64 T);
template <typename R>
void idct2_rows_direct(const R* a, R* out, i64 C, i64 T);

void dct2_rows_fast(const float* x, float* out, i64 C, i64 T);
void dct2_rows_fast(const double* x, double* out, i64 C, i64 T);
void idct2_rows_fast(const float* a, float* out, i64 C, i64 T);
void idct2_rows_fast(const double* a, double* out, i64 C, i64 T);

template <typename R>
void dct2_rows(const R* x, R* out, i64 C, i64 T) {
  dct2_rows_fast(x, out, C, T);
}
template <typename R>
void idct2_rows(const R* a, R* out, i64 C, i64 T) {
  idct2_rows_fast(a, out, C, T);
}

template <typename R>
tensor<R> dct2(const tensor<R>& x) {
  tensor<R> out;
  out.shape = x.shape;
  out.data.resize(x.data.size());
  dct2_rows(x.ptr(), out.ptr(), x.rows(), x.cols());
  return out;
}

template <typename R>
tensor<R> idct2(const tensor<R>& a) {
  tensor<R> out;
  out.shape = a.shape;
  out.data.resize(a.data.size());
  idct2_rows(a.ptr(), out.ptr(), a.rows(), a.cols());
  return out;
}

// ---- direct path ----------------------------------------------------------

template <typename R>
void dct2_rows_direct(const R* x, R* out, i64 C, i64 T) {
  check_internal(T >= 1, "dct2: empty axis");
  const double s0 = std::sqrt(1.0 / double(T));
  const double sp = std::sqrt(2.0 / double(T));
  for (i64 c = 0; c < C; ++c) {
    const R* row = x + c * T;
    R* orow = out + c * T;
    for (i64 p = 0; p < T; ++p) {
      double acc = 0.0;
      for (i64 t = 0; t < T; ++t)
        acc += double(row[t]) * std::cos(kPi * double(p) * (double(t) + 0.5) / double(T));
      orow[p] = R(acc * (p == 0 ? s0 : sp));
    }
  }
}

template <typename R>
void idct2_rows_direct(const R* a, R* out, i64 C, i64 T) {
  check_internal(T >= 1, "idct2: empty axis");
  const double s0 = std::sqrt(1.0 / double(T));
  const double sp = std::sqrt(2.0 / double(T));
  for (i64 c = 0; c < C; ++c) {
    const R* row = a + c * T;
    R* orow = out + c * T;
    for (i64 t = 0; t < T; ++t) {
      double acc = double(row[0]) * s0;
      for (i64 p = 1; p < T; ++p)
        acc += double(row[p]) * sp * std::cos(kPi * double(p) * (double(t) + 0.5) / double(T));
      orow[t] = R(acc);
    }
  }
}

}  // namespace avsep
