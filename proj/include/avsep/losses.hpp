#pragma once

#include "avsep/ad_ops.hpp"

// Scale-invariant SNR objectives in time and magnitude-spectrum domains, the
// frequency-weight schedule, and the evaluation metrics. SI-SNR is a quality
// measure, so training minimizes its negation.

namespace avsep {

struct loss_config {
  stft_spec stft;          // 512/128 periodic Hann
  double eps = 1e-8;
  double lambda_base = 0.4;
  i64 lambda_pivot = 80;   // epochs at the base value
  double lambda_decay = 0.8;
  i64 lambda_period = 5;
};

inline double lambda_schedule(i64 epoch, const loss_config& cfg = {}) {
  require(epoch >= 1, "lambda_schedule: epochs start at 1");
  if (epoch <= cfg.lambda_pivot) return cfg.lambda_base;
  const i64 k = (epoch - cfg.lambda_pivot) / cfg.lambda_period;
  return cfg.lambda_base * std::pow(cfg.lambda_decay, double(k));
}

namespace detail {
constexpr double kLn10 = 2.302585092994046;

template <typename R>
void require_ref_energy(const tensor<R>& s) {
  double e = 0.0;
  for (R v : s.data) e += double(v) * double(v);
  require(e > 0.0, "SI-SNR: zero-energy reference");
}
}  // namespace detail

// Differentiable SI-SNR in dB; the reference enters as a constant.
template <typename R>
var<R> sisnr_v(var<R> est, var<R> ref, double eps = 1e-8) {
  detail::require_ref_energy(ref->value);
  var<R> w = div_ew(dot_all(est, ref), add_const(sum_sq(ref), eps));
  var<R> target = mul_scalar_v(ref, w);
  var<R> num = sum_sq(target);
  var<R> den = add_const(sum_sq(sub(std::move(est), target)), eps);
  return scale(log_v(div_ew(std::move(num), std::move(den))), 10.0 / detail::kLn10);
}

template <typename R>
var<R> sisnr_t_v(var<R> est, const tensor<R>& ref, double eps = 1e-8) {
  return sisnr_v(std::move(est), constant(ref), eps);
}

// Frequency-domain SI-SNR on vectorized STFT magnitudes.
template <typename R>
var<R> sisnr_f_v(var<R> est, const tensor<R>& ref, const loss_config& cfg = {}) {
  require(est->value.rows() == 1 && ref.rows() == 1, "sisnr_f: mono [1 x L] signals expected");
  require(est->value.cols() == ref.cols(), "sisnr_f: length mismatch");
  const i64 L = ref.cols();
  var<R> m_est = stft_mag_v(reshape_v(std::move(est), {L}), cfg.stft);
  tensor<R> flat_ref({L});
  std::copy(ref.data.begin(), ref.data.end(), flat_ref.data.begin());
  const i64 nf = cfg.stft.frames(L), F = cfg.stft.bins();
  tensor<R> m_ref({F, nf});
  {
    std::vector<R> re(size_t(F * nf)), im(size_t(F * nf));
    stft_mag_fwd(flat_ref.ptr(), L, cfg.stft, re.data(), im.data(), m_ref.ptr());
  }
  return sisnr_v(std::move(m_est), constant(std::move(m_ref)), cfg.eps);
}

// Combined objective: -( (1-lambda) SI-SNR_t(S, S_hat) + lambda SI-SNR_f(S, S_hat3) ).
template <typename R>
var<R> total_loss_v(var<R> s_hat, var<R> s_hat3, const tensor<R>& s_ref, i64 epoch,
                    const loss_config& cfg = {}) {
  const double lam = lambda_schedule(epoch, cfg);
  var<R> lt = sisnr_t_v(std::move(s_hat), s_ref, cfg.eps);
  if (!s_hat3 || lam == 0.0) return neg(std::move(lt));
  var<R> lf = sisnr_f_v(std::move(s_hat3), s_ref, cfg);
  return neg(add(scale(std::move(lt), 1.0 - lam), scale(std::move(lf), lam)));
}

// ---- plain metric forms -------------------------------------------------------

inline double sisnr_t(const std::vector<double>& ref, const std::vector<double>& est,
                      double eps = 1e-8) {
  require(ref.size() == est.size() && !ref.empty(), "sisnr_t: size mismatch");
  double dot = 0.0, ss = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    dot += est[i] * ref[i];
    ss += ref[i] * ref[i];
  }
  require(ss > 0.0, "SI-SNR: zero-energy reference");
  const double w = dot / (ss + eps);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    const double t = w * ref[i];
    num += t * t;
    const double r = est[i] - t;
    den += r * r;
  }
  return 10.0 * std::log10(num / (den + eps));
}

inline double sdr(const std::vector<double>& ref, const std::vector<double>& est,
                  double eps = 1e-8) {
  require(ref.size() == est.size() && !ref.empty(), "sdr: size mismatch");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    num += ref[i] * ref[i];
    const double r = est[i] - ref[i];
    den += r * r;
  }
  require(num > 0.0, "SDR: zero-energy reference");
  return 10.0 * std::log10(num / (den + eps));
}

inline double sisnri(const std::vector<double>& ref, const std::vector<double>& est,
                     const std::vector<double>& mix) {
  return sisnr_t(ref, est) - sisnr_t(ref, mix);
}

inline double sdri(const std::vector<double>& ref, const std::vector<double>& est,
                   const std::vector<double>& mix) {
  return sdr(ref, est) - sdr(ref, mix);
}

}  // namespace avsep
