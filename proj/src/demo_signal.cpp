#include "avsep/demo.hpp"

#include <sstream>

#include "avsep/hda.hpp"

namespace avsep {

demo_signal_data make_demo_signal(i64 T, u64 seed) {
  require(T >= 64, "demo signal needs T >= 64");
  demo_signal_data d;
  d.x.resize(size_t(T));
  d.smooth.resize(size_t(T));
  d.smooth_mask.assign(size_t(T), true);
  rng g(seed);
  const double ph1 = 2 * kPi * g.uniform(), ph2 = 2 * kPi * g.uniform(),
               ph3 = 2 * kPi * g.uniform();
  for (i64 t = 0; t < T; ++t) {
    const double u = double(t) / double(T);
    const double s = 0.6 * std::sin(2 * kPi * 3 * u + ph1) +
                     0.3 * std::sin(2 * kPi * 7 * u + ph2) +
                     0.15 * std::sin(2 * kPi * 13 * u + ph3);
    d.smooth[size_t(t)] = s;
    // high-frequency ripple plays the role of background noise
    d.x[size_t(t)] = s + 0.12 * std::sin(2 * kPi * 47 * u + 2.1) + 0.05 * g.normal();
  }
  for (i64 frac = 1; frac <= 4; ++frac) {
    const i64 pos = (T * frac) / 5 + (frac % 2 == 0 ? 3 : -2);
    d.impulses.push_back(pos);
    d.x[size_t(pos)] += 2.0;
    for (i64 j = std::max<i64>(0, pos - 4); j <= std::min<i64>(T - 1, pos + 4); ++j)
      d.smooth_mask[size_t(j)] = false;
  }
  return d;
}

filter_measure measure_filter(const demo_signal_data& d, const std::vector<double>& y) {
  const i64 T = i64(d.x.size());
  check_internal(i64(y.size()) == T, "measure_filter: length mismatch");
  filter_measure m;
  double in_noise = 0, out_noise = 0;
  for (i64 t = 0; t < T; ++t) {
    if (!d.smooth_mask[size_t(t)]) continue;
    const double r = y[size_t(t)] - d.x[size_t(t)];
    m.smooth_residual_energy += r * r;
    const double ni = d.x[size_t(t)] - d.smooth[size_t(t)];
    const double no = y[size_t(t)] - d.smooth[size_t(t)];
    in_noise += ni * ni;
    out_noise += no * no;
  }
  m.noise_suppression = in_noise > 0 ? 1.0 - out_noise / in_noise : 0.0;
  double acc = 0;
  for (i64 pos : d.impulses) {
    const double amp_in = d.x[size_t(pos)] - d.smooth[size_t(pos)];
    double peak = -std::numeric_limits<double>::infinity();
    for (i64 j = std::max<i64>(0, pos - 2); j <= std::min<i64>(T - 1, pos + 2); ++j)
      peak = std::max(peak, y[size_t(j)] - d.smooth[size_t(j)]);
    acc += peak / amp_in;
  }
  m.retention_mean = acc / double(d.impulses.size());
  return m;
}

namespace {

std::vector<double> apply_heat(const std::vector<double>& x, double k) {
  tensor<double> t({1, i64(x.size())});
  std::copy(x.begin(), x.end(), t.ptr());
  tensor<double> y = heat_diffuse(t, k);
  return std::vector<double>(y.data.begin(), y.data.end());
}

std::vector<double> apply_gauss(const std::vector<double>& x, double sigma, i64 klen) {
  tensor<double> t({1, i64(x.size())});
  std::copy(x.begin(), x.end(), t.ptr());
  tensor<double> y = gaussian_conv_reference(t, sigma, klen);
  return std::vector<double>(y.data.begin(), y.data.end());
}

}  // namespace

demo_report run_hda_demo(const demo_signal_data& d, double k, double sigma, i64 kernel_len) {
  require(k >= 0, "diffusion time must be nonnegative");
  demo_report r;
  r.k = k;
  r.kernel_len = kernel_len;
  r.y_heat = apply_heat(d.x, k);
  r.heat = measure_filter(d, r.y_heat);

  if (sigma > 0) {
    r.sigma = sigma;
  } else {
    // residual energy grows monotonically with sigma; bisect to match
    r.sigma_was_matched = true;
    const double target = r.heat.smooth_residual_energy;
    double lo = 1e-4, hi = 0.5;
    while (measure_filter(d, apply_gauss(d.x, hi, kernel_len)).smooth_residual_energy < target &&
           hi < double(d.x.size()))
      hi *= 2.0;
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double e = measure_filter(d, apply_gauss(d.x, mid, kernel_len)).smooth_residual_energy;
      if (e < target) lo = mid;
      else hi = mid;
      if (target > 0 && std::abs(e - target) / target < 5e-3) {
        lo = hi = mid;
        break;
      }
    }
    r.sigma = 0.5 * (lo + hi);
  }
  r.y_gauss = apply_gauss(d.x, r.sigma, kernel_len);
  r.gauss = measure_filter(d, r.y_gauss);
  return r;
}

std::string demo_csv(const demo_signal_data& d, const demo_report& r) {
  std::ostringstream o;
  o.precision(10);
  o << "position,input,heat_diffusion,gaussian\n";
  for (size_t t = 0; t < d.x.size(); ++t)
    o << t << "," << d.x[t] << "," << r.y_heat[t] << "," << r.y_gauss[t] << "\n";
  return o.str();
}

std::string demo_summary(const demo_report& r) {
  std::ostringstream o;
  o.precision(6);
  o << "diffusion_time " << r.k << "\n";
  o << "gaussian_sigma " << r.sigma << (r.sigma_was_matched ? " (matched)" : " (given)") << "\n";
  o << "gaussian_kernel_len " << r.kernel_len << "\n";
  o << "smooth_residual_energy heat " << r.heat.smooth_residual_energy << " gaussian "
    << r.gauss.smooth_residual_energy << "\n";
  o << "noise_suppression heat " << r.heat.noise_suppression << " gaussian "
    << r.gauss.noise_suppression << "\n";
  o << "impulse_peak_retention heat " << r.heat.retention_mean << " gaussian "
    << r.gauss.retention_mean << "\n";
  return o.str();
}

}  // namespace avsep
