#pragma once

#include <string>

#include "avsep/tensor.hpp"

// Edge-preservation demonstration: a multi-frequency signal with impulses is
// filtered by heat diffusion and by a Gaussian kernel whose width is matched
// so both alter the smooth region by the same energy; the impulse-peak
// retention of each filter is then measured and reported.

namespace avsep {

struct demo_signal_data {
  std::vector<double> x;          // smooth part + noise + impulses
  std::vector<double> smooth;     // clean low-frequency component
  std::vector<i64> impulses;      // spike positions
  std::vector<bool> smooth_mask;  // true away from any spike
};

demo_signal_data make_demo_signal(i64 T, u64 seed = 9);

struct filter_measure {
  double smooth_residual_energy = 0;  // sum over mask of (y - x)^2
  double noise_suppression = 0;       // 1 - ||y-smooth||^2 / ||x-smooth||^2 on mask
  double retention_mean = 0;          // mean impulse peak retention
};

filter_measure measure_filter(const demo_signal_data& d, const std::vector<double>& y);

struct demo_report {
  double k = 0, sigma = 0;
  i64 kernel_len = 21;
  bool sigma_was_matched = false;
  filter_measure heat, gauss;
  std::vector<double> y_heat, y_gauss;
};

// sigma <= 0 requests width matching: bisect until the Gaussian's smooth-region
// residual energy is within 0.5% of the heat filter's.
demo_report run_hda_demo(const demo_signal_data& d, double k, double sigma = 0.0,
                         i64 kernel_len = 21);

std::string demo_csv(const demo_signal_data& d, const demo_report& r);
std::string demo_summary(const demo_report& r);

}  // namespace avsep
