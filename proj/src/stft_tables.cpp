#include <map>
#include <mutex>

#include "avsep/kernels.hpp"

namespace avsep {
namespace {

std::mutex g_mu;

template <typename R>
struct table_pair {
  std::vector<R> cosv, sinv;
};

template <typename R>
const table_pair<R>& get_tables(i64 win) {
  static std::map<i64, table_pair<R>> cache;
  std::lock_guard<std::mutex> lock(g_mu);
  auto& e = cache[win];
  if (e.cosv.empty()) {
    const i64 F = win / 2 + 1;
    e.cosv.resize(size_t(F * win));
    e.sinv.resize(size_t(F * win));
    for (i64 f = 0; f < F; ++f) {
      for (i64 n = 0; n < win; ++n) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * kPi * double(n) / double(win));
        const double ang = 2.0 * kPi * double(f) * double(n) / double(win);
        e.cosv[size_t(f * win + n)] = R(std::cos(ang) * w);
        e.sinv[size_t(f * win + n)] = R(-std::sin(ang) * w);
      }
    }
  }
  return e;
}

}  // namespace

const std::vector<double>& stft_cos_table_d(i64 win) { return get_tables<double>(win).cosv; }
const std::vector<double>& stft_sin_table_d(i64 win) { return get_tables<double>(win).sinv; }
const std::vector<float>& stft_cos_table_f(i64 win) { return get_tables<float>(win).cosv; }
const std::vector<float>& stft_sin_table_f(i64 win) { return get_tables<float>(win).sinv; }

}  // namespace avsep
