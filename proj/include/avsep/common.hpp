#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace avsep {

using i64 = std::int64_t;
using u64 = std::uint64_t;
using u32 = std::uint32_t;
using u16 = std::uint16_t;
using u8 = std::uint8_t;

// Error taxonomy mirrors the CLI exit codes: input/config/io problems are the
// caller's fault (exit 1), internal_error means a broken invariant (exit 2).
struct input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct config_error : input_error {
  using input_error::input_error;
};
struct io_error : input_error {
  using input_error::input_error;
};
struct internal_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw input_error(msg);
}
inline void require_cfg(bool cond, const std::string& msg) {
  if (!cond) throw config_error(msg);
}
inline void check_internal(bool cond, const std::string& msg) {
  if (!cond) throw internal_error(msg);
}

// Deterministic scalar stream. All randomness in the project flows through
// this: mt19937_64 plus explicit bit-to-double mapping, so float and double
// builds draw identical sequences and no libstdc++ distribution quirks leak in.
class rng {
 public:
  explicit rng(u64 seed) : gen_(seed) {}

  double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }  // [0, 1)
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double th = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }

  i64 uniform_int(i64 n) {  // [0, n)
    check_internal(n > 0, "rng.uniform_int: n must be positive");
    return i64(gen_() % u64(n));
  }

  u64 raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

constexpr double kPi = 3.14159265358979323846;

}  // namespace avsep
