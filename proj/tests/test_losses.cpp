#include "doctest.h"

#include "avsep/grad_check.hpp"
#include "avsep/losses.hpp"

using namespace avsep;

namespace {

std::vector<double> rand_sig(rng& g, size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = g.uniform(-1.0, 1.0);
  return v;
}

var<double> row_var(const std::vector<double>& v) {
  tensor<double> t({1, i64(v.size())});
  t.data.assign(v.begin(), v.end());
  return constant(std::move(t));
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("si-snr reference values") {
  const std::vector<double> s{1.0, 2.0, -1.0, 0.5};
  CHECK(std::abs(sisnr_t(s, s) - 87.95880015259462) < 1e-9);
  std::vector<double> s37 = s, sneg = s;
  for (auto& v : s37) v *= 3.7;
  for (auto& v : sneg) v = -v;
  CHECK(std::abs(sisnr_t(s, s37) - 99.32283454575537) < 1e-9);
  CHECK(std::abs(sisnr_t(s, sneg) - 87.95880015259462) < 1e-9);
  const std::vector<double> sh{1.2, 1.7, -0.6, 0.9};
  CHECK(std::abs(sisnr_t(s, sh) - 11.144878671295013) < 1e-9);

  // differentiable form agrees with the metric form
  const double v = item(sisnr_t_v(row_var(sh), row_var(s)->value));
  CHECK(std::abs(v - 11.144878671295013) < 1e-9);
}

TEST_CASE("si-snr is invariant to rescaling either signal") {
  rng g(701);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> ref = rand_sig(g, 64), est = rand_sig(g, 64);
    const double base = sisnr_t(ref, est);
    for (double a : {0.1, 3.7, -2.5}) {
      std::vector<double> est_s = est, ref_s = ref;
      for (auto& v : est_s) v *= a;
      for (auto& v : ref_s) v *= a;
      CHECK(std::abs(sisnr_t(ref, est_s) - base) < 1e-6);
      CHECK(std::abs(sisnr_t(ref_s, est) - base) < 1e-6);
    }
  }
}

TEST_CASE("orthogonal equal-power residual sits at 0 dB") {
  rng g(702);
  std::vector<double> ref = rand_sig(g, 128), noise = rand_sig(g, 128);
  double rr = 0.0, nr = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    rr += ref[i] * ref[i];
    nr += noise[i] * ref[i];
  }
  double nn = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    noise[i] -= (nr / rr) * ref[i];  // project out the reference
    nn += noise[i] * noise[i];
  }
  const double k = std::sqrt(rr / nn);
  std::vector<double> est(ref.size());
  for (size_t i = 0; i < ref.size(); ++i) est[i] = ref[i] + k * noise[i];
  CHECK(std::abs(sisnr_t(ref, est)) < 1e-3);
}

TEST_CASE("frequency weight schedule hits its table exactly") {
  CHECK(lambda_schedule(1) == 0.4);
  CHECK(lambda_schedule(80) == 0.4);
  CHECK(lambda_schedule(81) == 0.4);  // first decay lands at the end of the bucket
  CHECK(lambda_schedule(85) == 0.4 * std::pow(0.8, 1.0));
  CHECK(lambda_schedule(90) == 0.4 * std::pow(0.8, 2.0));
  CHECK(std::abs(lambda_schedule(85) - 0.32000000000000006) < 1e-15);
  CHECK(std::abs(lambda_schedule(90) - 0.25600000000000006) < 1e-15);
  CHECK(std::abs(lambda_schedule(95) - 0.20480000000000007) < 1e-15);
  CHECK(std::abs(lambda_schedule(100) - 0.16384000000000004) < 1e-15);
  CHECK_THROWS_AS(lambda_schedule(0), input_error);
}

TEST_CASE("frequency weight never increases and stays positive") {
  double prev = 1.0;
  for (i64 e = 1; e <= 200; ++e) {
    const double lam = lambda_schedule(e);
    CHECK(lam > 0.0);
    CHECK(lam <= 0.4);
    CHECK(lam <= prev + 1e-18);
    prev = lam;
  }
}

TEST_CASE("combined loss decreases as both estimates approach the target") {
  rng g(703);
  const i64 L = 1024;
  std::vector<double> ref = rand_sig(g, size_t(L)), mix = rand_sig(g, size_t(L));
  for (size_t i = 0; i < ref.size(); ++i) mix[i] += ref[i];
  tensor<double> ref_t({1, L});
  ref_t.data.assign(ref.begin(), ref.end());

  double prev = 1e18;
  for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    tensor<double> est({1, L});
    for (i64 i = 0; i < L; ++i)
      est.data[size_t(i)] = mix[size_t(i)] + t * (ref[size_t(i)] - mix[size_t(i)]);
    const double loss = item(total_loss_v(constant(est), constant(est), ref_t, 10));
    CHECK(loss < prev);
    prev = loss;
  }
}

TEST_CASE("without an auxiliary estimate the loss is time-domain only") {
  rng g(704);
  const i64 L = 700;
  tensor<double> ref({1, L}), est({1, L});
  for (i64 i = 0; i < L; ++i) {
    ref.data[size_t(i)] = g.uniform(-1.0, 1.0);
    est.data[size_t(i)] = g.uniform(-1.0, 1.0);
  }
  const double total = item(total_loss_v(constant(est), var<double>{}, ref, 85));
  const double tl = item(sisnr_t_v(constant(est), ref));
  CHECK(std::abs(total + tl) < 1e-12);
}

TEST_CASE("combined loss blends the two domains with the scheduled weight") {
  rng g(705);
  const i64 L = 640;
  tensor<double> ref({1, L}), est({1, L}), est3({1, L});
  for (i64 i = 0; i < L; ++i) {
    ref.data[size_t(i)] = g.uniform(-1.0, 1.0);
    est.data[size_t(i)] = g.uniform(-1.0, 1.0);
    est3.data[size_t(i)] = g.uniform(-1.0, 1.0);
  }
  const i64 epoch = 85;
  const double lam = lambda_schedule(epoch);
  const double total = item(total_loss_v(constant(est), constant(est3), ref, epoch));
  const double lt = item(sisnr_t_v(constant(est), ref));
  const double lf = item(sisnr_f_v(constant(est3), ref));
  CHECK(std::abs(total + ((1.0 - lam) * lt + lam * lf)) < 1e-10);
}

TEST_CASE("gradients of both objectives") {
  rng g(706);
  var<double> est = make_leaf(random_tensor<double>(g, {1, 40}), true);
  tensor<double> ref = random_tensor<double>(g, {1, 40});
  std::vector<std::pair<std::string, var<double>>> leaves{{"est", est}};
  grad_check_report rep =
      grad_check([&] { return sisnr_t_v(est, ref); }, leaves, 1e-5);
  INFO(rep.worst);
  CHECK(rep.ok(1e-4));

  var<double> est_f = make_leaf(random_tensor<double>(g, {1, 600}), true);
  tensor<double> ref_f = random_tensor<double>(g, {1, 600});
  std::vector<std::pair<std::string, var<double>>> leaves_f{{"est", est_f}};
  grad_check_report rep_f =
      grad_check([&] { return sisnr_f_v(est_f, ref_f); }, leaves_f, 1e-5, 16);
  INFO(rep_f.worst);
  CHECK(rep_f.ok(1e-4));
}

TEST_CASE("improvement metrics are zero for the mixture itself") {
  rng g(707);
  std::vector<double> ref = rand_sig(g, 256), other = rand_sig(g, 256);
  std::vector<double> mix(ref.size());
  for (size_t i = 0; i < mix.size(); ++i) mix[i] = ref[i] + other[i];
  CHECK(sisnri(ref, mix, mix) == 0.0);
  CHECK(sdri(ref, mix, mix) == 0.0);
  // a perfect estimate clears a wide margin over the mixture baseline
  CHECK(sisnri(ref, ref, mix) > 40.0);
  CHECK(sdri(ref, ref, mix) > 40.0);
}

TEST_CASE("zero-energy references are rejected") {
  std::vector<double> z(16, 0.0), e(16, 1.0);
  CHECK_THROWS_AS(sisnr_t(z, e), input_error);
  CHECK_THROWS_AS(sdr(z, e), input_error);
  tensor<double> zt({1, 16}), et({1, 16});
  et.fill(1.0);
  CHECK_THROWS_AS(sisnr_t_v(constant(et), zt), input_error);
}

TEST_CASE("default spectral grid") {
  loss_config cfg;
  CHECK(cfg.stft.frames(32000) == 247);
  CHECK(cfg.stft.bins() == 257);
}

}  // TEST_SUITE
