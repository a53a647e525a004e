#include "doctest.h"

#include "avsep/ad_ops.hpp"
#include "avsep/grad_check.hpp"
#include "avsep/hda.hpp"
#include "avsep/layers.hpp"

using namespace avsep;

namespace {

using leaves_t = std::vector<std::pair<std::string, var<double>>>;

var<double> leaf(rng& g, std::vector<i64> shape, double lo = -1, double hi = 1) {
  return make_leaf(random_tensor<double>(g, std::move(shape), lo, hi), true);
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("diamond graph accumulates gradients") {
  // y = x*x + x -> dy/dx = 2x + 1, exact in double
  tensor<double> xv({3}, {0.5, -1.25, 2.0});
  var<double> x = make_leaf(xv, true);
  var<double> y = sum_all(add(mul(x, x), x));
  backward(y);
  for (i64 i = 0; i < 3; ++i)
    CHECK(x->grad.data[size_t(i)] == 2.0 * xv.data[size_t(i)] + 1.0);
}

TEST_CASE("frozen leaves get no gradient slot") {
  rng g(21);
  var<double> a = leaf(g, {4});
  var<double> c = constant(random_tensor<double>(g, {4}));
  var<double> y = sum_all(mul(a, c));
  backward(y);
  CHECK(!a->grad.data.empty());
  CHECK(c->grad.data.empty());

  // ops over pure constants drop parents entirely (frozen subgraphs stream-release)
  var<double> z = mul(c, c);
  CHECK(z->parents.empty());
  CHECK(!z->requires_grad);
}

TEST_CASE("detach blocks the gradient path") {
  rng g(22);
  var<double> a = leaf(g, {5});
  var<double> y = sum_all(mul(detach(a), a));
  backward(y);
  // d/da sum(const * a) = const = a's values
  for (i64 i = 0; i < 5; ++i)
    CHECK(std::abs(a->grad.data[size_t(i)] - a->value.data[size_t(i)]) < 1e-15);
}

TEST_CASE("elementwise op gradients") {
  rng g(23);
  var<double> a = leaf(g, {2, 7}, -0.9, 0.9);
  var<double> b = leaf(g, {2, 7}, 0.2, 1.5);  // positive: feeds div/log/sqrt
  leaves_t ls{{"a", a}, {"b", b}};
  auto check = [&](const char* name, auto build) {
    grad_check_report rep = grad_check(build, ls, 1e-5);
    INFO(name, ": ", rep.worst);
    CHECK(rep.ok(1e-4));
  };
  check("add/sub/mul", [&] { return sum_all(mul(add(a, b), sub(a, b))); });
  check("div", [&] { return sum_all(div_ew(a, b)); });
  check("scale/add_const/neg", [&] { return sum_all(neg(add_const(scale(a, 1.7), 0.3))); });
  check("relu", [&] { return sum_all(relu(a)); });
  check("leaky_relu", [&] { return sum_all(leaky_relu(a, 0.01)); });
  check("elu", [&] { return sum_all(elu(a)); });
  check("sigmoid", [&] { return sum_all(sigmoid_v(a)); });
  check("silu", [&] { return sum_all(silu(a)); });
  check("gelu", [&] { return sum_all(gelu_v(a)); });
  check("softplus", [&] { return sum_all(softplus_v(a)); });
  check("exp", [&] { return sum_all(exp_v(a)); });
  check("log", [&] { return sum_all(log_v(b)); });
  check("sqrt", [&] { return sum_all(sqrt_v(b)); });
  check("square", [&] { return sum_all(square_v(a)); });
}

TEST_CASE("shape op gradients") {
  rng g(24);
  var<double> a = leaf(g, {4, 6});
  var<double> b = leaf(g, {4, 6});
  var<double> bias = leaf(g, {4});
  var<double> s = leaf(g, {1});
  var<double> gate = leaf(g, {1, 6});
  leaves_t ls{{"a", a}, {"b", b}, {"bias", bias}, {"s", s}, {"gate", gate}};
  auto check = [&](const char* name, auto build) {
    grad_check_report rep = grad_check(build, ls, 1e-5);
    INFO(name, ": ", rep.worst);
    CHECK(rep.ok(1e-4));
  };
  check("add_rows", [&] { return sum_all(add_rows(a, bias)); });
  check("mul_scalar_v", [&] { return sum_all(mul_scalar_v(a, s)); });
  check("mul_last_bcast", [&] { return sum_all(mul_last_bcast(a, gate)); });
  check("slice+concat", [&] {
    return sum_all(mul(concat_rows({slice_rows(a, 0, 2), slice_rows(a, 2, 2)}), b));
  });
  check("slice_last/pad_last", [&] {
    return sum_all(square_v(pad_last(slice_last(a, 1, 4), 1, 1)));
  });
  check("reshape", [&] { return sum_all(square_v(reshape_v(a, {2, 12}))); });
  check("add_n", [&] { return sum_all(add_n({a, b, a})); });
  check("sum_sq/dot/mean", [&] {
    return add(sum_sq(a), add(dot_all(a, b), mean_all(b)));
  });
}

TEST_CASE("matmul gradients in all transpose modes") {
  rng g(25);
  var<double> a = leaf(g, {3, 4});
  var<double> b = leaf(g, {4, 5});
  var<double> at = leaf(g, {4, 3});
  var<double> bt = leaf(g, {5, 4});
  leaves_t ls{{"a", a}, {"b", b}, {"at", at}, {"bt", bt}};
  grad_check_report rep = grad_check(
      [&] {
        var<double> y1 = matmul(a, b);
        var<double> y2 = matmul(at, b, true, false);
        var<double> y3 = matmul(a, bt, false, true);
        var<double> y4 = matmul(at, bt, true, true);
        return sum_all(add(add(y1, y2), add(y3, y4)));
      },
      ls, 1e-5);
  INFO(rep.worst);
  CHECK(rep.ok(1e-4));
}

TEST_CASE("pool, interp, softmax, norm gradients") {
  rng g(26);
  var<double> a = leaf(g, {3, 10});
  var<double> gamma = leaf(g, {3}, 0.5, 1.5);
  var<double> beta = leaf(g, {3});
  var<double> w = leaf(g, {3, 10});
  leaves_t ls{{"a", a}, {"gamma", gamma}, {"beta", beta}, {"w", w}};
  auto check = [&](const char* name, auto build) {
    grad_check_report rep = grad_check(build, ls, 1e-5);
    INFO(name, ": ", rep.worst);
    CHECK(rep.ok(1e-4));
  };
  check("pool ragged", [&] { return sum_all(mul(pool_time(a, 4), pool_time(w, 4))); });
  check("interp linear up", [&] {
    return sum_all(square_v(interp_time(a, 23, interp_mode::linear)));
  });
  check("interp nearest", [&] {
    return sum_all(square_v(interp_time(a, 25, interp_mode::nearest)));
  });
  check("softmax_lastdim", [&] { return sum_all(mul(softmax_lastdim(a), w)); });
  check("softmax_channels", [&] { return sum_all(mul(softmax_channels(a), w)); });
  check("layer_norm", [&] { return sum_all(mul(layer_norm_channels(a, gamma, beta), w)); });
  check("rms_norm", [&] { return sum_all(mul(rms_norm_channels(a, gamma), w)); });
  check("mean_channel_groups", [&] {
    var<double> stacked = concat_rows({a, w});  // 6 rows -> 3 groups of 2
    return sum_all(square_v(mean_channel_groups(stacked, 2)));
  });
}

TEST_CASE("transform gradients: dct, heat kernel, stft") {
  rng g(27);
  var<double> a = leaf(g, {2, 12});
  var<double> k = leaf(g, {2}, 0.05, 0.8);
  var<double> sig = leaf(g, {600});
  leaves_t ls{{"a", a}, {"k", k}, {"sig", sig}};
  auto check = [&](const char* name, auto build, double h = 1e-5) {
    grad_check_report rep = grad_check(build, ls, h);
    INFO(name, ": ", rep.worst);
    CHECK(rep.ok(1e-4));
  };
  check("dct2/idct2", [&] { return sum_sq(idct2_v(dct2_v(a))); });
  check("exp_neg_outer", [&] {
    return sum_all(mul(exp_neg_outer(k, constant(heat_w2_row<double>(12))), a));
  });
  check("heat_diffuse", [&] { return sum_sq(heat_diffuse_v(a, k)); });
  stft_spec ss;
  ss.win = 64;
  ss.hop = 16;
  check("stft_mag", [&] { return sum_sq(stft_mag_v(sig, ss)); }, 1e-6);
}

TEST_CASE("conv gradients, also spec's sum(conv1d(x)) case") {
  rng g(28);
  conv_spec cs;
  cs.in_ch = 2;
  cs.out_ch = 3;
  cs.kernel = 4;
  cs.stride = 2;
  cs.pad_lo = 1;
  cs.pad_hi = 1;
  var<double> x = leaf(g, {2, 12});
  var<double> w = leaf(g, {3, 2, 4});
  var<double> b = leaf(g, {3});
  leaves_t ls{{"x", x}, {"w", w}, {"b", b}};
  grad_check_report rep = grad_check([&] { return sum_all(conv1d(x, w, b, cs)); }, ls, 1e-5);
  INFO(rep.worst);
  CHECK(rep.checked > 0);
  CHECK(rep.max_rel_err < 1e-5);  // linear op: central differences are near-exact

  conv_spec grouped = depthwise(4, 3);
  var<double> xg = leaf(g, {4, 9});
  var<double> wg = leaf(g, {4, 1, 3});
  var<double> bg = leaf(g, {4});
  leaves_t ls2{{"x", xg}, {"w", wg}, {"b", bg}};
  grad_check_report rep2 =
      grad_check([&] { return sum_sq(conv1d(xg, wg, bg, grouped)); }, ls2, 1e-5);
  INFO(rep2.worst);
  CHECK(rep2.ok(1e-4));

  conv_spec tc;
  tc.in_ch = 3;
  tc.out_ch = 2;
  tc.kernel = 4;
  tc.stride = 2;
  tc.pad_lo = 1;
  tc.pad_hi = 1;
  var<double> xt = leaf(g, {3, 6});
  var<double> wt = leaf(g, {3, 2, 4});
  var<double> bt = leaf(g, {2});
  leaves_t ls3{{"x", xt}, {"w", wt}, {"b", bt}};
  grad_check_report rep3 =
      grad_check([&] { return sum_sq(tconv1d(xt, wt, bt, tc)); }, ls3, 1e-5);
  INFO(rep3.worst);
  CHECK(rep3.ok(1e-4));
}

TEST_CASE("heat diffusion gradient w.r.t. the coefficient") {
  // spec calls out d sum(heat_diffuse(x,k)) / dk specifically
  rng g(29);
  var<double> x = leaf(g, {3, 16});
  var<double> k_raw = make_leaf(tensor<double>({3}, {-2.0, 0.3, -0.7}), true);
  leaves_t ls{{"x", x}, {"k_raw", k_raw}};
  grad_check_report rep =
      grad_check([&] { return sum_all(heat_diffuse_v(x, softplus_v(k_raw))); }, ls, 1e-6);
  INFO(rep.worst);
  CHECK(rep.checked > 0);
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("vq_gather routes gradients into picked rows") {
  rng g(30);
  var<double> cb = leaf(g, {4, 3});
  std::vector<i64> idx{2, 0, 2};
  var<double> w = constant(random_tensor<double>(g, {3, 3}));
  var<double> y = sum_all(mul(vq_gather(cb, idx), w));
  backward(y);
  // row 2 was picked twice: grad = w col sums over picks
  for (i64 j = 0; j < 3; ++j) {
    CHECK(std::abs(cb->grad.data[size_t(2 * 3 + j)] -
                   (w->value.at2(j, 0) + w->value.at2(j, 2))) < 1e-14);
    CHECK(std::abs(cb->grad.data[size_t(0 * 3 + j)] - w->value.at2(j, 1)) < 1e-14);
    CHECK(cb->grad.data[size_t(1 * 3 + j)] == 0.0);
    CHECK(cb->grad.data[size_t(3 * 3 + j)] == 0.0);
  }
}

TEST_CASE("backward frees buffers but leaves leaf state intact") {
  rng g(31);
  var<double> a = leaf(g, {6});
  var<double> y = sum_sq(silu(a));
  backward(y, true);
  CHECK(!a->grad.data.empty());
  CHECK(y->value.data.empty());  // interior buffers released
  CHECK(!a->value.data.empty()); // leaves keep their values
}

}  // TEST_SUITE
