#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sscae/layers.hpp"
#include "test_util.hpp"

using namespace sscae;
using testing::random_tensor;

namespace {

// Straight six-loop cross-correlation, independent of the library kernels.
Tensor<double> brute_correlate(const Tensor<double>& x, const Tensor<double>& w,
                               const std::vector<double>& bias) {
  const auto xs = x.shape(), ws = w.shape();
  Tensor<double> y(xs.n, ws.n, xs.h - ws.h + 1, xs.w - ws.w + 1);
  for (std::size_t b = 0; b < xs.n; ++b)
    for (std::size_t k = 0; k < ws.n; ++k)
      for (std::size_t i = 0; i < y.shape().h; ++i)
        for (std::size_t j = 0; j < y.shape().w; ++j) {
          double s = bias[k];
          for (std::size_t c = 0; c < xs.c; ++c)
            for (std::size_t u = 0; u < ws.h; ++u)
              for (std::size_t v = 0; v < ws.w; ++v) s += x.at(b, c, i + u, j + v) * w.at(k, c, u, v);
          y.at(b, k, i, j) = s;
        }
  return y;
}

double sum_squares(const Tensor<double>& t) { return inner_product(t, t); }

ConvParams<double> random_params(Shape ws, std::size_t n_bias, Rng& rng) {
  ConvParams<double> p{random_tensor(ws, rng), {}};
  for (std::size_t k = 0; k < n_bias; ++k) p.bias.push_back(rng.uniform(-0.5, 0.5));
  return p;
}

}  // namespace

// ---- valid convolution ----

TEST_CASE("conv_valid_forward shapes and values") {
  Rng rng(1);
  ConvParams<double> p{random_tensor({16, 1, 5, 5}, rng), std::vector<double>(16, 0.0)};
  auto y = conv_valid_forward(random_tensor({2, 1, 28, 28}, rng), p);
  CHECK(y.shape() == Shape{2, 16, 24, 24});

  ConvParams<double> q{random_tensor({3, 2, 3, 3}, rng), {0.25, -1.5, 2.0}};
  auto z = conv_valid_forward(Tensor<double>(1, 2, 7, 6), q);
  for (std::size_t k = 0; k < 3; ++k)
    for (double v : z.map(0, k)) CHECK(v == q.bias[k]);

  ConvParams<double> ones{Tensor<double>({1, 1, 2, 2}, 1.0), {0.0}};
  auto four = conv_valid_forward(Tensor<double>({1, 1, 3, 3}, 1.0), ones);
  CHECK(four.shape() == Shape{1, 1, 2, 2});
  for (double v : four.data()) CHECK(v == 4.0);
}

TEST_CASE("conv_valid_forward agrees with a brute-force sum") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t c = 1 + rng.below(3), k = 1 + rng.below(4);
    const std::size_t kh = 1 + rng.below(4), kw = 1 + rng.below(4);
    auto x = random_tensor({1 + rng.below(2), c, kh + rng.below(6), kw + rng.below(6)}, rng);
    auto p = random_params({k, c, kh, kw}, k, rng);
    CHECK(testing::max_rel_error(conv_valid_forward(x, p), brute_correlate(x, p.weights, p.bias)) <
          1e-12);
  }
}

TEST_CASE("conv_valid_forward rejects bad shapes") {
  ConvParams<double> p{Tensor<double>(2, 1, 5, 5), {0, 0}};
  CHECK_THROWS_AS(conv_valid_forward(Tensor<double>(1, 1, 4, 4), p), ShapeError);
  CHECK_THROWS_AS(conv_valid_forward(Tensor<double>(1, 2, 8, 8), p), ShapeError);
  p.bias.pop_back();
  CHECK_THROWS_AS(conv_valid_forward(Tensor<double>(1, 1, 8, 8), p), ShapeError);
}

TEST_CASE("conv_valid_backward: zero upstream gives zero gradients") {
  Rng rng(3);
  auto p = random_params({2, 1, 3, 3}, 2, rng);
  ConvTape<double> tape;
  auto y = conv_valid_forward(random_tensor({1, 1, 4, 4}, rng), p, tape);
  auto g = conv_valid_backward(Tensor<double>(y.shape()), tape);
  for (double v : g.input.data()) CHECK(v == 0.0);
  for (double v : g.weights.data()) CHECK(v == 0.0);
  for (double v : g.bias) CHECK(v == 0.0);
}

TEST_CASE("conv_valid_backward: single-pixel upstream returns the input patch") {
  Rng rng(4);
  auto x = random_tensor({1, 2, 6, 5}, rng);
  auto p = random_params({1, 2, 3, 2}, 1, rng);
  ConvTape<double> tape;
  auto y = conv_valid_forward(x, p, tape);
  Tensor<double> g(y.shape());
  const std::size_t i0 = 2, j0 = 1;
  g.at(0, 0, i0, j0) = 1.0;
  auto gr = conv_valid_backward(g, tape);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t u = 0; u < 3; ++u)
      for (std::size_t v = 0; v < 2; ++v) CHECK(gr.weights.at(0, c, u, v) == x.at(0, c, i0 + u, j0 + v));
  CHECK(gr.bias[0] == 1.0);
}

TEST_CASE("conv_valid_backward matches finite differences") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({1, 1, 4, 4}, rng);
    auto p = random_params({2, 1, 3, 3}, 2, rng);
    ConvTape<double> tape;
    auto y = conv_valid_forward(x, p, tape);
    Tensor<double> up = y;
    up *= 2.0;  // d(sum out^2)/d out
    auto g = conv_valid_backward(up, tape);

    auto loss = [&] { return sum_squares(conv_valid_forward(x, p)); };
    CHECK(testing::max_rel_error(g.input, testing::numeric_gradient(x, loss)) < 1e-6);
    CHECK(testing::max_rel_error(g.weights, testing::numeric_gradient(p.weights, loss)) < 1e-6);
    for (std::size_t k = 0; k < 2; ++k) {
      const double saved = p.bias[k];
      p.bias[k] = saved + 1e-5;
      const double a = loss();
      p.bias[k] = saved - 1e-5;
      const double b = loss();
      p.bias[k] = saved;
      CHECK(testing::rel_error(g.bias[k], (a - b) / 2e-5, 1e-8) < 1e-6);
    }
  }
}

TEST_CASE("tapes are single use") {
  Rng rng(6);
  auto p = random_params({1, 1, 2, 2}, 1, rng);
  ConvTape<double> tape;
  auto y = conv_valid_forward(random_tensor({1, 1, 3, 3}, rng), p, tape);
  CHECK_NOTHROW(conv_valid_backward(y, tape));
  CHECK_THROWS_AS(conv_valid_backward(y, tape), StaleTapeError);
  ConvTape<double> never;
  CHECK_THROWS_AS(conv_valid_backward(y, never), StaleTapeError);
  ActivationTape<double> at;
  CHECK_THROWS_AS(activation_backward(y, at), StaleTapeError);
  NormTape<double> nt;
  CHECK_THROWS_AS(normalize_backward(y, nt), StaleTapeError);
}

// ---- pooling ----

TEST_CASE("maxpool_forward examples") {
  Tensor<double> x(1, 1, 2, 2);
  x[0] = 1, x[1] = 2, x[2] = 3, x[3] = 4;
  auto p = maxpool_forward(x, Window{});
  CHECK(p.values.size() == 1);
  CHECK(p.values[0] == 4.0);
  CHECK(p.switches.rows[0] == 1);
  CHECK(p.switches.cols[0] == 1);

  auto c = maxpool_forward(Tensor<double>({1, 2, 4, 6}, 0.7), Window{});
  CHECK(c.values.shape() == Shape{1, 2, 2, 3});
  for (double v : c.values.data()) CHECK(v == 0.7);
  for (std::size_t q = 0; q < c.values.size(); ++q) {
    CHECK(c.switches.rows[q] == 0);
    CHECK(c.switches.cols[q] == 0);
  }

  Rng rng(7);
  CHECK(maxpool_forward(random_tensor({1, 16, 24, 24}, rng), Window{}).values.shape() ==
        Shape{1, 16, 12, 12});
  CHECK_THROWS_AS(maxpool_forward(Tensor<double>(1, 1, 5, 4), Window{}), ShapeError);
}

TEST_CASE("unpool examples and round trips") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const Window win{1 + rng.below(3), 1 + rng.below(3)};
    const Shape s{1 + rng.below(2), 1 + rng.below(3), win.h * (1 + rng.below(4)),
                  win.w * (1 + rng.below(4))};
    auto x = random_tensor(s, rng);
    auto p = maxpool_forward(x, win);

    // unpool(maxpool(x)) keeps every window maximum where it was
    auto u = unpool_forward(p.values, p.switches);
    CHECK(u.shape() == s);
    for (std::size_t q = 0; q < u.size(); ++q) CHECK((u[q] == 0.0 || u[q] == x[q]));
    double kept = 0.0;
    for (double v : u.data()) kept += v;
    double maxima = 0.0;
    for (double v : p.values.data()) maxima += v;
    CHECK(kept == doctest::Approx(maxima).epsilon(1e-12));

    // maxpool(unpool(y, s)) == (y, s) for positive y placed at random switches
    SwitchMap sw = p.switches;
    for (std::size_t q = 0; q < sw.rows.size(); ++q) {
      sw.rows[q] = static_cast<std::uint16_t>(rng.below(win.h));
      sw.cols[q] = static_cast<std::uint16_t>(rng.below(win.w));
    }
    auto y = random_tensor(p.values.shape(), rng, 0.01, 1.0);
    auto back = maxpool_forward(unpool_forward(y, sw), win);
    CHECK(back.values == y);
    CHECK(back.switches == sw);
  }
  auto zeros = unpool_forward(Tensor<double>(1, 1, 2, 2), maxpool_forward(Tensor<double>(1, 1, 4, 4), Window{}).switches);
  for (double v : zeros.data()) CHECK(v == 0.0);
}

TEST_CASE("unpool rejects corrupt switches") {
  auto p = maxpool_forward(Tensor<double>(1, 1, 4, 4), Window{});
  p.switches.rows[2] = 2;
  CHECK_THROWS_AS(unpool_forward(p.values, p.switches), ShapeError);
}

TEST_CASE("maxpool and unpool backward are adjoint gathers") {
  Rng rng(9);
  auto x = random_tensor({2, 3, 6, 4}, rng);
  auto p = maxpool_forward(x, Window{});
  auto g = random_tensor(p.values.shape(), rng);
  auto gx = maxpool_backward(g, p.switches);
  auto big = random_tensor(x.shape(), rng);
  CHECK(inner_product(gx, big) ==
        doctest::Approx(inner_product(g, unpool_backward(big, p.switches))).epsilon(1e-12));
}

// ---- activations ----

TEST_CASE("activation examples") {
  Tensor<double> z(1, 1, 1, 3);
  z[0] = 0.0, z[1] = -3.2, z[2] = 3.2;
  auto s = activation_forward(z, Activation::sigmoid);
  CHECK(s[0] == 0.5);
  auto r = activation_forward(z, Activation::relu);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 3.2);

  ActivationTape<double> tape;
  activation_forward(z, Activation::sigmoid, tape);
  auto g = activation_backward(Tensor<double>(z.shape(), 1.0), tape);
  CHECK(g[0] == 0.25);
}

TEST_CASE("activation backward matches finite differences") {
  Rng rng(10);
  for (Activation kind : {Activation::sigmoid, Activation::relu, Activation::identity}) {
    auto z = random_tensor({2, 3, 4, 4}, rng, -3.0, 3.0);
    for (double& v : z.data())
      if (std::abs(v) < 1e-3) v = 0.5;  // stay off the relu kink
    ActivationTape<double> tape;
    activation_forward(z, kind, tape);
    auto g = activation_backward(Tensor<double>(z.shape(), 1.0), tape);
    // elementwise op: difference each element on its own
    const double step = 1e-5;
    auto up = z, down = z;
    for (double& v : up.data()) v += step;
    for (double& v : down.data()) v -= step;
    const auto fu = activation_forward(up, kind), fd = activation_forward(down, kind);
    for (std::size_t q = 0; q < z.size(); ++q)
      CHECK(testing::rel_error(g[q], (fu[q] - fd[q]) / (2 * step)) < 1e-8);
  }
}

// ---- normalization ----

TEST_CASE("normalize_across_maps examples") {
  Tensor<double> h(1, 4, 1, 1);
  h[0] = 3, h[1] = 4;
  NormTape<double> tape;
  auto out = normalize_across_maps(h, 1e-8, tape);
  CHECK(out[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(out[2] == 0.0);

  Tensor<double> unit(1, 2, 1, 1);
  unit[0] = 0.6, unit[1] = 0.8;
  NormTape<double> t2;
  auto same = normalize_across_maps(unit, 1e-8, t2);
  CHECK(same[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(same[1] == doctest::Approx(0.8).epsilon(1e-15));

  NormTape<double> t3;
  const auto zero = normalize_across_maps(Tensor<double>(1, 5, 2, 2), 1e-8, t3);
  for (double v : zero.data()) CHECK(v == 0.0);
}

TEST_CASE("normalize_per_map examples") {
  Tensor<double> h(1, 1, 2, 2);
  h[0] = 3, h[3] = 4;
  NormTape<double> tape;
  auto out = normalize_per_map(h, 1e-8, tape);
  CHECK(out[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(out[1] == 0.0);
  CHECK(out[3] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(inner_product(out, out) == doctest::Approx(1.0).epsilon(1e-15));

  NormTape<double> t2;
  const auto zero = normalize_per_map(Tensor<double>(2, 3, 4, 4), 1e-8, t2);
  for (double v : zero.data()) CHECK(v == 0.0);
}

TEST_CASE("normalized maps obey Cauchy-Schwarz l1 bounds") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t hh = 1 + rng.below(8), ww = 1 + rng.below(8);
    NormTape<double> tape;
    auto out = normalize_per_map(random_tensor({2, 3, hh, ww}, rng), 1e-8, tape);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t k = 0; k < 3; ++k) {
        double l1 = 0.0;
        for (double v : out.map(b, k)) l1 += std::abs(v);
        CHECK(l1 >= 1.0 - 1e-12);
        CHECK(l1 <= std::sqrt(double(hh * ww)) + 1e-12);
      }
  }
}

TEST_CASE("normalize_backward examples") {
  // one across-maps group v = (2, 0) with norm 2
  Tensor<double> v(1, 2, 1, 1);
  v[0] = 2.0;
  NormTape<double> tape;
  normalize_across_maps(v, 1e-8, tape);
  Tensor<double> radial(v.shape());
  radial[0] = 5.0;
  NormTape<double> tape2 = tape;
  auto g0 = normalize_backward(radial, tape);
  CHECK(g0[0] == 0.0);
  CHECK(g0[1] == 0.0);

  Tensor<double> tangential(v.shape());
  tangential[1] = 3.0;
  auto g1 = normalize_backward(tangential, tape2);
  CHECK(g1[0] == 0.0);
  CHECK(g1[1] == 1.5);

  // below eps the group was scaled by 1/eps
  NormTape<double> tz;
  normalize_per_map(Tensor<double>(1, 1, 2, 2), 1e-8, tz);
  auto gz = normalize_backward(Tensor<double>({1, 1, 2, 2}, 1.0), tz);
  for (double x : gz.data()) CHECK(x == doctest::Approx(1e8));
}

TEST_CASE("normalize_backward matches finite differences") {
  Rng rng(12);
  for (std::size_t group : {4u, 16u, 64u}) {
    // across maps: K = group at a 2x3 grid; per map: 1 x group maps
    {
      auto h = random_tensor({2, group, 2, 3}, rng);
      auto w = random_tensor(h.shape(), rng);
      NormTape<double> tape;
      normalize_across_maps(h, 1e-8, tape);
      auto g = normalize_backward(w, tape);
      auto loss = [&] {
        NormTape<double> t;
        return inner_product(normalize_across_maps(h, 1e-8, t), w);
      };
      CHECK(testing::max_rel_error(g, testing::numeric_gradient(h, loss)) < 1e-6);
    }
    {
      auto h = random_tensor({2, 3, 1, group}, rng);
      auto w = random_tensor(h.shape(), rng);
      NormTape<double> tape;
      normalize_per_map(h, 1e-8, tape);
      auto g = normalize_backward(w, tape);
      auto loss = [&] {
        NormTape<double> t;
        return inner_product(normalize_per_map(h, 1e-8, t), w);
      };
      CHECK(testing::max_rel_error(g, testing::numeric_gradient(h, loss)) < 1e-6);
    }
  }
}

TEST_CASE("only the last normalization's unit norms survive") {
  Rng rng(13);
  auto h = random_tensor({1, 4, 3, 3}, rng, 0.1, 1.0);
  NormTape<double> a, b;
  auto across = normalize_across_maps(h, 1e-8, a);
  auto both = normalize_per_map(across, 1e-8, b);
  for (std::size_t k = 0; k < 4; ++k) {
    double s = 0.0;
    for (double v : both.map(0, k)) s += v * v;
    CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-12));
  }
  double site = 0.0;
  for (std::size_t k = 0; k < 4; ++k) site += both.at(0, k, 0, 0) * both.at(0, k, 0, 0);
  CHECK(std::abs(std::sqrt(site) - 1.0) > 1e-6);
}

// ---- full convolution ----

TEST_CASE("conv_full_forward examples") {
  Rng rng(14);
  ConvParams<double> p{random_tensor({16, 1, 5, 5}, rng), {0.0}};
  CHECK(conv_full_forward(random_tensor({1, 16, 24, 24}, rng), p).shape() == Shape{1, 1, 28, 28});

  ConvParams<double> q{random_tensor({4, 3, 3, 3}, rng), {0.5, -1.0, 2.0}};
  auto out = conv_full_forward(Tensor<double>(2, 4, 5, 5), q);
  CHECK(out.shape() == Shape{2, 3, 7, 7});
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < 3; ++c)
      for (double v : out.map(b, c)) CHECK(v == q.bias[c]);

  CHECK_THROWS_AS(conv_full_forward(Tensor<double>(1, 3, 5, 5), q), ShapeError);
}

TEST_CASE("valid and full convolution are adjoint") {
  Rng rng(15);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t c = 1 + rng.below(3), k = 1 + rng.below(4);
    const std::size_t kh = 1 + rng.below(5), kw = 1 + rng.below(5);
    auto x = random_tensor({1 + rng.below(2), c, kh + rng.below(8), kw + rng.below(8)}, rng);
    auto w = random_tensor({k, c, kh, kw}, rng);
    auto y = random_tensor({x.shape().n, k, x.shape().h - kh + 1, x.shape().w - kw + 1}, rng);
    const double lhs = inner_product(correlate_valid(x, w), y);
    const double rhs = inner_product(x, correlate_valid_transpose(y, w));
    CHECK(testing::rel_error(lhs, rhs) < 1e-10);
  }
}

TEST_CASE("conv_full_backward matches finite differences") {
  Rng rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    auto h = random_tensor({2, 3, 3, 4}, rng);
    auto p = random_params({3, 2, 2, 3}, 2, rng);
    ConvTape<double> tape;
    auto y = conv_full_forward(h, p, tape);
    auto w = random_tensor(y.shape(), rng);
    auto g = conv_full_backward(w, tape);
    auto loss = [&] { return inner_product(conv_full_forward(h, p), w); };
    CHECK(testing::max_rel_error(g.input, testing::numeric_gradient(h, loss)) < 1e-6);
    CHECK(testing::max_rel_error(g.weights, testing::numeric_gradient(p.weights, loss)) < 1e-6);
    for (std::size_t c = 0; c < 2; ++c) {
      double expect = 0.0;
      for (std::size_t b = 0; b < 2; ++b)
        for (double v : w.map(b, c)) expect += v;
      CHECK(g.bias[c] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("fp32 kernels agree with fp64") {
  Rng rng(17);
  auto x = random_tensor({1, 2, 8, 8}, rng);
  auto p = random_params({3, 2, 3, 3}, 3, rng);
  Tensor<float> xf(x.shape());
  for (std::size_t q = 0; q < x.size(); ++q) xf[q] = static_cast<float>(x[q]);
  ConvParams<float> pf{Tensor<float>(p.weights.shape()), {}};
  for (std::size_t q = 0; q < p.weights.size(); ++q) pf.weights[q] = static_cast<float>(p.weights[q]);
  for (double b : p.bias) pf.bias.push_back(static_cast<float>(b));
  auto y = conv_valid_forward(x, p);
  auto yf = conv_valid_forward(xf, pf);
  for (std::size_t q = 0; q < y.size(); ++q) CHECK(yf[q] == doctest::Approx(y[q]).epsilon(1e-5));
}
