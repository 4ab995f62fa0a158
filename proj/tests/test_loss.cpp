#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sscae/layers.hpp"
#include "sscae/loss.hpp"
#include "test_util.hpp"

using namespace sscae;
using testing::random_tensor;

TEST_CASE("recon_loss examples") {
  Rng rng(1);
  auto x = random_tensor({3, 1, 4, 4}, rng, 0.0, 1.0);
  auto same = recon_loss(x, x);
  CHECK(same.value == 0.0);
  for (double g : same.grad.data()) CHECK(g == 0.0);

  Tensor<double> y(1, 1, 1, 4);
  y[0] = 3, y[1] = 4;
  CHECK(recon_loss(y, Tensor<double>(y.shape())).value == 5.0);
  CHECK(recon_loss(y, Tensor<double>(y.shape()), ReconNorm::squared_l2).value == 25.0);

  CHECK_THROWS_AS(recon_loss(y, Tensor<double>(1, 1, 2, 2)), ShapeError);
}

TEST_CASE("recon_loss averages per-item norms over the batch") {
  Tensor<double> x(2, 1, 1, 2), r(2, 1, 1, 2);
  x[0] = 3, x[1] = 4;  // item 0 distance 5
  x[2] = 1;            // item 1 distance 1
  CHECK(recon_loss(x, r).value == 3.0);
}

TEST_CASE("recon_loss gradients match finite differences") {
  Rng rng(2);
  for (ReconNorm norm : {ReconNorm::l2, ReconNorm::squared_l2})
    for (int trial = 0; trial < 10; ++trial) {
      auto x = random_tensor({3, 2, 3, 3}, rng, 0.0, 1.0);
      auto r = random_tensor(x.shape(), rng, 0.0, 1.0);
      auto analytic = recon_loss(x, r, norm).grad;
      auto numeric = testing::numeric_gradient(r, [&] { return recon_loss(x, r, norm).value; });
      CHECK(testing::max_rel_error(analytic, numeric) < 1e-6);
    }
}

TEST_CASE("sparsity_loss examples") {
  CHECK(sparsity_loss(Tensor<double>(2, 3, 4, 4)).value == 0.0);

  Tensor<double> m(1, 1, 2, 2);
  m[0] = 0.6, m[3] = 0.8;
  auto s = sparsity_loss(m);
  CHECK(s.value == doctest::Approx(1.4).epsilon(1e-15));
  CHECK(s.grad[0] == 1.0);
  CHECK(s.grad[1] == 0.0);
  CHECK(s.grad[3] == 1.0);
}

TEST_CASE("sparsity_loss gradient is sign/(m n) and zero at zeros") {
  Rng rng(3);
  auto h = random_tensor({2, 4, 3, 3}, rng);
  for (std::size_t q = 0; q < h.size(); q += 5) h[q] = 0.0;
  auto s = sparsity_loss(h);
  for (std::size_t q = 0; q < h.size(); ++q) {
    const double expect = h[q] > 0 ? 1.0 / 8 : h[q] < 0 ? -1.0 / 8 : 0.0;
    CHECK(s.grad[q] == expect);
  }
  // away from zeros the loss is linear, so central differences are exact
  for (std::size_t q = 0; q < h.size(); ++q)
    if (h[q] == 0.0) h[q] = 0.3;
  auto s2 = sparsity_loss(h);
  auto numeric = testing::numeric_gradient(h, [&] { return sparsity_loss(h).value; });
  CHECK(testing::max_rel_error(s2.grad, numeric) < 1e-6);
}

TEST_CASE("sparsity of unit-norm maps lies in [1, sqrt(H W)]") {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t hh = 1 + rng.below(6), ww = 1 + rng.below(6);
    NormTape<double> tape;
    auto maps = normalize_per_map(random_tensor({3, 5, hh, ww}, rng), 1e-8, tape);
    const double v = sparsity_loss(maps).value;
    CHECK(v >= 1.0 - 1e-12);
    CHECK(v <= std::sqrt(double(hh * ww)) + 1e-12);
  }
}

TEST_CASE("total_loss") {
  CHECK(total_loss(2.0, 1.4, 0.0) == 2.0);
  CHECK(total_loss(2.0, 1.4, 0.1) == doctest::Approx(2.14).epsilon(1e-15));
  double prev = total_loss(1.0, 0.5, 0.0);
  for (double lambda = 0.1; lambda < 2.0; lambda += 0.1) {
    const double t = total_loss(1.0, 0.5, lambda);
    CHECK(t >= prev);
    prev = t;
  }
}
