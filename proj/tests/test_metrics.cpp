#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "sscae/layers.hpp"
#include "sscae/metrics.hpp"
#include "test_util.hpp"

using namespace sscae;
using testing::random_tensor;

TEST_CASE("delta_filter_score examples") {
  std::vector<double> one_hot(25, 0.0);
  one_hot[12] = -2.0;
  CHECK(delta_filter_score(one_hot) == 1.0);

  std::vector<double> flat(25, 0.3);
  CHECK(delta_filter_score(flat) == doctest::Approx(0.04).epsilon(1e-14));

  std::vector<double> peaked(25, 0.1);
  peaked[0] = 0.9;
  double energy = 0.0;
  for (double v : peaked) energy += v * v;
  CHECK(delta_filter_score(peaked) == doctest::Approx(0.81 / energy).epsilon(1e-14));
  CHECK(delta_filter_score(peaked) == doctest::Approx(0.81 / 1.05).epsilon(1e-14));

  CHECK(delta_filter_score(std::vector<double>(9, 0.0)) == 1.0);
}

TEST_CASE("delta_filter_score is scale invariant") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto w = random_tensor({1, 3, 5, 5}, rng);
    const double s = delta_filter_score(w.data());
    for (double alpha : {-3.0, 0.01, 7.5}) {
      auto scaled = w;
      scaled *= alpha;
      CHECK(delta_filter_score(scaled.data()) == doctest::Approx(s).epsilon(1e-12));
    }
  }
}

TEST_CASE("delta_filter_count uses the threshold") {
  Tensor<double> bank(3, 1, 5, 5);
  bank.at(0, 0, 2, 2) = 1.0;             // delta
  for (std::size_t q = 25; q < 50; ++q)  // flat
    bank[q] = 0.5;
  // filter 2 is zero: counts as dead
  CHECK(delta_filter_count(bank) == 2);
  CHECK(delta_filter_count(bank, 0.03) == 3);
}

TEST_CASE("hoyer_sparseness examples") {
  std::vector<double> one_hot(16, 0.0);
  one_hot[5] = 3.0;
  CHECK(*hoyer_sparseness(one_hot) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(*hoyer_sparseness(std::vector<double>(16, -0.2)) == doctest::Approx(0.0));
  CHECK(*hoyer_sparseness(std::vector<double>{3, 4, 0, 0}) == doctest::Approx(0.6).epsilon(1e-14));
  CHECK_FALSE(hoyer_sparseness(std::vector<double>(16, 0.0)).has_value());
  CHECK_FALSE(hoyer_sparseness(std::vector<double>{2.0}).has_value());
}

TEST_CASE("hoyer_sparseness is scale and permutation invariant") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto v = random_tensor({1, 1, 1, 30}, rng);
    std::vector<double> a(v.data().begin(), v.data().end());
    const double h = *hoyer_sparseness(a);
    CHECK(h >= 0.0);
    CHECK(h <= 1.0);
    auto b = a;
    for (double& x : b) x *= -4.5;
    std::reverse(b.begin(), b.end());
    std::rotate(b.begin(), b.begin() + 7, b.end());
    CHECK(*hoyer_sparseness(b) == doctest::Approx(h).epsilon(1e-12));
  }
}

TEST_CASE("on unit-norm maps Hoyer is a function of the l1 norm") {
  Rng rng(3);
  NormTape<double> tape;
  auto maps = normalize_per_map(random_tensor({2, 4, 6, 5}, rng), 1e-8, tape);
  const double root = std::sqrt(30.0);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t k = 0; k < 4; ++k) {
      auto m = maps.map(b, k);
      double l1 = 0.0;
      for (double v : m) l1 += std::abs(v);
      CHECK(*hoyer_sparseness(std::span<const double>(m.data(), m.size())) ==
            doctest::Approx((root - l1) / (root - 1.0)).epsilon(1e-12));
    }
}

TEST_CASE("activity_uniformity examples") {
  Tensor<double> equal(1, 2, 1, 3);
  equal.at(0, 0, 0, 0) = 1.0;
  equal.at(0, 1, 0, 1) = 1.0;
  equal.at(0, 0, 0, 2) = 0.6;
  equal.at(0, 1, 0, 2) = 0.8;
  CHECK(*activity_uniformity(equal) == doctest::Approx(0.0).epsilon(1e-14));

  Tensor<double> mixed(1, 1, 1, 5);
  mixed[0] = 1, mixed[1] = 1, mixed[2] = -1, mixed[3] = 3;  // site 4 inactive
  const double mean = 1.5;
  const double sd = std::sqrt((3 * 0.25 + 2.25) / 4.0);
  CHECK(*activity_uniformity(mixed) == doctest::Approx(sd / mean).epsilon(1e-12));
  CHECK(*activity_uniformity(mixed) == doctest::Approx(0.57735).epsilon(1e-5));

  Tensor<double> single(1, 3, 2, 2);
  single.at(0, 1, 1, 0) = 0.4;
  CHECK(*activity_uniformity(single) == 0.0);
  CHECK_FALSE(activity_uniformity(Tensor<double>(1, 3, 2, 2)).has_value());
}

TEST_CASE("MapStatistics accumulates over batches") {
  Rng rng(4);
  auto a = random_tensor({2, 3, 4, 4}, rng);
  auto b = random_tensor({1, 3, 4, 4}, rng);
  MapStatistics split, whole;
  split.add(a);
  split.add(b);
  Tensor<double> ab(3, 3, 4, 4);
  std::copy(a.data().begin(), a.data().end(), ab.data().begin());
  std::copy(b.data().begin(), b.data().end(), ab.data().begin() + a.size());
  whole.add(ab);
  CHECK(*split.mean_hoyer() == doctest::Approx(*whole.mean_hoyer()).epsilon(1e-12));
  CHECK(*split.population_sparsity() == doctest::Approx(*whole.population_sparsity()).epsilon(1e-12));
  CHECK(*split.activity_uniformity() == doctest::Approx(*whole.activity_uniformity()).epsilon(1e-12));
  CHECK(*whole.activity_uniformity() == doctest::Approx(*activity_uniformity(ab)).epsilon(1e-10));

  double sum = 0.0;
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t k = 0; k < 3; ++k) {
      auto m = ab.map(n, k);
      sum += *hoyer_sparseness(std::span<const double>(m.data(), m.size()));
    }
  CHECK(*whole.mean_hoyer() == doctest::Approx(sum / 9).epsilon(1e-12));

  MapStatistics empty;
  empty.add(Tensor<double>(1, 2, 3, 3));
  CHECK_FALSE(empty.mean_hoyer().has_value());
  CHECK_FALSE(empty.population_sparsity().has_value());
  CHECK_FALSE(empty.activity_uniformity().has_value());
}

TEST_CASE("csv writing and parse-back") {
  auto dir = testing::temp_dir("metrics_csv");
  write_csv({}, dir / "empty.csv");
  CHECK(read_csv(dir / "empty.csv").empty());
  {
    std::ifstream in(dir / "empty.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == csv_header());
    CHECK_FALSE(std::getline(in, line));
  }

  std::vector<TrainReport> reports(2);
  reports[0] = {1, 32, 2.25, 1.0 / 3.0, 2.25 + 0.1 / 3.0, 2, 0.123456789012345678, std::nullopt, 0.5, 1.75e-3};
  reports[1] = {2, 64, 1e-300, 12.0, 0.1 + 0.2, 0, std::nullopt, 0.9, std::nullopt, 123.0};
  write_csv(reports, dir / "two.csv");
  std::ifstream in(dir / "two.csv");
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == 3);
  CHECK(read_csv(dir / "two.csv") == reports);
  CHECK(parse_csv_row(to_csv_row(reports[1])) == reports[1]);
  CHECK(csv_header() ==
        "epoch,iterations,l2rec,l1sp,total,delta_filter_count,mean_hoyer,population_sparsity,"
        "activity_uniformity,wall_seconds");
}
