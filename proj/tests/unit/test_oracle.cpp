#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "subsample/oracle.hpp"
#include "subsample/rng.hpp"

using namespace subsample;

TEST_CASE("exact law of two records") {
  const std::vector<double> p{0.5, 0.25};
  const auto law = oracle::enumerate_exact(p);
  REQUIRE(law.mass.size() == 4);
  CHECK(law.mass[0] == doctest::Approx(0.375));
  CHECK(law.mass[1] == doctest::Approx(0.375));
  CHECK(law.mass[2] == doctest::Approx(0.125));
  CHECK(law.mass[3] == doctest::Approx(0.125));
  CHECK(law.hit_probability(0b11) == doctest::Approx(0.625));
  CHECK(oracle::at_least_one(p) == doctest::Approx(0.625));
  CHECK(oracle::at_least_one(std::vector<double>{0.2, 1.0}) == 1.0);
  CHECK(oracle::at_least_one(std::vector<double>{}) == 0.0);
  CHECK_THROWS_AS(oracle::enumerate_exact(std::vector<double>(13, 0.5)), CapacityError);
  CHECK_THROWS_AS(oracle::enumerate_exact(std::vector<double>{1.2}), InvalidProbability);
}

TEST_CASE("inclusion-exclusion agrees with direct enumeration") {
  Rng gen(17);
  for (int inst = 0; inst < 100; ++inst) {
    const unsigned n = 1 + static_cast<unsigned>(uniform_int(gen, 10));
    std::vector<double> p(n);
    for (auto& x : p) {
      const double u = gen.uniform01();
      x = u < 0.1 ? 0.0 : u > 0.9 ? 1.0 : gen.uniform01();
    }
    const auto a = oracle::enumerate_exact(p);
    const auto b = oracle::enumerate_inclusion_exclusion(p);
    double worst = 0.0;
    for (std::size_t m = 0; m < a.mass.size(); ++m) worst = std::max(worst, std::abs(a.mass[m] - b.mass[m]));
    CHECK(worst < 1e-12);
    CHECK(std::accumulate(a.mass.begin(), a.mass.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("chi-square against closed-form tail") {
  const std::vector<double> e(4, 0.25);
  const std::vector<std::uint64_t> c{10, 20, 30, 40};
  const auto r = oracle::chi_square(e, c);
  CHECK(r.statistic == doctest::Approx(20.0));
  CHECK(r.dof == 3);
  // Survival function of chi-square(3) at 20.
  CHECK(r.p_value == doctest::Approx(0.00016974243555282632).epsilon(1e-9));

  // Cells expected below 5 are pooled.
  const std::vector<double> e2{0.5, 0.49, 0.005, 0.005};
  const std::vector<std::uint64_t> c2{50, 48, 1, 1};
  const auto r2 = oracle::chi_square(e2, c2);
  CHECK(r2.dof == 1);

  // An observation in a zero-probability cell is an outright rejection.
  const std::vector<double> e3{1.0, 0.0};
  const std::vector<std::uint64_t> c3{99, 1};
  CHECK(oracle::chi_square(e3, c3).p_value == 0.0);
}

TEST_CASE("chi-square is calibrated on exact draws") {
  // Draw from the exact law by inversion; p-values should rarely fall below 1e-4.
  Rng gen(23);
  int ok = 0;
  for (int run = 0; run < 100; ++run) {
    std::vector<double> p(4);
    for (auto& x : p) x = gen.uniform01();
    const auto law = oracle::enumerate_exact(p);
    std::vector<double> cdf(law.mass.size());
    std::partial_sum(law.mass.begin(), law.mass.end(), cdf.begin());
    const auto freq = oracle::empirical_law(4, 20'000, [&] {
      const double u = gen.uniform01() * cdf.back();
      return static_cast<std::uint32_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    });
    ok += oracle::chi_square_p(law, freq) > 1e-4;
    CHECK(oracle::tv_distance(law, freq) < 0.02);
  }
  CHECK(ok >= 99);
}

TEST_CASE("total variation edge cases") {
  const std::vector<double> a{0.5, 0.5}, b{1.0, 0.0}, c{0.0, 1.0};
  CHECK(oracle::tv_distance(a, a) == 0.0);
  CHECK(oracle::tv_distance(b, c) == 1.0);
  CHECK(oracle::tv_distance(a, b) == doctest::Approx(0.5));
  CHECK_THROWS_AS(oracle::tv_distance(a, std::vector<double>{1.0}), Error);

  const auto law = oracle::enumerate_exact(std::vector<double>{1.0});
  oracle::Frequency f{10, {0, 10}};
  CHECK(oracle::tv_distance(law, f) == 0.0);
  oracle::Frequency bad{10, {10}};
  CHECK_THROWS_AS(oracle::tv_distance(law, bad), Error);
}

TEST_CASE("binomial z and marginal report") {
  CHECK(oracle::binomial_z(50, 100, 0.5) == 0.0);
  CHECK(oracle::binomial_z(60, 100, 0.5) == doctest::Approx(2.0));
  CHECK(oracle::binomial_z(0, 100, 0.0) == 0.0);
  CHECK(std::isinf(oracle::binomial_z(1, 100, 0.0)));
  CHECK(oracle::binomial_z(100, 100, 1.0) == 0.0);
  const std::vector<std::uint64_t> hits{50, 60, 0};
  const std::vector<double> p{0.5, 0.5, 0.0};
  const auto rep = oracle::marginal_report(hits, p, 100);
  CHECK(rep.max_abs_z() == doctest::Approx(2.0));
  CHECK(rep.fraction_within(1.0) == doctest::Approx(2.0 / 3.0));
}
