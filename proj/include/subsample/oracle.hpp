#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "subsample/errors.hpp"

namespace subsample::oracle {

inline constexpr unsigned kMaxExactRecords = 12;

// Law of an independent subset draw over n <= 12 records, indexed by bitmask
// (bit v set = record v included).
struct ExactLaw {
  unsigned n = 0;
  std::vector<double> mass;

  // 1 - prod_{v in subset}(1 - p_v): chance that a draw hits the subset.
  double hit_probability(std::uint32_t subset) const;
};

ExactLaw enumerate_exact(std::span<const double> probs);
// Same law by Moebius inversion of P(T subset of X) = prod_T p.
ExactLaw enumerate_inclusion_exclusion(std::span<const double> probs);

// 1 - prod(1 - p) over the given probabilities.
double at_least_one(std::span<const double> probs);

struct Frequency {
  std::uint64_t trials = 0;
  std::vector<std::uint64_t> counts;  // by bitmask
};

// `draw` returns one subset bitmask per call.
template <class Draw>
Frequency empirical_law(unsigned n, std::uint64_t trials, Draw&& draw) {
  if (n > kMaxExactRecords) throw CapacityError("joint law needs n <= 12");
  Frequency f;
  if (trials == 0) return f;
  f.trials = trials;
  f.counts.assign(std::size_t{1} << n, 0);
  for (std::uint64_t t = 0; t < trials; ++t) ++f.counts[draw()];
  return f;
}

double tv_distance(std::span<const double> p, std::span<const double> q);
double tv_distance(const ExactLaw& law, const Frequency& freq);

struct ChiSquare {
  double statistic = 0.0;
  unsigned dof = 0;
  double p_value = 1.0;
};

// Pearson test; cells expected to hold fewer than 5 observations are pooled.
ChiSquare chi_square(std::span<const double> expected_prob, std::span<const std::uint64_t> counts);
double chi_square_p(const ExactLaw& law, const Frequency& freq);

double binomial_z(std::uint64_t hits, std::uint64_t trials, double p);

struct MarginalRow {
  double freq = 0.0;
  double p = 0.0;
  double z = 0.0;
};

struct MarginalReport {
  std::vector<MarginalRow> rows;
  double fraction_within(double z_limit) const;
  double max_abs_z() const;
};

MarginalReport marginal_report(std::span<const std::uint64_t> hits, std::span<const double> probs,
                               std::uint64_t trials);

}  // namespace subsample::oracle
