#include "subsample/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include <boost/math/special_functions/gamma.hpp>

namespace subsample::oracle {

namespace {

void check_size(std::size_t n) {
  if (n > kMaxExactRecords) throw CapacityError("exact enumeration supports n <= 12, got " + std::to_string(n));
}

}  // namespace

double ExactLaw::hit_probability(std::uint32_t subset) const {
  double miss = 0.0;
  for (std::size_t mask = 0; mask < mass.size(); ++mask)
    if ((mask & subset) == 0) miss += mass[mask];
  return 1.0 - miss;
}

ExactLaw enumerate_exact(std::span<const double> probs) {
  check_size(probs.size());
  for (double p : probs) checked_probability(p);
  ExactLaw law;
  law.n = static_cast<unsigned>(probs.size());
  law.mass.resize(std::size_t{1} << law.n);
  for (std::size_t mask = 0; mask < law.mass.size(); ++mask) {
    double m = 1.0;
    for (unsigned v = 0; v < law.n; ++v) m *= (mask >> v & 1) ? probs[v] : 1.0 - probs[v];
    law.mass[mask] = m;
  }
  return law;
}

ExactLaw enumerate_inclusion_exclusion(std::span<const double> probs) {
  check_size(probs.size());
  for (double p : probs) checked_probability(p);
  ExactLaw law;
  law.n = static_cast<unsigned>(probs.size());
  const std::size_t cells = std::size_t{1} << law.n;
  // f(U) = P(U subset of X), built one record at a time.
  std::vector<double> f(cells, 1.0);
  for (std::size_t mask = 1; mask < cells; ++mask) {
    const unsigned v = static_cast<unsigned>(std::countr_zero(mask));
    f[mask] = f[mask & (mask - 1)] * probs[v];
  }
  // P(X = T) = sum_{U >= T} (-1)^{|U \ T|} f(U): superset Moebius transform.
  for (unsigned v = 0; v < law.n; ++v)
    for (std::size_t mask = 0; mask < cells; ++mask)
      if (!(mask >> v & 1)) f[mask] -= f[mask | (std::size_t{1} << v)];
  law.mass = std::move(f);
  return law;
}

double at_least_one(std::span<const double> probs) {
  double log_miss = 0.0;
  for (double p : probs) {
    checked_probability(p);
    if (p == 1.0) return 1.0;
    log_miss += std::log1p(-p);
  }
  return -std::expm1(log_miss);
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error("tv_distance: support mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

double tv_distance(const ExactLaw& law, const Frequency& freq) {
  if (freq.counts.size() != law.mass.size()) throw Error("tv_distance: support mismatch");
  std::vector<double> emp(freq.counts.size());
  for (std::size_t i = 0; i < emp.size(); ++i)
    emp[i] = static_cast<double>(freq.counts[i]) / static_cast<double>(freq.trials);
  return tv_distance(law.mass, emp);
}

ChiSquare chi_square(std::span<const double> expected_prob, std::span<const std::uint64_t> counts) {
  if (expected_prob.size() != counts.size()) throw Error("chi_square: support mismatch");
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  ChiSquare r;
  if (total == 0) return r;
  const double N = static_cast<double>(total);

  std::vector<std::pair<double, double>> cells;  // (expected, observed)
  double pooled_e = 0.0, pooled_o = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = expected_prob[i] * N;
    const double o = static_cast<double>(counts[i]);
    if (e <= 0.0) {
      if (o > 0.0) {
        r.statistic = INFINITY;
        r.dof = 1;
        r.p_value = 0.0;
        return r;
      }
      continue;
    }
    if (e < 5.0) {
      pooled_e += e;
      pooled_o += o;
    } else {
      cells.emplace_back(e, o);
    }
  }
  if (pooled_e > 0.0) {
    if (pooled_e >= 5.0 || cells.empty()) {
      cells.emplace_back(pooled_e, pooled_o);
    } else {
      auto smallest = std::min_element(cells.begin(), cells.end());
      smallest->first += pooled_e;
      smallest->second += pooled_o;
    }
  }
  if (cells.size() < 2) return r;
  for (const auto& [e, o] : cells) r.statistic += (o - e) * (o - e) / e;
  r.dof = static_cast<unsigned>(cells.size() - 1);
  r.p_value = boost::math::gamma_q(r.dof / 2.0, r.statistic / 2.0);
  return r;
}

double chi_square_p(const ExactLaw& law, const Frequency& freq) {
  if (freq.counts.size() != law.mass.size()) throw Error("chi_square_p: support mismatch");
  return chi_square(law.mass, freq.counts).p_value;
}

double binomial_z(std::uint64_t hits, std::uint64_t trials, double p) {
  const double expected = p * static_cast<double>(trials);
  const double diff = static_cast<double>(hits) - expected;
  const double var = static_cast<double>(trials) * p * (1.0 - p);
  if (var <= 0.0) return diff == 0.0 ? 0.0 : INFINITY;
  return diff / std::sqrt(var);
}

double MarginalReport::fraction_within(double z_limit) const {
  if (rows.empty()) return 1.0;
  std::size_t ok = 0;
  for (const auto& r : rows) ok += std::abs(r.z) <= z_limit;
  return static_cast<double>(ok) / static_cast<double>(rows.size());
}

double MarginalReport::max_abs_z() const {
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, std::abs(r.z));
  return m;
}

MarginalReport marginal_report(std::span<const std::uint64_t> hits, std::span<const double> probs,
                               std::uint64_t trials) {
  if (hits.size() != probs.size()) throw Error("marginal_report: size mismatch");
  MarginalReport rep;
  rep.rows.reserve(hits.size());
  for (std::size_t i = 0; i < hits.size(); ++i) {
    MarginalRow row;
    row.p = probs[i];
    row.freq = trials ? static_cast<double>(hits[i]) / static_cast<double>(trials) : 0.0;
    row.z = binomial_z(hits[i], trials, probs[i]);
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace subsample::oracle
