#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "subsample/dynamic_sampler.hpp"

namespace subsample::cli {

struct Record {
  double key = 0.0;
  double p = 0.0;
};

// Probability profiles for generated datasets: uniform, pareto, dyadic,
// constant (every p = param), mixed. Keys are 0..n-1.
std::vector<Record> generate(const std::string& profile, std::size_t n, std::uint64_t seed, double param = 1.0);
bool known_profile(const std::string& profile);

// Scales probabilities so they sum to `mu` (capped at 1 per record).
void scale_to_mu(std::vector<Record>& recs, double mu);
double total_mu(const std::vector<Record>& recs);
std::vector<Slot<std::uint64_t>> integer_slots(const std::vector<Record>& recs);

struct QueryCost {
  std::size_t n = 0;
  double mu = 0.0;
  std::uint64_t queries = 0;
  double mean_touched = 0.0;
  double mean_output = 0.0;
  double queries_per_s = 0.0;
};

// In-memory sampler; touched records counted by the sampler itself.
QueryCost measure_query_cost(const std::vector<Record>& recs, std::uint64_t queries, std::uint64_t seed);

struct UpdateCost {
  std::size_t n = 0;
  std::uint64_t ops = 0;
  double mean_ns = 0.0;
};

// Random update/insert/delete mix at a stable size n (uniform p in [0,1)).
UpdateCost measure_update_cost(std::size_t n, std::uint64_t ops, std::uint64_t seed);

struct EmCost {
  std::string engine;  // naive | em
  std::size_t n = 0;
  std::size_t B = 0;
  std::size_t M = 0;
  double mu = 0.0;
  std::uint64_t queries = 0;
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;
  std::uint64_t build_ios = 0;
  std::size_t em_levels = 0;
  double io_per_query = 0.0;  // data I/Os; output blocks excluded
  double mean_output = 0.0;
};

EmCost measure_em(const std::vector<Record>& recs, std::size_t B, std::size_t M, std::uint64_t queries,
                  std::uint64_t warmup, std::uint64_t seed, bool naive);

struct RangeSample {
  double a = 0.0;
  double b = 0.0;
  double mu_range = 0.0;
  std::size_t work = 0;
};

struct RangeCost {
  std::size_t n = 0;
  std::size_t s = 0;
  std::size_t chunks = 0;
  std::vector<RangeSample> samples;
};

// Random ranges over a chunked structure (or the treap when `baseline`).
RangeCost measure_range_cost(const std::vector<Record>& recs, std::uint64_t queries, std::uint64_t seed,
                             bool baseline = false);

// Mean ns per insert/delete/update on a chunked structure of stable size n.
UpdateCost measure_range_update_cost(std::size_t n, std::uint64_t ops, std::uint64_t seed);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace subsample::cli
