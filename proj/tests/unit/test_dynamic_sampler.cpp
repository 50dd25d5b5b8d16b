#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "subsample/dynamic_sampler.hpp"
#include "subsample/oracle.hpp"

using namespace subsample;

namespace {

std::vector<Slot<std::uint64_t>> make_records(const std::vector<double>& p) {
  std::vector<Slot<std::uint64_t>> r;
  for (std::size_t i = 0; i < p.size(); ++i) r.push_back({i, p[i]});
  return r;
}

template <class S>
oracle::Frequency joint(S& s, unsigned n, std::uint64_t trials, Rng& r) {
  std::vector<std::uint64_t> out;
  return oracle::empirical_law(n, trials, [&] {
    out.clear();
    s.query(r, out);
    std::uint32_t mask = 0;
    for (auto k : out) mask |= 1u << k;
    return mask;
  });
}

}  // namespace

TEST_CASE("bucket_of") {
  CHECK(bucket_of(0.3, 16) == 2);
  CHECK(bucket_of(0.5, 16) == 2);
  CHECK(bucket_of(std::ldexp(1.0, -20), 16) == 16);
  CHECK(bucket_of(1.0, 16) == 1);
  CHECK(bucket_of(0.0, 16) == 0);
  CHECK(bucket_of(0.75, 16) == 1);
  CHECK(bucket_of(0.25, 16) == 3);
  CHECK(bucket_of(std::nextafter(0.25, 1.0), 16) == 2);
  CHECK(bucket_of(4.9e-324, 16) == 16);
  CHECK_THROWS_AS(bucket_of(-0.1, 16), InvalidProbability);
  CHECK_THROWS_AS(bucket_of(std::nan(""), 16), InvalidProbability);
  Rng r(3);
  for (int i = 0; i < 100'000; ++i) {
    const double p = std::ldexp(r.uniform01(), -static_cast<int>(uniform_int(r, 30)));
    const unsigned l = bucket_of(p, 64);
    REQUIRE(p > std::ldexp(1.0, -static_cast<int>(l)));
    REQUIRE(p <= std::ldexp(1.0, 1 - static_cast<int>(l)));
  }
}

TEST_CASE("level counts and recursion shape") {
  CHECK(level_count_for(100) == 16);
  CHECK(level_count_for(10) == 10);
  CHECK(level_count_for(1) == 2);
  CHECK(level_count_for(1'000'000) == 42);

  Rng r(1);
  std::vector<double> p(100);
  for (auto& v : p) v = r.uniform01();
  DynamicSampler<std::uint64_t> s(make_records(p));
  CHECK(s.mode() == DynamicSampler<std::uint64_t>::Mode::levels);
  CHECK(s.L() == 16);
  REQUIRE(s.reduced() != nullptr);
  CHECK(s.reduced()->size() == 16);
  s.audit();

  DynamicSampler<std::uint64_t> ten(make_records(std::vector<double>(10, 0.5)));
  CHECK(ten.mode() == DynamicSampler<std::uint64_t>::Mode::scan);
  DynamicSampler<std::uint64_t> three(make_records({0.2, 0.3, 0.4}));
  CHECK(three.mode() == DynamicSampler<std::uint64_t>::Mode::table);

  std::vector<Slot<std::uint64_t>> big;
  for (std::uint64_t k = 0; k < 1'000'000; ++k) big.push_back({k, 0.5});
  DynamicSampler<std::uint64_t> mega(std::move(big));
  const auto st = mega.stats();
  CHECK(st.level_L == std::vector<unsigned>{42, 14});
  CHECK(st.base_mode == "scan");
  CHECK(st.base_size == 14);
}

TEST_CASE("degenerate probabilities") {
  Rng r(2);
  DynamicSampler<std::uint64_t> ones(make_records(std::vector<double>(500, 1.0)));
  ones.audit();
  for (int i = 0; i < 20; ++i) {
    auto out = ones.query(r);
    std::sort(out.begin(), out.end());
    REQUIRE(out.size() == 500);
    REQUIRE(out.back() == 499);
  }
  DynamicSampler<std::uint64_t> zeros(make_records(std::vector<double>(500, 0.0)));
  for (int i = 0; i < 100; ++i) REQUIRE(zeros.query(r).empty());
  CHECK(zeros.query(r).empty());
}

TEST_CASE("duplicate and missing keys") {
  CHECK_THROWS_AS(DynamicSampler<int>(std::vector<Slot<int>>{{1, 0.1}, {1, 0.2}}), DuplicateKey);
  DynamicSampler<int> s;
  s.insert(1, 0.5);
  CHECK_THROWS_AS(s.insert(1, 0.5), DuplicateKey);
  CHECK_THROWS_AS(s.erase(2), KeyNotFound);
  CHECK_THROWS_AS(s.update(2, 0.1), KeyNotFound);
  CHECK_THROWS_AS(s.insert(3, 2.0), InvalidProbability);
}

TEST_CASE("n = 3 law, table base") {
  DynamicSampler<std::uint64_t> s(make_records({0.8, 0.4, 0.1}));
  Rng r(9);
  const auto f = joint(s, 3, 1'000'000, r);
  const auto law = oracle::enumerate_exact(std::vector<double>{0.8, 0.4, 0.1});
  CHECK(oracle::tv_distance(law, f) < 0.01);
  CHECK(oracle::chi_square_p(law, f) > 1e-4);
}

TEST_CASE("joint law for small n with forced bucket levels, before and after modifications") {
  Rng pick(31);
  SamplerConfig forced;
  forced.forced_levels = 2;
  for (int inst = 0; inst < 5; ++inst) {
    const unsigned n = 2 + inst % 3;
    std::vector<double> p(n);
    for (auto& v : p) v = pick.uniform01();
    if (inst == 3) p[0] = 0.0;
    if (inst == 4) p[1] = 1.0;
    for (const auto& cfg : {SamplerConfig{}, forced}) {
      DynamicSampler<std::uint64_t> s(make_records(p), cfg);
      if (cfg.forced_levels) CHECK(s.stats().level_L.size() == 2);
      Rng r(100 + inst);
      auto f = joint(s, n, 400'000, r);
      auto law = oracle::enumerate_exact(p);
      CHECK(oracle::tv_distance(law, f) < 0.01);
      CHECK(oracle::chi_square_p(law, f) > 1e-4);

      for (int op = 0; op < 2000; ++op) {
        const auto k = uniform_int(pick, n) - 1;
        if (uniform_int(pick, 2) == 1) {
          s.erase(k);
          s.audit();
          s.insert(k, p[k]);
        } else {
          p[k] = uniform_int(pick, 4) == 1 ? std::ldexp(1.0, -int(uniform_int(pick, 6))) : pick.uniform01();
          s.update(k, p[k]);
        }
        s.audit();
      }
      f = joint(s, n, 400'000, r);
      law = oracle::enumerate_exact(p);
      CHECK(oracle::tv_distance(law, f) < 0.01);
      CHECK(oracle::chi_square_p(law, f) > 1e-4);
    }
  }
}

TEST_CASE("cross-bucket update moves one record and refreshes two gates") {
  // 0.05 sits in bucket 5 (pbar 1/16), 0.02 in bucket 6 (pbar 1/32).
  std::vector<double> p(100, 0.05);
  p[1] = 0.02;
  DynamicSampler<std::uint64_t> s(make_records(p));
  CHECK(s.reduced()->probability(5) == doctest::Approx(landing_gate(1.0 / 16, 99)));
  CHECK(s.reduced()->probability(6) == doctest::Approx(landing_gate(1.0 / 32, 1)));
  s.update(0, 0.02);
  s.audit();
  CHECK(s.reduced()->probability(5) == doctest::Approx(landing_gate(1.0 / 16, 98)));
  CHECK(s.reduced()->probability(6) == doctest::Approx(landing_gate(1.0 / 32, 2)));
  // A same-bucket update leaves the gates alone.
  s.update(5, 0.06);
  CHECK(s.reduced()->probability(5) == doctest::Approx(landing_gate(1.0 / 16, 98)));
  CHECK(s.mu() == doctest::Approx(97 * 0.05 + 0.06 + 2 * 0.02));
}

TEST_CASE("rebuild exactly on doubling and halving") {
  std::vector<Slot<std::uint64_t>> recs;
  for (std::uint64_t k = 0; k < 64; ++k) recs.push_back({k, 0.1});
  DynamicSampler<std::uint64_t> s(std::move(recs));
  CHECK(s.old_size() == 64);
  CHECK(s.L() == 14);
  for (std::uint64_t k = 64; k < 127; ++k) s.insert(k, 0.1);
  CHECK(s.old_size() == 64);
  s.insert(127, 0.1);  // the 64th insert
  CHECK(s.old_size() == 128);
  CHECK(s.L() == 16);
  s.audit();
  for (std::uint64_t k = 0; k < 63; ++k) s.erase(k);
  CHECK(s.old_size() == 128);
  s.erase(63);  // size 64 = 128/2
  CHECK(s.old_size() == 64);
  s.audit();
}

TEST_CASE("fuzz with audits, then marginals") {
  Rng r(404);
  DynamicSampler<std::uint64_t> s;
  std::vector<std::uint64_t> live;
  std::vector<double> prob;
  std::uint64_t next = 0;
  auto random_p = [&] {
    switch (uniform_int(r, 5)) {
      case 1: return 0.0;
      case 2: return 1.0;
      case 3: return std::ldexp(1.0, -int(uniform_int(r, 25)));
      case 4: return std::ldexp(r.uniform01(), -int(uniform_int(r, 30)));
      default: return r.uniform01();
    }
  };
  for (int op = 0; op < 30'000; ++op) {
    const auto kind = uniform_int(r, 10);
    if (kind <= 4 || live.size() < 10) {
      const double p = random_p();
      s.insert(next, p);
      live.push_back(next++);
      prob.push_back(p);
    } else if (kind <= 6) {
      const auto i = uniform_int(r, live.size()) - 1;
      s.erase(live[i]);
      live[i] = live.back();
      live.pop_back();
      prob[i] = prob.back();
      prob.pop_back();
    } else {
      const auto i = uniform_int(r, live.size()) - 1;
      prob[i] = random_p();
      s.update(live[i], prob[i]);
    }
    if (op % 7 == 0 || live.size() < 200) s.audit();
  }
  s.audit();
  REQUIRE(s.size() == live.size());

  std::vector<std::uint64_t> pos(next, 0);
  for (std::size_t i = 0; i < live.size(); ++i) pos[live[i]] = i;
  std::vector<std::uint64_t> hits(live.size(), 0);
  const int trials = 20'000;
  std::vector<std::uint64_t> out;
  for (int t = 0; t < trials; ++t) {
    out.clear();
    s.query(r, out);
    for (auto k : out) ++hits[pos[k]];
  }
  const auto rep = oracle::marginal_report(hits, prob, trials);
  CHECK(rep.fraction_within(4.5) >= 0.99);
}

TEST_CASE("touched work tracks 1 + mu") {
  const std::size_t n = 100'000;
  std::vector<double> ratios;
  for (double mu : {0.1, 1.0, 10.0, 100.0}) {
    Rng r(7);
    std::vector<Slot<std::uint64_t>> recs;
    for (std::uint64_t k = 0; k < n; ++k) recs.push_back({k, std::min(1.0, 2 * mu / n * r.uniform01())});
    DynamicSampler<std::uint64_t> s(std::move(recs));
    std::vector<std::uint64_t> out;
    const int q = 20'000;
    for (int i = 0; i < q; ++i) {
      out.clear();
      s.query(r, out);
    }
    ratios.push_back(double(s.touched()) / q / (1 + s.mu()));
  }
  const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
  CHECK(*hi / *lo <= 4.0);
}
