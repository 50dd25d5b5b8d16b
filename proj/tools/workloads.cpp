#include "workloads.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>

#include "subsample/em/em_sampler.hpp"
#include "subsample/range/chunked_rss.hpp"

namespace subsample::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

bool known_profile(const std::string& profile) {
  return profile == "uniform" || profile == "pareto" || profile == "dyadic" || profile == "constant" ||
         profile == "mixed";
}

std::vector<Record> generate(const std::string& profile, std::size_t n, std::uint64_t seed, double param) {
  if (!known_profile(profile)) throw ConfigError("unknown probability profile: " + profile);
  if (profile == "constant") checked_probability(param);
  Rng rng(seed);
  std::vector<Record> recs(n);
  for (std::size_t i = 0; i < n; ++i) {
    double p = 0.0;
    const double u = rng.uniform01();
    if (profile == "uniform") {
      p = u;
    } else if (profile == "pareto") {
      p = std::min(1.0, 0.01 * std::pow(1.0 - u, -1.0 / 1.5));
    } else if (profile == "dyadic") {
      p = std::ldexp(1.0, -static_cast<int>(uniform_int(rng, 20)));
    } else if (profile == "constant") {
      p = param;
    } else {
      const double v = rng.uniform01();
      p = u < 0.1 ? 0.0 : u < 0.2 ? 1.0 : u < 0.5 ? std::ldexp(1.0, -static_cast<int>(uniform_int(rng, 20))) : u < 0.8 ? v : v * 1e-6;
    }
    recs[i] = {static_cast<double>(i), p};
  }
  return recs;
}

double total_mu(const std::vector<Record>& recs) {
  double mu = 0.0;
  for (const auto& r : recs) mu += r.p;
  return mu;
}

void scale_to_mu(std::vector<Record>& recs, double mu) {
  const double cur = total_mu(recs);
  if (cur <= 0.0) return;
  for (auto& r : recs) r.p = std::min(1.0, r.p * mu / cur);
}

std::vector<Slot<std::uint64_t>> integer_slots(const std::vector<Record>& recs) {
  std::vector<Slot<std::uint64_t>> slots;
  slots.reserve(recs.size());
  for (const auto& r : recs) {
    if (r.key < 0 || r.key != std::floor(r.key) || r.key >= 9.2e18)
      throw ConfigError("this mode needs non-negative integer keys");
    slots.push_back({static_cast<std::uint64_t>(r.key), r.p});
  }
  return slots;
}

QueryCost measure_query_cost(const std::vector<Record>& recs, std::uint64_t queries, std::uint64_t seed) {
  DynamicSampler<std::uint64_t> s(integer_slots(recs));
  Rng rng(seed);
  std::vector<std::uint64_t> out;
  for (std::uint64_t q = 0; q < std::min<std::uint64_t>(queries / 10, 1000); ++q) {
    out.clear();
    s.query(rng, out);
  }
  s.reset_touched();
  std::uint64_t produced = 0;
  const auto t0 = Clock::now();
  for (std::uint64_t q = 0; q < queries; ++q) {
    out.clear();
    s.query(rng, out);
    produced += out.size();
  }
  const double secs = seconds_since(t0);
  QueryCost c;
  c.n = recs.size();
  c.mu = s.mu();
  c.queries = queries;
  c.mean_touched = static_cast<double>(s.touched()) / static_cast<double>(queries);
  c.mean_output = static_cast<double>(produced) / static_cast<double>(queries);
  c.queries_per_s = secs > 0 ? static_cast<double>(queries) / secs : 0.0;
  return c;
}

namespace {

struct Op {
  enum Kind : std::uint8_t { upd, ins, del } kind;
  std::uint64_t key;
  double p;
};

// The op sequence is drawn up front so the timed loop touches only the sampler.
std::vector<Op> update_mix(std::size_t n, std::uint64_t ops, Rng& rng) {
  std::vector<std::uint64_t> live(n);
  std::iota(live.begin(), live.end(), std::uint64_t{0});
  std::uint64_t next_key = n;
  std::vector<Op> seq;
  seq.reserve(ops);
  for (std::uint64_t op = 0; op < ops; ++op) {
    const double u = rng.uniform01();
    if (u < 0.5) {
      seq.push_back({Op::upd, live[uniform_int(rng, live.size()) - 1], rng.uniform01()});
    } else if (u < 0.75 || live.size() < 2) {
      seq.push_back({Op::ins, next_key, rng.uniform01()});
      live.push_back(next_key++);
    } else {
      const std::size_t i = uniform_int(rng, live.size()) - 1;
      seq.push_back({Op::del, live[i], 0.0});
      live[i] = live.back();
      live.pop_back();
    }
  }
  return seq;
}

}  // namespace

UpdateCost measure_update_cost(std::size_t n, std::uint64_t ops, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Slot<std::uint64_t>> slots(n);
  for (std::size_t i = 0; i < n; ++i) slots[i] = {i, rng.uniform01()};
  DynamicSampler<std::uint64_t> s(std::move(slots));
  const auto seq = update_mix(n, ops, rng);
  const auto t0 = Clock::now();
  for (const Op& op : seq) {
    switch (op.kind) {
      case Op::upd: s.update(op.key, op.p); break;
      case Op::ins: s.insert(op.key, op.p); break;
      case Op::del: s.erase(op.key); break;
    }
  }
  UpdateCost c;
  c.n = n;
  c.ops = ops;
  c.mean_ns = ops ? seconds_since(t0) * 1e9 / static_cast<double>(ops) : 0.0;
  return c;
}

EmCost measure_em(const std::vector<Record>& recs, std::size_t B, std::size_t M, std::uint64_t queries,
                  std::uint64_t warmup, std::uint64_t seed, bool naive) {
  using namespace subsample::em;
  std::vector<EMRecord> em_recs;
  em_recs.reserve(recs.size());
  for (const auto& s : integer_slots(recs)) em_recs.push_back({s.key, s.p});

  BlockDevice dev(B, M);
  EmCost c;
  c.engine = naive ? "naive" : "em";
  c.n = recs.size();
  c.B = B;
  c.M = M;
  c.mu = total_mu(recs);
  c.queries = queries;
  Rng rng(seed);
  std::vector<std::uint64_t> out;
  std::uint64_t produced = 0, out_blocks = 0;

  auto run = [&](auto&& one) {
    for (std::uint64_t q = 0; q < warmup; ++q) {
      out.clear();
      one(nullptr);
    }
    dev.reset_counters();
    OutputWriter sink(dev);
    for (std::uint64_t q = 0; q < queries; ++q) {
      out.clear();
      one(&sink);
      produced += out.size();
    }
    sink.finish();
    out_blocks = sink.blocks_written();
  };

  if (naive) {
    const EMVector v = write_vector(dev, em_recs);
    c.build_ios = dev.ios();
    run([&](OutputWriter* sink) { em_naive_query(dev, v, rng, out, sink); });
  } else {
    EmSampler s(dev, em_recs);
    c.build_ios = s.build_ios();
    c.em_levels = s.em_levels();
    run([&](OutputWriter* sink) { s.query(rng, out, sink); });
  }
  c.reads = dev.reads();
  c.writes = dev.writes();
  const std::uint64_t data = dev.ios() - out_blocks;
  c.io_per_query = queries ? static_cast<double>(data) / static_cast<double>(queries) : 0.0;
  c.mean_output = queries ? static_cast<double>(produced) / static_cast<double>(queries) : 0.0;
  return c;
}

RangeCost measure_range_cost(const std::vector<Record>& recs, std::uint64_t queries, std::uint64_t seed,
                             bool baseline) {
  std::vector<Slot<double>> slots;
  slots.reserve(recs.size());
  for (const auto& r : recs) slots.push_back({r.key, r.p});
  std::sort(slots.begin(), slots.end(), [](const auto& x, const auto& y) { return x.key < y.key; });
  std::vector<double> keys(slots.size()), prefix(slots.size() + 1, 0.0);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    keys[i] = slots[i].key;
    prefix[i + 1] = prefix[i] + slots[i].p;
  }
  RangeCost rc;
  rc.n = slots.size();
  std::optional<range::ChunkedRSS> chunked;
  std::optional<range::RangeTreap> treap;
  if (baseline) {
    treap.emplace(slots, seed ^ 0x5a5aULL);
  } else {
    chunked.emplace(std::move(slots), seed ^ 0x5a5aULL);
    rc.s = chunked->target();
    rc.chunks = chunked->chunk_count();
  }
  if (keys.empty()) return rc;
  Rng rng(seed);
  std::vector<double> out;
  const double lo = keys.front(), hi = keys.back();
  for (std::uint64_t q = 0; q < queries; ++q) {
    double a = lo + (hi - lo) * rng.uniform01(), b = lo + (hi - lo) * rng.uniform01();
    if (a > b) std::swap(a, b);
    const auto ia = std::lower_bound(keys.begin(), keys.end(), a) - keys.begin();
    const auto ib = std::upper_bound(keys.begin(), keys.end(), b) - keys.begin();
    RangeSample s;
    s.a = a;
    s.b = b;
    s.mu_range = prefix[static_cast<std::size_t>(ib)] - prefix[static_cast<std::size_t>(ia)];
    out.clear();
    s.work = baseline ? treap->query(a, b, rng, out) : chunked->query(a, b, rng, out);
    rc.samples.push_back(s);
  }
  return rc;
}

UpdateCost measure_range_update_cost(std::size_t n, std::uint64_t ops, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Slot<double>> slots(n);
  std::vector<double> live(n);
  for (std::size_t i = 0; i < n; ++i) {
    slots[i] = {static_cast<double>(i), rng.uniform01()};
    live[i] = static_cast<double>(i);
  }
  range::ChunkedRSS c(std::move(slots), seed);
  const double span = static_cast<double>(n);
  const auto t0 = Clock::now();
  for (std::uint64_t op = 0; op < ops; ++op) {
    const double u = rng.uniform01();
    if (u < 0.5) {
      c.update(live[uniform_int(rng, live.size()) - 1], rng.uniform01());
    } else if (u < 0.75 || live.size() < 2) {
      const double k = span * rng.uniform01();
      if (c.contains(k)) continue;
      c.insert(k, rng.uniform01());
      live.push_back(k);
    } else {
      const std::size_t i = uniform_int(rng, live.size()) - 1;
      c.erase(live[i]);
      live[i] = live.back();
      live.pop_back();
    }
  }
  UpdateCost uc;
  uc.n = n;
  uc.ops = ops;
  uc.mean_ns = ops ? seconds_since(t0) * 1e9 / static_cast<double>(ops) : 0.0;
  return uc;
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LinearFit f;
  const std::size_t n = std::min(x.size(), y.size());
  if (n < 2) return f;
  const double mx = std::accumulate(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n), 0.0) / static_cast<double>(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - (f.slope * x[i] + f.intercept);
    sse += e * e;
  }
  f.r2 = syy > 0 ? 1.0 - sse / syy : 1.0;
  return f;
}

}  // namespace subsample::cli
