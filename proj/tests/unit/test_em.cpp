#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <vector>

#include "subsample/em/em_sampler.hpp"
#include "subsample/oracle.hpp"

using namespace subsample;
using namespace subsample::em;

namespace {

std::vector<EMRecord> make_records(const std::vector<double>& p) {
  std::vector<EMRecord> r;
  for (std::size_t i = 0; i < p.size(); ++i) r.push_back({i, p[i]});
  return r;
}

double log_base(double x, double b) { return std::log(x) / std::log(b); }

}  // namespace

TEST_CASE("device counters and frame budget") {
  BlockDevice dev(4, 16);
  CHECK(dev.frame_limit() == 4);
  const BlockAddr a = dev.allocate(3);
  {
    auto f = dev.read(a);
    CHECK(dev.reads() == 1);
    CHECK(dev.writes() == 0);
    f[0] = 7;
    dev.write(a + 2, f);
    CHECK(dev.writes() == 1);
  }
  CHECK(dev.pinned_frames() == 0);
  {
    std::vector<BlockDevice::Frame> frames;
    for (int i = 0; i < 4; ++i) frames.push_back(dev.pin());
    CHECK_THROWS_AS(dev.pin(), FrameBudgetExceeded);
  }
  {
    Reservation r(dev, 8);
    auto f1 = dev.pin();
    auto f2 = dev.pin();
    CHECK_THROWS_AS(dev.pin(), FrameBudgetExceeded);
    CHECK_THROWS_AS(Reservation(dev, 1), FrameBudgetExceeded);
  }
  CHECK(dev.free_words() == 16);
  CHECK(dev.peak_words() == 16);
  CHECK_THROWS_AS(dev.read(99), Error);
  CHECK_THROWS_AS(BlockDevice(8, 15), ConfigError);
  CHECK_THROWS_AS(BlockDevice(0, 16), ConfigError);
}

TEST_CASE("vector round trip and block counts") {
  BlockDevice dev(8, 64);
  std::vector<EMRecord> recs;
  for (std::uint64_t i = 0; i < 13; ++i) recs.push_back({i * 3, 1.0 / static_cast<double>(i + 1)});
  const EMVector v = write_vector(dev, recs);
  CHECK(v.blocks() == 4);
  CHECK(dev.writes() == 4);
  const auto back = read_vector(dev, v);
  CHECK(dev.reads() == 4);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].key == recs[i].key);
    CHECK(back[i].p == recs[i].p);
  }
  CHECK_THROWS_AS(records_per_block(BlockDevice(1, 2)), ConfigError);
}

TEST_CASE("naive EM scan: counts and law") {
  BlockDevice dev(8, 64);
  Rng rng(11);
  std::vector<std::uint64_t> out;

  const EMVector zeros = write_vector(dev, make_records(std::vector<double>(8, 0.0)));
  dev.reset_counters();
  em_naive_query(dev, zeros, rng, out);
  CHECK(out.empty());
  CHECK(dev.reads() == zeros.blocks());
  CHECK(dev.writes() == 0);

  const EMVector ones = write_vector(dev, make_records(std::vector<double>(20, 1.0)));
  dev.reset_counters();
  {
    OutputWriter sink(dev);
    em_naive_query(dev, ones, rng, out, &sink);
    sink.finish();
    CHECK(sink.blocks_written() == 3);
  }
  CHECK(out.size() == 20);
  CHECK(dev.reads() == ones.blocks());
  CHECK(dev.writes() == 3);

  const std::vector<double> p{0.15, 0.6, 0.85};
  const EMVector v = write_vector(dev, make_records(p));
  const auto law = oracle::enumerate_exact(p);
  const auto freq = oracle::empirical_law(3, 1'000'000, [&] {
    out.clear();
    em_naive_query(dev, v, rng, out);
    std::uint32_t mask = 0;
    for (auto k : out) mask |= 1u << k;
    return mask;
  });
  CHECK(oracle::tv_distance(law, freq) < 0.01);
  CHECK(oracle::chi_square_p(law, freq) > 1e-4);
}

TEST_CASE("buffer tree shape") {
  BlockDevice dev(16, 1024);
  const TreeShape s = default_tree_shape(dev);
  CHECK(s.fanout == 32);
  CHECK(s.batch == 2 * 32 * 16);
  const EMVector v = write_vector(dev, make_records(std::vector<double>(5000, 0.5)));
  SampleBufferTree tree(dev, v, 0.5, s);
  // 625 leaves -> 20 -> 1
  CHECK(tree.height() == 2);
  CHECK(tree.internal_nodes() == 21);
  CHECK(tree.root_children() == 20);
  tree.audit();

  const EMVector one = write_vector(dev, make_records({0.5}));
  SampleBufferTree single(dev, one, 0.5, s);
  CHECK(single.height() == 1);
  CHECK(single.root_children() == 1);
  CHECK_THROWS_AS(SampleBufferTree(dev, v, 0.5, TreeShape{1, 16}), ConfigError);
  CHECK_THROWS_AS(SampleBufferTree(dev, v, 0.5, TreeShape{2, 12}), ConfigError);
}

TEST_CASE("set sampling is uniform over t-subsets") {
  // A deep tree (fanout 2) over six records, so merges pass through disk buffers.
  BlockDevice dev(4, 32);
  const EMVector v = write_vector(dev, make_records(std::vector<double>(6, 1.0)));
  SampleBufferTree tree(dev, v, 1.0, TreeShape{2, 8});
  tree.set_root_capacity(4);
  tree.set_dedup_limit(3);
  CHECK(tree.height() == 2);
  Rng rng(5);

  for (std::size_t t : {1u, 2u, 3u}) {
    CAPTURE(t);
    std::vector<std::uint64_t> counts(64, 0);
    const std::uint64_t trials = 150'000;
    std::vector<Entry> out;
    for (std::uint64_t q = 0; q < trials; ++q) {
      out.clear();
      tree.set_sample(rng, t, out);
      REQUIRE(out.size() == t);
      std::uint32_t mask = 0;
      for (Entry e : out) {
        REQUIRE(entry_accepted(e));
        mask |= 1u << entry_key(e);
      }
      REQUIRE(static_cast<std::size_t>(std::popcount(mask)) == t);
      ++counts[mask];
    }
    tree.audit();
    CHECK(dev.pinned_frames() == 0);
    CHECK(dev.peak_words() <= dev.memory_words());
    double subsets = 0;
    for (std::uint32_t m = 0; m < 64; ++m)
      if (static_cast<std::size_t>(std::popcount(m)) == t) ++subsets;
    for (std::uint32_t m = 0; m < 64; ++m) {
      if (static_cast<std::size_t>(std::popcount(m)) != t) continue;
      CHECK(std::abs(oracle::binomial_z(counts[m], trials, 1.0 / subsets)) < 4.5);
    }
  }
  CHECK(tree.scans() == 0);
  CHECK(tree.root_refills() > 0);
}

TEST_CASE("set sampling edge cases") {
  BlockDevice dev(4, 64);
  const EMVector v = write_vector(dev, make_records(std::vector<double>(10, 1.0)));
  SampleBufferTree tree(dev, v, 1.0, TreeShape{2, 8});
  tree.set_root_capacity(8);
  tree.set_dedup_limit(4);
  Rng rng(9);
  std::vector<Entry> out;

  dev.reset_counters();
  tree.set_sample(rng, 0, out);
  CHECK(out.empty());
  CHECK(dev.ios() == 0);

  tree.set_sample(rng, 10, out);
  std::vector<std::uint64_t> keys;
  for (Entry e : out) keys.push_back(entry_key(e));
  std::sort(keys.begin(), keys.end());
  CHECK(keys == std::vector<std::uint64_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK(tree.scans() == 1);

  out.clear();
  tree.set_sample(rng, 5, out);  // beyond the dedup limit: scan
  CHECK(tree.scans() == 2);
  CHECK(out.size() == 5);
  CHECK_THROWS_AS(tree.set_sample(rng, 11, out), Error);
}

TEST_CASE("accept bits thin by p / pbar") {
  BlockDevice dev(8, 256);
  std::vector<double> p{0.1, 0.2, 0.25, 0.05};
  const EMVector v = write_vector(dev, make_records(p));
  SampleBufferTree tree(dev, v, 0.25, default_tree_shape(dev));
  tree.set_root_capacity(32);
  tree.set_dedup_limit(8);
  Rng rng(21);
  std::vector<std::uint64_t> hits(4, 0), seen(4, 0);
  std::vector<Entry> out;
  for (int q = 0; q < 200'000; ++q) {
    out.clear();
    tree.set_sample(rng, 1, out);
    const auto k = entry_key(out[0]);
    ++seen[k];
    hits[k] += entry_accepted(out[0]);
  }
  for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(oracle::binomial_z(hits[k], seen[k], p[k] / 0.25)) < 4.5);
}

TEST_CASE("single bucket jump query matches the product law") {
  // All four records in level 2, p in (1/4, 1/2].
  BlockDevice dev(4, 64);
  const std::vector<double> p{0.3, 0.3, 0.4, 0.5};
  EmBucket b;
  b.level = 2;
  b.pbar = level_pbar(2);
  b.gate = landing_gate(b.pbar, 4);
  b.vec = write_vector(dev, make_records(p));
  b.tree = std::make_unique<SampleBufferTree>(dev, b.vec, b.pbar, TreeShape{2, 8});
  b.tree->set_root_capacity(8);
  b.tree->set_dedup_limit(2);
  Rng rng(77);
  std::vector<std::uint64_t> out;
  const auto law = oracle::enumerate_exact(p);
  const auto freq = oracle::empirical_law(4, 1'000'000, [&] {
    out.clear();
    if (rng.uniform01() < b.gate) em_jump_given_landing(b, rng, out);
    std::uint32_t mask = 0;
    for (auto k : out) mask |= 1u << k;
    return mask;
  });
  CHECK(oracle::tv_distance(law, freq) < 0.01);
  CHECK(oracle::chi_square_p(law, freq) > 1e-4);
  b.tree->audit();

  EmBucket empty;
  CHECK_THROWS_AS(em_jump_given_landing(empty, rng, out), Error);
}

TEST_CASE("EM engine joint law on tiny instances") {
  Rng gen(2024);
  for (int inst = 0; inst < 5; ++inst) {
    const unsigned n = 2 + inst % 3;
    std::vector<double> p;
    for (unsigned i = 0; i < n; ++i) p.push_back(gen.uniform01());
    if (inst == 4) p[0] = 0.02;  // a deeper bucket
    CAPTURE(inst);
    BlockDevice dev(2, 64);
    EmConfig cfg;
    cfg.base_records = 1;
    EmSampler s(dev, make_records(p), cfg);
    REQUIRE(s.em_levels() == 1);
    s.audit();
    Rng rng(100 + inst);
    std::vector<std::uint64_t> out;
    const auto law = oracle::enumerate_exact(p);
    const auto freq = oracle::empirical_law(n, 1'000'000, [&] {
      out.clear();
      s.query(rng, out);
      std::uint32_t mask = 0;
      for (auto k : out) mask |= 1u << k;
      return mask;
    });
    CHECK(oracle::tv_distance(law, freq) < 0.01);
    CHECK(oracle::chi_square_p(law, freq) > 1e-4);
    s.audit();
    CHECK(dev.pinned_frames() == 0);
  }
}

TEST_CASE("EM recursion depth") {
  {
    BlockDevice dev(16, 1024);
    Rng gen(1);
    std::vector<EMRecord> recs;
    for (std::uint64_t i = 0; i < (1u << 16); ++i) recs.push_back({i, gen.uniform01() * 0.01});
    EmSampler s(dev, recs, {});
    CHECK(s.em_levels() == 1);
    CHECK(s.levels()[0].L == 34);
    CHECK(s.base_size() == 34);
    s.audit();

    // Build cost against sort(n) in blocks.
    const double blocks = static_cast<double>(recs.size() * kRecordWords) / 16.0;
    const double sort_cost = blocks * std::max(1.0, log_base(blocks, 1024.0 / 16.0));
    CHECK(static_cast<double>(s.build_ios()) <= 8.0 * sort_cost);
  }
  {
    BlockDevice dev(16, 1024);
    std::vector<EMRecord> recs = make_records(std::vector<double>(100, 0.5));
    EmSampler s(dev, recs, {});
    CHECK(s.em_levels() == 0);
    CHECK(s.base_size() == 100);
    CHECK(s.build_ios() == 0);
  }
  {
    // A small base threshold forces a second EM level.
    BlockDevice dev(8, 2048);
    std::vector<EMRecord> recs;
    Rng gen(4);
    for (std::uint64_t i = 0; i < 5000; ++i) recs.push_back({i, std::ldexp(gen.uniform01(), -static_cast<int>(i % 24))});
    EmConfig cfg;
    cfg.base_records = 8;
    EmSampler s(dev, recs, cfg);
    CHECK(s.em_levels() == 3);
    CHECK(s.levels()[1].size == s.levels()[0].L);
    s.audit();
    Rng rng(8);
    std::vector<std::uint64_t> hits(recs.size(), 0), out;
    const std::uint64_t trials = 20'000;
    for (std::uint64_t q = 0; q < trials; ++q) {
      out.clear();
      s.query(rng, out);
      for (auto k : out) ++hits[k];
    }
    std::vector<double> p;
    for (const auto& r : recs) p.push_back(r.p);
    const auto rep = oracle::marginal_report(hits, p, trials);
    CHECK(rep.fraction_within(4.5) >= 0.99);
    s.audit();
  }
}

TEST_CASE("EM engine extremes") {
  BlockDevice dev(16, 1024);
  Rng rng(3);
  std::vector<std::uint64_t> out;
  {
    EmSampler s(dev, make_records(std::vector<double>(3000, 1.0)), {});
    REQUIRE(s.em_levels() == 1);
    s.query(rng, out);
    std::sort(out.begin(), out.end());
    CHECK(out.size() == 3000);
    CHECK(out.front() == 0);
    CHECK(out.back() == 2999);
  }
  {
    EmSampler s(dev, make_records(std::vector<double>(3000, 0.0)), {});
    out.clear();
    dev.reset_counters();
    for (int q = 0; q < 100; ++q) s.query(rng, out);
    CHECK(out.empty());
    CHECK(dev.ios() == 0);
    s.audit();
  }
  std::vector<EMRecord> bad{{std::uint64_t{1} << 63, 0.5}};
  CHECK_THROWS_AS(EmSampler(dev, bad, {}), Error);
  CHECK_THROWS_AS(EmSampler(dev, make_records({1.5}), {}), InvalidProbability);
}

TEST_CASE("EM query cost stays under the scan and within budget") {
  BlockDevice dev(64, 4096);
  const std::size_t n = 20'000;
  Rng gen(6);
  std::vector<EMRecord> recs;
  for (std::uint64_t i = 0; i < n; ++i) recs.push_back({i, 2.0 * gen.uniform01() / static_cast<double>(n)});
  EmSampler s(dev, recs, {});
  REQUIRE(s.em_levels() == 1);
  CHECK(s.root_words() > 0);
  Rng rng(7);
  std::vector<std::uint64_t> out;
  dev.reset_counters();
  const int queries = 20'000;
  for (int q = 0; q < queries; ++q) {
    out.clear();
    s.query(rng, out);
  }
  const double per_query = static_cast<double>(dev.ios()) / queries;
  const double scan = static_cast<double>(n * kRecordWords) / 64.0;
  CHECK(per_query < scan / 20.0);
  CHECK(dev.peak_words() <= dev.memory_words());
  CHECK(dev.pinned_frames() == 0);
  s.audit();
}
