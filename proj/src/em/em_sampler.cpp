#include "subsample/em/em_sampler.hpp"

#include <cmath>
#include <string>

namespace subsample::em {

void em_jump_given_landing(EmBucket& b, Rng& rng, std::vector<std::uint64_t>& out) {
  const std::uint64_t n = b.size();
  if (n == 0) throw Error("em_jump_given_landing on an empty bucket");
  std::uint64_t t = n;
  if (b.pbar < 1.0) {
    std::uint64_t pos = first_landing_truncated(rng, b.pbar, n);
    t = 1;
    for (;;) {
      const std::uint64_t g = geometric_skip(rng, b.pbar);
      if (g >= n - pos) break;
      pos += g + 1;
      ++t;
    }
  }
  std::vector<Entry> entries;
  entries.reserve(t);
  b.tree->set_sample(rng, t, entries);
  for (Entry e : entries)
    if (entry_accepted(e)) out.push_back(entry_key(e));
}

EmSampler::EmSampler(BlockDevice& dev, std::span<const EMRecord> records, EmConfig cfg) : dev_(dev), cfg_(cfg) {
  const std::size_t B = dev_.block_words(), M = dev_.memory_words();
  if (cfg_.base_records == 0) cfg_.base_records = std::max(B, M / 8);
  if (cfg_.dedup_words == 0) cfg_.dedup_words = M / 16;
  if (cfg_.shape.fanout == 0 || cfg_.shape.batch == 0) cfg_.shape = default_tree_shape(dev_);
  const std::uint64_t start = dev_.ios();

  n_ = records.size();
  for (const auto& r : records) {
    checked_probability(r.p);
    if (r.key > kMaxEmKey) throw Error("EM keys must be below 2^63: " + std::to_string(r.key));
    mu_ += r.p;
  }

  std::vector<Slot<std::uint64_t>> base_records;
  if (n_ <= cfg_.base_records) {
    base_records.reserve(n_);
    for (const auto& r : records) base_records.push_back({r.key, r.p});
  } else {
    EMVector in = write_vector(dev_, records);
    std::size_t size = n_;
    for (;;) {
      EmLevel lv = build_level(in, size);
      std::vector<EMRecord> gates;
      gates.reserve(lv.L);
      for (unsigned l = 1; l <= lv.L; ++l) gates.push_back({l, lv.buckets[l].gate});
      size = lv.L;
      levels_.push_back(std::move(lv));
      if (size > cfg_.base_records && level_count_for(size) < size) {
        in = write_vector(dev_, gates);
        continue;
      }
      for (const auto& g : gates) base_records.push_back({g.key, g.p});
      break;
    }
  }
  base_ = DynamicSampler<std::uint64_t>(std::move(base_records));
  base_res_ = Reservation(dev_, 2 * base_.size());
  allocate_roots();
  build_ios_ = dev_.ios() - start;
}

EmLevel EmSampler::build_level(const EMVector& in, std::size_t size) {
  EmLevel lv;
  lv.size = size;
  lv.L = level_count_for(size);
  std::vector<std::size_t> counts(lv.L + 1, 0);
  {
    VectorReader rd(dev_, in);
    EMRecord r;
    while (rd.next(r)) ++counts[bucket_of(r.p, lv.L)];
  }
  lv.zero_records = counts[0];
  lv.buckets.resize(lv.L + 1);
  std::vector<unsigned> nonempty;
  for (unsigned l = 1; l <= lv.L; ++l) {
    EmBucket& b = lv.buckets[l];
    b.level = l;
    b.pbar = level_pbar(l);
    b.gate = landing_gate(b.pbar, counts[l]);
    b.vec = allocate_vector(dev_, counts[l]);
    if (counts[l]) nonempty.push_back(l);
  }

  // Distribution: one reader frame plus one writer frame per bucket in the
  // current group; more buckets than frames means more passes.
  const std::size_t group = dev_.free_words() / dev_.block_words() - 1;
  if (group == 0) throw FrameBudgetExceeded("no frame left for bucket distribution");
  for (std::size_t g0 = 0; g0 < nonempty.size(); g0 += group) {
    std::vector<std::unique_ptr<VectorWriter>> writers(lv.L + 1);
    for (std::size_t g = g0; g < std::min(nonempty.size(), g0 + group); ++g)
      writers[nonempty[g]] = std::make_unique<VectorWriter>(dev_, lv.buckets[nonempty[g]].vec);
    VectorReader rd(dev_, in);
    EMRecord r;
    while (rd.next(r)) {
      const unsigned l = bucket_of(r.p, lv.L);
      if (writers[l]) writers[l]->push(r);
    }
    for (auto& w : writers)
      if (w) w->finish();
  }

  for (unsigned l : nonempty) {
    EmBucket& b = lv.buckets[l];
    b.tree = std::make_unique<SampleBufferTree>(dev_, b.vec, b.pbar, cfg_.shape);
    b.tree->set_dedup_limit(cfg_.dedup_words);
  }
  return lv;
}

void EmSampler::allocate_roots() {
  const std::size_t B = dev_.block_words();
  // Query-time residency: a full merge (f children + 1 output), the caller's
  // output frame, the dedup set and one block of slack.
  const std::size_t need = (cfg_.shape.fanout + 1) * B + B + cfg_.dedup_words + B;
  const std::size_t free = dev_.free_words();
  if (need > free)
    throw ConfigError("memory too small for the query partition: need " + std::to_string(need) + " words, have " +
                      std::to_string(free));
  std::size_t budget = free - need;
  if (cfg_.root_words) {
    if (cfg_.root_words > budget) throw ConfigError("root_words exceeds the free memory partition");
    budget = cfg_.root_words;
  }

  std::vector<std::pair<SampleBufferTree*, double>> weights;
  double total = 0.0;
  for (auto& lv : levels_)
    for (auto& b : lv.buckets) {
      if (!b.tree || b.pbar >= 1.0) continue;
      const double w = std::sqrt(static_cast<double>(b.size()) * b.pbar * static_cast<double>(b.tree->root_children()));
      weights.emplace_back(b.tree.get(), w);
      total += w;
    }
  root_words_ = 0;
  if (total <= 0.0) return;
  for (auto& [tree, w] : weights) {
    const auto cap = static_cast<std::size_t>(static_cast<double>(budget) * w / total);
    tree->set_root_capacity(cap);
    root_words_ += tree->root_capacity();
  }
}

void EmSampler::query(Rng& rng, std::vector<std::uint64_t>& out, OutputWriter* sink) {
  sel_.clear();
  base_.query(rng, sel_);
  for (std::size_t k = levels_.size(); k-- > 0;) {
    next_.clear();
    for (std::uint64_t l : sel_) em_jump_given_landing(levels_[k].buckets[l], rng, next_);
    sel_.swap(next_);
  }
  out.insert(out.end(), sel_.begin(), sel_.end());
  if (sink)
    for (std::uint64_t k : sel_) sink->push(k);
}

void EmSampler::audit() const {
  if (dev_.peak_words() > dev_.memory_words()) throw Error("EM: peak residency above M");
  std::size_t expect = n_;
  for (const auto& lv : levels_) {
    if (lv.size != expect) throw Error("EM: level size does not match the previous level's bucket count");
    if (lv.L != level_count_for(lv.size)) throw Error("EM: level count mismatch");
    std::size_t total = lv.zero_records;
    for (unsigned l = 1; l <= lv.L; ++l) {
      const EmBucket& b = lv.buckets[l];
      total += b.size();
      if (b.gate != landing_gate(b.pbar, b.size())) throw Error("EM: stale bucket gate");
      if (b.size() && !b.tree) throw Error("EM: nonempty bucket without a set sampler");
      if (b.tree) b.tree->audit();
    }
    if (total != lv.size) throw Error("EM: bucket sizes do not sum to the level size");
    expect = lv.L;
  }
  if (base_.size() != expect) throw Error("EM: base size mismatch");
  base_.audit();
}

}  // namespace subsample::em
