#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <absl/container/flat_hash_map.h>

#include "subsample/errors.hpp"
#include "subsample/flat_samplers.hpp"
#include "subsample/lookup_table.hpp"
#include "subsample/rng.hpp"

namespace subsample {

// Dyadic bucket of p: the l with 2^-l < p <= 2^(1-l), clamped to L. Returns 0
// for p == 0.
inline unsigned bucket_of(double p, unsigned L) {
  checked_probability(p);
  if (p == 0.0) return 0;
  int e = 0;
  const double fr = std::frexp(p, &e);
  const long l = fr == 0.5 ? 2L - e : 1L - e;
  return l >= static_cast<long>(L) ? L : static_cast<unsigned>(l);
}

// Number of buckets for an instance of n records: 2*ceil(log2 n) + 2.
inline unsigned level_count_for(std::size_t n) {
  unsigned c = 0;
  while ((std::size_t{1} << c) < n) ++c;
  return 2 * c + 2;
}

struct SamplerConfig {
  std::size_t table_threshold = 3;  // base instances of at most this many records use the lookup table
  unsigned forced_levels = 0;       // bucket levels built before the adaptive stopping rule applies
  bool rebuild_on_resize = true;
};

struct SamplerStats {
  std::size_t size = 0;
  double mu = 0.0;
  std::vector<unsigned> level_L;  // L of every bucket level, top first
  std::string base_mode;
  std::size_t base_size = 0;
};

struct Location {
  std::uint32_t level = 0;  // 0 holds p == 0 records
  std::uint32_t slot = 0;
  double p = 0.0;  // copy of the slot's p, so modifications need not read the slot
};

template <class Key>
class HashIndex {
 public:
  Location* find(const Key& k) {
    auto it = map_.find(k);
    return it == map_.end() ? nullptr : &it->second;
  }
  const Location* find(const Key& k) const {
    auto it = map_.find(k);
    return it == map_.end() ? nullptr : &it->second;
  }
  bool insert(const Key& k, Location loc) { return map_.emplace(k, loc).second; }
  void erase(const Key& k) { map_.erase(k); }
  void clear() { map_.clear(); }
  void reserve(std::size_t n) { map_.reserve(n); }
  std::size_t size() const { return map_.size(); }

 private:
  absl::flat_hash_map<Key, Location> map_;
};

// Direct-addressed index for small integer keys (bucket numbers).
class DenseIndex {
 public:
  Location* find(std::uint32_t k) { return k < v_.size() && v_[k].level != kAbsent ? &v_[k] : nullptr; }
  const Location* find(std::uint32_t k) const {
    return k < v_.size() && v_[k].level != kAbsent ? &v_[k] : nullptr;
  }
  bool insert(std::uint32_t k, Location loc) {
    if (k >= v_.size()) v_.resize(k + 1, Location{kAbsent, 0});
    if (v_[k].level != kAbsent) return false;
    v_[k] = loc;
    ++count_;
    return true;
  }
  void erase(std::uint32_t k) {
    if (find(k)) {
      v_[k].level = kAbsent;
      --count_;
    }
  }
  void clear() {
    v_.clear();
    count_ = 0;
  }
  void reserve(std::size_t n) { v_.reserve(n + 1); }
  std::size_t size() const { return count_; }

 private:
  static constexpr std::uint32_t kAbsent = std::numeric_limits<std::uint32_t>::max();
  std::vector<Location> v_;
  std::size_t count_ = 0;
};

// Dynamic subset sampler. Records are split into dyadic buckets; bucket l is
// selected by a reduced instance over {1..L} whose probabilities are the
// landing gates 1-(1-pbar_l)^{n_l}, and a selected bucket runs the jump
// process conditioned on at least one landing. Small instances are solved
// by a scan or by the lookup table.
template <class Key, class Index = HashIndex<Key>>
class SubsetSampler {
 public:
  enum class Mode { levels, scan, table };
  using Reduced = SubsetSampler<std::uint32_t, DenseIndex>;

  explicit SubsetSampler(SamplerConfig cfg = {}, unsigned depth = 0) : cfg_(cfg), depth_(depth) { build({}); }

  SubsetSampler(std::vector<Slot<Key>> records, SamplerConfig cfg = {}, unsigned depth = 0)
      : cfg_(cfg), depth_(depth) {
    build(std::move(records));
  }

  SubsetSampler(SubsetSampler&&) noexcept = default;
  SubsetSampler& operator=(SubsetSampler&&) noexcept = default;

  std::size_t size() const { return size_; }
  double mu() const { return mu_; }
  Mode mode() const { return mode_; }
  unsigned L() const { return L_; }
  std::size_t old_size() const { return old_size_; }
  std::uint64_t touched() const { return touched_; }
  void reset_touched() { touched_ = 0; }
  const SamplerConfig& config() const { return cfg_; }
  const Reduced* reduced() const { return reduced_.get(); }

  bool contains(const Key& key) const { return index_.find(key) != nullptr; }

  double probability(const Key& key) const {
    const Location* loc = index_.find(key);
    if (!loc) throw KeyNotFound("key not found");
    return loc->p;
  }

  std::vector<Slot<Key>> records() const {
    std::vector<Slot<Key>> all;
    all.reserve(size_);
    for (const auto& b : buckets_) all.insert(all.end(), b.slots.begin(), b.slots.end());
    return all;
  }

  // Appends the sampled keys to `out`; returns the work done (landings,
  // scanned slots, table steps).
  template <UniformSource R>
  std::size_t query(R& rng, std::vector<Key>& out) {
    const std::size_t w = query_impl(rng, out);
    touched_ += w;
    return w;
  }

  template <UniformSource R>
  std::vector<Key> query(R& rng) {
    std::vector<Key> out;
    query(rng, out);
    return out;
  }

  void insert(const Key& key, double p) {
    checked_probability(p);
    const unsigned l = level_of(p);
    if (!index_.insert(key, Location{l, static_cast<std::uint32_t>(buckets_[l].slots.size()), p}))
      throw DuplicateKey("duplicate key");
    buckets_[l].slots.push_back({key, p});
    ++size_;
    mu_ += p;
    after_resize(l, static_cast<std::uint32_t>(buckets_[l].slots.size() - 1));
  }

  void erase(const Key& key) {
    Location* found = index_.find(key);
    if (!found) throw KeyNotFound("key not found");
    const Location loc = *found;
    mu_ -= loc.p;
    remove_slot(loc);
    index_.erase(key);
    --size_;
    if (size_ == 0) mu_ = 0.0;
    after_resize(loc.level, loc.slot);
  }

  void update(const Key& key, double p) {
    checked_probability(p);
    Location* found = index_.find(key);
    if (!found) throw KeyNotFound("key not found");
    const Location loc = *found;
    mu_ += p - loc.p;
    found->p = p;
    if (mode_ == Mode::table) {
      buckets_[loc.level].slots[loc.slot].p = p;
      const auto d = roundup_digit(p, static_cast<unsigned>(size_));
      digits_[loc.slot] = d;
      lambda_ = update_digit(lambda_, loc.slot + 1, d, static_cast<unsigned>(size_));
      return;
    }
    const unsigned l = level_of(p);
    if (l == loc.level) {
      buckets_[loc.level].slots[loc.slot].p = p;
      fix_scan(loc.level, loc.slot);
      return;
    }
    remove_slot(loc);
    found->level = l;
    found->slot = static_cast<std::uint32_t>(buckets_[l].slots.size());
    buckets_[l].slots.push_back({key, p});
    push_gate(loc.level);
    push_gate(l);
    fix_scan(loc.level, loc.slot);
    fix_scan(l, found->slot);
  }

  void rebuild() { build(records()); }

  SamplerStats stats() const {
    SamplerStats st;
    st.size = size_;
    st.mu = mu_;
    const SubsetSampler* top = this;
    if (mode_ == Mode::levels) {
      st.level_L.push_back(L_);
      const Reduced* r = reduced_.get();
      while (r->mode() == Reduced::Mode::levels) {
        st.level_L.push_back(r->L());
        r = r->reduced();
      }
      st.base_mode = r->mode() == Reduced::Mode::table ? "table" : "scan";
      st.base_size = r->size();
    } else {
      st.base_mode = top->mode_ == Mode::table ? "table" : "scan";
      st.base_size = size_;
    }
    return st;
  }

  // Full structural check; throws Error on the first violation.
  void audit() const {
    std::size_t count = 0;
    double sum = 0.0;
    for (std::uint32_t l = 0; l < buckets_.size(); ++l) {
      const auto& b = buckets_[l];
      for (std::uint32_t i = 0; i < b.slots.size(); ++i) {
        const auto& s = b.slots[i];
        const Location* loc = index_.find(s.key);
        if (!loc || loc->level != l || loc->slot != i) fail("index does not point at its slot");
        if (loc->p != s.p) fail("index copy of p is stale");
        if (mode_ == Mode::levels && level_of(s.p) != l) fail("record in the wrong bucket");
        if (mode_ == Mode::scan && (s.p == 0.0) != (l == 0)) fail("scan base keeps a zero among nonzero records");
        if (mode_ == Mode::table && digits_[i] != roundup_digit(s.p, static_cast<unsigned>(size_)))
          fail("table digit out of date");
        sum += s.p;
        ++count;
      }
    }
    if (count != size_ || index_.size() != size_) fail("size mismatch");
    if (std::abs(sum - mu_) > 1e-9 * std::max(1.0, sum)) fail("mu drifted");
    if (cfg_.rebuild_on_resize && old_size_ > 0 && (size_ >= 2 * old_size_ || 2 * size_ <= old_size_))
      fail("size escaped the rebuild window");
    if (mode_ == Mode::scan) {
      const auto& slots = buckets_[1].slots;
      if (scan_none_.size() != slots.size() + 1) fail("scan suffix products missing");
      double none = 1.0;
      for (std::size_t i = slots.size(); i-- > 0;) {
        if (i + 1 < slots.size() && slots[i].p < slots[i + 1].p) fail("scan list out of order");
        none *= 1.0 - slots[i].p;
        if (none != scan_none_[i]) fail("scan suffix product is stale");
      }
    }
    if (mode_ == Mode::table) {
      if (lambda_ != encode_digits(digits_, static_cast<unsigned>(size_))) fail("lambda out of date");
    }
    if (mode_ == Mode::levels) {
      if (buckets_.size() != L_ + 1u) fail("bucket count differs from L");
      if (reduced_->size() != L_) fail("reduced instance size differs from L");
      for (std::uint32_t l = 1; l <= L_; ++l)
        if (reduced_->probability(l) != buckets_[l].gate()) fail("gate of bucket " + std::to_string(l) + " is stale");
      reduced_->audit();
    }
  }

 private:
  template <class, class>
  friend class SubsetSampler;

  [[noreturn]] static void fail(const std::string& what) { throw Error("SubsetSampler audit: " + what); }

  unsigned level_of(double p) const {
    if (mode_ == Mode::levels) return bucket_of(p, L_);
    if (mode_ == Mode::scan) return p == 0.0 ? 0 : 1;
    return 1;
  }

  void remove_slot(Location loc) {
    auto& slots = buckets_[loc.level].slots;
    if (loc.slot + 1 != slots.size()) {
      slots[loc.slot] = slots.back();
      index_.find(slots[loc.slot].key)->slot = loc.slot;
      if (mode_ == Mode::table) digits_[loc.slot] = digits_.back();
    }
    slots.pop_back();
    if (mode_ == Mode::table) digits_.pop_back();
  }

  void push_gate(unsigned l) {
    if (mode_ == Mode::levels && l >= 1) reduced_->update(l, buckets_[l].gate());
  }

  // Scan base upkeep: sort by decreasing p, re-point the index and rebuild
  // the suffix products of (1-p).
  void refresh_scan_gate() {
    if (mode_ != Mode::scan) return;
    auto& slots = buckets_[1].slots;
    std::sort(slots.begin(), slots.end(), [](const Slot<Key>& a, const Slot<Key>& b) { return a.p > b.p; });
    for (std::uint32_t i = 0; i < slots.size(); ++i) index_.find(slots[i].key)->slot = i;
    scan_none_.assign(slots.size() + 1, 1.0);
    for (std::size_t i = slots.size(); i-- > 0;) scan_none_[i] = scan_none_[i + 1] * (1.0 - slots[i].p);
  }

  // Scan base after a single-slot change at `pos` of bucket `level`: move
  // that slot back into decreasing order and redo the suffix products.
  void fix_scan(unsigned level, std::uint32_t pos) {
    if (mode_ != Mode::scan || level != 1) return;
    auto& slots = buckets_[1].slots;
    if (pos < slots.size()) {
      const Slot<Key> moving = slots[pos];
      std::uint32_t i = pos;
      while (i > 0 && slots[i - 1].p < moving.p) {
        slots[i] = slots[i - 1];
        index_.find(slots[i].key)->slot = i;
        --i;
      }
      while (i + 1 < slots.size() && slots[i + 1].p > moving.p) {
        slots[i] = slots[i + 1];
        index_.find(slots[i].key)->slot = i;
        ++i;
      }
      if (i != pos) {
        slots[i] = moving;
        index_.find(moving.key)->slot = i;
      }
    }
    scan_none_.resize(slots.size() + 1);
    scan_none_[slots.size()] = 1.0;
    for (std::size_t i = slots.size(); i-- > 0;) scan_none_[i] = scan_none_[i + 1] * (1.0 - slots[i].p);
  }

  void after_resize(unsigned touched_level, std::uint32_t pos) {
    const bool out_of_window = size_ >= 2 * old_size_ || 2 * size_ <= old_size_;
    if (mode_ == Mode::table || (cfg_.rebuild_on_resize && out_of_window)) {
      rebuild();
      return;
    }
    push_gate(touched_level);
    fix_scan(touched_level, pos);
  }

  bool use_levels(std::size_t n) const {
    if (n == 0) return false;
    if (depth_ < cfg_.forced_levels) return true;
    const unsigned L = level_count_for(n);
    return 2 * std::size_t{L} < n && L > cfg_.table_threshold;
  }

  void build(std::vector<Slot<Key>> records) {
    const std::size_t n = records.size();
    index_.clear();
    index_.reserve(n);
    buckets_.clear();
    reduced_.reset();
    digits_.clear();
    lambda_ = 0;
    size_ = old_size_ = n;
    L_ = 0;

    if (use_levels(n)) {
      mode_ = Mode::levels;
      L_ = level_count_for(n);
      buckets_.reserve(L_ + 1);
      for (unsigned l = 0; l <= L_; ++l) buckets_.emplace_back(l);
    } else if (n >= 1 && n <= cfg_.table_threshold && n <= kMaxTableRecords) {
      mode_ = Mode::table;
      buckets_.resize(2);
    } else {
      mode_ = Mode::scan;
      buckets_.resize(2);
    }

    mu_ = 0.0;
    for (auto& r : records) {
      checked_probability(r.p);
      const unsigned l = level_of(r.p);
      if (!index_.insert(r.key, Location{l, static_cast<std::uint32_t>(buckets_[l].slots.size()), r.p}))
        throw DuplicateKey("duplicate key in build");
      buckets_[l].slots.push_back(r);
      mu_ += r.p;
    }

    if (mode_ == Mode::levels) {
      std::vector<Slot<std::uint32_t>> gates;
      gates.reserve(L_);
      for (std::uint32_t l = 1; l <= L_; ++l) gates.push_back({l, buckets_[l].gate()});
      SamplerConfig child = cfg_;
      child.rebuild_on_resize = false;
      reduced_ = std::make_unique<Reduced>(std::move(gates), child, depth_ + 1);
    } else if (mode_ == Mode::table) {
      const auto m = static_cast<unsigned>(n);
      store_ = &shared_table_store(m);
      for (const auto& s : buckets_[1].slots) digits_.push_back(roundup_digit(s.p, m));
      lambda_ = encode_digits(digits_, m);
    }
    refresh_scan_gate();
  }

  template <UniformSource R>
  std::size_t query_impl(R& rng, std::vector<Key>& out) {
    std::size_t work = 0;
    switch (mode_) {
      case Mode::levels: {
        scratch_.clear();
        work += reduced_->query_impl(rng, scratch_);
        for (std::uint32_t l : scratch_) work += buckets_[l].jump_query_given_landing(rng, out);
        break;
      }
      case Mode::scan: {
        // Slots are sorted by decreasing p. From position i, one uniform
        // decides whether anything at or after i is included; if so, the
        // same uniform locates the first included slot by inversion.
        const auto& slots = buckets_[1].slots;
        const std::size_t k = slots.size();
        std::size_t i = 0;
        while (i < k) {
          ++work;
          const double u = rng.uniform01();
          if (!(u < 1.0 - scan_none_[i])) break;
          double run = 1.0;
          std::size_t j = i;
          for (; j < k; ++j) {
            ++work;
            run *= 1.0 - slots[j].p;
            if (u < 1.0 - run) break;
          }
          if (j == k) j = k - 1;  // rounding between the two product orders
          out.push_back(slots[j].key);
          i = j + 1;
        }
        break;
      }
      case Mode::table: {
        scratch_.clear();
        work += table_query(*store_, lambda_, rng, scratch_);
        const double grid = static_cast<double>(store_->grid());
        for (std::uint32_t v : scratch_) {
          const auto& s = buckets_[1].slots[v - 1];
          const double hi = digits_[v - 1] / grid;
          if (s.p >= hi || rng.uniform01() < s.p / hi) out.push_back(s.key);
        }
        work += scratch_.size();
        break;
      }
    }
    return work;
  }

  SamplerConfig cfg_;
  unsigned depth_ = 0;
  Mode mode_ = Mode::scan;
  unsigned L_ = 0;
  std::size_t size_ = 0;
  std::size_t old_size_ = 0;
  double mu_ = 0.0;
  std::uint64_t touched_ = 0;
  Index index_;
  std::vector<BoundedBucket<Key>> buckets_;  // [0] holds p == 0 records
  std::unique_ptr<Reduced> reduced_;
  TableStore* store_ = nullptr;
  std::vector<std::uint32_t> digits_;
  std::uint64_t lambda_ = 0;
  std::vector<std::uint32_t> scratch_;
  std::vector<double> scan_none_;  // scan_none_[i] = prod_{j >= i} (1 - p_j) over the sorted scan list
};

template <class Key>
using DynamicSampler = SubsetSampler<Key>;

}  // namespace subsample
