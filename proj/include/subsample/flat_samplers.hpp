#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <absl/container/flat_hash_map.h>

#include "subsample/errors.hpp"
#include "subsample/rng.hpp"

namespace subsample {

template <class Key>
struct Slot {
  Key key;
  double p;
};

// Dense (key, p) array with a key -> position index. Deletion swaps the last
// slot into the hole.
template <class Key>
class SlotArray {
 public:
  SlotArray() = default;

  explicit SlotArray(std::vector<Slot<Key>> records) : slots_(std::move(records)) {
    index_.reserve(slots_.size());
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      checked_probability(slots_[i].p);
      if (!index_.emplace(slots_[i].key, i).second) throw DuplicateKey("duplicate key in SlotArray");
    }
    recompute_mu();
  }

  void insert(const Key& key, double p) {
    checked_probability(p);
    if (!index_.emplace(key, slots_.size()).second) throw DuplicateKey("duplicate key");
    slots_.push_back({key, p});
    mu_ += p;
  }

  void erase(const Key& key) {
    auto it = index_.find(key);
    if (it == index_.end()) throw KeyNotFound("key not found");
    const std::size_t pos = it->second;
    mu_ -= slots_[pos].p;
    index_.erase(it);
    if (pos + 1 != slots_.size()) {
      slots_[pos] = slots_.back();
      index_[slots_[pos].key] = pos;
    }
    slots_.pop_back();
    if (slots_.empty()) mu_ = 0.0;
  }

  void update(const Key& key, double p) {
    checked_probability(p);
    auto it = index_.find(key);
    if (it == index_.end()) throw KeyNotFound("key not found");
    double& slot_p = slots_[it->second].p;
    mu_ += p - slot_p;
    slot_p = p;
  }

  bool contains(const Key& key) const { return index_.contains(key); }

  double probability(const Key& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw KeyNotFound("key not found");
    return slots_[it->second].p;
  }

  std::size_t position(const Key& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw KeyNotFound("key not found");
    return it->second;
  }

  std::size_t size() const { return slots_.size(); }
  bool empty() const { return slots_.empty(); }
  double mu() const { return mu_; }
  const std::vector<Slot<Key>>& slots() const { return slots_; }

  void recompute_mu() {
    mu_ = 0.0;
    for (const auto& s : slots_) mu_ += s.p;
  }

  // Naive scan: one uniform per slot. Returns the number of slots touched.
  template <UniformSource R>
  std::size_t naive_query(R& rng, std::vector<Key>& out) const {
    for (const auto& s : slots_)
      if (rng.uniform01() < s.p) out.push_back(s.key);
    return slots_.size();
  }

  // Throws Error describing the first inconsistency.
  void audit() const {
    if (index_.size() != slots_.size()) throw Error("SlotArray: index size mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      auto it = index_.find(slots_[i].key);
      if (it == index_.end() || it->second != i) throw Error("SlotArray: index does not match slot " + std::to_string(i));
      sum += slots_[i].p;
    }
    if (std::abs(sum - mu_) > 1e-9 * std::max(1.0, sum)) throw Error("SlotArray: mu drifted");
  }

 private:
  std::vector<Slot<Key>> slots_;
  absl::flat_hash_map<Key, std::size_t> index_;
  double mu_ = 0.0;
};

inline double level_pbar(unsigned level) { return std::ldexp(1.0, 1 - static_cast<int>(level)); }

// 1 - (1 - pbar)^count, the chance that a Geo(pbar) jump process lands at
// least once inside `count` slots.
inline double landing_gate(double pbar, std::size_t count) {
  if (count == 0) return 0.0;
  if (pbar >= 1.0) return 1.0;
  return -std::expm1(static_cast<double>(count) * std::log1p(-pbar));
}

// Jump process over slots[begin..): landing positions come from Geo(pbar)
// skips, each landing kept with probability p/pbar. `pos` is the 1-based
// position of the last landing (0 = before the first slot).
template <class Key, UniformSource R>
std::size_t continue_jumps(const std::vector<Slot<Key>>& slots, double pbar, std::uint64_t pos, R& rng,
                           std::vector<Key>& out) {
  const std::uint64_t n = slots.size();
  std::size_t touched = 0;
  if (pbar >= 1.0) {
    for (std::uint64_t i = pos; i < n; ++i) {
      ++touched;
      if (rng.uniform01() < slots[i].p) out.push_back(slots[i].key);
    }
    return touched;
  }
  for (;;) {
    const std::uint64_t g = geometric_skip(rng, pbar);
    if (g >= n - pos) break;
    pos += g + 1;
    ++touched;
    const auto& s = slots[pos - 1];
    if (rng.uniform01() < s.p / pbar) out.push_back(s.key);
  }
  return touched;
}

// Records whose probabilities lie in (2^-level, 2^(1-level)]; the tail bucket
// relaxes the lower bound to 0.
template <class Key>
struct BoundedBucket {
  std::vector<Slot<Key>> slots;
  unsigned level = 1;
  double pbar = 1.0;

  BoundedBucket() = default;
  explicit BoundedBucket(unsigned l) : level(l), pbar(level_pbar(l)) {}

  std::size_t size() const { return slots.size(); }
  double gate() const { return landing_gate(pbar, slots.size()); }

  template <UniformSource R>
  std::size_t jump_query(R& rng, std::vector<Key>& out) const {
    if (pbar < 1.0 && slots.empty()) {
      (void)geometric_skip(rng, pbar);
      return 0;
    }
    return continue_jumps(slots, pbar, 0, rng, out);
  }

  // The jump process conditioned on landing at least once.
  template <UniformSource R>
  std::size_t jump_query_given_landing(R& rng, std::vector<Key>& out) const {
    if (slots.empty()) throw Error("jump_query_given_landing on an empty bucket");
    if (pbar >= 1.0) return continue_jumps(slots, pbar, 0, rng, out);
    const std::uint64_t j = first_landing_truncated(rng, pbar, slots.size());
    const auto& s = slots[j - 1];
    if (rng.uniform01() < s.p / pbar) out.push_back(s.key);
    return 1 + continue_jumps(slots, pbar, j, rng, out);
  }
};

}  // namespace subsample
