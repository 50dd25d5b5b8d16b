#pragma once

#include <cstdint>
#include <vector>

#include <absl/container/flat_hash_map.h>

#include "subsample/dynamic_sampler.hpp"
#include "subsample/rng.hpp"

namespace subsample::range {

// One piece of a range decomposition: either a whole subtree (answered by the
// node's secondary sampler) or the node's own record alone.
struct Piece {
  std::int32_t node = -1;
  bool whole = true;
};

struct TreapNode {
  double key = 0.0;
  double p = 0.0;
  std::uint64_t priority = 0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::uint32_t size = 1;
  double min_key = 0.0;
  double max_key = 0.0;
  DynamicSampler<double> secondary;
};

// Treap over real keys where every node owns a subset sampler over the
// records of its subtree. A range [a, b] splits into O(depth) pieces, each
// queried independently.
class RangeTreap {
 public:
  explicit RangeTreap(std::uint64_t seed = 0x7265617073ULL);
  RangeTreap(const std::vector<Slot<double>>& records, std::uint64_t seed = 0x7265617073ULL);

  std::size_t size() const { return index_.size(); }
  bool empty() const { return index_.empty(); }
  bool contains(double key) const { return index_.contains(key); }
  double probability(double key) const;

  void insert(double key, double p);
  void erase(double key);
  // Delete followed by insert, with a fresh priority.
  void update(double key, double p);
  // Changes p in place along the root path; the shape is untouched.
  void reweight(double key, double p);

  std::vector<Piece> canonical_decompose(double a, double b) const;
  // Appends the sampled keys of [a, b]; returns pieces plus sampler work.
  std::size_t query(double a, double b, Rng& rng, std::vector<double>& out);

  std::int32_t root() const { return root_; }
  const TreapNode& node(std::int32_t v) const { return nodes_[v]; }
  std::vector<double> subtree_keys(std::int32_t v) const;
  std::size_t height() const;
  double mean_depth() const;
  std::uint64_t rotations() const { return rotations_; }
  std::uint64_t rebuilt_records() const { return rebuilt_; }

  void audit() const;

 private:
  bool above(std::int32_t a, std::int32_t b) const;
  std::int32_t make_node(double key, double p);
  void free_node(std::int32_t v);
  void pull(std::int32_t v);
  void collect(std::int32_t v, std::int32_t skip, std::vector<Slot<double>>& out) const;
  void rebuild_secondary(std::int32_t v, std::int32_t skip);
  std::int32_t rotate_right(std::int32_t v, std::int32_t skip);
  std::int32_t rotate_left(std::int32_t v, std::int32_t skip);
  std::int32_t insert_at(std::int32_t v, std::int32_t fresh);
  std::int32_t erase_at(std::int32_t v, double key);
  std::int32_t sink_and_remove(std::int32_t v);
  void decompose(std::int32_t v, double a, double b, std::vector<Piece>& out) const;
  std::size_t audit_at(std::int32_t v, std::int32_t parent, std::size_t& seen) const;

  Rng prio_rng_;
  std::vector<TreapNode> nodes_;
  std::vector<std::int32_t> free_;
  absl::flat_hash_map<double, std::int32_t> index_;
  std::int32_t root_ = -1;
  std::uint64_t rotations_ = 0;
  std::uint64_t rebuilt_ = 0;
};

}  // namespace subsample::range
