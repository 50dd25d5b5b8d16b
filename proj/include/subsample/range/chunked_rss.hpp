#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include <absl/container/flat_hash_map.h>

#include "subsample/dynamic_sampler.hpp"
#include "subsample/range/treap.hpp"

namespace subsample::range {

// Records of one key interval [start, next start). `scaled` samples them with
// probabilities p / pchunk.
struct Chunk {
  double start = 0.0;
  std::vector<Slot<double>> records;
  double pchunk = 0.0;
  DynamicSampler<double> scaled;

  std::size_t size() const { return records.size(); }
};

// Linear-space range sampler: the key line is cut into chunks of s/2..s
// records, s ~ log2 n. A treap over chunk starts, weighted by the chance
// that a chunk holds any sampled record, picks interior chunks; each picked
// chunk then samples from its scaled sampler. The two end chunks are scanned.
//
// Marginals are exact. Two records of the same interior chunk are included
// together with probability p_u p_v / pchunk, not p_u p_v; use RangeTreap
// when the joint law matters.
class ChunkedRSS {
 public:
  explicit ChunkedRSS(std::uint64_t seed = 0x63686b73ULL);
  ChunkedRSS(std::vector<Slot<double>> records, std::uint64_t seed = 0x63686b73ULL);

  std::size_t size() const { return n_; }
  std::size_t target() const { return s_; }
  std::size_t chunk_count() const { return chunks_.size(); }
  bool contains(double key) const;
  double probability(double key) const;

  void insert(double key, double p);
  void erase(double key);
  void update(double key, double p);

  std::size_t query(double a, double b, Rng& rng, std::vector<double>& out);

  const std::map<double, Chunk>& chunks() const { return chunks_; }
  const RangeTreap& chunk_tree() const { return tree_; }
  std::uint64_t rebuilds() const { return rebuilds_; }
  std::uint64_t splits() const { return splits_; }
  std::uint64_t merges() const { return merges_; }

  // `deep` also audits the chunk treap with its secondaries.
  void audit(bool deep = true) const;

 private:
  using Iter = std::map<double, Chunk>::iterator;

  static std::size_t target_for(std::size_t n);
  Iter chunk_for(double key);
  std::map<double, Chunk>::const_iterator chunk_for(double key) const;
  void rebuild(std::vector<Slot<double>> records);
  bool maybe_rebuild();
  Iter add_chunk(double start, std::vector<Slot<double>> records);
  void refresh(Chunk& c);
  void split(Iter it);
  void merge(Iter it);
  std::size_t scan(const Chunk& c, double a, double b, Rng& rng, std::vector<double>& out) const;

  std::uint64_t seed_;
  std::map<double, Chunk> chunks_;
  absl::flat_hash_map<double, Chunk*> by_start_;
  RangeTreap tree_;
  std::size_t n_ = 0;
  std::size_t s_ = 2;
  std::size_t last_rebuild_n_ = 0;
  std::uint64_t rebuilds_ = 0;
  std::uint64_t splits_ = 0;
  std::uint64_t merges_ = 0;
  std::vector<double> starts_;
};

double chunk_gate(const std::vector<Slot<double>>& records);

}  // namespace subsample::range
