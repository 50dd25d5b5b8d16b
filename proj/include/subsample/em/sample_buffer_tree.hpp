#pragma once

#include <cstdint>
#include <vector>

#include "subsample/em/block_device.hpp"
#include "subsample/em/em_vector.hpp"
#include "subsample/rng.hpp"

namespace subsample::em {

// A buffered draw: key << 1 | accept, where accept = (u < p / pbar) was drawn
// when the copy left its leaf.
using Entry = std::uint64_t;
inline constexpr std::uint64_t kMaxEmKey = (std::uint64_t{1} << 63) - 1;
inline std::uint64_t entry_key(Entry e) { return e >> 1; }
inline bool entry_accepted(Entry e) { return e & 1; }

struct TreeShape {
  std::size_t fanout = 2;
  std::size_t batch = 0;  // entries produced per refill of a non-root node; a multiple of B
};

TreeShape default_tree_shape(const BlockDevice& dev);

// Uniform set sampler over the records of an EMVector. Leaves are the data
// blocks; each internal node keeps on disk a circular buffer of i.i.d.
// uniform draws from its subtree, refilled in batches by merging draws from
// its children in an i.i.d. label order. The root buffer lives in memory.
// A t-subset is the first t distinct keys of the root stream; large t falls
// back to a scan with selection sampling.
class SampleBufferTree {
 public:
  SampleBufferTree(BlockDevice& dev, const EMVector& data, double pbar, TreeShape shape);

  std::size_t size() const { return data_.n; }
  double pbar() const { return pbar_; }
  std::size_t height() const { return height_; }
  std::size_t root_children() const { return nodes_.empty() ? 0 : nodes_.back().nchild; }
  std::size_t root_capacity() const { return root_buf_.size(); }
  std::size_t internal_nodes() const { return nodes_.size(); }

  // Sizes the in-memory root buffer (reserving its words). Capacity 0 turns
  // the stream path off; every query then scans.
  void set_root_capacity(std::size_t entries);
  void set_dedup_limit(std::size_t t) { dedup_limit_ = t; }
  std::size_t dedup_limit() const { return dedup_limit_; }

  // Appends t entries with distinct keys, a uniform t-subset of the records.
  void set_sample(Rng& rng, std::size_t t, std::vector<Entry>& out);

  std::uint64_t scans() const { return scans_; }
  std::uint64_t root_refills() const { return root_refills_; }

  void audit() const;

 private:
  struct Node {
    std::uint64_t count = 0;  // records below
    std::uint32_t first = 0;  // first child (leaf index or node index)
    std::uint32_t nchild = 0;
    bool leaf_children = true;
    BlockAddr buf = 0;
    std::size_t head = 0;
    std::size_t fill = 0;
  };

  std::uint64_t child_count(const Node& v, std::uint32_t c) const;
  void merge(std::uint32_t node, std::size_t demand, Rng& rng, std::vector<Entry>* memory_sink);
  void top_up(std::uint32_t node, Rng& rng);
  void refill_root(Rng& rng);
  void scan_sample(Rng& rng, std::size_t t, std::vector<Entry>& out);
  Entry leaf_entry(const BlockDevice::Frame& f, std::size_t count, Rng& rng) const;

  BlockDevice& dev_;
  EMVector data_;
  double pbar_;
  TreeShape shape_;
  std::size_t cap_ = 0;  // non-root buffer capacity in entries
  std::size_t height_ = 0;
  std::vector<std::uint64_t> leaf_count_;
  std::vector<Node> nodes_;  // root last

  std::vector<Entry> root_buf_;
  std::size_t root_pos_ = 0;
  std::size_t root_end_ = 0;
  Reservation root_res_;
  std::size_t dedup_limit_ = 0;

  std::uint64_t scans_ = 0;
  std::uint64_t root_refills_ = 0;
};

}  // namespace subsample::em
