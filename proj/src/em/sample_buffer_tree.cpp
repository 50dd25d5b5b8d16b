#include "subsample/em/sample_buffer_tree.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include <absl/container/flat_hash_set.h>

namespace subsample::em {

namespace {

constexpr std::size_t kNotLoaded = std::numeric_limits<std::size_t>::max();

}  // namespace

TreeShape default_tree_shape(const BlockDevice& dev) {
  TreeShape s;
  s.fanout = std::max<std::size_t>(2, dev.memory_words() / (2 * dev.block_words()));
  s.batch = 2 * s.fanout * dev.block_words();
  return s;
}

SampleBufferTree::SampleBufferTree(BlockDevice& dev, const EMVector& data, double pbar, TreeShape shape)
    : dev_(dev), data_(data), pbar_(pbar), shape_(shape) {
  const std::size_t B = dev_.block_words();
  if (shape_.fanout < 2) throw ConfigError("tree fanout must be at least 2");
  if (shape_.batch == 0 || shape_.batch % B != 0) throw ConfigError("tree batch must be a positive multiple of B");
  cap_ = 2 * shape_.batch;
  if (data_.n == 0) return;

  const std::size_t leaves = data_.blocks();
  leaf_count_.resize(leaves);
  for (std::size_t j = 0; j < leaves; ++j)
    leaf_count_[j] = std::min<std::uint64_t>(data_.records_per_block, data_.n - j * data_.records_per_block);

  // Level 0 groups leaves; higher levels group the level below.
  std::size_t level_begin = 0, level_size = 0;
  for (std::size_t j = 0; j < leaves; j += shape_.fanout) {
    Node v;
    v.first = static_cast<std::uint32_t>(j);
    v.nchild = static_cast<std::uint32_t>(std::min(shape_.fanout, leaves - j));
    v.leaf_children = true;
    for (std::uint32_t c = 0; c < v.nchild; ++c) v.count += leaf_count_[j + c];
    nodes_.push_back(v);
  }
  level_size = nodes_.size();
  height_ = 1;
  while (level_size > 1) {
    const std::size_t next_begin = nodes_.size();
    for (std::size_t j = 0; j < level_size; j += shape_.fanout) {
      Node v;
      v.first = static_cast<std::uint32_t>(level_begin + j);
      v.nchild = static_cast<std::uint32_t>(std::min(shape_.fanout, level_size - j));
      v.leaf_children = false;
      for (std::uint32_t c = 0; c < v.nchild; ++c) v.count += nodes_[v.first + c].count;
      nodes_.push_back(v);
    }
    level_begin = next_begin;
    level_size = nodes_.size() - next_begin;
    ++height_;
  }
  for (std::size_t i = 0; i + 1 < nodes_.size(); ++i) nodes_[i].buf = dev_.allocate(cap_ / B);
}

void SampleBufferTree::set_root_capacity(std::size_t entries) {
  root_res_.reset();
  root_buf_.clear();
  root_buf_.shrink_to_fit();
  root_pos_ = root_end_ = 0;
  if (data_.n == 0 || entries == 0) return;
  root_res_ = Reservation(dev_, entries);
  root_buf_.assign(entries, 0);
}

std::uint64_t SampleBufferTree::child_count(const Node& v, std::uint32_t c) const {
  return v.leaf_children ? leaf_count_[v.first + c] : nodes_[v.first + c].count;
}

Entry SampleBufferTree::leaf_entry(const BlockDevice::Frame& f, std::size_t count, Rng& rng) const {
  const std::size_t i = uniform_int(rng, count) - 1;
  const EMRecord r = record_at(f, i * kRecordWords);
  const bool accept = rng.uniform01() < r.p / pbar_;
  return r.key << 1 | static_cast<Entry>(accept);
}

void SampleBufferTree::merge(std::uint32_t node, std::size_t demand, Rng& rng, std::vector<Entry>* memory_sink) {
  const std::size_t B = dev_.block_words();
  const std::uint32_t nc = nodes_[node].nchild;

  // i.i.d. child labels, proportional to subtree sizes.
  std::vector<std::uint64_t> cum(nc);
  std::uint64_t acc = 0;
  for (std::uint32_t c = 0; c < nc; ++c) cum[c] = acc += child_count(nodes_[node], c);
  std::vector<std::uint32_t> labels(demand);
  std::vector<std::size_t> need(nc, 0);
  for (auto& l : labels) {
    const std::uint64_t r = uniform_int(rng, acc);
    l = static_cast<std::uint32_t>(std::lower_bound(cum.begin(), cum.end(), r) - cum.begin());
    ++need[l];
  }

  // Children short of their share are topped up before any frame is pinned here.
  if (!nodes_[node].leaf_children) {
    for (std::uint32_t c = 0; c < nc; ++c) {
      const std::uint32_t child = nodes_[node].first + c;
      if (need[c] > nodes_[child].fill) top_up(child, rng);
    }
  }

  struct Stream {
    BlockDevice::Frame frame;
    std::size_t pos = 0;
    std::size_t loaded = kNotLoaded;
  };
  std::vector<Stream> streams(nc);
  const Node& v = nodes_[node];
  for (std::uint32_t c = 0; c < nc; ++c) {
    if (!need[c]) continue;
    if (v.leaf_children) {
      streams[c].frame = dev_.read(data_.first + v.first + c);
    } else {
      streams[c].frame = dev_.pin();
      streams[c].pos = nodes_[v.first + c].head;
    }
  }

  BlockDevice::Frame out;
  std::size_t tail = 0, written = 0;
  if (!memory_sink) {
    out = dev_.pin();
    tail = (v.head + v.fill) % cap_;
  }

  for (std::uint32_t c : labels) {
    Stream& s = streams[c];
    Entry e;
    if (v.leaf_children) {
      e = leaf_entry(s.frame, leaf_count_[v.first + c], rng);
    } else {
      const Node& u = nodes_[v.first + c];
      const std::size_t blk = s.pos / B;
      if (blk != s.loaded) {
        dev_.read_into(u.buf + blk, s.frame);
        s.loaded = blk;
      }
      e = s.frame[s.pos % B];
      s.pos = (s.pos + 1) % cap_;
    }
    if (memory_sink) {
      memory_sink->push_back(e);
    } else {
      out[written % B] = e;
      ++written;
      if (written % B == 0) dev_.write(v.buf + ((tail + written - B) % cap_) / B, out);
    }
  }

  if (!v.leaf_children) {
    for (std::uint32_t c = 0; c < nc; ++c) {
      if (!need[c]) continue;
      Node& u = nodes_[v.first + c];
      u.head = streams[c].pos;
      u.fill -= need[c];
      if (u.fill == 0) u.head = 0;
    }
  }
  if (!memory_sink) nodes_[node].fill += demand;
}

void SampleBufferTree::top_up(std::uint32_t node, Rng& rng) {
  if (nodes_[node].fill > shape_.batch) throw Error("buffer tree: top-up would overflow a node buffer");
  merge(node, shape_.batch, rng, nullptr);
}

void SampleBufferTree::refill_root(Rng& rng) {
  const std::size_t cap = root_buf_.size();
  root_buf_.clear();
  const auto root = static_cast<std::uint32_t>(nodes_.size() - 1);
  while (root_buf_.size() < cap) merge(root, std::min(shape_.batch, cap - root_buf_.size()), rng, &root_buf_);
  root_pos_ = 0;
  root_end_ = root_buf_.size();
  ++root_refills_;
}

void SampleBufferTree::scan_sample(Rng& rng, std::size_t t, std::vector<Entry>& out) {
  ++scans_;
  VectorReader rd(dev_, data_);
  EMRecord r;
  std::size_t seen = 0, taken = 0;
  const std::size_t N = data_.n;
  while (taken < t && rd.next(r)) {
    if (static_cast<double>(N - seen) * rng.uniform01() < static_cast<double>(t - taken)) {
      const bool accept = rng.uniform01() < r.p / pbar_;
      out.push_back(r.key << 1 | static_cast<Entry>(accept));
      ++taken;
    }
    ++seen;
  }
}

void SampleBufferTree::set_sample(Rng& rng, std::size_t t, std::vector<Entry>& out) {
  if (t > data_.n) throw Error("set_sample: t=" + std::to_string(t) + " exceeds n=" + std::to_string(data_.n));
  if (t == 0) return;
  if (root_buf_.empty() || 2 * t > data_.n || t > dedup_limit_) {
    scan_sample(rng, t, out);
    return;
  }
  Reservation dedup(dev_, t);
  absl::flat_hash_set<std::uint64_t> seen;
  seen.reserve(t);
  while (seen.size() < t) {
    if (root_pos_ == root_end_) refill_root(rng);
    const Entry e = root_buf_[root_pos_++];
    if (seen.insert(entry_key(e)).second) out.push_back(e);
  }
}

void SampleBufferTree::audit() const {
  const std::size_t B = dev_.block_words();
  for (std::size_t i = 0; i + 1 < nodes_.size(); ++i) {
    const Node& v = nodes_[i];
    if (v.fill > cap_ || v.head >= cap_) throw Error("buffer tree: node buffer out of bounds");
    if ((v.head + v.fill) % B != 0 && (v.head + v.fill) % cap_ % B != 0) throw Error("buffer tree: tail not aligned");
  }
  if (root_pos_ > root_end_ || root_end_ > root_buf_.size()) throw Error("buffer tree: root cursor out of bounds");
  if (!nodes_.empty() && nodes_.back().count != data_.n) throw Error("buffer tree: root count differs from n");
}

}  // namespace subsample::em
