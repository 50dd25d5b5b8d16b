#include "subsample/range/treap.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace subsample::range {

namespace {

void check_key(double key) {
  if (std::isnan(key)) throw Error("range keys must not be NaN");
}

void check_range(double a, double b) {
  if (std::isnan(a) || std::isnan(b) || a > b) throw Error("invalid range: a > b or NaN endpoint");
}

}  // namespace

RangeTreap::RangeTreap(std::uint64_t seed) : prio_rng_(seed) {}

RangeTreap::RangeTreap(const std::vector<Slot<double>>& records, std::uint64_t seed) : prio_rng_(seed) {
  for (const auto& r : records) insert(r.key, r.p);
}

double RangeTreap::probability(double key) const {
  const auto it = index_.find(key);
  if (it == index_.end()) throw KeyNotFound("key not in treap");
  return nodes_[it->second].p;
}

bool RangeTreap::above(std::int32_t a, std::int32_t b) const {
  const auto& x = nodes_[a];
  const auto& y = nodes_[b];
  return x.priority > y.priority || (x.priority == y.priority && x.key < y.key);
}

std::int32_t RangeTreap::make_node(double key, double p) {
  std::int32_t v;
  if (!free_.empty()) {
    v = free_.back();
    free_.pop_back();
  } else {
    v = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
  }
  TreapNode& n = nodes_[v];
  n.key = key;
  n.p = p;
  n.priority = prio_rng_.next_u64();
  n.left = n.right = -1;
  n.size = 1;
  n.min_key = n.max_key = key;
  n.secondary = DynamicSampler<double>(std::vector<Slot<double>>{{key, p}});
  return v;
}

void RangeTreap::free_node(std::int32_t v) {
  nodes_[v].secondary = DynamicSampler<double>();
  nodes_[v].left = nodes_[v].right = -1;
  free_.push_back(v);
}

void RangeTreap::pull(std::int32_t v) {
  TreapNode& n = nodes_[v];
  n.size = 1;
  n.min_key = n.max_key = n.key;
  if (n.left >= 0) {
    n.size += nodes_[n.left].size;
    n.min_key = nodes_[n.left].min_key;
  }
  if (n.right >= 0) {
    n.size += nodes_[n.right].size;
    n.max_key = nodes_[n.right].max_key;
  }
}

void RangeTreap::collect(std::int32_t v, std::int32_t skip, std::vector<Slot<double>>& out) const {
  std::vector<std::int32_t> stack;
  if (v >= 0) stack.push_back(v);
  while (!stack.empty()) {
    const std::int32_t x = stack.back();
    stack.pop_back();
    const TreapNode& n = nodes_[x];
    if (x != skip) out.push_back({n.key, n.p});
    if (n.left >= 0) stack.push_back(n.left);
    if (n.right >= 0) stack.push_back(n.right);
  }
}

std::vector<double> RangeTreap::subtree_keys(std::int32_t v) const {
  std::vector<Slot<double>> recs;
  collect(v, -1, recs);
  std::vector<double> keys;
  keys.reserve(recs.size());
  for (const auto& r : recs) keys.push_back(r.key);
  std::sort(keys.begin(), keys.end());
  return keys;
}

void RangeTreap::rebuild_secondary(std::int32_t v, std::int32_t skip) {
  std::vector<Slot<double>> recs;
  collect(v, skip, recs);
  rebuilt_ += recs.size();
  nodes_[v].secondary = DynamicSampler<double>(std::move(recs));
}

// The promoted child takes over the demoted node's secondary (same key set);
// only the demoted node's secondary is rebuilt. `skip` names a node whose
// record is being deleted and must stay out of the rebuilt sampler.
std::int32_t RangeTreap::rotate_right(std::int32_t v, std::int32_t skip) {
  const std::int32_t u = nodes_[v].left;
  nodes_[v].left = nodes_[u].right;
  nodes_[u].right = v;
  std::swap(nodes_[u].secondary, nodes_[v].secondary);
  rebuild_secondary(v, skip);
  pull(v);
  pull(u);
  ++rotations_;
  return u;
}

std::int32_t RangeTreap::rotate_left(std::int32_t v, std::int32_t skip) {
  const std::int32_t u = nodes_[v].right;
  nodes_[v].right = nodes_[u].left;
  nodes_[u].left = v;
  std::swap(nodes_[u].secondary, nodes_[v].secondary);
  rebuild_secondary(v, skip);
  pull(v);
  pull(u);
  ++rotations_;
  return u;
}

std::int32_t RangeTreap::insert_at(std::int32_t v, std::int32_t fresh) {
  if (v < 0) return fresh;
  const double key = nodes_[fresh].key;
  nodes_[v].secondary.insert(key, nodes_[fresh].p);
  if (key < nodes_[v].key) {
    const std::int32_t c = insert_at(nodes_[v].left, fresh);
    nodes_[v].left = c;
    pull(v);
    if (above(c, v)) v = rotate_right(v, -1);
  } else {
    const std::int32_t c = insert_at(nodes_[v].right, fresh);
    nodes_[v].right = c;
    pull(v);
    if (above(c, v)) v = rotate_left(v, -1);
  }
  return v;
}

void RangeTreap::insert(double key, double p) {
  check_key(key);
  checked_probability(p);
  if (index_.contains(key)) throw DuplicateKey("duplicate treap key");
  const std::int32_t fresh = make_node(key, p);
  index_.emplace(key, fresh);
  root_ = insert_at(root_, fresh);
}

// v's secondary already excludes v's record; rotate v down to a leaf and cut it.
std::int32_t RangeTreap::sink_and_remove(std::int32_t v) {
  const std::int32_t l = nodes_[v].left, r = nodes_[v].right;
  if (l < 0 || r < 0) {
    free_node(v);
    return l < 0 ? r : l;
  }
  std::int32_t u;
  if (above(l, r)) {
    u = rotate_right(v, v);
    nodes_[u].right = sink_and_remove(v);
  } else {
    u = rotate_left(v, v);
    nodes_[u].left = sink_and_remove(v);
  }
  pull(u);
  return u;
}

std::int32_t RangeTreap::erase_at(std::int32_t v, double key) {
  nodes_[v].secondary.erase(key);
  if (key < nodes_[v].key) {
    nodes_[v].left = erase_at(nodes_[v].left, key);
  } else if (key > nodes_[v].key) {
    nodes_[v].right = erase_at(nodes_[v].right, key);
  } else {
    return sink_and_remove(v);
  }
  pull(v);
  return v;
}

void RangeTreap::erase(double key) {
  check_key(key);
  if (!index_.contains(key)) throw KeyNotFound("key not in treap");
  root_ = erase_at(root_, key);
  index_.erase(key);
}

void RangeTreap::update(double key, double p) {
  checked_probability(p);
  erase(key);
  insert(key, p);
}

void RangeTreap::reweight(double key, double p) {
  check_key(key);
  checked_probability(p);
  const auto it = index_.find(key);
  if (it == index_.end()) throw KeyNotFound("key not in treap");
  std::int32_t v = root_;
  while (v >= 0) {
    TreapNode& n = nodes_[v];
    n.secondary.update(key, p);
    if (key == n.key) break;
    v = key < n.key ? n.left : n.right;
  }
  nodes_[it->second].p = p;
}

void RangeTreap::decompose(std::int32_t v, double a, double b, std::vector<Piece>& out) const {
  while (v >= 0) {
    const TreapNode& n = nodes_[v];
    if (n.max_key < a || n.min_key > b) return;
    if (a <= n.min_key && n.max_key <= b) {
      out.push_back({v, true});
      return;
    }
    if (a <= n.key && n.key <= b) out.push_back({v, false});
    if (n.key < a) {
      v = n.right;
    } else if (n.key > b) {
      v = n.left;
    } else {
      decompose(n.left, a, b, out);
      v = n.right;
    }
  }
}

std::vector<Piece> RangeTreap::canonical_decompose(double a, double b) const {
  check_range(a, b);
  std::vector<Piece> out;
  decompose(root_, a, b, out);
  return out;
}

std::size_t RangeTreap::query(double a, double b, Rng& rng, std::vector<double>& out) {
  const auto pieces = canonical_decompose(a, b);
  std::size_t work = pieces.size();
  for (const Piece& pc : pieces) {
    TreapNode& n = nodes_[pc.node];
    if (pc.whole) {
      work += n.secondary.query(rng, out);
    } else if (rng.uniform01() < n.p) {
      out.push_back(n.key);
    }
  }
  return work;
}

std::size_t RangeTreap::height() const {
  std::size_t h = 0;
  std::vector<std::pair<std::int32_t, std::size_t>> stack;
  if (root_ >= 0) stack.push_back({root_, 1});
  while (!stack.empty()) {
    const auto [v, d] = stack.back();
    stack.pop_back();
    h = std::max(h, d);
    if (nodes_[v].left >= 0) stack.push_back({nodes_[v].left, d + 1});
    if (nodes_[v].right >= 0) stack.push_back({nodes_[v].right, d + 1});
  }
  return h;
}

double RangeTreap::mean_depth() const {
  if (root_ < 0) return 0.0;
  double total = 0.0;
  std::vector<std::pair<std::int32_t, std::size_t>> stack{{root_, 0}};
  while (!stack.empty()) {
    const auto [v, d] = stack.back();
    stack.pop_back();
    total += static_cast<double>(d);
    if (nodes_[v].left >= 0) stack.push_back({nodes_[v].left, d + 1});
    if (nodes_[v].right >= 0) stack.push_back({nodes_[v].right, d + 1});
  }
  return total / static_cast<double>(size());
}

std::size_t RangeTreap::audit_at(std::int32_t v, std::int32_t parent, std::size_t& seen) const {
  if (v < 0) return 0;
  const TreapNode& n = nodes_[v];
  ++seen;
  if (parent >= 0 && above(v, parent)) throw Error("treap: heap order violated");
  if (n.left >= 0 && nodes_[n.left].max_key >= n.key) throw Error("treap: left subtree not below key");
  if (n.right >= 0 && nodes_[n.right].min_key <= n.key) throw Error("treap: right subtree not above key");
  const std::size_t size = 1 + audit_at(n.left, v, seen) + audit_at(n.right, v, seen);
  if (size != n.size) throw Error("treap: stale subtree size");
  const double lo = n.left >= 0 ? nodes_[n.left].min_key : n.key;
  const double hi = n.right >= 0 ? nodes_[n.right].max_key : n.key;
  if (lo != n.min_key || hi != n.max_key) throw Error("treap: stale min/max key");
  const auto it = index_.find(n.key);
  if (it == index_.end() || it->second != v) throw Error("treap: index does not point at node");

  // Secondary key set equals the subtree's key set, with the same probabilities.
  if (n.secondary.size() != size) throw Error("treap: secondary size differs from subtree size");
  std::vector<Slot<double>> recs;
  collect(v, -1, recs);
  for (const auto& r : recs) {
    if (!n.secondary.contains(r.key) || n.secondary.probability(r.key) != r.p)
      throw Error("treap: secondary missing subtree key " + std::to_string(r.key));
  }
  n.secondary.audit();
  return size;
}

void RangeTreap::audit() const {
  std::size_t seen = 0;
  audit_at(root_, -1, seen);
  if (seen != index_.size()) throw Error("treap: index size differs from node count");
  if (seen + free_.size() != nodes_.size()) throw Error("treap: node pool leak");
}

}  // namespace subsample::range
