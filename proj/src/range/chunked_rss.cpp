#include "subsample/range/chunked_rss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace subsample::range {

namespace {

constexpr double kMinusInf = -std::numeric_limits<double>::infinity();
constexpr double kPlusInf = std::numeric_limits<double>::infinity();

}  // namespace

double chunk_gate(const std::vector<Slot<double>>& records) {
  double pmax = 0.0, acc = 0.0;
  for (const auto& r : records) {
    if (r.p >= 1.0) return 1.0;
    pmax = std::max(pmax, r.p);
    acc += std::log1p(-r.p);
  }
  return std::max(-std::expm1(acc), pmax);
}

ChunkedRSS::ChunkedRSS(std::uint64_t seed) : seed_(seed), tree_(seed) {}

ChunkedRSS::ChunkedRSS(std::vector<Slot<double>> records, std::uint64_t seed) : seed_(seed), tree_(seed) {
  for (const auto& r : records) {
    if (std::isnan(r.key)) throw Error("range keys must not be NaN");
    checked_probability(r.p);
  }
  rebuild(std::move(records));
}

std::size_t ChunkedRSS::target_for(std::size_t n) {
  std::size_t lg = 0;
  while ((std::size_t{1} << lg) < n) ++lg;
  return std::max<std::size_t>(2, lg);
}

ChunkedRSS::Iter ChunkedRSS::chunk_for(double key) {
  auto it = chunks_.upper_bound(key);
  return std::prev(it);
}

std::map<double, Chunk>::const_iterator ChunkedRSS::chunk_for(double key) const {
  auto it = chunks_.upper_bound(key);
  return std::prev(it);
}

bool ChunkedRSS::contains(double key) const {
  if (chunks_.empty()) return false;
  const auto& recs = chunk_for(key)->second.records;
  return std::any_of(recs.begin(), recs.end(), [&](const auto& r) { return r.key == key; });
}

double ChunkedRSS::probability(double key) const {
  if (!chunks_.empty())
    for (const auto& r : chunk_for(key)->second.records)
      if (r.key == key) return r.p;
  throw KeyNotFound("key not in chunked structure");
}

void ChunkedRSS::refresh(Chunk& c) {
  c.pchunk = chunk_gate(c.records);
  std::vector<Slot<double>> scaled;
  scaled.reserve(c.records.size());
  for (const auto& r : c.records) scaled.push_back({r.key, c.pchunk > 0.0 ? std::min(1.0, r.p / c.pchunk) : 0.0});
  c.scaled = DynamicSampler<double>(std::move(scaled));
  if (tree_.contains(c.start))
    tree_.reweight(c.start, c.pchunk);
  else
    tree_.insert(c.start, c.pchunk);
}

ChunkedRSS::Iter ChunkedRSS::add_chunk(double start, std::vector<Slot<double>> records) {
  auto [it, fresh] = chunks_.try_emplace(start);
  if (!fresh) throw Error("chunk start collision");
  Chunk& c = it->second;
  c.start = start;
  c.records = std::move(records);
  by_start_[start] = &c;
  refresh(c);
  return it;
}

void ChunkedRSS::rebuild(std::vector<Slot<double>> records) {
  std::sort(records.begin(), records.end(), [](const auto& x, const auto& y) { return x.key < y.key; });
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].key == records[i - 1].key) throw DuplicateKey("duplicate key in chunked build");
  chunks_.clear();
  by_start_.clear();
  tree_ = RangeTreap(seed_ + rebuilds_);
  ++rebuilds_;
  n_ = last_rebuild_n_ = records.size();
  s_ = target_for(n_);
  if (n_ == 0) return;

  const std::size_t g = n_ < s_ ? 1 : (n_ + s_ - 1) / s_;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < g; ++i) {
    const std::size_t end = n_ * (i + 1) / g;
    const double start = i == 0 ? kMinusInf : records[begin].key;
    add_chunk(start, std::vector<Slot<double>>(records.begin() + static_cast<std::ptrdiff_t>(begin),
                                               records.begin() + static_cast<std::ptrdiff_t>(end)));
    begin = end;
  }
}

bool ChunkedRSS::maybe_rebuild() {
  if (n_ == last_rebuild_n_ || (n_ < 2 * last_rebuild_n_ && 2 * n_ > last_rebuild_n_)) return false;
  std::vector<Slot<double>> all;
  all.reserve(n_);
  for (const auto& [start, c] : chunks_) all.insert(all.end(), c.records.begin(), c.records.end());
  rebuild(std::move(all));
  return true;
}

void ChunkedRSS::split(Iter it) {
  Chunk& c = it->second;
  std::sort(c.records.begin(), c.records.end(), [](const auto& x, const auto& y) { return x.key < y.key; });
  const std::size_t mid = c.size() / 2;
  std::vector<Slot<double>> right(c.records.begin() + static_cast<std::ptrdiff_t>(mid), c.records.end());
  c.records.resize(mid);
  refresh(c);
  const double start = right.front().key;
  add_chunk(start, std::move(right));
  ++splits_;
}

void ChunkedRSS::merge(Iter it) {
  const Iter prev = it == chunks_.begin() ? chunks_.end() : std::prev(it);
  const Iter next = std::next(it);
  bool into_prev;
  if (prev == chunks_.end())
    into_prev = false;
  else if (next == chunks_.end())
    into_prev = true;
  else
    into_prev = prev->second.size() <= next->second.size();
  const Iter left = into_prev ? prev : it;
  const Iter right = into_prev ? it : next;

  Chunk& l = left->second;
  auto& moved = right->second.records;
  l.records.insert(l.records.end(), moved.begin(), moved.end());
  const double gone = right->first;
  tree_.erase(gone);
  by_start_.erase(gone);
  chunks_.erase(right);
  refresh(l);
  ++merges_;
  if (l.size() > s_) split(left);
}

void ChunkedRSS::insert(double key, double p) {
  if (std::isnan(key)) throw Error("range keys must not be NaN");
  checked_probability(p);
  if (contains(key)) throw DuplicateKey("duplicate key in chunked structure");
  if (chunks_.empty()) add_chunk(kMinusInf, {});
  const Iter it = chunk_for(key);
  it->second.records.push_back({key, p});
  ++n_;
  if (maybe_rebuild()) return;
  refresh(it->second);
  if (it->second.size() > s_) split(it);
}

void ChunkedRSS::erase(double key) {
  if (std::isnan(key)) throw Error("range keys must not be NaN");
  if (chunks_.empty()) throw KeyNotFound("key not in chunked structure");
  const Iter it = chunk_for(key);
  auto& recs = it->second.records;
  const auto pos = std::find_if(recs.begin(), recs.end(), [&](const auto& r) { return r.key == key; });
  if (pos == recs.end()) throw KeyNotFound("key not in chunked structure");
  *pos = recs.back();
  recs.pop_back();
  --n_;
  if (maybe_rebuild()) return;
  refresh(it->second);
  if (chunks_.size() > 1 && 2 * it->second.size() < s_) merge(it);
}

void ChunkedRSS::update(double key, double p) {
  checked_probability(p);
  if (std::isnan(key) || chunks_.empty()) throw KeyNotFound("key not in chunked structure");
  Chunk& c = chunk_for(key)->second;
  const auto pos = std::find_if(c.records.begin(), c.records.end(), [&](const auto& r) { return r.key == key; });
  if (pos == c.records.end()) throw KeyNotFound("key not in chunked structure");
  pos->p = p;
  refresh(c);
}

std::size_t ChunkedRSS::scan(const Chunk& c, double a, double b, Rng& rng, std::vector<double>& out) const {
  for (const auto& r : c.records)
    if (a <= r.key && r.key <= b && rng.uniform01() < r.p) out.push_back(r.key);
  return c.size();
}

std::size_t ChunkedRSS::query(double a, double b, Rng& rng, std::vector<double>& out) {
  if (std::isnan(a) || std::isnan(b) || a > b) throw Error("invalid range: a > b or NaN endpoint");
  if (n_ == 0) return 0;
  const Iter cl = chunk_for(a), cr = chunk_for(b);
  std::size_t work = scan(cl->second, a, b, rng, out);
  if (cl == cr) return work;
  work += scan(cr->second, a, b, rng, out);
  if (std::next(cl) == cr) return work;
  starts_.clear();
  work += tree_.query(std::nextafter(cl->first, kPlusInf), std::nextafter(cr->first, kMinusInf), rng, starts_);
  for (double st : starts_) work += by_start_.at(st)->scaled.query(rng, out);
  return work;
}

void ChunkedRSS::audit(bool deep) const {
  if (s_ != target_for(last_rebuild_n_)) throw Error("chunked: s does not match the last rebuild size");
  if (n_ != last_rebuild_n_ && (n_ >= 2 * last_rebuild_n_ || 2 * n_ <= last_rebuild_n_))
    throw Error("chunked: size left the rebuild window");
  if (by_start_.size() != chunks_.size() || tree_.size() != chunks_.size())
    throw Error("chunked: chunk index sizes disagree");
  if (!chunks_.empty() && chunks_.begin()->first != kMinusInf) throw Error("chunked: first chunk must start at -inf");
  std::size_t total = 0;
  for (auto it = chunks_.begin(); it != chunks_.end(); ++it) {
    const Chunk& c = it->second;
    const auto nx = std::next(it);
    const double end = nx == chunks_.end() ? kPlusInf : nx->first;
    total += c.size();
    if (c.start != it->first) throw Error("chunked: chunk start differs from its map key");
    if (chunks_.size() > 1 && (c.size() > s_ || 2 * c.size() < s_))
      throw Error("chunked: chunk of " + std::to_string(c.size()) + " records outside [s/2, s], s=" +
                  std::to_string(s_));
    if (chunks_.size() == 1 && c.size() > s_) throw Error("chunked: single chunk above s");
    double prod = 1.0;
    for (const auto& r : c.records) {
      if (r.key < c.start || r.key >= end) throw Error("chunked: record outside its chunk interval");
      prod *= 1.0 - r.p;
      if (!c.scaled.contains(r.key)) throw Error("chunked: scaled sampler misses a record");
      const double want = c.pchunk > 0.0 ? std::min(1.0, r.p / c.pchunk) : 0.0;
      if (c.scaled.probability(r.key) != want) throw Error("chunked: stale scaled probability");
    }
    const double direct = 1.0 - prod;
    if (std::abs(c.pchunk - direct) > 1e-9 * std::max(direct, 1e-300) + 1e-15)
      throw Error("chunked: pchunk differs from 1 - prod(1 - p)");
    if (c.scaled.size() != c.size()) throw Error("chunked: scaled sampler size differs");
    const auto bs = by_start_.find(it->first);
    if (bs == by_start_.end() || bs->second != &c) throw Error("chunked: start index stale");
    if (!tree_.contains(c.start) || tree_.probability(c.start) != c.pchunk)
      throw Error("chunked: chunk treap weight stale");
  }
  if (total != n_) throw Error("chunked: record count mismatch");
  if (deep) tree_.audit();
}

}  // namespace subsample::range
