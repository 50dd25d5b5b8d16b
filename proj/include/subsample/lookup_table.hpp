#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <absl/container/flat_hash_map.h>

#include "subsample/errors.hpp"
#include "subsample/rng.hpp"

namespace subsample {

// Table-lookup sampler over m records whose probabilities sit on the grid
// {0, 1/m^2, ..., 1}. Digits d[v] = m^2 p(v) are packed into one integer
// lambda with radix m^2+1; the low digit is record 1.

inline constexpr unsigned kMaxTableRecords = 8;  // (m^2+1)^m and (m^2)^m stay below 2^64

std::uint64_t table_grid(unsigned m);  // m^2
std::uint64_t encode_digits(std::span<const std::uint32_t> digits, unsigned m);
std::uint32_t decode_digit(std::uint64_t lambda, unsigned v, unsigned m);
std::vector<std::uint32_t> decode_digits(std::uint64_t lambda, unsigned m);
std::uint64_t update_digit(std::uint64_t lambda, unsigned v, std::uint32_t dnew, unsigned m);

// Transition table from row i: after the last sampled index i-1 the next one
// is j in [i, m] or m+1 for "stop". mass[j-i] are the integer weights and
// tb[du-1] the target for du uniform on [1, total].
struct JumpTable {
  unsigned i = 1;
  std::uint64_t total = 0;
  std::vector<std::uint64_t> mass;
  std::vector<std::uint8_t> tb;

  unsigned target(std::uint64_t du) const { return tb[du - 1]; }
  // Cumulative mass up to and including target j.
  std::uint64_t breakpoint(unsigned j) const;
};

// Memo of materialized jump tables for one m. Tables are never evicted; a
// materialization that would exceed the entry budget throws CapacityError.
class TableStore {
 public:
  static constexpr std::size_t kDefaultBudget = std::size_t{1} << 26;

  explicit TableStore(unsigned m, std::size_t budget_entries = kDefaultBudget);

  unsigned m() const { return m_; }
  std::uint64_t grid() const { return grid_; }
  std::size_t entries() const { return entries_; }
  std::size_t budget() const { return budget_; }
  std::size_t tables() const { return count_; }

  const JumpTable& table(std::uint64_t lambda, unsigned i);
  void materialize_all();

 private:
  JumpTable build(std::uint64_t lambda, unsigned i) const;

  unsigned m_;
  std::uint64_t grid_;
  std::uint64_t states_;  // (m^2+1)^m
  std::size_t budget_;
  std::size_t entries_ = 0;
  std::size_t count_ = 0;
  std::vector<std::unique_ptr<JumpTable>> dense_;  // used when states_*m is small
  absl::flat_hash_map<std::uint64_t, std::unique_ptr<JumpTable>> sparse_;
};

// Per-thread shared store for size m. Stores for m <= 3 are materialized
// eagerly on first use.
TableStore& shared_table_store(unsigned m);

// Exact subset draw for the digit vector encoded by lambda. Emits 1-based
// indices in increasing order; returns the number of table steps.
template <UniformSource R>
std::size_t table_query(TableStore& store, std::uint64_t lambda, R& rng, std::vector<std::uint32_t>& out) {
  const unsigned m = store.m();
  std::size_t steps = 0;
  unsigned i = 1;
  while (i <= m) {
    const JumpTable& t = store.table(lambda, i);
    const unsigned j = t.target(uniform_int(rng, t.total));
    ++steps;
    if (j > m) break;
    out.push_back(j);
    i = j + 1;
  }
  return steps;
}

// Smallest grid digit whose value is >= p.
std::uint32_t roundup_digit(double p, unsigned m);

// Independent Bernoulli(p[v]) for arbitrary real p: round every probability
// up to the grid, draw from the table, then thin each emitted index by
// p / (d/m^2). Emits 1-based indices.
template <UniformSource R>
std::size_t roundup_thin_query(std::span<const double> probs, TableStore& store, R& rng,
                               std::vector<std::uint32_t>& out) {
  const unsigned m = store.m();
  if (probs.size() != m) throw Error("roundup_thin_query: probability count differs from table size");
  std::vector<std::uint32_t> digits(m);
  for (unsigned v = 0; v < m; ++v) digits[v] = roundup_digit(checked_probability(probs[v]), m);
  const std::uint64_t lambda = encode_digits(digits, m);
  std::vector<std::uint32_t> drawn;
  std::size_t steps = table_query(store, lambda, rng, drawn);
  const double grid = static_cast<double>(store.grid());
  for (std::uint32_t v : drawn) {
    const double hi = digits[v - 1] / grid;
    const double p = probs[v - 1];
    if (p >= hi || rng.uniform01() < p / hi) out.push_back(v);
  }
  return steps + drawn.size();
}

}  // namespace subsample
