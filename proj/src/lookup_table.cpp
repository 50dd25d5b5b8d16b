#include "subsample/lookup_table.hpp"

#include <cmath>
#include <map>
#include <string>

namespace subsample {

namespace {

void check_m(unsigned m) {
  if (m == 0 || m > kMaxTableRecords)
    throw ConfigError("table size m must be in [1, " + std::to_string(kMaxTableRecords) + "], got " +
                      std::to_string(m));
}

std::uint64_t ipow(std::uint64_t base, unsigned e) {
  std::uint64_t r = 1;
  while (e--) r *= base;
  return r;
}

}  // namespace

std::uint64_t table_grid(unsigned m) {
  check_m(m);
  return std::uint64_t{m} * m;
}

std::uint64_t encode_digits(std::span<const std::uint32_t> digits, unsigned m) {
  const std::uint64_t grid = table_grid(m);
  if (digits.size() != m) throw Error("encode_digits: expected " + std::to_string(m) + " digits");
  std::uint64_t lambda = 0;
  for (std::size_t v = m; v-- > 0;) {
    if (digits[v] > grid) throw Error("digit out of range: " + std::to_string(digits[v]));
    lambda = lambda * (grid + 1) + digits[v];
  }
  return lambda;
}

std::uint32_t decode_digit(std::uint64_t lambda, unsigned v, unsigned m) {
  const std::uint64_t radix = table_grid(m) + 1;
  if (v < 1 || v > m) throw Error("digit position out of range");
  return static_cast<std::uint32_t>((lambda / ipow(radix, v - 1)) % radix);
}

std::vector<std::uint32_t> decode_digits(std::uint64_t lambda, unsigned m) {
  const std::uint64_t radix = table_grid(m) + 1;
  std::vector<std::uint32_t> d(m);
  for (unsigned v = 0; v < m; ++v) {
    d[v] = static_cast<std::uint32_t>(lambda % radix);
    lambda /= radix;
  }
  return d;
}

std::uint64_t update_digit(std::uint64_t lambda, unsigned v, std::uint32_t dnew, unsigned m) {
  const std::uint64_t grid = table_grid(m);
  if (v < 1 || v > m) throw Error("digit position out of range");
  if (dnew > grid) throw Error("digit out of range: " + std::to_string(dnew));
  const std::uint64_t radix = grid + 1;
  const std::uint64_t low = ipow(radix, v - 1);
  const std::uint64_t high = low * radix;
  return (lambda / high) * high + dnew * low + lambda % low;
}

std::uint64_t JumpTable::breakpoint(unsigned j) const {
  std::uint64_t c = 0;
  for (unsigned k = i; k <= j; ++k) c += mass[k - i];
  return c;
}

TableStore::TableStore(unsigned m, std::size_t budget_entries)
    : m_(m), grid_(table_grid(m)), states_(ipow(grid_ + 1, m)), budget_(budget_entries) {
  if (states_ * m_ <= (std::uint64_t{1} << 20)) dense_.resize(states_ * m_);
}

JumpTable TableStore::build(std::uint64_t lambda, unsigned i) const {
  const auto d = decode_digits(lambda, m_);
  JumpTable t;
  t.i = i;
  t.total = ipow(grid_, m_ - i + 1);
  t.mass.resize(m_ + 2 - i);
  // Mass[j] = prod_{k=i}^{j-1} (m^2 - d[k]) * d[j] * (m^2)^max(0, m-j), d[m+1] = 1.
  std::uint64_t prefix = 1;
  for (unsigned j = i; j <= m_ + 1; ++j) {
    const std::uint64_t beta = j <= m_ ? d[j - 1] : 1;
    const std::uint64_t pad = j < m_ ? ipow(grid_, m_ - j) : 1;
    t.mass[j - i] = prefix * beta * pad;
    if (j <= m_) prefix *= grid_ - d[j - 1];
  }
  t.tb.reserve(t.total);
  for (unsigned j = i; j <= m_ + 1; ++j) t.tb.insert(t.tb.end(), t.mass[j - i], static_cast<std::uint8_t>(j));
  return t;
}

const JumpTable& TableStore::table(std::uint64_t lambda, unsigned i) {
  if (lambda >= states_ || i < 1 || i > m_) throw Error("table lookup out of range");
  const std::uint64_t slot = lambda * m_ + (i - 1);
  std::unique_ptr<JumpTable>* cell;
  if (!dense_.empty()) {
    cell = &dense_[slot];
  } else {
    cell = &sparse_[slot];
  }
  if (!*cell) {
    const std::uint64_t need = ipow(grid_, m_ - i + 1);
    if (entries_ + need > budget_) {
      if (dense_.empty()) sparse_.erase(slot);
      throw CapacityError("table store budget of " + std::to_string(budget_) + " entries exhausted");
    }
    *cell = std::make_unique<JumpTable>(build(lambda, i));
    entries_ += need;
    ++count_;
  }
  return **cell;
}

void TableStore::materialize_all() {
  for (std::uint64_t lambda = 0; lambda < states_; ++lambda)
    for (unsigned i = 1; i <= m_; ++i) table(lambda, i);
}

TableStore& shared_table_store(unsigned m) {
  thread_local std::map<unsigned, std::unique_ptr<TableStore>> stores;
  auto& slot = stores[m];
  if (!slot) {
    slot = std::make_unique<TableStore>(m);
    if (m <= 3) slot->materialize_all();
  }
  return *slot;
}

std::uint32_t roundup_digit(double p, unsigned m) {
  const std::uint64_t grid = table_grid(m);
  const double g = static_cast<double>(grid);
  auto d = static_cast<std::uint64_t>(std::ceil(p * g));
  if (d > grid) d = grid;
  while (d < grid && static_cast<double>(d) / g < p) ++d;
  return static_cast<std::uint32_t>(d);
}

}  // namespace subsample
