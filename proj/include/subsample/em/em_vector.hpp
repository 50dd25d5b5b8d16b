#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <vector>

#include "subsample/em/block_device.hpp"
#include "subsample/rng.hpp"

namespace subsample::em {

struct EMRecord {
  std::uint64_t key = 0;
  double p = 0.0;
};

inline constexpr std::size_t kRecordWords = 2;

// n records of (key, probability bits) packed densely from block `first`.
struct EMVector {
  BlockAddr first = 0;
  std::size_t n = 0;
  std::size_t records_per_block = 0;

  std::size_t blocks() const { return records_per_block ? (n + records_per_block - 1) / records_per_block : 0; }
  BlockAddr block_of(std::size_t i) const { return first + i / records_per_block; }
  std::size_t offset_of(std::size_t i) const { return (i % records_per_block) * kRecordWords; }
};

std::size_t records_per_block(const BlockDevice& dev);
EMVector allocate_vector(BlockDevice& dev, std::size_t n);

inline EMRecord record_at(const BlockDevice::Frame& f, std::size_t offset) {
  return {f[offset], std::bit_cast<double>(f[offset + 1])};
}

// Streams records into a vector with one pinned frame.
class VectorWriter {
 public:
  VectorWriter(BlockDevice& dev, const EMVector& v);
  void push(const EMRecord& r);
  void finish();
  std::size_t written() const { return i_; }

 private:
  BlockDevice& dev_;
  EMVector v_;
  BlockDevice::Frame frame_;
  std::size_t i_ = 0;
};

// Sequential scan with one pinned frame.
class VectorReader {
 public:
  VectorReader(BlockDevice& dev, const EMVector& v);
  bool next(EMRecord& r);

 private:
  BlockDevice& dev_;
  EMVector v_;
  BlockDevice::Frame frame_;
  std::size_t i_ = 0;
};

EMVector write_vector(BlockDevice& dev, std::span<const EMRecord> records);
std::vector<EMRecord> read_vector(BlockDevice& dev, const EMVector& v);

// Collects output keys in one frame and writes a block whenever it fills;
// finish() flushes a partial block. Writes land in a single scratch block,
// since only the count matters.
class OutputWriter {
 public:
  explicit OutputWriter(BlockDevice& dev);
  void push(std::uint64_t key);
  void finish();
  std::uint64_t blocks_written() const { return blocks_; }

 private:
  BlockDevice& dev_;
  BlockAddr scratch_;
  BlockDevice::Frame frame_;
  std::size_t fill_ = 0;
  std::uint64_t blocks_ = 0;
};

// Naive scan: reads every block once and draws a Bernoulli per record.
void em_naive_query(BlockDevice& dev, const EMVector& v, Rng& rng, std::vector<std::uint64_t>& out,
                    OutputWriter* sink = nullptr);

}  // namespace subsample::em
