#include "subsample/em/em_vector.hpp"

namespace subsample::em {

std::size_t records_per_block(const BlockDevice& dev) {
  const std::size_t r = dev.block_words() / kRecordWords;
  if (r == 0) throw ConfigError("block must hold at least one record (B >= 2)");
  return r;
}

EMVector allocate_vector(BlockDevice& dev, std::size_t n) {
  EMVector v;
  v.records_per_block = records_per_block(dev);
  v.n = n;
  v.first = dev.allocate(v.blocks());
  return v;
}

VectorWriter::VectorWriter(BlockDevice& dev, const EMVector& v) : dev_(dev), v_(v) {
  if (v_.n) frame_ = dev_.pin();
}

void VectorWriter::push(const EMRecord& r) {
  if (i_ >= v_.n) throw Error("VectorWriter overflow");
  const std::size_t off = v_.offset_of(i_);
  frame_[off] = r.key;
  frame_[off + 1] = std::bit_cast<Word>(r.p);
  ++i_;
  if (i_ % v_.records_per_block == 0) {
    dev_.write(v_.block_of(i_ - 1), frame_);
    std::fill(frame_.words().begin(), frame_.words().end(), 0);
  }
}

void VectorWriter::finish() {
  if (i_ % v_.records_per_block != 0) dev_.write(v_.block_of(i_ - 1), frame_);
  frame_.release();
}

VectorReader::VectorReader(BlockDevice& dev, const EMVector& v) : dev_(dev), v_(v) {}

bool VectorReader::next(EMRecord& r) {
  if (i_ >= v_.n) {
    frame_.release();
    return false;
  }
  if (i_ % v_.records_per_block == 0) {
    if (!frame_.pinned()) frame_ = dev_.pin();
    dev_.read_into(v_.block_of(i_), frame_);
  }
  r = record_at(frame_, v_.offset_of(i_));
  ++i_;
  return true;
}

EMVector write_vector(BlockDevice& dev, std::span<const EMRecord> records) {
  EMVector v = allocate_vector(dev, records.size());
  VectorWriter w(dev, v);
  for (const auto& r : records) w.push(r);
  w.finish();
  return v;
}

std::vector<EMRecord> read_vector(BlockDevice& dev, const EMVector& v) {
  std::vector<EMRecord> out;
  out.reserve(v.n);
  VectorReader rd(dev, v);
  EMRecord r;
  while (rd.next(r)) out.push_back(r);
  return out;
}

OutputWriter::OutputWriter(BlockDevice& dev) : dev_(dev), scratch_(dev.allocate(1)), frame_(dev.pin()) {}

void OutputWriter::push(std::uint64_t key) {
  frame_[fill_++] = key;
  if (fill_ == dev_.block_words()) {
    dev_.write(scratch_, frame_);
    ++blocks_;
    fill_ = 0;
  }
}

void OutputWriter::finish() {
  if (fill_) {
    dev_.write(scratch_, frame_);
    ++blocks_;
    fill_ = 0;
  }
}

void em_naive_query(BlockDevice& dev, const EMVector& v, Rng& rng, std::vector<std::uint64_t>& out,
                    OutputWriter* sink) {
  VectorReader rd(dev, v);
  EMRecord r;
  while (rd.next(r)) {
    if (rng.uniform01() < r.p) {
      out.push_back(r.key);
      if (sink) sink->push(r.key);
    }
  }
}

}  // namespace subsample::em
