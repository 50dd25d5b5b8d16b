#include "subsample/em/block_device.hpp"

#include <algorithm>
#include <string>

namespace subsample::em {

BlockDevice::Frame& BlockDevice::Frame::operator=(Frame&& o) noexcept {
  if (this != &o) {
    release();
    dev_ = o.dev_;
    buf_ = std::move(o.buf_);
    o.dev_ = nullptr;
  }
  return *this;
}

void BlockDevice::Frame::release() {
  if (!dev_) return;
  --dev_->pinned_;
  dev_->pool_.push_back(std::move(buf_));
  buf_.clear();
  dev_ = nullptr;
}

BlockDevice::BlockDevice(std::size_t block_words, std::size_t memory_words) : B_(block_words), M_(memory_words) {
  if (B_ == 0) throw ConfigError("block size must be positive");
  if (M_ < 2 * B_)
    throw ConfigError("memory must hold two blocks: M=" + std::to_string(M_) + " B=" + std::to_string(B_));
}

BlockAddr BlockDevice::allocate(std::size_t blocks) {
  const BlockAddr first = block_count();
  store_.resize(store_.size() + blocks * B_, 0);
  return first;
}

void BlockDevice::check_addr(BlockAddr addr) const {
  if (addr >= block_count()) throw Error("block address out of range: " + std::to_string(addr));
}

void BlockDevice::note_peak() { peak_ = std::max(peak_, pinned_ * B_ + reserved_); }

BlockDevice::Frame BlockDevice::pin() {
  if ((pinned_ + 1) * B_ + reserved_ > M_)
    throw FrameBudgetExceeded("frame budget exceeded: " + std::to_string(pinned_ + 1) + " frames with " +
                              std::to_string(reserved_) + " reserved words, M=" + std::to_string(M_));
  ++pinned_;
  note_peak();
  std::vector<Word> buf;
  if (!pool_.empty()) {
    buf = std::move(pool_.back());
    pool_.pop_back();
  }
  buf.assign(B_, 0);
  return Frame(this, std::move(buf));
}

BlockDevice::Frame BlockDevice::read(BlockAddr addr) {
  check_addr(addr);
  Frame f = pin();
  read_into(addr, f);
  return f;
}

void BlockDevice::read_into(BlockAddr addr, Frame& f) {
  check_addr(addr);
  if (!f.pinned()) throw Error("read into an unpinned frame");
  std::copy_n(store_.begin() + static_cast<std::ptrdiff_t>(addr * B_), B_, f.buf_.begin());
  ++reads_;
}

void BlockDevice::write(BlockAddr addr, const Frame& f) {
  check_addr(addr);
  if (!f.pinned()) throw Error("write from an unpinned frame");
  std::copy_n(f.buf_.begin(), B_, store_.begin() + static_cast<std::ptrdiff_t>(addr * B_));
  ++writes_;
}

void BlockDevice::reserve_words(std::size_t words) {
  if (pinned_ * B_ + reserved_ + words > M_)
    throw FrameBudgetExceeded("memory reservation of " + std::to_string(words) + " words exceeds M=" +
                              std::to_string(M_));
  reserved_ += words;
  note_peak();
}

void BlockDevice::release_words(std::size_t words) { reserved_ -= std::min(words, reserved_); }

}  // namespace subsample::em
