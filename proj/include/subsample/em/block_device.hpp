#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "subsample/errors.hpp"

namespace subsample::em {

using Word = std::uint64_t;
using BlockAddr = std::uint64_t;

// Simulated disk of B-word blocks with an M-word memory. Every algorithm
// touches block contents only through pinned frames; pinning past the memory
// budget throws FrameBudgetExceeded. Long-lived in-memory structures reserve
// their words up front so the same budget covers them.
class BlockDevice {
 public:
  class Frame {
   public:
    Frame() = default;
    Frame(Frame&& o) noexcept : dev_(o.dev_), buf_(std::move(o.buf_)) { o.dev_ = nullptr; }
    Frame& operator=(Frame&& o) noexcept;
    Frame(const Frame&) = delete;
    Frame& operator=(const Frame&) = delete;
    ~Frame() { release(); }

    std::span<Word> words() { return buf_; }
    std::span<const Word> words() const { return buf_; }
    Word& operator[](std::size_t i) { return buf_[i]; }
    Word operator[](std::size_t i) const { return buf_[i]; }
    bool pinned() const { return dev_ != nullptr; }
    void release();

   private:
    friend class BlockDevice;
    Frame(BlockDevice* dev, std::vector<Word> buf) : dev_(dev), buf_(std::move(buf)) {}
    BlockDevice* dev_ = nullptr;
    std::vector<Word> buf_;
  };

  BlockDevice(std::size_t block_words, std::size_t memory_words);

  std::size_t block_words() const { return B_; }
  std::size_t memory_words() const { return M_; }
  std::size_t frame_limit() const { return M_ / B_; }
  std::size_t block_count() const { return store_.size() / B_; }

  // Appends `blocks` zeroed blocks; returns the first address.
  BlockAddr allocate(std::size_t blocks);

  Frame pin();
  Frame read(BlockAddr addr);
  // Reads into an already pinned frame.
  void read_into(BlockAddr addr, Frame& f);
  void write(BlockAddr addr, const Frame& f);

  void reserve_words(std::size_t words);
  void release_words(std::size_t words);

  std::size_t pinned_frames() const { return pinned_; }
  std::size_t reserved_words() const { return reserved_; }
  std::size_t free_words() const { return M_ - pinned_ * B_ - reserved_; }
  std::size_t peak_words() const { return peak_; }

  std::uint64_t reads() const { return reads_; }
  std::uint64_t writes() const { return writes_; }
  std::uint64_t ios() const { return reads_ + writes_; }
  void reset_counters() {
    reads_ = 0;
    writes_ = 0;
  }

 private:
  void check_addr(BlockAddr addr) const;
  void note_peak();

  std::size_t B_;
  std::size_t M_;
  std::vector<Word> store_;
  std::vector<std::vector<Word>> pool_;
  std::size_t pinned_ = 0;
  std::size_t reserved_ = 0;
  std::size_t peak_ = 0;
  std::uint64_t reads_ = 0;
  std::uint64_t writes_ = 0;
};

// RAII memory reservation on a device.
class Reservation {
 public:
  Reservation() = default;
  Reservation(BlockDevice& dev, std::size_t words) : dev_(&dev), words_(words) { dev.reserve_words(words); }
  Reservation(Reservation&& o) noexcept : dev_(o.dev_), words_(o.words_) { o.dev_ = nullptr; }
  Reservation& operator=(Reservation&& o) noexcept {
    if (this != &o) {
      reset();
      dev_ = o.dev_;
      words_ = o.words_;
      o.dev_ = nullptr;
    }
    return *this;
  }
  ~Reservation() { reset(); }
  void reset() {
    if (dev_) dev_->release_words(words_);
    dev_ = nullptr;
  }
  std::size_t words() const { return dev_ ? words_ : 0; }

 private:
  BlockDevice* dev_ = nullptr;
  std::size_t words_ = 0;
};

}  // namespace subsample::em
