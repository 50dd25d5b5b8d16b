#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "subsample/dynamic_sampler.hpp"
#include "subsample/em/block_device.hpp"
#include "subsample/em/em_vector.hpp"
#include "subsample/em/sample_buffer_tree.hpp"

namespace subsample::em {

struct EmConfig {
  // Instances with at most this many records go to the in-memory base.
  // 0 means max(B, M/8).
  std::size_t base_records = 0;
  // Words for the without-replacement dedup set; larger t scans. 0 means M/16.
  std::size_t dedup_words = 0;
  // Words handed to root buffers; 0 means whatever the partition leaves.
  std::size_t root_words = 0;
  TreeShape shape{};  // fanout 0 / batch 0 fall back to default_tree_shape
};

// One bucket of an EM level: its records on disk and the set sampler over them.
struct EmBucket {
  unsigned level = 0;
  double pbar = 1.0;
  double gate = 0.0;
  EMVector vec;
  std::unique_ptr<SampleBufferTree> tree;

  std::size_t size() const { return vec.n; }
};

struct EmLevel {
  std::size_t size = 0;
  unsigned L = 0;
  std::vector<EmBucket> buckets;  // index l = 1..L; slot 0 unused
  std::size_t zero_records = 0;
};

// Jump query on one bucket conditioned on at least one landing: the landing
// count t comes from Geo(pbar) skips in memory, the t landed records from the
// set sampler, and each is thinned by its accept bit.
void em_jump_given_landing(EmBucket& b, Rng& rng, std::vector<std::uint64_t>& out);

// Static subset sampler over records stored on a BlockDevice. Each EM level
// splits its records into dyadic buckets on disk; the bucket gates form the
// next instance, until one is small enough for an in-memory DynamicSampler.
class EmSampler {
 public:
  EmSampler(BlockDevice& dev, std::span<const EMRecord> records, EmConfig cfg = {});

  void query(Rng& rng, std::vector<std::uint64_t>& out, OutputWriter* sink = nullptr);

  std::size_t size() const { return n_; }
  double mu() const { return mu_; }
  std::size_t em_levels() const { return levels_.size(); }
  const std::vector<EmLevel>& levels() const { return levels_; }
  std::size_t base_size() const { return base_.size(); }
  std::uint64_t build_ios() const { return build_ios_; }
  std::size_t root_words() const { return root_words_; }
  const EmConfig& config() const { return cfg_; }

  void audit() const;

 private:
  EmLevel build_level(const EMVector& in, std::size_t size);
  void allocate_roots();

  BlockDevice& dev_;
  EmConfig cfg_;
  std::size_t n_ = 0;
  double mu_ = 0.0;
  std::vector<EmLevel> levels_;
  DynamicSampler<std::uint64_t> base_;
  Reservation base_res_;
  std::size_t root_words_ = 0;
  std::uint64_t build_ios_ = 0;
  std::vector<std::uint64_t> sel_, next_;
};

}  // namespace subsample::em
