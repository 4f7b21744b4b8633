#pragma once

#include <cstdint>
#include <random>

namespace aepam {

/// Seedable random stream used by every stochastic stage.
///
/// Independent substreams are derived from a master seed with
/// `RandomStream::derive(master, stream_id)`: the pair is mixed through two
/// rounds of splitmix64 and the result seeds a fresh mt19937_64. Workers and
/// Monte Carlo blocks take `stream_id` = block index, so results do not depend
/// on scheduling.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  static RandomStream derive(std::uint64_t master_seed, std::uint64_t stream_id);

  double gaussian() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  int uniform_index(int n) {
    return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(engine_));
  }
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);

/// FNV-1a over a byte string; used for config hashes and stream keys.
std::uint64_t fnv1a64(const void* data, std::size_t size);

}  // namespace aepam
