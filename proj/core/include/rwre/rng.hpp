#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <cstddef>

namespace rwre {

// Philox4x32-10 counter-based generator (Salmon et al., Random123).
//
// The 64-bit seed is the key; the 128-bit counter is split into a 64-bit
// stream id (high half) and a 64-bit block index (low half). Two generators
// with the same seed and different stream ids never share output blocks, so
// Monte Carlo replicates can be given independent streams without any
// coordination between workers.
class Philox4x32 {
 public:
  using result_type = std::uint64_t;
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  Philox4x32(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (used_ == 2) refill();
    const auto lo = buffer_[2 * used_];
    const auto hi = buffer_[2 * used_ + 1];
    ++used_;
    return (static_cast<std::uint64_t>(hi) << 32) | lo;
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe to pass to log().
  double uniform_pos() noexcept {
    return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53;
  }

  std::uint64_t stream() const noexcept { return stream_; }

  // The raw bijection, exposed for known-answer tests.
  static Block encrypt(Block ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
             static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
             static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  void refill() noexcept {
    const Block ctr{static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                    static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    buffer_ = encrypt(ctr, key_);
    ++block_;
    used_ = 0;
  }

  Key key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  Block buffer_{};
  int used_ = 2;
};

// Stream ids used by the simulators. A replicate r owns ids
// [r * kStreamsPerReplicate, (r + 1) * kStreamsPerReplicate).
enum class StreamPurpose : std::uint64_t {
  kEnvironmentRight = 0,
  kEnvironmentLeft = 1,
  kWalk = 2,
  kBranching = 3,
  kStarts = 4,
  kInvariantDensity = 5,
};
inline constexpr std::uint64_t kStreamsPerReplicate = 8;

constexpr std::uint64_t stream_id(std::uint64_t replicate, StreamPurpose purpose) noexcept {
  return replicate * kStreamsPerReplicate + static_cast<std::uint64_t>(purpose);
}

// Index drawn from a probability vector by inversion of the cumulative sum.
template <typename Probs>
std::size_t sample_index(Philox4x32& rng, const Probs& probs, std::size_t size) noexcept {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < size; ++i) {
    acc += probs(i);
    if (u < acc) return i;
  }
  return size - 1;
}

// P(m) = (1 - a)^m a on {0, 1, 2, ...}, by inversion.
inline std::uint64_t sample_geometric(Philox4x32& rng, double success) noexcept {
  if (success >= 1.0) return 0;
  const double draw = std::log(rng.uniform_pos()) / std::log1p(-success);
  return static_cast<std::uint64_t>(draw);
}

}  // namespace rwre
