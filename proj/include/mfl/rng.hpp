#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace mfl {

namespace detail {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Stateless:
// one block of four 32-bit words per (counter, key) pair.
struct Philox4x32 {
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
      if (round != 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
      const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Map a 64-bit word to a double in (0, 1]; never returns 0 so log() is safe.
inline double u64_to_unit_double(std::uint64_t v) {
  return (static_cast<double>(v >> 11) + 1.0) * 0x1.0p-53;
}

}  // namespace detail

// Domain tags keep draw sequences from different uses of the same
// (seed, player, env, particle) triple disjoint.
enum class RngDomain : std::uint32_t {
  Init = 1,
  Step = 2,
  Metropolis = 3,
  Data = 4,
  Projection = 5,
  Scratch = 6,
};

// A stateless random stream: (seed, domain, stream id) identifies the stream
// and the draw index identifies the variate. Identical inputs always produce
// the identical output, independent of call order or thread schedule.
// Stream id layout: particle in the low word, (player | env) in the high word,
// so ids are injective for player < 2^8, env < 2^24, particle < 2^32.
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t seed, RngDomain domain, std::uint32_t player,
            std::uint32_t env, std::uint32_t particle)
      : id_lo_(particle),
        id_hi_((player & 0xFFu) | (env << 8)) {
    const std::uint64_t k = detail::splitmix64(
        seed ^ (static_cast<std::uint64_t>(domain) * 0xA24BAED4963EE407ull));
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  }

  // k-th uniform variate in (0, 1].
  double uniform(std::uint64_t draw_index) const {
    const auto b = block_at(draw_index >> 1);
    const unsigned lane = static_cast<unsigned>(draw_index & 1u) * 2u;
    const std::uint64_t v =
        (static_cast<std::uint64_t>(b[lane]) << 32) | b[lane + 1];
    return detail::u64_to_unit_double(v);
  }

  // k-th standard normal variate (Box-Muller; two per Philox block).
  double normal(std::uint64_t draw_index) const {
    const auto b = block_at(draw_index >> 1);
    const double u1 = detail::u64_to_unit_double(
        (static_cast<std::uint64_t>(b[0]) << 32) | b[1]);
    const double u2 = detail::u64_to_unit_double(
        (static_cast<std::uint64_t>(b[2]) << 32) | b[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    return (draw_index & 1u) ? r * std::sin(a) : r * std::cos(a);
  }

  std::uint64_t raw(std::uint64_t draw_index) const {
    const auto b = block_at(draw_index);
    return (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
  }

 private:
  std::array<std::uint32_t, 4> block_at(std::uint64_t block_index) const {
    return detail::Philox4x32::block(
        {static_cast<std::uint32_t>(block_index),
         static_cast<std::uint32_t>(block_index >> 32), id_lo_, id_hi_},
        key_);
  }

  std::array<std::uint32_t, 2> key_{0, 0};
  std::uint32_t id_lo_ = 0;
  std::uint32_t id_hi_ = 0;
};

// Convenience wrapper that advances a draw counter; equivalent to calling the
// stream with increasing indices.
class RngSequence {
 public:
  explicit RngSequence(RngStream stream, std::uint64_t start = 0)
      : stream_(stream), next_(start) {}

  double uniform() { return stream_.uniform(next_++); }
  double normal() { return stream_.normal(next_++); }
  std::uint64_t next_index() const { return next_; }

 private:
  RngStream stream_;
  std::uint64_t next_;
};

}  // namespace mfl
