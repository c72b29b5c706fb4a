#ifndef PNMIMO_RANDOM_HPP
#define PNMIMO_RANDOM_HPP

#include <cstdint>

#include "pnmimo/common.hpp"

namespace pnmimo {

/// What a random stream is used for. The tag is folded into the stream key so
/// that, e.g., the noise of frame 7 does not depend on how many channel draws
/// frame 7 consumed.
enum class StreamPurpose : std::uint64_t {
  channel = 1,
  phase_noise = 2,
  data = 3,
  awgn = 4,
  csi_error = 5,
  pilots = 6,
  filler = 7,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stream key = splitmix(splitmix(splitmix(seed) ^ frame) ^ purpose). The SNR
/// point is deliberately not part of the key: every SNR point and every
/// receiver variant sees the same frames (common random numbers).
inline Rng make_stream(std::uint64_t seed, std::uint64_t frame, StreamPurpose purpose) {
  std::uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ frame);
  k = splitmix64(k ^ static_cast<std::uint64_t>(purpose));
  return Rng(k);
}

}  // namespace pnmimo

#endif  // PNMIMO_RANDOM_HPP
