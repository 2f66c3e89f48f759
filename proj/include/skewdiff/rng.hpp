// Copyright 2026 The skewdiff Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <limits>
#include <random>

#include <boost/random/normal_distribution.hpp>

namespace skewdiff {

/// SplitMix64 finalizer. Used only to expand seeds into generator state.
constexpr std::uint64_t splitmix64(std::uint64_t &state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// xoshiro256++ (Blackman & Vigna). Satisfies UniformRandomBitGenerator, so
/// it plugs into the <random> distributions.
class Xoshiro256pp {
public:
  using result_type = std::uint64_t;

  explicit Xoshiro256pp(std::uint64_t seed = 0) noexcept { reseed(seed); }

  void reseed(std::uint64_t seed) noexcept {
    std::uint64_t sm = seed;
    for (auto &word : s_) {
      word = splitmix64(sm);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  bool operator==(const Xoshiro256pp &) const = default;

private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4] = {};
};

/// Seed of the stream that belongs to path `index` of an ensemble with the
/// given master seed. Depends only on (master_seed, index).
constexpr std::uint64_t stream_seed(std::uint64_t master_seed,
                                    std::uint64_t index) noexcept {
  std::uint64_t a = master_seed;
  const std::uint64_t h = splitmix64(a);
  std::uint64_t b = h ^ (index * 0xD1B54A32D192ED03ULL);
  return splitmix64(b);
}

/// Per-path random source: an engine plus the stateful helpers that the
/// schemes draw from (fair coin bits, uniforms, standard normals via the
/// Boost ziggurat sampler).
class PathRng {
public:
  explicit PathRng(std::uint64_t seed) : engine_(seed) {}

  /// Fair coin, one bit at a time from a buffered 64-bit word.
  bool coin() noexcept {
    if (bits_left_ == 0) {
      bits_ = engine_();
      bits_left_ = 64;
    }
    const bool up = (bits_ & 1U) != 0;
    bits_ >>= 1;
    --bits_left_;
    return up;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double normal() { return normal_(engine_); }

  Xoshiro256pp &engine() noexcept { return engine_; }

private:
  Xoshiro256pp engine_;
  boost::random::normal_distribution<double> normal_{0.0, 1.0};
  std::uint64_t bits_ = 0;
  int bits_left_ = 0;
};

} // namespace skewdiff
