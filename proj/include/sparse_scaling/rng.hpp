// Copyright 2026 The sparse-scaling Authors
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

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <string_view>

namespace sparse_scaling {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A stream is addressed by a 64-bit key and a 64-bit stream index; the
/// remaining 64 counter bits enumerate blocks inside the stream. Two
/// generators built from the same (key, stream) pair produce identical
/// sequences regardless of what any other stream has consumed, which is what
/// lets sweep grid points be computed in any order.
///
/// Satisfies UniformRandomBitGenerator with 64-bit outputs, so the standard
/// <random> distributions can be layered on top.
class Philox4x32 {
 public:
  using result_type = std::uint64_t;
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  Philox4x32(std::uint64_t key, std::uint64_t stream) noexcept
      : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
        stream_(stream) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (cursor_ == 2) refill();
    const std::uint64_t lo = buffer_[2 * cursor_];
    const std::uint64_t hi = buffer_[2 * cursor_ + 1];
    ++cursor_;
    return lo | (hi << 32);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1).
  double uniform_open() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  void discard(std::uint64_t n) noexcept {
    for (std::uint64_t i = 0; i < n; ++i) (*this)();
  }

  /// The raw 10-round bijection.
  static Block block(Block ctr, Key key) noexcept {
    for (int r = 0; r < 10; ++r) {
      if (r > 0) {
        key[0] += 0x9E3779B9u;
        key[1] += 0xBB67AE85u;
      }
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
             static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
             static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  void refill() noexcept {
    const Block ctr{static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                    static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    buffer_ = block(ctr, key_);
    ++counter_;
    cursor_ = 0;
  }

  Key key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  Block buffer_{};
  int cursor_ = 2;
};

/// SplitMix64 finalizer; used only to derive stream keys.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Folds a sequence of words into one key. Order matters.
constexpr std::uint64_t derive_key(std::initializer_list<std::uint64_t> words) noexcept {
  std::uint64_t h = 0x243F6A8885A308D3ull;
  for (const std::uint64_t w : words) h = mix64(h ^ mix64(w));
  return h;
}

/// 64-bit FNV-1a. Stable across platforms, unlike std::hash.
constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

/// What a stream is used for. Distinct purposes never share random numbers.
enum class StreamPurpose : std::uint64_t {
  teacher = 1,
  data = 2,
  embedding = 3,
  test_set = 4,
  power_iteration = 5,
  naive_data = 6,
  replicate = 7,
};

/// Root of all randomness for one (experiment, seed) pair.
struct SeedContext {
  std::uint64_t experiment = 0;
  std::uint64_t seed = 0;

  /// Key for a purpose plus up to two qualifiers (for example the sample count D).
  std::uint64_t key(StreamPurpose purpose, std::uint64_t a = 0, std::uint64_t b = 0) const noexcept {
    return derive_key({experiment, seed, static_cast<std::uint64_t>(purpose), a, b});
  }

  Philox4x32 stream(StreamPurpose purpose, std::uint64_t substream = 0, std::uint64_t a = 0,
                    std::uint64_t b = 0) const noexcept {
    return Philox4x32(key(purpose, a, b), substream);
  }
};

/// Standard normal draws. std::normal_distribution caches its second
/// variate, so a fresh one per stream keeps streams independent of call order.
template <class Fill>
inline void fill_standard_normal(Philox4x32& gen, Fill&& sink, std::size_t count) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < count; ++i) sink(i, normal(gen));
}

}  // namespace sparse_scaling
