#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace rsts {

std::uint64_t mix64(std::uint64_t x) noexcept;

// FNV-1a, used to key random streams by individual id.
std::uint64_t hash_string(std::string_view s) noexcept;

// SplitMix64 generator. Cheap to construct, so every (replicate, individual)
// work item gets its own stream derived from a key path instead of sharing
// one sequential engine. Satisfies UniformRandomBitGenerator.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t state) noexcept : state_(state) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept;

  // Uniform on the open interval (0, 1).
  double uniform01() noexcept;

 private:
  std::uint64_t state_;
};

// Stream for the key path (seed, k0, k1, ...). Distinct paths give
// statistically independent streams; equal paths give identical streams.
RandomStream derive_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept;

}  // namespace rsts
