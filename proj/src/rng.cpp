#include "rsts/rng.hpp"

namespace rsts {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t hash_string(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RandomStream::result_type RandomStream::operator()() noexcept {
  state_ += kGolden;
  return mix64(state_);
}

double RandomStream::uniform01() noexcept {
  // 53 random bits, shifted off zero by half an ulp.
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

RandomStream derive_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t key = mix64(seed ^ 0x5851f42d4c957f2dULL);
  for (std::uint64_t p : path) {
    key = mix64(key ^ mix64(p + kGolden));
  }
  return RandomStream(key);
}

}  // namespace rsts
