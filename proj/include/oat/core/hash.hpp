#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace oat {

/// 64-bit FNV-1a. Used for config hashes and content-addressed names.
constexpr std::uint64_t fnv1a(std::string_view bytes,
                              std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a_bytes(std::span<const std::byte> bytes,
                          std::uint64_t h = 0xcbf29ce484222325ULL) noexcept;

/// splitmix64 finalizer; derives independent seeds from (seed, index) pairs.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
  return mix_seed(mix_seed(seed, a), b);
}

std::string hex64(std::uint64_t v);

/// CRC-32 (IEEE 802.3 polynomial, zlib convention).
std::uint32_t crc32(std::span<const std::byte> bytes) noexcept;

std::uint64_t file_content_hash(const std::string& path);

}  // namespace oat
