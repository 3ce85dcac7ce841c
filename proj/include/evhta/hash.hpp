#pragma once

#include <cstdint>
#include <span>

namespace evhta {

/// 64-bit FNV-1a, streamable: feed chunks through update().
class FrameHasher {
 public:
  void update(std::span<const std::uint8_t> bytes) noexcept {
    for (std::uint8_t b : bytes) {
      h_ ^= b;
      h_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t digest() const noexcept { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t hash_bytes(std::span<const std::uint8_t> bytes) noexcept {
  FrameHasher h;
  h.update(bytes);
  return h.digest();
}

}  // namespace evhta
