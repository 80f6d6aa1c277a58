#pragma once

#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>

namespace nwc {

// 64-bit FNV-1a; used for manifest content hashes.
class Fnv1a {
 public:
  void update(std::span<const unsigned char> bytes) {
    for (unsigned char b : bytes) {
      state_ ^= b;
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view text) {
    update(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace nwc
