#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>

namespace mvjump {

// 64-bit FNV-1a.
class Fnv1a {
 public:
  Fnv1a& bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ull;
    }
    return *this;
  }
  Fnv1a& str(std::string_view s) { return bytes(s.data(), s.size()).bytes("\0", 1); }
  Fnv1a& num(double v) { return bytes(&v, sizeof v); }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ull;
};

inline std::uint64_t fnv1a(std::string_view s) { return Fnv1a().bytes(s.data(), s.size()).value(); }

}  // namespace mvjump
