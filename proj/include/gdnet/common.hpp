#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gdnet {

/// Error type for all shape/domain violations surfaced by this library.
/// Messages name the operation and the offending shapes or values.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

[[noreturn]] inline void fail(const std::string& op, const std::string& what) {
  throw Error(op + ": " + what);
}

// SplitMix64. Used to derive independent RNG streams from (seed, tag, index)
// so that parallel schedules cannot change which stream a consumer sees.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ (purpose * 0x9e3779b97f4a7c15ULL)) ^ index);
}

/// Stable tags for derived RNG streams.
namespace rng_tag {
constexpr std::uint64_t init = 1;
constexpr std::uint64_t shuffle = 2;
constexpr std::uint64_t augment = 3;
constexpr std::uint64_t noise = 4;
constexpr std::uint64_t scene = 5;
}  // namespace rng_tag

}  // namespace gdnet
