#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ratelab {

// Floor used inside logs and ratio denominators so degenerate inputs
// (zero rates, zero warp error) stay finite.
inline constexpr double kEps = 1e-9;

inline double clip(double x, double lo, double hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}

inline double safe_log(double x) { return std::log(x < kEps ? kEps : x); }

inline double safe_div(double num, double den) {
  return num / (den < kEps ? kEps : den);
}

// PSNR-equivalent of an MSE-unit distortion against a unit reference.
inline double quality_db(double distortion) {
  return -10.0 * std::log10(distortion < kEps ? kEps : distortion);
}

namespace rng {

// splitmix64: stateless per-key hashing so every drawn value is a pure
// function of (seed, stream, index) independent of library internals.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t stream,
                         std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(stream ^ splitmix64(index)));
}

// Uniform in (0,1); never returns 0 so it is safe under log.
inline double uniform01(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

inline double uniform(std::uint64_t seed, std::uint64_t stream,
                      std::uint64_t index, double lo, double hi) {
  return lo + (hi - lo) * uniform01(mix(seed, stream, index));
}

// Box-Muller on two hashed uniforms.
inline double gaussian(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t index) {
  const double u1 = uniform01(mix(seed, stream, 2 * index));
  const double u2 = uniform01(mix(seed, stream, 2 * index + 1));
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Small sequential engine for shuffles and draws inside the trainer.
class Engine {
 public:
  explicit Engine(std::uint64_t seed) : state_(splitmix64(seed)) {}

  std::uint64_t next() {
    state_ = splitmix64(state_);
    return state_;
  }

  double uniform01() { return rng::uniform01(next()); }

  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(next() % n);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace rng

// Shortest round-trip decimal form; identical doubles always format to
// identical bytes, so seeded runs produce byte-identical files.
inline std::string format_double(double x) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf.data(), ptr);
}

inline double parse_double(const std::string& s) {
  double value = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw std::runtime_error("not a number: '" + s + "'");
  }
  return value;
}

}  // namespace ratelab
