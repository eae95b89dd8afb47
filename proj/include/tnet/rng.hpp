#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace tnet {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Reproducible random stream keyed by (seed, stream id).
class RngStream {
 public:
  RngStream(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream), eng_(splitmix64(splitmix64(seed) ^ splitmix64(~stream))) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  /// Independent child stream, e.g. one per replication or primitive.
  RngStream substream(std::uint64_t id) const {
    return RngStream(splitmix64(seed_ ^ splitmix64(stream_ + 0x632be59bd9b4e019ULL)), id);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    double u;
    do u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    while (u == 0.0);
    return u;
  }

  double normal() { return normal_(eng_); }
  double exponential() { return -std::log(uniform()); }
  double gamma(double shape, double scale) { return std::gamma_distribution<double>(shape, scale)(eng_); }

  std::mt19937_64& engine() noexcept { return eng_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 eng_;
  std::normal_distribution<double> normal_;
};

}  // namespace tnet
