#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "loralife/errors.hpp"

namespace loralife {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Decorrelated child seed for a named stream, so one scenario seed can feed
// several independent random processes.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream_tag) {
  std::uint64_t s = master ^ (0xa0761d6478bd642fULL * (stream_tag + 1));
  return splitmix64(s);
}

// mt19937_64 plus hand-rolled variate transforms. The standard pins the
// engine's output sequence but not the distributions', and simulation
// reports must be bit-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Exponential interarrival by inverse CDF; rate in events per unit time.
  double exponential(double rate) {
    if (rate <= 0.0) throw ParameterError("exponential rate must be > 0");
    return -std::log1p(-uniform01()) / rate;
  }

  // Box-Muller; the second variate of each pair is cached.
  double normal(double mean, double sigma) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + sigma * spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return mean + sigma * r * std::cos(a);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace loralife
