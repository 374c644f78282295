#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace maxent {

/* Seeded random stream with fixed transforms, so identical seeds give
 * identical draws on every platform (the std:: distributions are
 * implementation-defined and would break sequence reproducibility). */
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // uniform on [0, 1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // uniform on (0, 1], safe as a log/sqrt argument
  double uniform_pos() {
    return static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
  }

  // uniform integer in [0, n)
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(gen_()) * n) >> 64);
  }

  // standard normal via Box-Muller, one value per call
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) {
    return mean + stddev * normal();
  }

private:
  std::mt19937_64 gen_;
};

}  // namespace maxent
