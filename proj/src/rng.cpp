#include "crnep/rng.hpp"

#include <cmath>

namespace crnep {

double Rng::exponential(double rate) { return -std::log(uniform()) / rate; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * M_PI * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::int64_t Rng::poisson(double mean) {
  std::int64_t total = 0;
  while (mean > 0.0) {
    const double chunk = std::min(mean, 500.0);
    mean -= chunk;
    // Sequential inversion of the CDF.
    const double u = uniform();
    double p = std::exp(-chunk);
    double cdf = p;
    std::int64_t x = 0;
    while (u > cdf && p > 0.0) {
      ++x;
      p *= chunk / static_cast<double>(x);
      cdf += p;
    }
    total += x;
  }
  return total;
}

}  // namespace crnep
