#include "twophase/rng.hpp"

#include <cmath>

#include "twophase/errors.hpp"

namespace twophase {

namespace {
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
}  // namespace

RngStream::RngStream(std::uint64_t seed) {
  key_ = mix64(seed ^ 0x6A09E667F3BCC909ULL);
  state_ = key_;
}

RngStream RngStream::child(std::uint64_t tag) const {
  RngStream s;
  s.key_ = mix64(key_ + kGamma * (2 * tag + 1));
  s.state_ = s.key_;
  return s;
}

std::uint64_t RngStream::next_u64() {
  state_ += kGamma;
  return mix64(state_);
}

double RngStream::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw NumericalError("RngStream::below(0)");
  const std::uint64_t threshold = (0 - n) % n;  // rejection bound for unbiasedness
  for (;;) {
    std::uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

double RngStream::normal() {
  // Marsaglia polar; second variate discarded to keep the call sequence simple.
  for (;;) {
    double u = 2.0 * uniform01() - 1.0;
    double v = 2.0 * uniform01() - 1.0;
    double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

double RngStream::exponential(double rate) {
  return -std::log1p(-uniform01()) / rate;
}

}  // namespace twophase
