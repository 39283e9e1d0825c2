#pragma once
#include <cstdint>

namespace twophase {

// Splittable counter-based stream (splitmix64 core). Hand-rolled rather than
// <random> so that draws are identical across platforms/compilers and child
// streams can be derived by name: results must not depend on which thread
// consumed which replication.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  // Independent stream derived from this stream's key and a tag. Pure: does
  // not advance this stream.
  RngStream child(std::uint64_t tag) const;

  std::uint64_t next_u64();
  double uniform01();                       // [0, 1)
  std::uint64_t below(std::uint64_t n);     // uniform on {0, ..., n-1}
  double normal();                          // standard normal (polar method)
  double exponential(double rate);          // mean 1/rate

 private:
  RngStream() = default;
  std::uint64_t key_ = 0;
  std::uint64_t state_ = 0;
};

}  // namespace twophase
