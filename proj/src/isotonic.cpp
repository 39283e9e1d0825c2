#include "twophase/isotonic.hpp"

#include "twophase/errors.hpp"

namespace twophase {

std::vector<double> isotonic_fit(const std::vector<double>& y, const std::vector<double>& w) {
  if (y.size() != w.size()) throw DataError("isotonic_fit: size mismatch");
  const size_t n = y.size();
  std::vector<double> out(n);
  if (n == 0) return out;
  // Block stack: (mean value, total weight, end index exclusive).
  std::vector<double> bv(n), bw(n);
  std::vector<size_t> be(n);
  size_t top = 0;
  for (size_t i = 0; i < n; ++i) {
    if (w[i] < 0.0) throw DataError("isotonic_fit: negative weight");
    double v = y[i], tw = w[i];
    size_t e = i + 1;
    while (top > 0 && bv[top - 1] >= v) {
      const double ww = bw[top - 1] + tw;
      v = (ww > 0.0) ? (bw[top - 1] * bv[top - 1] + tw * v) / ww : bv[top - 1];
      tw = ww;
      --top;
    }
    bv[top] = v;
    bw[top] = tw;
    be[top] = e;
    ++top;
  }
  size_t start = 0;
  for (size_t b = 0; b < top; ++b) {
    for (size_t i = start; i < be[b]; ++i) out[i] = bv[b];
    start = be[b];
  }
  return out;
}

}  // namespace twophase
