#include "twophase/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace twophase {

namespace {
QuadRule build_gl(int n) {
  // Newton on Legendre P_n with the usual Chebyshev-like initial guesses.
  QuadRule r;
  r.x.resize(n);
  r.w.resize(n);
  const double pi = 3.14159265358979323846;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      pp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    r.x[i] = -x;
    r.x[n - 1 - i] = x;
    double w = 2.0 / ((1.0 - x * x) * pp * pp);
    r.w[i] = w;
    r.w[n - 1 - i] = w;
  }
  return r;
}
}  // namespace

const QuadRule& gauss_legendre(int n) {
  static std::map<int, QuadRule> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, build_gl(n)).first;
  return it->second;
}

QuadRule gauss_legendre(int n, double a, double b) {
  const QuadRule& base = gauss_legendre(n);
  QuadRule r = base;
  const double c = 0.5 * (b - a), m = 0.5 * (a + b);
  for (int i = 0; i < n; ++i) {
    r.x[i] = m + c * base.x[i];
    r.w[i] = c * base.w[i];
  }
  return r;
}

double norm_cdf(double z) { return 0.5 * std::erfc(-z * 0.7071067811865475244); }
double norm_sf(double z) { return 0.5 * std::erfc(z * 0.7071067811865475244); }

}  // namespace twophase
