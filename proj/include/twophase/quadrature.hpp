#pragma once
#include <vector>

namespace twophase {

struct QuadRule {
  std::vector<double> x;  // nodes
  std::vector<double> w;  // weights
};

// Gauss-Legendre rule on [-1, 1]; cached per n.
const QuadRule& gauss_legendre(int n);

// Same rule mapped to [a, b].
QuadRule gauss_legendre(int n, double a, double b);

// Standard normal CDF / survival.
double norm_cdf(double z);
double norm_sf(double z);

}  // namespace twophase
