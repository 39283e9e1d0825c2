#include "twophase/glink.hpp"

#include <cmath>

#include "twophase/errors.hpp"

namespace twophase {

namespace {
inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  double e = std::exp(t);
  return e / (1.0 + e);
}
}  // namespace

GFunction::GFunction(GFamily family, double m1, double M1, double eps)
    : family_(family), m1_(m1), M1_(M1), eps_(eps) {
  if (family_ == GFamily::LinearUnbounded) return;
  if (!(0.0 < m1_ && m1_ < 1.0 && 1.0 < M1_)) throw UsageError("GFunction: need 0 < m1 < 1 < M1");
  if (family_ == GFamily::TruncatedLinear) {
    if (!(eps_ > 0.0 && m1_ - 1.0 + eps_ < 0.0 && M1_ - 1.0 - eps_ > 0.0))
      throw UsageError("GFunction: smoothing band must not reach 0");
  } else {
    // Offset so G(0) = 1 exactly; slope so Gdot(0) = 1. The spec's c-only form
    // cannot reach G(0) = 1 (G(0) = m1 + (M1-m1)/2 for every c).
    double q = (1.0 - m1_) / (M1_ - m1_);
    b_ = std::log(q / (1.0 - q));
    c_ = 1.0 / ((M1_ - m1_) * q * (1.0 - q));
  }
}

double GFunction::operator()(double x) const {
  switch (family_) {
    case GFamily::LinearUnbounded:
      return 1.0 + x;
    case GFamily::TruncatedLinear: {
      const double a = m1_ - 1.0 - eps_, b = M1_ - 1.0 + eps_;
      if (x <= a) return m1_;
      if (x < a + 2.0 * eps_) return m1_ + (x - a) * (x - a) / (4.0 * eps_);
      if (x <= b - 2.0 * eps_) return 1.0 + x;
      if (x < b) return M1_ - (b - x) * (b - x) / (4.0 * eps_);
      return M1_;
    }
    case GFamily::ScaledLogit:
      return m1_ + (M1_ - m1_) * sigmoid(c_ * x + b_);
  }
  return 1.0 + x;  // unreachable
}

double GFunction::deriv(double x) const {
  switch (family_) {
    case GFamily::LinearUnbounded:
      return 1.0;
    case GFamily::TruncatedLinear: {
      const double a = m1_ - 1.0 - eps_, b = M1_ - 1.0 + eps_;
      if (x <= a) return 0.0;
      if (x < a + 2.0 * eps_) return (x - a) / (2.0 * eps_);
      if (x <= b - 2.0 * eps_) return 1.0;
      if (x < b) return (b - x) / (2.0 * eps_);
      return 0.0;
    }
    case GFamily::ScaledLogit: {
      double s = sigmoid(c_ * x + b_);
      return (M1_ - m1_) * s * (1.0 - s) * c_;
    }
  }
  return 1.0;
}

std::string to_string(GFamily f) {
  switch (f) {
    case GFamily::TruncatedLinear: return "trunclinear";
    case GFamily::ScaledLogit: return "scaledlogit";
    case GFamily::LinearUnbounded: return "linear";
  }
  return "?";
}

GFamily g_family_from_string(const std::string& s) {
  if (s == "trunclinear") return GFamily::TruncatedLinear;
  if (s == "scaledlogit") return GFamily::ScaledLogit;
  throw UsageError("unknown G family '" + s + "' (expected trunclinear|scaledlogit)");
}

double LogisticLink::value(double t) { return sigmoid(t); }
double LogisticLink::deriv(double t) {
  double s = sigmoid(t);
  return s * (1.0 - s);
}
double LogisticLink::inverse(double p) { return std::log(p / (1.0 - p)); }

}  // namespace twophase
