#pragma once
#include <string>

namespace twophase {

// Bounded calibration links G with G(0) = 1, m1 <= G <= M1, monotone C^1
// (Condition 2(c)). LinearUnbounded is the classical G(x) = 1 + x, kept only
// as a test oracle (closed-form calibration), not admissible as a default.
enum class GFamily { TruncatedLinear, ScaledLogit, LinearUnbounded };

class GFunction {
 public:
  explicit GFunction(GFamily family, double m1 = 0.1, double M1 = 10.0, double eps = 1e-3);

  double operator()(double x) const;
  double value(double x) const { return (*this)(x); }
  double deriv(double x) const;

  GFamily family() const { return family_; }
  double m1() const { return m1_; }
  double M1() const { return M1_; }

 private:
  GFamily family_;
  double m1_, M1_, eps_;
  double b_ = 0.0, c_ = 1.0;  // scaled-logit offset/slope
};

std::string to_string(GFamily f);
GFamily g_family_from_string(const std::string& s);  // trunclinear | scaledlogit

// Binary-regression link for estimated weights (logistic).
struct LogisticLink {
  static double value(double t);
  static double deriv(double t);   // value * (1 - value)
  static double inverse(double p); // logit
};

}  // namespace twophase
