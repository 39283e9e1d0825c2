#pragma once
#include <cstddef>
#include <vector>

namespace twophase {

// Nondecreasing right-continuous step function: value at t is the cumulative
// value at the largest jump point <= t, zero before the first jump. Used for
// cumulative hazards and distribution functions.
class StepFunction {
 public:
  StepFunction() = default;
  StepFunction(std::vector<double> jump_points, std::vector<double> values);

  double operator()(double t) const;
  // Mass at jump point index i (value[i] - value[i-1]).
  double mass(std::size_t i) const;

  const std::vector<double>& jumps() const { return t_; }
  const std::vector<double>& values() const { return v_; }
  std::size_t size() const { return t_.size(); }
  bool empty() const { return t_.empty(); }
  double last_value() const { return v_.empty() ? 0.0 : v_.back(); }

 private:
  std::vector<double> t_;  // strictly increasing
  std::vector<double> v_;  // nondecreasing, nonnegative
};

double evaluate_step(const StepFunction& f, double t);

}  // namespace twophase
