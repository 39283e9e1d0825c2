#include "twophase/step_function.hpp"

#include <algorithm>

#include "twophase/errors.hpp"

namespace twophase {

StepFunction::StepFunction(std::vector<double> jump_points, std::vector<double> values)
    : t_(std::move(jump_points)), v_(std::move(values)) {
  if (t_.size() != v_.size()) throw DataError("StepFunction: jump/value length mismatch");
  for (std::size_t i = 0; i < t_.size(); ++i) {
    if (i > 0 && !(t_[i] > t_[i - 1]))
      throw DataError("StepFunction: jump points must be strictly increasing");
    if (i > 0 && v_[i] < v_[i - 1]) throw DataError("StepFunction: values must be nondecreasing");
    if (v_[i] < 0.0) throw DataError("StepFunction: values must be nonnegative");
  }
}

double StepFunction::operator()(double t) const {
  // right-continuous: largest jump point <= t
  auto it = std::upper_bound(t_.begin(), t_.end(), t);
  if (it == t_.begin()) return 0.0;
  return v_[static_cast<std::size_t>(it - t_.begin()) - 1];
}

double StepFunction::mass(std::size_t i) const {
  return i == 0 ? v_[0] : v_[i] - v_[i - 1];
}

double evaluate_step(const StepFunction& f, double t) { return f(t); }

}  // namespace twophase
