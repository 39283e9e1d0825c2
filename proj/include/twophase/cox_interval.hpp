#pragma once
#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "twophase/data.hpp"
#include "twophase/step_function.hpp"
#include "twophase/weights.hpp"

namespace twophase {

struct IcmOptions {
  int max_sweeps = 2000;
  double obj_tol = 1e-13;   // relative objective improvement
  double lambda_max = 1e3;  // upper clamp M (the H_M truncation)
};

struct IntervalFitOptions {
  double theta_lo = -4.0, theta_hi = 4.0;
  int sweeps = 3;           // coordinate passes with shrinking search radius
  double golden_tol = 1e-7; // bracket width per coordinate search
  IcmOptions icm;
};

// "Case 1" interval censoring: delta = 1{T <= Y}, weighted log likelihood
// sum_i w_i [ delta_i log(1 - e^{-Lambda(y_i) e^{theta'x_i}})
//            - (1-delta_i) e^{theta'x_i} Lambda(y_i) ].
// Returns -inf when a w>0, delta=1 record has Lambda(y) e^{theta'x} <= 0.
double loglik_interval(const Eigen::VectorXd& theta, const StepFunction& lambda,
                       const TwoPhaseSample& sample, const WeightSet& weights);

// Profile NPMLE over Lambda at fixed theta: iterative convex minorant with
// weighted isotonic steps, values on the grid of distinct selected y's,
// clamped to [0, lambda_max].
StepFunction profile_lambda(const Eigen::VectorXd& theta, const TwoPhaseSample& sample,
                            const WeightSet& weights, const IcmOptions& opt = {});

struct CoxIntervalFit {
  Eigen::VectorXd theta_hat;
  StepFunction lambda_hat;
  double objective = 0.0;    // weighted log likelihood at the optimum
  int profile_evals = 0;
  int icm_sweeps = 0;
  double score_resid = 0.0;  // central-difference profile score / N
  bool boundary = false;
  bool non_identifiable = false;  // constant covariate among selected records
};

CoxIntervalFit fit_cox_interval(const TwoPhaseSample& sample, const WeightSet& weights,
                                const IntervalFitOptions& opt = {});

// Quadrature representation of the covariate law (Y independent of X).
struct CovariateLawQuad {
  std::vector<Eigen::VectorXd> nodes;
  std::vector<double> weights;  // probabilities, sum 1
};

// Efficient score at the truth:
//   l*(y,delta,x) = e^{theta0'x} [delta r(u) - (1-delta)] Lambda0(y)
//                   * (x - E[X e^{2th'X} O | Y=y] / E[e^{2th'X} O | Y=y]),
// with u = Lambda0(y) e^{theta0'x}, r(u) = e^{-u}/(1-e^{-u}), O = r at the
// node's own u. Conditional expectations are taken over the covariate law.
Eigen::VectorXd oracle_efficient_score_interval(double y, int delta, const Eigen::VectorXd& x,
                                                const Eigen::VectorXd& theta0,
                                                const std::function<double(double)>& Lambda0,
                                                const CovariateLawQuad& law);

}  // namespace twophase
