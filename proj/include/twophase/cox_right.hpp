#pragma once
#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "twophase/data.hpp"
#include "twophase/step_function.hpp"
#include "twophase/weights.hpp"

namespace twophase {

struct AuxiliaryMap;  // data.hpp

// Population (or plug-in) risk-set moments: M_k(s) = P[X^k e^{theta'X} 1{Y>=s}].
struct MomentsRight {
  std::function<double(double)> M0;
  std::function<Eigen::VectorXd(double)> M1;
};

struct CoxRightOptions {
  int max_iter = 50;
  double tol = 1e-10;        // on sup|grad|/N
  double theta_bound = 50.0; // monotone-likelihood guard
  Eigen::VectorXd theta_init;
};

struct StratumVariancePiece {
  int stratum = 0;       // 1-based
  double nu_hat = 0.0;   // N_j / N
  double p_j = 0.0;      // pi0 of the stratum
  Eigen::VectorXd cond_mean;
  Eigen::MatrixXd cond_raw2;  // P-hat_j[f f']
};

struct CoxRightFit {
  Eigen::VectorXd theta_hat;
  StepFunction lambda_hat;
  double loglik = 0.0;
  int iterations = 0;
  double score_resid = 0.0;    // sup |P^pi l-dot| at the fit
  double breslow_resid = 0.0;  // sup over jump points of |P^pi B 1{t=t_k}|
};

struct VarianceRightResult {
  Eigen::MatrixXd I_hat;      // P^pi (l*)^{(x)2}
  Eigen::MatrixXd I_hat_inv;
  Eigen::MatrixXd sigma_hat;  // I^-1 + sum_j nu_j (1-p_j)/p_j * (cond moment of adjusted l-tilde)
  std::vector<StratumVariancePiece> strata;
};

// Weighted Cox partial likelihood (Breslow ties) + Breslow baseline.
CoxRightFit fit_cox_right(const TwoPhaseSample& sample, const WeightSet& weights,
                          const CoxRightOptions& opt = {});

// l*(y,delta,x) = delta (x - m(y)) - e^{theta'x} int_{[0,y]} (x - m) dLambda,
// m = M1/M0.
Eigen::VectorXd efficient_score_right(double y, int delta, const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& theta, const StepFunction& lambda,
                                      const MomentsRight& mom);

// Batch l* for every selected record (rows in record order over selected
// indices; `index` receives the record ids). If `mom` is null the moments are
// the IPW plug-in ones at (theta, lambda) built from (sample, weights).
Eigen::MatrixXd efficient_scores_batch(const TwoPhaseSample& sample, const WeightSet& weights,
                                       const Eigen::VectorXd& theta, const StepFunction& lambda,
                                       std::vector<long>& index, const MomentsRight* mom = nullptr);

// Plug-in variance (3.2)/(3.5); for adjusted weights the residual
// (I - Q_#) l-tilde enters the stratum terms, with Q_# estimated by plug-in
// moments on the auxiliaries (aux required for e/c/mc/cc fits).
VarianceRightResult variance_right(const CoxRightFit& fit, const TwoPhaseSample& sample,
                                   const WeightSet& weights, const AuxiliaryMap* aux = nullptr,
                                   bool within_stratum_mode = false,
                                   const MomentsRight* mom = nullptr);

}  // namespace twophase
