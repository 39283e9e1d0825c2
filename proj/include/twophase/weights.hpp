#pragma once
#include <Eigen/Dense>
#include <string>
#include <vector>

#include "twophase/data.hpp"
#include "twophase/glink.hpp"

namespace twophase {

enum class WeightMethod { plain, e, c, mc, cc };

std::string to_string(WeightMethod m);
WeightMethod weight_method_from_string(const std::string& s);

struct WeightSet {
  WeightMethod method = WeightMethod::plain;
  Eigen::VectorXd alpha_hat;  // empty for plain
  Eigen::VectorXd w;          // per record; 0 iff xi = 0
  int iterations = 0;
  double residual = 0.0;  // sup-norm of the defining equation / mean score
  bool degenerate_gram = false;
  std::vector<int> dropped_strata;  // pi0 = 1 strata excluded from e-regression
};

// w_i = xi_i / pi0(V_i).
WeightSet plain_weights(const TwoPhaseSample& sample);

// Pseudo-likelihood binary regression of xi on Z (Eq. 2.2), logistic link.
// aux must carry stratum indicators (pooled mode) or per-block intercepts
// (within-stratum mode). Strata with pi0 = 1 are dropped from the regression
// (rows and their indicator columns/blocks) and get weight 1.
WeightSet fit_estimated_weights(const TwoPhaseSample& sample, const AuxiliaryMap& aux,
                                int max_iter = 100, double tol = 1e-8);

// Calibration equations (2.3)/(2.4)/(2.5) solved by damped Newton from
// alpha = 0; residual sup-norm <= tol at the solution.
WeightSet solve_calibration(const TwoPhaseSample& sample, const AuxiliaryMap& aux,
                            const GFunction& G, WeightMethod variant, int max_iter = 100,
                            double tol = 1e-8);

// Within-stratum adjustment: same contracts on the block-expanded Z-tilde
// (aux is switched to WithinStratum mode; estimated weights get per-block
// intercepts).
WeightSet within_stratum(WeightMethod method, const TwoPhaseSample& sample, AuxiliaryMap aux,
                         const GFunction* G = nullptr);

// Dispatcher used by the CLI and the MC harness.
WeightSet make_weights(WeightMethod method, bool within_stratum_mode, const TwoPhaseSample& sample,
                       const AuxiliaryMap* aux, const GFunction* G);

}  // namespace twophase
