#pragma once
#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "twophase/weights.hpp"

namespace twophase {

// A weighted set of draws (v, z) carrying the efficient influence values: the
// discrete measure on which all population/plug-in moment formulas are
// evaluated. For population checks mass is 1/n each and pi0 = p_{stratum};
// for plug-in variance the mass is the IPW weight of the selected record.
struct DrawSet {
  Eigen::MatrixXd ltilde;  // n x p
  Eigen::MatrixXd Z;       // n x k, base auxiliaries (no stratum indicators)
  Eigen::VectorXi stratum; // 1..J
  Eigen::VectorXd pi0;     // per draw
  Eigen::VectorXd mass;    // nonnegative
  std::vector<double> p;   // stratum sampling probabilities, size J
  std::vector<double> nu;  // stratum frequencies, size J
  int J = 0;
  Eigen::VectorXd mu_Z;    // centering for pooled cc; empty => mass-weighted mean

  long n() const { return ltilde.rows(); }
  void validate() const;
};

// Q_# l-tilde per draw (n x p). Pooled mode implements the Theorem 3.1
// operators; within-stratum mode the conditional per-stratum projections of
// Corollary 3.3 (e: onto (1, Z); c, mc: onto Z; cc: onto Z - E[Z | stratum]).
// alpha_e: coefficient vector (J indicator slots then Z slots) for the e
// operator; empty => alpha0 with Ge^{-1}(p_j) on the indicators.
Eigen::MatrixXd q_project(WeightMethod method, const DrawSet& draws, bool within_stratum,
                          const Eigen::VectorXd& alpha_e = Eigen::VectorXd());

struct VarianceReport {
  int p = 0, J = 0;
  long n = 0;
  double mass_total = 0.0;
  bool within_stratum = false;
  std::vector<double> nu, pj;
  Eigen::MatrixXd I0_inv;  // P[ltilde ltilde']
  Eigen::MatrixXd Sigma, Sigma_bern;  // plain, (3.1) and (3.4)
  std::map<std::string, Eigen::MatrixXd> Sigma_adj;       // per method, WOR form
  std::map<std::string, Eigen::MatrixXd> Sigma_adj_bern;  // per method, Bernoulli form
  // plain per-stratum conditional moments
  std::vector<Eigen::VectorXd> cond_mean;
  std::vector<Eigen::MatrixXd> cond_var, cond_raw2;
  // identity ingredients
  std::map<std::string, Eigen::MatrixXd> bern_gap;  // Var((xi-pi)/pi * Q_# ltilde)
  std::map<std::string, std::vector<Eigen::MatrixXd>> proj_raw2;  // P_j[(Q l)^2] per stratum
  std::map<std::string, std::vector<Eigen::MatrixXd>> proj_var;   // Var_j(Q l) per stratum
};

// Evaluate (3.1)-(3.5) style totals on the draw measure for the requested
// methods ("plain" is always included).
VarianceReport sigma_totals(const DrawSet& draws, const std::vector<WeightMethod>& methods,
                            bool within_stratum);

struct CorollaryResiduals {
  double cor31 = 0.0;                        // Sigma == Sigma_bern - sum nu w (P_j l)(P_j l)'
  std::map<std::string, double> cor32;       // pooled e/mc/cc Bernoulli gap identity
  std::map<std::string, double> cor33_bern;  // within-stratum (3.6), all four methods
  double cor33_wor_cc = 0.0;                 // within-stratum (3.7), cc only
  double max_residual = 0.0;
};

// Identity residuals computed on one common draw set: pooled and
// within-stratum reports are built internally.
CorollaryResiduals corollary_identities(const DrawSet& draws);

}  // namespace twophase
