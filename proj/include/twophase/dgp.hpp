#pragma once
#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

#include "twophase/cox_interval.hpp"
#include "twophase/cox_right.hpp"
#include "twophase/data.hpp"
#include "twophase/rng.hpp"
#include "twophase/step_function.hpp"

namespace twophase {

// Right-censored generator: X uniform on a box, U = X_1 + sigma_u * N(0,1),
// T with Lambda(t|x) = e^{theta0'x} * rate * t, C = min(Exp(cens_rate), tau)
// so that P(C = tau) > 0.
struct CoxRightDgp {
  Eigen::VectorXd theta0 = Eigen::VectorXd::Constant(1, 0.7);
  double x_lo = -1.0, x_hi = 1.0;
  double sigma_u = 0.5;
  double lambda0_rate = 1.0;
  double cens_rate = 0.3;
  double tau = 1.5;

  int p() const { return static_cast<int>(theta0.size()); }
  double Lambda0(double t) const { return lambda0_rate * t; }
  void validate() const;
  void generate(long N, RngStream& rng, std::vector<PhaseOneRecord>& recs,
                std::vector<Eigen::VectorXd>& xs) const;
  // Marginal CDF of Y (atom at tau) by x-quadrature; used by the
  // Glivenko-Cantelli check.
  double F_Y(double t) const;
  double F_Y_left(double t) const;
};

// Population quantities at theta0 for the scalar-covariate generator:
// risk moments M_k, efficient score/influence, I_0, and the (3.1)/(3.4)
// oracle Sigma for a U-cut design. All integrals are Gauss-Legendre.
class CoxRightOracle {
 public:
  CoxRightOracle(const CoxRightDgp& dgp, std::vector<double> cuts, int xquad = 96,
                 int tgrid = 4096);

  MomentsRight moments() const;
  Eigen::VectorXd ell_star(double y, int delta, const Eigen::VectorXd& x) const;
  Eigen::VectorXd ell_tilde(double y, int delta, const Eigen::VectorXd& x) const;
  const Eigen::MatrixXd& I0() const { return I0_; }
  const Eigen::MatrixXd& I0_inv() const { return I0_inv_; }
  const std::vector<double>& nu() const { return nu_; }
  // (3.1) for WOR, (3.4) for Bernoulli, given stratum probabilities p_j.
  Eigen::MatrixXd sigma_plain(const std::vector<double>& pj, Design design) const;

  double M0(double s) const;
  double M1(double s) const;  // scalar covariate
  double m(double s) const { return M1(s) / M0(s); }

 private:
  double mint(double y) const;  // int_0^y m(t) dt
  CoxRightDgp d_;
  std::vector<double> cuts_;
  int J_ = 1;
  std::vector<double> xn_, xw_;          // covariate nodes / probability weights
  std::vector<double> grid_, mint_;      // cumulative integral of m on [0, tau]
  Eigen::MatrixXd I0_, I0_inv_;
  std::vector<double> nu_;
  std::vector<Eigen::VectorXd> mean_j_;  // E_j[l*]
  std::vector<Eigen::MatrixXd> raw2_j_;  // E_j[l* l*']
};

// Interval-censored ("case 1") generator: X uniform, U = X_1 + sigma_u*N(0,1),
// Y ~ Unif[y_lo, y_hi] independent, delta = 1{T <= Y}.
struct CoxIntervalDgp {
  Eigen::VectorXd theta0 = Eigen::VectorXd::Constant(1, 0.5);
  double x_lo = -1.0, x_hi = 1.0;
  double sigma_u = 0.5;
  double lambda0_rate = 1.0;
  double y_lo = 0.3, y_hi = 1.3;

  int p() const { return static_cast<int>(theta0.size()); }
  double Lambda0(double t) const { return lambda0_rate * t; }
  void validate() const;
  void generate(long N, RngStream& rng, std::vector<PhaseOneRecord>& recs,
                std::vector<Eigen::VectorXd>& xs) const;
  CovariateLawQuad law(int nq = 64) const;  // scalar covariate only
  // L2(P_Y) distance between a fitted step Lambda and Lambda0 (exact
  // piecewise integration against the uniform Y law).
  double dist_lambda(const StepFunction& lam) const;
};

// Scalar-mean sanity model: theta-hat = IPW mean of X, influence x - theta0.
struct MeanToyDgp {
  double x_lo = 0.0, x_hi = 1.0;
  double sigma_u = 0.5;

  double theta0() const { return 0.5 * (x_lo + x_hi); }
  void generate(long N, RngStream& rng, std::vector<PhaseOneRecord>& recs,
                std::vector<Eigen::VectorXd>& xs) const;
  // Oracle Sigma for a U-cut design (x-quadrature with normal tail weights).
  Eigen::MatrixXd sigma_plain(const std::vector<double>& cuts, const std::vector<double>& pj,
                              Design design, int xquad = 128) const;
};

// sup_t | (1/N) sum xi/pi0 1{y<=t} - F0(t) |, scanning jump points and the
// F0 atom locations. F0_left(t) must give the left limit of F0 at t.
double sup_cdf_discrepancy(const TwoPhaseSample& sample,
                           const std::function<double(double)>& F0,
                           const std::function<double(double)>& F0_left, double atom_at);

}  // namespace twophase
