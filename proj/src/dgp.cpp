#include "twophase/dgp.hpp"

#include <algorithm>
#include <cmath>

#include "twophase/errors.hpp"
#include "twophase/quadrature.hpp"

namespace twophase {

void CoxRightDgp::validate() const {
  if (p() < 1) throw DataError("cox_right dgp: empty theta0");
  if (!(x_hi > x_lo)) throw DataError("cox_right dgp: empty covariate box");
  if (!(sigma_u > 0.0)) throw DataError("cox_right dgp: sigma_u must be positive");
  if (!(lambda0_rate > 0.0)) throw DataError("cox_right dgp: baseline rate must be positive");
  if (!(tau > 0.0)) throw DataError("cox_right dgp: tau must be positive");
  if (cens_rate < 0.0) throw DataError("cox_right dgp: negative censoring rate");
}

void CoxRightDgp::generate(long N, RngStream& rng, std::vector<PhaseOneRecord>& recs,
                           std::vector<Eigen::VectorXd>& xs) const {
  validate();
  recs.resize(static_cast<size_t>(N));
  xs.resize(static_cast<size_t>(N));
  const int pp = p();
  for (long i = 0; i < N; ++i) {
    Eigen::VectorXd x(pp);
    for (int c = 0; c < pp; ++c) x[c] = x_lo + (x_hi - x_lo) * rng.uniform01();
    const double noise = rng.normal();
    const double t = rng.exponential(1.0) / (lambda0_rate * std::exp(theta0.dot(x)));
    double cstar = tau;
    if (cens_rate > 0.0) cstar = std::min(rng.exponential(cens_rate), tau);
    auto& r = recs[static_cast<size_t>(i)];
    r.y = std::min(t, cstar);
    r.delta = (t <= cstar) ? 1 : 0;
    r.u = Eigen::VectorXd::Constant(1, x[0] + sigma_u * noise);
    r.stratum = 0;
    xs[static_cast<size_t>(i)] = std::move(x);
  }
}

namespace {

// Probability-weighted covariate nodes for a scalar uniform law.
void scalar_law(double lo, double hi, int n, std::vector<double>& xn, std::vector<double>& xw) {
  const QuadRule q = gauss_legendre(n, lo, hi);
  xn = q.x;
  xw = q.w;
  for (double& w : xw) w /= (hi - lo);
}

}  // namespace

double CoxRightDgp::F_Y(double t) const {
  if (p() != 1) throw DataError("cox_right dgp: F_Y needs a scalar covariate");
  if (t < 0.0) return 0.0;
  if (t >= tau) return 1.0;
  std::vector<double> xn, xw;
  scalar_law(x_lo, x_hi, 128, xn, xw);
  double s = 0.0;
  for (size_t q = 0; q < xn.size(); ++q)
    s += xw[q] * std::exp(-lambda0_rate * t * std::exp(theta0[0] * xn[q]));
  return 1.0 - s * std::exp(-cens_rate * t);
}

double CoxRightDgp::F_Y_left(double t) const {
  if (t <= 0.0) return 0.0;
  if (t > tau) return 1.0;
  if (t == tau) {
    std::vector<double> xn, xw;
    scalar_law(x_lo, x_hi, 128, xn, xw);
    double s = 0.0;
    for (size_t q = 0; q < xn.size(); ++q)
      s += xw[q] * std::exp(-lambda0_rate * tau * std::exp(theta0[0] * xn[q]));
    return 1.0 - s * std::exp(-cens_rate * tau);
  }
  return F_Y(t);
}

CoxRightOracle::CoxRightOracle(const CoxRightDgp& dgp, std::vector<double> cuts, int xquad,
                               int tgrid)
    : d_(dgp), cuts_(std::move(cuts)) {
  d_.validate();
  if (d_.p() != 1) throw DataError("cox_right oracle: scalar covariate only");
  for (size_t c = 1; c < cuts_.size(); ++c)
    if (!(cuts_[c] > cuts_[c - 1])) throw DataError("cox_right oracle: cuts must be ascending");
  J_ = static_cast<int>(cuts_.size()) + 1;
  scalar_law(d_.x_lo, d_.x_hi, xquad, xn_, xw_);

  // Cumulative integral of m = M1/M0 on [0, tau], Simpson per cell.
  grid_.resize(static_cast<size_t>(tgrid) + 1);
  mint_.resize(static_cast<size_t>(tgrid) + 1);
  const double h = d_.tau / tgrid;
  for (int k = 0; k <= tgrid; ++k) grid_[static_cast<size_t>(k)] = h * k;
  mint_[0] = 0.0;
  double prev_m = m(0.0);
  for (int k = 0; k < tgrid; ++k) {
    const double mid = m(grid_[static_cast<size_t>(k)] + 0.5 * h);
    const double next = m(grid_[static_cast<size_t>(k) + 1]);
    mint_[static_cast<size_t>(k) + 1] =
        mint_[static_cast<size_t>(k)] + h / 6.0 * (prev_m + 4.0 * mid + next);
    prev_m = next;
  }

  // Stratum weight given x: U = x + sigma_u * N(0,1), cut on u.
  auto pstrat = [&](int j, double x) {
    const double lo = (j == 1) ? -1e300 : (cuts_[static_cast<size_t>(j) - 2] - x) / d_.sigma_u;
    const double hi =
        (j == J_) ? 1e300 : (cuts_[static_cast<size_t>(j) - 1] - x) / d_.sigma_u;
    return norm_cdf(hi) - norm_cdf(lo);
  };

  const double th = d_.theta0[0], rate = d_.lambda0_rate, rho = d_.cens_rate, tau = d_.tau;
  const QuadRule tq = gauss_legendre(128, 0.0, tau);
  I0_ = Eigen::MatrixXd::Zero(1, 1);
  nu_.assign(static_cast<size_t>(J_), 0.0);
  mean_j_.assign(static_cast<size_t>(J_), Eigen::VectorXd::Zero(1));
  raw2_j_.assign(static_cast<size_t>(J_), Eigen::MatrixXd::Zero(1, 1));

  for (size_t q = 0; q < xn_.size(); ++q) {
    const double x = xn_[q];
    const double ex = std::exp(th * x);
    Eigen::VectorXd xv = Eigen::VectorXd::Constant(1, x);
    std::vector<double> pj(static_cast<size_t>(J_));
    for (int j = 1; j <= J_; ++j) {
      pj[static_cast<size_t>(j) - 1] = pstrat(j, x);
      nu_[static_cast<size_t>(j) - 1] += xw_[q] * pj[static_cast<size_t>(j) - 1];
    }
    auto absorb = [&](double mass, double y, int delta) {
      const Eigen::VectorXd ls = ell_star(y, delta, xv);
      const Eigen::MatrixXd outer = ls * ls.transpose();
      I0_ += xw_[q] * mass * outer;
      for (int j = 0; j < J_; ++j) {
        const double wj = xw_[q] * pj[static_cast<size_t>(j)] * mass;
        mean_j_[static_cast<size_t>(j)] += wj * ls;
        raw2_j_[static_cast<size_t>(j)] += wj * outer;
      }
    };
    for (size_t k = 0; k < tq.x.size(); ++k) {
      const double t = tq.x[k];
      const double st = std::exp(-rate * t * ex);
      // failure at t while uncensored
      absorb(tq.w[k] * rate * ex * st * std::exp(-rho * t), t, 1);
      // censored at c by the exponential part
      if (rho > 0.0) absorb(tq.w[k] * st * rho * std::exp(-rho * t), t, 0);
    }
    // censored by the atom at tau
    absorb(std::exp(-rate * tau * ex) * std::exp(-rho * tau), tau, 0);
  }
  for (int j = 0; j < J_; ++j) {
    if (nu_[static_cast<size_t>(j)] <= 0.0) continue;
    mean_j_[static_cast<size_t>(j)] /= nu_[static_cast<size_t>(j)];
    raw2_j_[static_cast<size_t>(j)] /= nu_[static_cast<size_t>(j)];
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(I0_);
  if (!lu.isInvertible()) throw NumericalError("cox_right oracle: singular I0");
  I0_inv_ = lu.inverse();
}

double CoxRightOracle::M0(double s) const {
  if (s > d_.tau) return 0.0;
  const double th = d_.theta0[0];
  double acc = 0.0;
  for (size_t q = 0; q < xn_.size(); ++q) {
    const double ex = std::exp(th * xn_[q]);
    acc += xw_[q] * ex * std::exp(-d_.lambda0_rate * s * ex);
  }
  return acc * std::exp(-d_.cens_rate * std::max(0.0, s));
}

double CoxRightOracle::M1(double s) const {
  if (s > d_.tau) return 0.0;
  const double th = d_.theta0[0];
  double acc = 0.0;
  for (size_t q = 0; q < xn_.size(); ++q) {
    const double ex = std::exp(th * xn_[q]);
    acc += xw_[q] * xn_[q] * ex * std::exp(-d_.lambda0_rate * s * ex);
  }
  return acc * std::exp(-d_.cens_rate * std::max(0.0, s));
}

double CoxRightOracle::mint(double y) const {
  if (y <= 0.0) return 0.0;
  if (y >= d_.tau) return mint_.back();
  const double h = grid_[1] - grid_[0];
  const size_t k = std::min(mint_.size() - 2, static_cast<size_t>(y / h));
  const double frac = (y - grid_[k]) / h;
  return mint_[k] + frac * (mint_[k + 1] - mint_[k]);
}

MomentsRight CoxRightOracle::moments() const {
  // Self-contained closures (no dangling reference to the oracle).
  const auto xn = xn_;
  const auto xw = xw_;
  const double th = d_.theta0[0], rate = d_.lambda0_rate, rho = d_.cens_rate, tau = d_.tau;
  MomentsRight mom;
  mom.M0 = [xn, xw, th, rate, rho, tau](double s) {
    if (s > tau) return 0.0;
    double acc = 0.0;
    for (size_t q = 0; q < xn.size(); ++q) {
      const double ex = std::exp(th * xn[q]);
      acc += xw[q] * ex * std::exp(-rate * s * ex);
    }
    return acc * std::exp(-rho * std::max(0.0, s));
  };
  mom.M1 = [xn, xw, th, rate, rho, tau](double s) {
    if (s > tau) return Eigen::VectorXd::Zero(1).eval();
    double acc = 0.0;
    for (size_t q = 0; q < xn.size(); ++q) {
      const double ex = std::exp(th * xn[q]);
      acc += xw[q] * xn[q] * ex * std::exp(-rate * s * ex);
    }
    return Eigen::VectorXd::Constant(1, acc * std::exp(-rho * std::max(0.0, s))).eval();
  };
  return mom;
}

Eigen::VectorXd CoxRightOracle::ell_star(double y, int delta, const Eigen::VectorXd& x) const {
  if (x.size() != 1) throw DataError("cox_right oracle: scalar covariate only");
  const double yy = std::min(std::max(y, 0.0), d_.tau);
  const double ex = std::exp(d_.theta0[0] * x[0]);
  // int_{[0,y]} (x - m) dLambda0 = rate * (x*y - int_0^y m)
  double val = -ex * d_.lambda0_rate * (x[0] * yy - mint(yy));
  if (delta) val += x[0] - m(yy);
  return Eigen::VectorXd::Constant(1, val);
}

Eigen::VectorXd CoxRightOracle::ell_tilde(double y, int delta, const Eigen::VectorXd& x) const {
  return I0_inv_ * ell_star(y, delta, x);
}

Eigen::MatrixXd CoxRightOracle::sigma_plain(const std::vector<double>& pj, Design design) const {
  if (static_cast<int>(pj.size()) != J_) throw DataError("cox_right oracle: p size mismatch");
  Eigen::MatrixXd sigma = I0_inv_;
  for (int j = 0; j < J_; ++j) {
    const double w = nu_[static_cast<size_t>(j)] * (1.0 - pj[static_cast<size_t>(j)]) /
                     pj[static_cast<size_t>(j)];
    Eigen::MatrixXd mom = raw2_j_[static_cast<size_t>(j)];
    if (design == Design::WithoutReplacement)
      mom -= mean_j_[static_cast<size_t>(j)] * mean_j_[static_cast<size_t>(j)].transpose();
    sigma += w * (I0_inv_ * mom * I0_inv_);
  }
  return sigma;
}

void CoxIntervalDgp::validate() const {
  if (p() < 1) throw DataError("cox_interval dgp: empty theta0");
  if (!(x_hi > x_lo)) throw DataError("cox_interval dgp: empty covariate box");
  if (!(sigma_u > 0.0)) throw DataError("cox_interval dgp: sigma_u must be positive");
  if (!(lambda0_rate > 0.0)) throw DataError("cox_interval dgp: baseline rate must be positive");
  if (!(0.0 < y_lo && y_lo < y_hi)) throw DataError("cox_interval dgp: bad monitoring interval");
}

void CoxIntervalDgp::generate(long N, RngStream& rng, std::vector<PhaseOneRecord>& recs,
                              std::vector<Eigen::VectorXd>& xs) const {
  validate();
  recs.resize(static_cast<size_t>(N));
  xs.resize(static_cast<size_t>(N));
  const int pp = p();
  for (long i = 0; i < N; ++i) {
    Eigen::VectorXd x(pp);
    for (int c = 0; c < pp; ++c) x[c] = x_lo + (x_hi - x_lo) * rng.uniform01();
    const double noise = rng.normal();
    const double y = y_lo + (y_hi - y_lo) * rng.uniform01();
    const double t = rng.exponential(1.0) / (lambda0_rate * std::exp(theta0.dot(x)));
    auto& r = recs[static_cast<size_t>(i)];
    r.y = y;
    r.delta = (t <= y) ? 1 : 0;
    r.u = Eigen::VectorXd::Constant(1, x[0] + sigma_u * noise);
    r.stratum = 0;
    xs[static_cast<size_t>(i)] = std::move(x);
  }
}

CovariateLawQuad CoxIntervalDgp::law(int nq) const {
  if (p() != 1) throw DataError("cox_interval dgp: quadrature law needs a scalar covariate");
  std::vector<double> xn, xw;
  scalar_law(x_lo, x_hi, nq, xn, xw);
  CovariateLawQuad out;
  for (size_t q = 0; q < xn.size(); ++q) {
    out.nodes.push_back(Eigen::VectorXd::Constant(1, xn[q]));
    out.weights.push_back(xw[q]);
  }
  return out;
}

double CoxIntervalDgp::dist_lambda(const StepFunction& lam) const {
  // Exact piecewise integral of (lam - rate*t)^2 over [y_lo, y_hi] / range.
  const double r = lambda0_rate;
  std::vector<double> knots{y_lo};
  for (double t : lam.jumps())
    if (t > y_lo && t < y_hi) knots.push_back(t);
  knots.push_back(y_hi);
  double acc = 0.0;
  for (size_t k = 0; k + 1 < knots.size(); ++k) {
    const double a = knots[k], b = knots[k + 1];
    const double v = lam(a);  // constant on [a, next jump)
    const double da = v - r * a, db = v - r * b;
    acc += (da * da * da - db * db * db) / (3.0 * r);
  }
  return std::sqrt(acc / (y_hi - y_lo));
}

void MeanToyDgp::generate(long N, RngStream& rng, std::vector<PhaseOneRecord>& recs,
                          std::vector<Eigen::VectorXd>& xs) const {
  if (!(x_hi > x_lo) || !(sigma_u > 0.0)) throw DataError("mean_toy dgp: bad parameters");
  recs.resize(static_cast<size_t>(N));
  xs.resize(static_cast<size_t>(N));
  for (long i = 0; i < N; ++i) {
    const double x = x_lo + (x_hi - x_lo) * rng.uniform01();
    const double noise = rng.normal();
    auto& r = recs[static_cast<size_t>(i)];
    r.y = 0.0;
    r.delta = 0;
    r.u = Eigen::VectorXd::Constant(1, x + sigma_u * noise);
    r.stratum = 0;
    xs[static_cast<size_t>(i)] = Eigen::VectorXd::Constant(1, x);
  }
}

Eigen::MatrixXd MeanToyDgp::sigma_plain(const std::vector<double>& cuts,
                                        const std::vector<double>& pj, Design design,
                                        int xquad) const {
  const int J = static_cast<int>(cuts.size()) + 1;
  if (static_cast<int>(pj.size()) != J) throw DataError("mean_toy oracle: p size mismatch");
  std::vector<double> xn, xw;
  scalar_law(x_lo, x_hi, xquad, xn, xw);
  const double th = theta0();
  auto pstrat = [&](int j, double x) {
    const double lo = (j == 1) ? -1e300 : (cuts[static_cast<size_t>(j) - 2] - x) / sigma_u;
    const double hi = (j == J) ? 1e300 : (cuts[static_cast<size_t>(j) - 1] - x) / sigma_u;
    return norm_cdf(hi) - norm_cdf(lo);
  };
  double var = 0.0;
  std::vector<double> nu(static_cast<size_t>(J), 0.0), m1(static_cast<size_t>(J), 0.0),
      m2(static_cast<size_t>(J), 0.0);
  for (size_t q = 0; q < xn.size(); ++q) {
    const double l = xn[q] - th;
    var += xw[q] * l * l;
    for (int j = 1; j <= J; ++j) {
      const double w = xw[q] * pstrat(j, xn[q]);
      nu[static_cast<size_t>(j) - 1] += w;
      m1[static_cast<size_t>(j) - 1] += w * l;
      m2[static_cast<size_t>(j) - 1] += w * l * l;
    }
  }
  double sigma = var;
  for (int j = 0; j < J; ++j) {
    if (nu[static_cast<size_t>(j)] <= 0.0) continue;
    const double mean = m1[static_cast<size_t>(j)] / nu[static_cast<size_t>(j)];
    const double raw2 = m2[static_cast<size_t>(j)] / nu[static_cast<size_t>(j)];
    const double w = nu[static_cast<size_t>(j)] * (1.0 - pj[static_cast<size_t>(j)]) /
                     pj[static_cast<size_t>(j)];
    sigma += w * (design == Design::WithoutReplacement ? raw2 - mean * mean : raw2);
  }
  return Eigen::MatrixXd::Constant(1, 1, sigma);
}

double sup_cdf_discrepancy(const TwoPhaseSample& sample, const std::function<double(double)>& F0,
                           const std::function<double(double)>& F0_left, double atom_at) {
  const double N = static_cast<double>(sample.N());
  std::vector<std::pair<double, double>> pts;  // (y, ipw mass)
  for (long i = 0; i < sample.N(); ++i) {
    if (!sample.xi[i]) continue;
    pts.emplace_back(sample.records[static_cast<size_t>(i)].y, 1.0 / (N * sample.pi0(static_cast<int>(i))));
  }
  std::sort(pts.begin(), pts.end());
  std::vector<double> ys, cum;
  double acc = 0.0;
  for (size_t k = 0; k < pts.size();) {
    size_t e = k;
    double mass = 0.0;
    while (e < pts.size() && pts[e].first == pts[k].first) mass += pts[e++].second;
    acc += mass;
    ys.push_back(pts[k].first);
    cum.push_back(acc);
    k = e;
  }
  auto fhat = [&](double t) {
    const auto it = std::upper_bound(ys.begin(), ys.end(), t);
    if (it == ys.begin()) return 0.0;
    return cum[static_cast<size_t>(it - ys.begin()) - 1];
  };
  auto fhat_left = [&](double t) {
    const auto it = std::lower_bound(ys.begin(), ys.end(), t);
    if (it == ys.begin()) return 0.0;
    return cum[static_cast<size_t>(it - ys.begin()) - 1];
  };
  double sup = std::abs(acc - 1.0);  // discrepancy at +infinity
  auto visit = [&](double t) {
    sup = std::max(sup, std::abs(fhat(t) - F0(t)));
    sup = std::max(sup, std::abs(fhat_left(t) - F0_left(t)));
  };
  for (double t : ys) visit(t);
  if (atom_at > 0.0) visit(atom_at);
  return sup;
}

}  // namespace twophase
