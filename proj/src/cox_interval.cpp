#include "twophase/cox_interval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "twophase/errors.hpp"
#include "twophase/isotonic.hpp"

namespace twophase {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(1 - e^{-u}) for u > 0.
double log1mexp(double u) {
  if (u <= 0.0) return kNegInf;
  if (u < 0.6931471805599453) return std::log(-std::expm1(-u));
  return std::log1p(-std::exp(-u));
}

struct IntervalWork {
  std::vector<double> grid;  // distinct selected y, ascending
  std::vector<int> ki;       // grid index per selected record
  std::vector<double> w;
  std::vector<int> delta;
  Eigen::MatrixXd X;  // n_sel x p
  long N = 0;
  int p = 0;

  long n() const { return static_cast<long>(w.size()); }
};

IntervalWork gather(const TwoPhaseSample& sample, const WeightSet& weights) {
  IntervalWork iw;
  iw.N = sample.N();
  if (weights.w.size() != iw.N) throw DataError("cox_interval: weight vector size mismatch");
  std::vector<long> idx;
  for (long i = 0; i < iw.N; ++i)
    if (sample.xi[i]) idx.push_back(i);
  if (idx.empty()) throw DataError("cox_interval: no selected records");
  for (long i : idx) iw.grid.push_back(sample.records[static_cast<size_t>(i)].y);
  std::sort(iw.grid.begin(), iw.grid.end());
  iw.grid.erase(std::unique(iw.grid.begin(), iw.grid.end()), iw.grid.end());
  const long n = static_cast<long>(idx.size());
  iw.p = static_cast<int>(sample.x_of(static_cast<int>(idx[0])).size());
  iw.ki.resize(static_cast<size_t>(n));
  iw.w.resize(static_cast<size_t>(n));
  iw.delta.resize(static_cast<size_t>(n));
  iw.X.resize(n, iw.p);
  for (long r = 0; r < n; ++r) {
    const long i = idx[static_cast<size_t>(r)];
    const double y = sample.records[static_cast<size_t>(i)].y;
    iw.ki[static_cast<size_t>(r)] = static_cast<int>(
        std::lower_bound(iw.grid.begin(), iw.grid.end(), y) - iw.grid.begin());
    iw.w[static_cast<size_t>(r)] = weights.w[i];
    iw.delta[static_cast<size_t>(r)] = sample.records[static_cast<size_t>(i)].delta;
    const Eigen::VectorXd& xr = sample.x_of(static_cast<int>(i));
    if (xr.size() != iw.p) throw DataError("cox_interval: ragged covariate dimension");
    iw.X.row(r) = xr.transpose();
  }
  return iw;
}

double objective_on_grid(const IntervalWork& iw, const std::vector<double>& lam,
                         const Eigen::VectorXd& E) {
  double obj = 0.0;
  for (long r = 0; r < iw.n(); ++r) {
    const double wr = iw.w[static_cast<size_t>(r)];
    if (wr == 0.0) continue;
    const double u = lam[static_cast<size_t>(iw.ki[static_cast<size_t>(r)])] * E[r];
    if (iw.delta[static_cast<size_t>(r)]) {
      const double t = log1mexp(u);
      if (t == kNegInf) return kNegInf;
      obj += wr * t;
    } else {
      obj -= wr * u;
    }
  }
  return obj;
}

// One ICM profile at fixed E = e^{theta'x}; lam is the warm start and gets
// the solution. Returns the objective; sweeps accumulates ICM passes.
double icm_profile(const IntervalWork& iw, const Eigen::VectorXd& E, std::vector<double>& lam,
                   const IcmOptions& opt, int& sweeps) {
  const size_t K = iw.grid.size();
  // Cold start: a positive ramp up to a crude pooled scale (a PAVA-based
  // start would make the theta = 0 equivalence checks vacuous).
  if (lam.size() != K) {
    double num = 0.0, den = 0.0;
    for (long r = 0; r < iw.n(); ++r) {
      num += iw.w[static_cast<size_t>(r)] * iw.delta[static_cast<size_t>(r)];
      den += iw.w[static_cast<size_t>(r)];
    }
    double fbar = (den > 0.0) ? num / den : 0.5;
    fbar = std::min(0.95, std::max(0.05, fbar));
    const double top = -std::log1p(-fbar);
    lam.assign(K, 0.0);
    for (size_t k = 0; k < K; ++k)
      lam[k] = top * static_cast<double>(k + 1) / static_cast<double>(K);
  }

  double obj = objective_on_grid(iw, lam, E);
  if (obj == kNegInf) throw NumericalError("cox_interval: infeasible warm start");
  std::vector<double> g(K), dcurv(K), target(K), iso, trial(K);
  double last_gain = std::numeric_limits<double>::infinity();
  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    ++sweeps;
    std::fill(g.begin(), g.end(), 0.0);
    std::fill(dcurv.begin(), dcurv.end(), 0.0);
    for (long r = 0; r < iw.n(); ++r) {
      const double wr = iw.w[static_cast<size_t>(r)];
      if (wr == 0.0) continue;
      const size_t k = static_cast<size_t>(iw.ki[static_cast<size_t>(r)]);
      const double e = E[r];
      const double u = lam[k] * e;
      if (iw.delta[static_cast<size_t>(r)]) {
        const double t = std::expm1(u);  // e^u - 1 > 0 for u > 0
        const double rr = 1.0 / t;                    // e^{-u}/(1-e^{-u})
        const double cc = (1.0 + t) / (t * t);        // e^{-u}/(1-e^{-u})^2
        g[k] += wr * e * rr;
        dcurv[k] += wr * e * e * cc;
      } else {
        g[k] -= wr * e;
      }
    }
    double dmax = 0.0;
    for (size_t k = 0; k < K; ++k) dmax = std::max(dmax, dcurv[k]);
    const double floor = 1e-10 * (1.0 + dmax);
    for (size_t k = 0; k < K; ++k) {
      const double d = std::max(dcurv[k], floor);
      dcurv[k] = d;
      target[k] = lam[k] + g[k] / d;
    }
    iso = isotonic_fit(target, dcurv);
    for (size_t k = 0; k < K; ++k)
      iso[k] = std::min(opt.lambda_max, std::max(0.0, iso[k]));

    double s = 1.0;
    double obj_new = kNegInf;
    bool accepted = false;
    while (s >= 1e-12) {
      // the exact blend of two nondecreasing vectors is nondecreasing; guard
      // against ulp-level wobble so the StepFunction invariant survives
      for (size_t k = 0; k < K; ++k) {
        trial[k] = lam[k] + s * (iso[k] - lam[k]);
        if (k > 0 && trial[k] < trial[k - 1]) trial[k] = trial[k - 1];
      }
      obj_new = objective_on_grid(iw, trial, E);
      if (std::isfinite(obj_new) && obj_new >= obj) {
        accepted = true;
        break;
      }
      s *= 0.5;
    }
    if (!accepted) return obj;  // fixed point (or no ascent direction left)
    for (size_t k = 0; k < K; ++k) lam[k] = trial[k];
    const double gain = obj_new - obj;
    obj = obj_new;
    last_gain = gain;
    // Objective flatness is the stopping rule: blocks drifting toward a
    // clamp keep moving long after the likelihood has stopped caring.
    if (gain <= opt.obj_tol * (1.0 + std::abs(obj))) return obj;
  }
  // Ran out of sweeps: tolerate a soft landing, reject a clearly unconverged one.
  if (last_gain > 1e3 * opt.obj_tol * (1.0 + std::abs(obj)))
    throw NumericalError("cox_interval: ICM did not converge");
  return obj;
}

}  // namespace

double loglik_interval(const Eigen::VectorXd& theta, const StepFunction& lambda,
                       const TwoPhaseSample& sample, const WeightSet& weights) {
  double obj = 0.0;
  for (long i = 0; i < sample.N(); ++i) {
    if (!sample.xi[i]) continue;
    const double wr = weights.w[i];
    if (wr == 0.0) continue;
    const auto& rec = sample.records[static_cast<size_t>(i)];
    const double u = lambda(rec.y) * std::exp(theta.dot(sample.x_of(static_cast<int>(i))));
    if (rec.delta) {
      const double t = log1mexp(u);
      if (t == kNegInf) return kNegInf;
      obj += wr * t;
    } else {
      obj -= wr * u;
    }
  }
  return obj;
}

StepFunction profile_lambda(const Eigen::VectorXd& theta, const TwoPhaseSample& sample,
                            const WeightSet& weights, const IcmOptions& opt) {
  const IntervalWork iw = gather(sample, weights);
  Eigen::VectorXd E(iw.n());
  for (long r = 0; r < iw.n(); ++r) E[r] = std::exp(theta.dot(iw.X.row(r)));
  std::vector<double> lam;
  int sweeps = 0;
  icm_profile(iw, E, lam, opt, sweeps);
  return StepFunction(iw.grid, lam);
}

CoxIntervalFit fit_cox_interval(const TwoPhaseSample& sample, const WeightSet& weights,
                                const IntervalFitOptions& opt) {
  const IntervalWork iw = gather(sample, weights);
  CoxIntervalFit fit;
  fit.theta_hat = Eigen::VectorXd::Zero(iw.p);

  // Coordinates with a constant covariate across selected records are not
  // identified (Lambda absorbs the scale); keep them at 0.
  std::vector<bool> fixed(static_cast<size_t>(iw.p), false);
  for (int c = 0; c < iw.p; ++c) {
    const double lo = iw.X.col(c).minCoeff(), hi = iw.X.col(c).maxCoeff();
    if (hi - lo < 1e-12) {
      fixed[static_cast<size_t>(c)] = true;
      fit.non_identifiable = true;
    }
  }

  std::vector<double> lam;  // warm-started across evaluations
  int sweeps = 0;
  Eigen::VectorXd E(iw.n());
  auto profile_at = [&](const Eigen::VectorXd& theta) {
    for (long r = 0; r < iw.n(); ++r) E[r] = std::exp(theta.dot(iw.X.row(r)));
    ++fit.profile_evals;
    return icm_profile(iw, E, lam, opt.icm, sweeps);
  };

  Eigen::VectorXd theta = fit.theta_hat;
  double best = profile_at(theta);
  const double range = opt.theta_hi - opt.theta_lo;
  const double phi = 0.6180339887498949;
  for (int sweep = 0; sweep < opt.sweeps; ++sweep) {
    const double radius = (sweep == 0) ? 0.5 * range : 0.5 * range * std::pow(0.1, sweep);
    for (int c = 0; c < iw.p; ++c) {
      if (fixed[static_cast<size_t>(c)]) continue;
      double a = std::max(opt.theta_lo, theta[c] - radius);
      double b = std::min(opt.theta_hi, theta[c] + radius);
      if (sweep == 0) {
        a = opt.theta_lo;
        b = opt.theta_hi;
      }
      auto eval_c = [&](double v) {
        Eigen::VectorXd t = theta;
        t[c] = v;
        return profile_at(t);
      };
      double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
      double f1 = eval_c(x1), f2 = eval_c(x2);
      while (b - a > opt.golden_tol) {
        if (f1 < f2) {
          a = x1;
          x1 = x2;
          f1 = f2;
          x2 = a + phi * (b - a);
          f2 = eval_c(x2);
        } else {
          b = x2;
          x2 = x1;
          f2 = f1;
          x1 = b - phi * (b - a);
          f1 = eval_c(x1);
        }
      }
      const double cand = (f1 > f2) ? x1 : x2;
      const double fc = std::max(f1, f2);
      if (fc >= best) {
        theta[c] = cand;
        best = fc;
      }
    }
  }
  // Final profile at the accepted theta (the warm state may hold a neighbor's).
  best = profile_at(theta);

  fit.theta_hat = theta;
  fit.lambda_hat = StepFunction(iw.grid, lam);
  fit.objective = best;
  fit.icm_sweeps = sweeps;
  for (int c = 0; c < iw.p; ++c) {
    if (fixed[static_cast<size_t>(c)]) continue;
    if (std::abs(theta[c] - opt.theta_lo) < 1e-6 * range ||
        std::abs(theta[c] - opt.theta_hi) < 1e-6 * range)
      fit.boundary = true;
  }
  // Numerical profile score at the optimum, per unit record.
  const double h = 1e-4;
  double resid = 0.0;
  for (int c = 0; c < iw.p; ++c) {
    if (fixed[static_cast<size_t>(c)]) continue;
    Eigen::VectorXd tp = theta, tm = theta;
    tp[c] = std::min(opt.theta_hi, theta[c] + h);
    tm[c] = std::max(opt.theta_lo, theta[c] - h);
    std::vector<double> lam_p = lam, lam_m = lam;
    int sw = 0;
    Eigen::VectorXd Ep(iw.n()), Em(iw.n());
    for (long r = 0; r < iw.n(); ++r) Ep[r] = std::exp(tp.dot(iw.X.row(r)));
    for (long r = 0; r < iw.n(); ++r) Em[r] = std::exp(tm.dot(iw.X.row(r)));
    const double fp = icm_profile(iw, Ep, lam_p, opt.icm, sw);
    const double fm = icm_profile(iw, Em, lam_m, opt.icm, sw);
    resid = std::max(resid, std::abs(fp - fm) / ((tp[c] - tm[c]) * static_cast<double>(iw.N)));
  }
  fit.score_resid = resid;
  return fit;
}

Eigen::VectorXd oracle_efficient_score_interval(double y, int delta, const Eigen::VectorXd& x,
                                                const Eigen::VectorXd& theta0,
                                                const std::function<double(double)>& Lambda0,
                                                const CovariateLawQuad& law) {
  if (law.nodes.empty()) throw DataError("oracle_efficient_score_interval: empty covariate law");
  const int p = static_cast<int>(x.size());
  const double L = Lambda0(y);
  // Conditional moments over X given Y = y, weighted by e^{2 theta'X} O(y|X),
  // O = 1/(e^u - 1). For L -> 0, O ~ 1/u and the e^{theta'X} weights remain.
  Eigen::VectorXd num = Eigen::VectorXd::Zero(p);
  double den = 0.0;
  for (size_t qn = 0; qn < law.nodes.size(); ++qn) {
    const Eigen::VectorXd& xq = law.nodes[qn];
    const double eq = std::exp(theta0.dot(xq));
    double oq;
    if (L > 0.0) {
      const double uq = L * eq;
      oq = 1.0 / std::expm1(uq);
    } else {
      oq = 1.0 / eq;  // limit of L*O as L -> 0, common factor 1/L dropped
    }
    const double wq = law.weights[qn] * std::exp(2.0 * theta0.dot(xq)) * oq;
    num += wq * xq;
    den += wq;
  }
  if (!(den > 0.0) || !std::isfinite(den))
    throw NumericalError("oracle_efficient_score_interval: degenerate conditional moment");
  const Eigen::VectorXd centered = x - num / den;

  const double e = std::exp(theta0.dot(x));
  double front;  // e^{theta'x} [delta r - (1-delta)] * Lambda0(y)
  if (delta) {
    if (L > 0.0) {
      front = e * L / std::expm1(L * e);
    } else {
      front = 1.0;  // limit of e r L as u -> 0
    }
  } else {
    front = -e * L;
  }
  return front * centered;
}

}  // namespace twophase
