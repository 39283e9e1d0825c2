#include "twophase/cox_right.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "twophase/asymptotics.hpp"
#include "twophase/errors.hpp"

namespace twophase {

namespace {

// Selected records sorted by y ascending (index tie-break for determinism).
struct WorkData {
  std::vector<long> idx;   // record ids, sorted
  std::vector<double> y, w;
  std::vector<int> delta;
  Eigen::MatrixXd X;       // n_sel x p
  long N = 0;
  int p = 0;
  std::vector<std::pair<long, long>> groups;  // [lo, hi) runs of tied y, ascending
};

WorkData gather(const TwoPhaseSample& sample, const WeightSet& weights) {
  WorkData wd;
  wd.N = sample.N();
  if (weights.w.size() != wd.N) throw DataError("cox_right: weight vector size mismatch");
  for (long i = 0; i < wd.N; ++i)
    if (sample.xi[i]) wd.idx.push_back(i);
  if (wd.idx.empty()) throw DataError("cox_right: no selected records");
  std::sort(wd.idx.begin(), wd.idx.end(), [&](long a, long b) {
    const double ya = sample.records[static_cast<size_t>(a)].y;
    const double yb = sample.records[static_cast<size_t>(b)].y;
    return ya < yb || (ya == yb && a < b);
  });
  const long n = static_cast<long>(wd.idx.size());
  wd.p = static_cast<int>(sample.x_of(static_cast<int>(wd.idx[0])).size());
  wd.y.resize(n);
  wd.w.resize(n);
  wd.delta.resize(n);
  wd.X.resize(n, wd.p);
  for (long r = 0; r < n; ++r) {
    const long i = wd.idx[static_cast<size_t>(r)];
    wd.y[static_cast<size_t>(r)] = sample.records[static_cast<size_t>(i)].y;
    wd.delta[static_cast<size_t>(r)] = sample.records[static_cast<size_t>(i)].delta;
    wd.w[static_cast<size_t>(r)] = weights.w[i];
    const Eigen::VectorXd& xi = sample.x_of(static_cast<int>(i));
    if (xi.size() != wd.p) throw DataError("cox_right: ragged covariate dimension");
    wd.X.row(r) = xi.transpose();
  }
  long lo = 0;
  while (lo < n) {
    long hi = lo + 1;
    while (hi < n && wd.y[static_cast<size_t>(hi)] == wd.y[static_cast<size_t>(lo)]) ++hi;
    wd.groups.emplace_back(lo, hi);
    lo = hi;
  }
  return wd;
}

// Weighted partial log likelihood with Breslow ties; gradient and (negated)
// Hessian accumulated in one descending sweep.
double partial_loglik(const WorkData& wd, const Eigen::VectorXd& theta, Eigen::VectorXd* grad,
                      Eigen::MatrixXd* neg_hess) {
  const long n = static_cast<long>(wd.y.size());
  Eigen::VectorXd e(n);
  for (long r = 0; r < n; ++r) e[r] = std::exp(theta.dot(wd.X.row(r)));
  double S0 = 0.0;
  Eigen::VectorXd S1 = Eigen::VectorXd::Zero(wd.p);
  Eigen::MatrixXd S2 = Eigen::MatrixXd::Zero(wd.p, wd.p);
  const bool need2 = (neg_hess != nullptr);
  double ll = 0.0;
  if (grad) grad->setZero(wd.p);
  if (neg_hess) neg_hess->setZero(wd.p, wd.p);
  for (auto it = wd.groups.rbegin(); it != wd.groups.rend(); ++it) {
    for (long r = it->first; r < it->second; ++r) {
      const double we = wd.w[static_cast<size_t>(r)] * e[r];
      S0 += we;
      S1.noalias() += we * wd.X.row(r).transpose();
      if (need2) S2.noalias() += we * (wd.X.row(r).transpose() * wd.X.row(r));
    }
    for (long r = it->first; r < it->second; ++r) {
      if (!wd.delta[static_cast<size_t>(r)]) continue;
      const double wi = wd.w[static_cast<size_t>(r)];
      if (wi == 0.0) continue;
      if (!(S0 > 0.0)) throw NumericalError("cox_right: zero risk-set mass at a failure");
      ll += wi * (theta.dot(wd.X.row(r)) - std::log(S0));
      if (grad) grad->noalias() += wi * (wd.X.row(r).transpose() - S1 / S0);
      if (need2) {
        const Eigen::VectorXd m1 = S1 / S0;
        neg_hess->noalias() += wi * (S2 / S0 - m1 * m1.transpose());
      }
    }
  }
  return ll;
}

}  // namespace

CoxRightFit fit_cox_right(const TwoPhaseSample& sample, const WeightSet& weights,
                          const CoxRightOptions& opt) {
  const WorkData wd = gather(sample, weights);
  const double N = static_cast<double>(wd.N);

  Eigen::VectorXd theta = (opt.theta_init.size() == wd.p) ? opt.theta_init
                                                          : Eigen::VectorXd::Zero(wd.p);
  Eigen::VectorXd grad(wd.p);
  Eigen::MatrixXd H(wd.p, wd.p);
  double ll = partial_loglik(wd, theta, &grad, &H);
  double resid = grad.lpNorm<Eigen::Infinity>() / N;
  const double h0 = H.lpNorm<Eigen::Infinity>();  // curvature scale at the start
  int it = 0;
  bool converged = false;
  while (it <= opt.max_iter) {
    // A stationary point needs a flat score AND live curvature: a monotone
    // likelihood flattens score and information at the same exponential rate,
    // so the score underflows below tol (even to exact zero) short of the
    // theta bound while H collapses relative to its starting scale.
    const bool flat = resid <= opt.tol;
    const bool curved = H.lpNorm<Eigen::Infinity>() > 1e-10 * h0;
    if (flat && !curved) {
      if (it == 0) {
        converged = true;  // stationary at the start: x carries no information
        break;
      }
      throw NumericalError("cox_right: monotone likelihood suspected (score flattened with vanishing curvature)");
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    Eigen::VectorXd step = ldlt.solve(grad);
    const bool usable = ldlt.info() == Eigen::Success && step.allFinite();
    if (flat && usable &&
        step.lpNorm<Eigen::Infinity>() <= 1e-6 * (1.0 + theta.lpNorm<Eigen::Infinity>())) {
      converged = true;
      break;
    }
    if (!usable) {
      if (flat)
        throw NumericalError("cox_right: monotone likelihood suspected (score flattened with singular information)");
      throw NumericalError("cox_right: singular weighted information");
    }
    if (it == opt.max_iter) break;
    const double sn = step.lpNorm<Eigen::Infinity>();
    if (sn > 10.0) step *= 10.0 / sn;  // tame the first steps far from the optimum
    double s = 1.0;
    bool moved = false;
    while (s >= 1e-10) {
      const Eigen::VectorXd t_try = theta + s * step;
      const double ll_try = partial_loglik(wd, t_try, nullptr, nullptr);
      if (std::isfinite(ll_try) && ll_try >= ll - 1e-12 * (1.0 + std::abs(ll))) {
        theta = t_try;
        moved = true;
        break;
      }
      s *= 0.5;
    }
    if (!moved) {
      if (flat) {
        converged = true;  // flat and no ascent available: accept the point
        break;
      }
      throw NumericalError("cox_right: line search failed");
    }
    ll = partial_loglik(wd, theta, &grad, &H);
    resid = grad.lpNorm<Eigen::Infinity>() / N;
    ++it;
    if (theta.lpNorm<Eigen::Infinity>() > opt.theta_bound)
      throw NumericalError("cox_right: monotone likelihood suspected (|theta| > bound)");
  }
  if (!converged)
    throw NumericalError("cox_right: Newton did not converge (mean score " +
                         std::to_string(resid) + ")");

  // Breslow baseline: jumps at distinct failure times with positive death
  // mass, dLambda = (sum w delta at t) / S0(t).
  const long n = static_cast<long>(wd.y.size());
  Eigen::VectorXd e(n);
  for (long r = 0; r < n; ++r) e[r] = std::exp(theta.dot(wd.X.row(r)));
  std::vector<double> s0_at_group(wd.groups.size());
  {
    double S0 = 0.0;
    for (size_t g = wd.groups.size(); g-- > 0;) {
      for (long r = wd.groups[g].first; r < wd.groups[g].second; ++r)
        S0 += wd.w[static_cast<size_t>(r)] * e[r];
      s0_at_group[g] = S0;
    }
  }
  std::vector<double> jumps, values;
  double cum = 0.0, bres = 0.0;
  for (size_t g = 0; g < wd.groups.size(); ++g) {
    double dmass = 0.0;
    for (long r = wd.groups[g].first; r < wd.groups[g].second; ++r)
      if (wd.delta[static_cast<size_t>(r)]) dmass += wd.w[static_cast<size_t>(r)];
    if (dmass <= 0.0) continue;
    const double dlam = dmass / s0_at_group[g];
    cum += dlam;
    jumps.push_back(wd.y[static_cast<size_t>(wd.groups[g].first)]);
    values.push_back(cum);
    bres = std::max(bres, std::abs(dmass - dlam * s0_at_group[g]) / N);
  }

  CoxRightFit fit;
  fit.theta_hat = theta;
  fit.lambda_hat = StepFunction(jumps, values);
  fit.loglik = ll;
  fit.iterations = it;
  fit.score_resid = resid;
  fit.breslow_resid = bres;
  return fit;
}

Eigen::VectorXd efficient_score_right(double y, int delta, const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& theta, const StepFunction& lambda,
                                      const MomentsRight& mom) {
  const int p = static_cast<int>(x.size());
  Eigen::VectorXd integral = Eigen::VectorXd::Zero(p);
  const auto& tk = lambda.jumps();
  for (size_t k = 0; k < tk.size(); ++k) {
    if (tk[k] > y) break;
    const double dlam = lambda.mass(static_cast<long>(k));
    if (dlam == 0.0) continue;
    const double m0 = mom.M0(tk[k]);
    if (!(m0 > 0.0)) throw NumericalError("efficient_score_right: M0 <= 0 at a jump");
    integral += (x - mom.M1(tk[k]) / m0) * dlam;
  }
  Eigen::VectorXd out = -std::exp(theta.dot(x)) * integral;
  if (delta) {
    const double m0 = mom.M0(y);
    if (!(m0 > 0.0)) throw NumericalError("efficient_score_right: M0 <= 0 at y");
    out += x - mom.M1(y) / m0;
  }
  return out;
}

namespace {

// IPW plug-in risk moments: step functions of s with jumps at the distinct
// selected y values.
struct EmpiricalMoments {
  std::vector<double> ys;   // distinct, ascending
  std::vector<double> m0;   // tail sums starting at ys[k]
  Eigen::MatrixXd m1;       // row k: tail vector sum
  int p = 0;

  double M0(double s) const {
    const auto it = std::lower_bound(ys.begin(), ys.end(), s);
    if (it == ys.end()) return 0.0;
    return m0[static_cast<size_t>(it - ys.begin())];
  }
  Eigen::VectorXd M1(double s) const {
    const auto it = std::lower_bound(ys.begin(), ys.end(), s);
    if (it == ys.end()) return Eigen::VectorXd::Zero(p);
    return m1.row(it - ys.begin()).transpose();
  }
};

EmpiricalMoments empirical_moments(const WorkData& wd, const Eigen::VectorXd& theta) {
  EmpiricalMoments em;
  em.p = wd.p;
  const double N = static_cast<double>(wd.N);
  const size_t G = wd.groups.size();
  em.ys.resize(G);
  em.m0.resize(G);
  em.m1.resize(static_cast<long>(G), wd.p);
  double S0 = 0.0;
  Eigen::VectorXd S1 = Eigen::VectorXd::Zero(wd.p);
  for (size_t g = G; g-- > 0;) {
    for (long r = wd.groups[g].first; r < wd.groups[g].second; ++r) {
      const double we = wd.w[static_cast<size_t>(r)] * std::exp(theta.dot(wd.X.row(r)));
      S0 += we;
      S1.noalias() += we * wd.X.row(r).transpose();
    }
    em.ys[g] = wd.y[static_cast<size_t>(wd.groups[g].first)];
    em.m0[g] = S0 / N;
    em.m1.row(static_cast<long>(g)) = S1.transpose() / N;
  }
  return em;
}

}  // namespace

Eigen::MatrixXd efficient_scores_batch(const TwoPhaseSample& sample, const WeightSet& weights,
                                       const Eigen::VectorXd& theta, const StepFunction& lambda,
                                       std::vector<long>& index, const MomentsRight* mom) {
  const WorkData wd = gather(sample, weights);
  index = wd.idx;
  const long n = static_cast<long>(wd.idx.size());

  EmpiricalMoments em;
  std::function<double(double)> M0;
  std::function<Eigen::VectorXd(double)> M1;
  if (mom) {
    M0 = mom->M0;
    M1 = mom->M1;
  } else {
    em = empirical_moments(wd, theta);
    M0 = [&em](double s) { return em.M0(s); };
    M1 = [&em](double s) { return em.M1(s); };
  }

  // Prefix sums over lambda's jumps: A = cumulative dLambda, B = cumulative
  // m(t) dLambda; then the compensator term is e^{theta'x} (x A - B).
  const auto& tk = lambda.jumps();
  const size_t K = tk.size();
  std::vector<double> A(K);
  Eigen::MatrixXd B(static_cast<long>(K), wd.p);
  double acc = 0.0;
  Eigen::VectorXd bacc = Eigen::VectorXd::Zero(wd.p);
  for (size_t k = 0; k < K; ++k) {
    const double dlam = lambda.mass(static_cast<long>(k));
    if (dlam != 0.0) {
      const double m0 = M0(tk[k]);
      if (!(m0 > 0.0)) throw NumericalError("efficient_scores_batch: M0 <= 0 at a jump");
      acc += dlam;
      bacc += (M1(tk[k]) / m0) * dlam;
    }
    A[k] = acc;
    B.row(static_cast<long>(k)) = bacc.transpose();
  }

  Eigen::MatrixXd out(n, wd.p);
  for (long r = 0; r < n; ++r) {
    const double y = wd.y[static_cast<size_t>(r)];
    // last jump index <= y
    const auto it = std::upper_bound(tk.begin(), tk.end(), y);
    Eigen::VectorXd val = Eigen::VectorXd::Zero(wd.p);
    if (it != tk.begin()) {
      const size_t k = static_cast<size_t>(it - tk.begin()) - 1;
      val = -std::exp(theta.dot(wd.X.row(r))) *
            (wd.X.row(r).transpose() * A[k] - B.row(static_cast<long>(k)).transpose());
    }
    if (wd.delta[static_cast<size_t>(r)]) {
      const double m0 = M0(y);
      if (!(m0 > 0.0)) throw NumericalError("efficient_scores_batch: M0 <= 0 at y");
      val += wd.X.row(r).transpose() - M1(y) / m0;
    }
    out.row(r) = val.transpose();
  }
  return out;
}

VarianceRightResult variance_right(const CoxRightFit& fit, const TwoPhaseSample& sample,
                                   const WeightSet& weights, const AuxiliaryMap* aux,
                                   bool within_stratum_mode, const MomentsRight* mom) {
  std::vector<long> idx;
  const Eigen::MatrixXd scores =
      efficient_scores_batch(sample, weights, fit.theta_hat, fit.lambda_hat, idx, mom);
  const long n = scores.rows();
  const int p = static_cast<int>(scores.cols());
  const double N = static_cast<double>(sample.N());

  VarianceRightResult vr;
  vr.I_hat = Eigen::MatrixXd::Zero(p, p);
  for (long r = 0; r < n; ++r)
    vr.I_hat.noalias() += weights.w[idx[static_cast<size_t>(r)]] *
                          (scores.row(r).transpose() * scores.row(r));
  vr.I_hat /= N;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(vr.I_hat);
  if (!lu.isInvertible()) throw NumericalError("variance_right: singular plug-in information");
  vr.I_hat_inv = lu.inverse();

  Eigen::MatrixXd ltilde(n, p);
  for (long r = 0; r < n; ++r) ltilde.row(r) = (vr.I_hat_inv * scores.row(r).transpose()).transpose();

  Eigen::MatrixXd resid = ltilde;
  if (weights.method != WeightMethod::plain) {
    if (!aux) throw DataError("variance_right: adjusted-weight fits need the auxiliary map");
    DrawSet d;
    d.ltilde = ltilde;
    d.J = sample.J;
    d.Z.resize(n, aux->k);
    d.stratum.resize(n);
    d.pi0.resize(n);
    d.mass.resize(n);
    for (long r = 0; r < n; ++r) {
      const long i = idx[static_cast<size_t>(r)];
      d.Z.row(r) = aux->base(sample.records[static_cast<size_t>(i)]).transpose();
      d.stratum[r] = sample.records[static_cast<size_t>(i)].stratum;
      d.pi0[r] = sample.pi0(static_cast<int>(i));
      d.mass[r] = weights.w[i];
    }
    d.p.resize(static_cast<size_t>(sample.J));
    d.nu.resize(static_cast<size_t>(sample.J));
    for (int j = 1; j <= sample.J; ++j) {
      d.p[static_cast<size_t>(j - 1)] = sample.pi0_stratum(j);
      d.nu[static_cast<size_t>(j - 1)] =
          static_cast<double>(sample.Nj[static_cast<size_t>(j - 1)]) / N;
    }
    // cc centers at the phase-I average of Z (the calibration centering).
    if (weights.method == WeightMethod::cc && !within_stratum_mode) {
      Eigen::VectorXd mu = Eigen::VectorXd::Zero(aux->k);
      for (long i = 0; i < sample.N(); ++i)
        mu += aux->base(sample.records[static_cast<size_t>(i)]);
      d.mu_Z = mu / N;
    }
    Eigen::VectorXd alpha_e;
    if (weights.method == WeightMethod::e && !within_stratum_mode) alpha_e = weights.alpha_hat;
    resid -= q_project(weights.method, d, within_stratum_mode, alpha_e);
  }

  vr.sigma_hat = vr.I_hat_inv;
  for (int j = 1; j <= sample.J; ++j) {
    StratumVariancePiece piece;
    piece.stratum = j;
    piece.nu_hat = static_cast<double>(sample.Nj[static_cast<size_t>(j - 1)]) / N;
    piece.p_j = sample.pi0_stratum(j);
    piece.cond_mean = Eigen::VectorXd::Zero(p);
    piece.cond_raw2 = Eigen::MatrixXd::Zero(p, p);
    const double denom = N * piece.nu_hat;
    for (long r = 0; r < n; ++r) {
      const long i = idx[static_cast<size_t>(r)];
      if (sample.records[static_cast<size_t>(i)].stratum != j) continue;
      piece.cond_mean.noalias() += weights.w[i] * resid.row(r).transpose();
      piece.cond_raw2.noalias() += weights.w[i] * (resid.row(r).transpose() * resid.row(r));
    }
    piece.cond_mean /= denom;
    piece.cond_raw2 /= denom;
    const double wj = piece.nu_hat * (1.0 - piece.p_j) / piece.p_j;
    if (sample.design == Design::WithoutReplacement) {
      vr.sigma_hat += wj * (piece.cond_raw2 - piece.cond_mean * piece.cond_mean.transpose());
    } else {
      vr.sigma_hat += wj * piece.cond_raw2;
    }
    vr.strata.push_back(std::move(piece));
  }
  return vr;
}

}  // namespace twophase
