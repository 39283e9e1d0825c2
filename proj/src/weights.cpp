#include "twophase/weights.hpp"

#include <cmath>

#include "twophase/errors.hpp"

namespace twophase {

std::string to_string(WeightMethod m) {
  switch (m) {
    case WeightMethod::plain: return "plain";
    case WeightMethod::e: return "e";
    case WeightMethod::c: return "c";
    case WeightMethod::mc: return "mc";
    case WeightMethod::cc: return "cc";
  }
  return "?";
}

WeightMethod weight_method_from_string(const std::string& s) {
  if (s == "plain") return WeightMethod::plain;
  if (s == "e") return WeightMethod::e;
  if (s == "c") return WeightMethod::c;
  if (s == "mc") return WeightMethod::mc;
  if (s == "cc") return WeightMethod::cc;
  throw UsageError("unknown weight method '" + s + "' (expected plain|e|c|mc|cc)");
}

WeightSet plain_weights(const TwoPhaseSample& sample) {
  const long N = sample.N();
  WeightSet ws;
  ws.method = WeightMethod::plain;
  ws.w.resize(N);
  for (long i = 0; i < N; ++i) ws.w[i] = sample.xi[i] ? 1.0 / sample.pi0(i) : 0.0;
  return ws;
}

namespace {

// Z for every phase-I record (rows), built once.
Eigen::MatrixXd build_z_matrix(const TwoPhaseSample& sample, const AuxiliaryMap& aux) {
  const long N = sample.N();
  const int d = aux.out_dim();
  Eigen::MatrixXd Z(N, d);
  for (long i = 0; i < N; ++i) Z.row(i) = aux.build(sample.records[i]).transpose();
  return Z;
}

}  // namespace

WeightSet solve_calibration(const TwoPhaseSample& sample, const AuxiliaryMap& aux,
                            const GFunction& G, WeightMethod variant, int max_iter, double tol) {
  if (variant != WeightMethod::c && variant != WeightMethod::mc && variant != WeightMethod::cc)
    throw UsageError("solve_calibration: variant must be c, mc or cc");
  const long N = sample.N();
  const int d = aux.out_dim();
  const Eigen::MatrixXd Z = build_z_matrix(sample, aux);
  const Eigen::VectorXd zbar = Z.colwise().mean();

  // Selected rows only enter the equation; centering/kappa prepared up front.
  std::vector<long> sel;
  sel.reserve(N);
  for (long i = 0; i < N; ++i)
    if (sample.xi[i]) sel.push_back(i);

  const bool centered = (variant == WeightMethod::cc);
  const bool kappa_arg = (variant != WeightMethod::c);
  Eigen::MatrixXd B(static_cast<long>(sel.size()), d);  // basis rows entering G's argument
  Eigen::VectorXd invpi(static_cast<long>(sel.size()));
  Eigen::VectorXd kap(static_cast<long>(sel.size()));
  for (size_t r = 0; r < sel.size(); ++r) {
    const long i = sel[r];
    const double pi = sample.pi0(i);
    invpi[r] = 1.0 / pi;
    kap[r] = 1.0 / pi - 1.0;
    B.row(r) = Z.row(i);
    if (centered) B.row(r) -= zbar.transpose();
  }
  const Eigen::VectorXd target = centered ? Eigen::VectorXd::Zero(d).eval() : zbar;

  // H(alpha) = (1/N) sum_sel G(arg_r) B_r / pi_r - target, arg_r = s_r * B_r'alpha,
  // s_r = kappa_r for mc/cc and 1 for c.
  auto eval = [&](const Eigen::VectorXd& alpha, Eigen::VectorXd& H, Eigen::MatrixXd* J) {
    H.setZero(d);
    if (J) J->setZero(d, d);
    for (long r = 0; r < B.rows(); ++r) {
      const double s = kappa_arg ? kap[r] : 1.0;
      const double t = s * B.row(r).dot(alpha);
      H.noalias() += (G.value(t) * invpi[r]) * B.row(r).transpose();
      if (J) J->noalias() += (G.deriv(t) * s * invpi[r]) * (B.row(r).transpose() * B.row(r));
    }
    H /= static_cast<double>(N);
    H -= target;
    if (J) *J /= static_cast<double>(N);
  };

  WeightSet ws;
  ws.method = variant;
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd H(d);
  Eigen::MatrixXd J(d, d);
  eval(alpha, H, &J);
  double hnorm = H.lpNorm<Eigen::Infinity>();
  double h2 = H.squaredNorm();
  int it = 0;
  while (hnorm > tol && it < max_iter) {
    // Minimum-norm (Gauss-Newton when rank-deficient) step: structurally
    // degenerate directions -- e.g. a centered intercept column -- carry zero
    // residual and stay put; a genuinely unreachable equation makes the line
    // search fail below.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(J);
    const Eigen::VectorXd step = cod.solve(H);
    if (!step.allFinite())
      throw NumericalError("calibration: Newton step failed (residual " + std::to_string(hnorm) +
                           ")");
    double s = 1.0;
    Eigen::VectorXd alpha_try, H_try;
    while (true) {
      alpha_try = alpha - s * step;
      eval(alpha_try, H_try, nullptr);
      const double h2_try = H_try.squaredNorm();
      if (std::isfinite(h2_try) && h2_try <= (1.0 - 1e-4 * s) * h2) break;
      s *= 0.5;
      if (s < 1e-8)
        throw NumericalError("calibration: no root within the link range (residual " +
                             std::to_string(hnorm) + ")");
    }
    alpha = alpha_try;
    eval(alpha, H, &J);
    hnorm = H.lpNorm<Eigen::Infinity>();
    h2 = H.squaredNorm();
    ++it;
  }
  if (hnorm > tol)
    throw NumericalError("calibration: did not converge in " + std::to_string(max_iter) +
                         " iterations (residual " + std::to_string(hnorm) + ")");
  {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
    ws.degenerate_gram = !lu.isInvertible();
  }
  ws.alpha_hat = alpha;
  ws.iterations = it;
  ws.residual = hnorm;
  ws.w.setZero(N);
  for (size_t r = 0; r < sel.size(); ++r) {
    const double s = kappa_arg ? kap[r] : 1.0;
    const double t = s * B.row(static_cast<long>(r)).dot(alpha);
    ws.w[sel[r]] = G.value(t) * invpi[static_cast<long>(r)];
  }
  return ws;
}

WeightSet fit_estimated_weights(const TwoPhaseSample& sample, const AuxiliaryMap& aux,
                                int max_iter, double tol) {
  const long N = sample.N();
  const bool pooled = (aux.mode == AuxiliaryMap::Mode::Pooled);
  if (pooled && !aux.include_stratum_indicators)
    throw DataError("estimated weights: auxiliary map must include stratum indicators");
  const int d = aux.out_dim();

  // Strata with pi0 = 1 contribute nothing to the regression and get weight 1.
  std::vector<bool> dropped(static_cast<size_t>(sample.J) + 1, false);
  WeightSet ws;
  ws.method = WeightMethod::e;
  for (int j = 1; j <= sample.J; ++j) {
    const double pi = sample.pi0_stratum(j);
    if (pi >= 1.0) {
      dropped[static_cast<size_t>(j)] = true;
      ws.dropped_strata.push_back(j);
    }
  }

  // Columns tied to dropped strata leave with them: the leading indicator
  // column in pooled mode, the whole block in within-stratum mode.
  std::vector<int> keep_cols;
  if (pooled) {
    for (int j = 0; j < sample.J; ++j)
      if (!dropped[static_cast<size_t>(j) + 1]) keep_cols.push_back(j);
    for (int c = sample.J; c < d; ++c) keep_cols.push_back(c);
  } else {
    const int bs = d / aux.J;
    for (int j = 0; j < aux.J; ++j)
      if (!dropped[static_cast<size_t>(j) + 1])
        for (int c = 0; c < bs; ++c) keep_cols.push_back(j * bs + c);
  }
  const int dk = static_cast<int>(keep_cols.size());

  std::vector<long> rows;
  rows.reserve(N);
  for (long i = 0; i < N; ++i)
    if (!dropped[static_cast<size_t>(sample.records[i].stratum)]) rows.push_back(i);

  ws.w.setZero(N);
  for (long i = 0; i < N; ++i)
    if (dropped[static_cast<size_t>(sample.records[i].stratum)]) ws.w[i] = sample.xi[i] ? 1.0 : 0.0;

  ws.alpha_hat = Eigen::VectorXd::Zero(d);
  if (rows.empty() || dk == 0) return ws;  // full sampling everywhere

  Eigen::MatrixXd Zk(static_cast<long>(rows.size()), dk);
  Eigen::VectorXd y(static_cast<long>(rows.size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    const Eigen::VectorXd zi = aux.build(sample.records[rows[r]]);
    for (int c = 0; c < dk; ++c) Zk(static_cast<long>(r), c) = zi[keep_cols[static_cast<size_t>(c)]];
    y[static_cast<long>(r)] = sample.xi[rows[r]] ? 1.0 : 0.0;
  }
  const double nr = static_cast<double>(rows.size());
  LogisticLink link;

  auto loglik = [&](const Eigen::VectorXd& a, Eigen::VectorXd* g, Eigen::MatrixXd* Hn) {
    double ll = 0.0;
    if (g) g->setZero(dk);
    if (Hn) Hn->setZero(dk, dk);
    for (long r = 0; r < Zk.rows(); ++r) {
      const double t = Zk.row(r).dot(a);
      // log sigma(t) = -log(1+e^{-t}), log(1-sigma(t)) = -t - log(1+e^{-t})
      const double lse = (t > 0) ? std::log1p(std::exp(-t)) : (-t + std::log1p(std::exp(t)));
      ll += y[r] * (-lse) + (1.0 - y[r]) * (-t - lse);
      if (g || Hn) {
        const double s = link.value(t);
        if (g) g->noalias() += (y[r] - s) * Zk.row(r).transpose();
        if (Hn) Hn->noalias() += link.deriv(t) * (Zk.row(r).transpose() * Zk.row(r));
      }
    }
    return ll;
  };

  Eigen::VectorXd a = Eigen::VectorXd::Zero(dk);
  Eigen::VectorXd g(dk);
  Eigen::MatrixXd Hn(dk, dk);
  double ll = loglik(a, &g, &Hn);
  const double stol = std::min(tol, 1e-11);
  const double h0 = Hn.lpNorm<Eigen::Infinity>();  // curvature scale at alpha = 0
  int it = 0;
  double score_sup = g.lpNorm<Eigen::Infinity>() / nr;
  bool converged = false;
  while (it <= max_iter) {
    // Separation flattens the score exponentially while the Newton step stays
    // O(1/margin); require both to be small before declaring a maximizer, and
    // treat a flat score with collapsed curvature as separation (score and
    // information underflow together along a separating ray).
    const bool flat = score_sup <= stol;
    if (flat && Hn.lpNorm<Eigen::Infinity>() <= 1e-10 * h0) {
      if (it == 0) {
        converged = true;  // no information at the start: nothing to fit
        break;
      }
      throw NumericalError("estimated weights: complete separation suspected (vanishing curvature)");
    }
    // Minimum-norm Newton step: collinear or all-zero columns stay at 0.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Hn);
    Eigen::VectorXd step = cod.solve(g);
    if (!step.allFinite()) {
      if (flat) {
        converged = true;
        break;
      }
      throw NumericalError("estimated weights: Newton step failed");
    }
    if (flat && step.lpNorm<Eigen::Infinity>() <= 1e-6 * (1.0 + a.lpNorm<Eigen::Infinity>())) {
      converged = true;
      break;
    }
    if (it == max_iter) break;
    double s = 1.0;
    bool moved = false;
    while (s >= 1e-10) {
      const Eigen::VectorXd a_try = a + s * step;
      const double ll_try = loglik(a_try, nullptr, nullptr);
      if (std::isfinite(ll_try) && ll_try >= ll - 1e-12 * std::abs(ll)) {
        a = a_try;
        moved = true;
        break;
      }
      s *= 0.5;
    }
    if (!moved) {
      if (flat) {
        converged = true;
        break;
      }
      throw NumericalError("estimated weights: line search failed");
    }
    ll = loglik(a, &g, &Hn);
    score_sup = g.lpNorm<Eigen::Infinity>() / nr;
    ++it;
    if (a.lpNorm<Eigen::Infinity>() > 30.0)
      throw NumericalError("estimated weights: complete separation suspected (|alpha| > 30)");
  }
  if (!converged && score_sup > tol)
    throw NumericalError("estimated weights: did not converge (mean score " +
                         std::to_string(score_sup) + ")");
  ws.iterations = it;
  ws.residual = score_sup;

  for (int c = 0; c < dk; ++c) ws.alpha_hat[keep_cols[static_cast<size_t>(c)]] = a[c];
  for (size_t r = 0; r < rows.size(); ++r) {
    const long i = rows[r];
    if (!sample.xi[i]) continue;
    const double t = Zk.row(static_cast<long>(r)).dot(a);
    const double s = link.value(t);
    if (s <= 0.0) throw NumericalError("estimated weights: fitted probability underflow");
    ws.w[i] = 1.0 / s;
  }
  return ws;
}

WeightSet within_stratum(WeightMethod method, const TwoPhaseSample& sample, AuxiliaryMap aux,
                         const GFunction* G) {
  aux.mode = AuxiliaryMap::Mode::WithinStratum;
  aux.J = sample.J;
  if (method == WeightMethod::plain) return plain_weights(sample);
  if (method == WeightMethod::e) {
    aux.include_stratum_indicators = true;  // per-block intercepts
    return fit_estimated_weights(sample, aux);
  }
  if (!G) throw UsageError("within_stratum: calibration variants need a G function");
  return solve_calibration(sample, aux, *G, method);
}

WeightSet make_weights(WeightMethod method, bool within_stratum_mode, const TwoPhaseSample& sample,
                       const AuxiliaryMap* aux, const GFunction* G) {
  if (method == WeightMethod::plain) return plain_weights(sample);
  if (!aux) throw UsageError("adjusted weights need an auxiliary map");
  if (within_stratum_mode) return within_stratum(method, sample, *aux, G);
  if (method == WeightMethod::e) return fit_estimated_weights(sample, *aux);
  if (!G) throw UsageError("calibration variants need a G function");
  return solve_calibration(sample, *aux, *G, method);
}

}  // namespace twophase
