#include "twophase/asymptotics.hpp"

#include <cmath>
#include <string>

#include "twophase/errors.hpp"
#include "twophase/glink.hpp"

namespace twophase {

void DrawSet::validate() const {
  const long m = ltilde.rows();
  if (m == 0) throw DataError("draw set: empty");
  if (Z.rows() != m || stratum.size() != m || pi0.size() != m || mass.size() != m)
    throw DataError("draw set: inconsistent row counts");
  if (J <= 0 || static_cast<int>(p.size()) != J)
    throw DataError("draw set: p must have one entry per stratum");
  if (!nu.empty() && static_cast<int>(nu.size()) != J)
    throw DataError("draw set: nu size mismatch");
  double tot = 0.0;
  for (long i = 0; i < m; ++i) {
    if (stratum[i] < 1 || stratum[i] > J) throw DataError("draw set: stratum label out of range");
    if (!(pi0[i] > 0.0 && pi0[i] <= 1.0)) throw DataError("draw set: pi0 outside (0,1]");
    if (!(mass[i] >= 0.0)) throw DataError("draw set: negative mass");
    tot += mass[i];
  }
  if (!(tot > 0.0)) throw DataError("draw set: zero total mass");
  for (int j = 0; j < J; ++j)
    if (!(p[j] > 0.0 && p[j] <= 1.0)) throw DataError("draw set: p_j outside (0,1]");
}

namespace {

// Solve Gram * coef = cov with a rank-revealing decomposition; collinear
// basis columns are fine as long as the system is consistent (true for
// genuine weighted projections).
Eigen::MatrixXd gram_solve(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& cov) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(gram);
  Eigen::MatrixXd coef = cod.solve(cov);
  const double scale = 1.0 + gram.lpNorm<Eigen::Infinity>() * coef.lpNorm<Eigen::Infinity>() +
                       cov.lpNorm<Eigen::Infinity>();
  if ((gram * coef - cov).lpNorm<Eigen::Infinity>() > 1e-8 * scale)
    throw NumericalError("q_project: singular Gram matrix");
  return coef;
}

}  // namespace

Eigen::MatrixXd q_project(WeightMethod method, const DrawSet& d, bool within_stratum,
                          const Eigen::VectorXd& alpha_e) {
  d.validate();
  const long n = d.n();
  const int p = static_cast<int>(d.ltilde.cols());
  const int k = static_cast<int>(d.Z.cols());
  if (method == WeightMethod::plain) return Eigen::MatrixXd::Zero(n, p);

  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, p);

  if (!within_stratum) {
    if (method == WeightMethod::e) {
      // Z_e = (stratum indicators, Z); alpha defaults to the Condition 1(e)
      // limit: Ge^{-1}(p_j) on the indicator slots, 0 elsewhere.
      const int de = d.J + k;
      Eigen::VectorXd alpha;
      if (alpha_e.size() == 0) {
        alpha = Eigen::VectorXd::Zero(de);
        LogisticLink link;
        for (int j = 0; j < d.J; ++j) {
          if (d.p[static_cast<size_t>(j)] >= 1.0) continue;  // dropped stratum
          alpha[j] = link.inverse(d.p[static_cast<size_t>(j)]);
        }
      } else if (alpha_e.size() == de) {
        alpha = alpha_e;
      } else {
        throw DataError("q_project: alpha_e has wrong dimension");
      }
      LogisticLink link;
      Eigen::MatrixXd S0 = Eigen::MatrixXd::Zero(de, de);
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, de);
      Eigen::VectorXd ze(de), gdot(n);
      Eigen::MatrixXd Ze(n, de);
      for (long i = 0; i < n; ++i) {
        ze.setZero();
        ze[d.stratum[i] - 1] = 1.0;
        ze.tail(k) = d.Z.row(i).transpose();
        Ze.row(i) = ze.transpose();
        gdot[i] = link.deriv(ze.dot(alpha));
        const double pi = d.pi0[i];
        if (pi >= 1.0) continue;  // (1-pi)^{-1} blows up; stratum is weightless in Sigma
        const double m = d.mass[i];
        S0.noalias() += (m * gdot[i] * gdot[i] / (pi * (1.0 - pi))) * (ze * ze.transpose());
        A.noalias() += (m * gdot[i] / pi) * (d.ltilde.row(i).transpose() * ze.transpose());
      }
      const Eigen::MatrixXd C = gram_solve(S0, A.transpose()).transpose();  // p x de
      for (long i = 0; i < n; ++i) {
        const double pi = d.pi0[i];
        if (pi >= 1.0) continue;
        q.row(i) = (gdot[i] / (1.0 - pi)) * (C * Ze.row(i).transpose()).transpose();
      }
      return q;
    }
    // c / mc / cc share the projection skeleton.
    const bool use_kappa = (method != WeightMethod::c);
    const bool center = (method == WeightMethod::cc);
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(k);
    if (center) {
      if (d.mu_Z.size() == k) {
        mu = d.mu_Z;
      } else if (d.mu_Z.size() == 0) {
        double tot = 0.0;
        for (long i = 0; i < n; ++i) {
          mu += d.mass[i] * d.Z.row(i).transpose();
          tot += d.mass[i];
        }
        mu /= tot;
      } else {
        throw DataError("q_project: mu_Z has wrong dimension");
      }
    }
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(k, k);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(k, p);
    for (long i = 0; i < n; ++i) {
      const double kap = use_kappa ? (1.0 / d.pi0[i] - 1.0) : 1.0;
      const double m = d.mass[i] * kap;
      if (m == 0.0) continue;
      const Eigen::VectorXd b = d.Z.row(i).transpose() - mu;
      gram.noalias() += m * (b * b.transpose());
      cov.noalias() += m * (b * d.ltilde.row(i));
    }
    const Eigen::MatrixXd coef = gram_solve(gram, cov);  // k x p
    for (long i = 0; i < n; ++i)
      q.row(i) = (d.Z.row(i).transpose() - mu).transpose() * coef;
    return q;
  }

  // Within-stratum: conditional projections per stratum. The basis is
  // (1, Z) for e (Ge-dot is constant given the stratum and cancels), raw Z
  // for c and mc, and Z centered at its conditional mean for cc.
  for (int j = 1; j <= d.J; ++j) {
    std::vector<long> idx;
    for (long i = 0; i < n; ++i)
      if (d.stratum[i] == j) idx.push_back(i);
    if (idx.empty()) continue;
    double tot = 0.0;
    for (long i : idx) tot += d.mass[i];
    if (tot <= 0.0) continue;
    const bool intercept = (method == WeightMethod::e);
    const bool center = (method == WeightMethod::cc);
    const int kb = intercept ? k + 1 : k;
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(k);
    if (center) {
      for (long i : idx) mu += d.mass[i] * d.Z.row(i).transpose();
      mu /= tot;
    }
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(kb, kb);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(kb, p);
    Eigen::VectorXd b(kb);
    for (long i : idx) {
      if (intercept) {
        b[0] = 1.0;
        b.tail(k) = d.Z.row(i).transpose();
      } else {
        b = d.Z.row(i).transpose() - mu;
      }
      gram.noalias() += d.mass[i] * (b * b.transpose());
      cov.noalias() += d.mass[i] * (b * d.ltilde.row(i));
    }
    const Eigen::MatrixXd coef = gram_solve(gram, cov);
    for (long i : idx) {
      if (intercept) {
        b[0] = 1.0;
        b.tail(k) = d.Z.row(i).transpose();
      } else {
        b = d.Z.row(i).transpose() - mu;
      }
      q.row(i) = b.transpose() * coef;
    }
  }
  return q;
}

namespace {

struct StratumMoments {
  double mass = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd raw2;
  Eigen::MatrixXd var() const { return raw2 - mean * mean.transpose(); }
};

std::vector<StratumMoments> stratum_moments(const DrawSet& d, const Eigen::MatrixXd& f) {
  const int p = static_cast<int>(f.cols());
  std::vector<StratumMoments> out(static_cast<size_t>(d.J));
  for (auto& s : out) {
    s.mean = Eigen::VectorXd::Zero(p);
    s.raw2 = Eigen::MatrixXd::Zero(p, p);
  }
  for (long i = 0; i < d.n(); ++i) {
    auto& s = out[static_cast<size_t>(d.stratum[i] - 1)];
    s.mass += d.mass[i];
    s.mean.noalias() += d.mass[i] * f.row(i).transpose();
    s.raw2.noalias() += d.mass[i] * (f.row(i).transpose() * f.row(i));
  }
  for (auto& s : out) {
    if (s.mass > 0.0) {
      s.mean /= s.mass;
      s.raw2 /= s.mass;
    }
  }
  return out;
}

}  // namespace

VarianceReport sigma_totals(const DrawSet& d, const std::vector<WeightMethod>& methods,
                            bool within_stratum) {
  d.validate();
  VarianceReport rep;
  rep.p = static_cast<int>(d.ltilde.cols());
  rep.J = d.J;
  rep.n = d.n();
  rep.within_stratum = within_stratum;
  rep.pj = d.p;
  double M = 0.0;
  for (long i = 0; i < d.n(); ++i) M += d.mass[i];
  rep.mass_total = M;

  rep.I0_inv = Eigen::MatrixXd::Zero(rep.p, rep.p);
  for (long i = 0; i < d.n(); ++i)
    rep.I0_inv.noalias() += d.mass[i] * (d.ltilde.row(i).transpose() * d.ltilde.row(i));
  rep.I0_inv /= M;

  const auto plain = stratum_moments(d, d.ltilde);
  for (int j = 0; j < d.J; ++j)
    if (!(plain[static_cast<size_t>(j)].mass > 0.0))
      throw DataError("sigma_totals: empty stratum " + std::to_string(j + 1));
  rep.nu.resize(static_cast<size_t>(d.J));
  for (int j = 0; j < d.J; ++j)
    rep.nu[static_cast<size_t>(j)] =
        d.nu.empty() ? plain[static_cast<size_t>(j)].mass / M : d.nu[static_cast<size_t>(j)];

  auto weight_of = [&](int j) {
    const double pj = d.p[static_cast<size_t>(j)];
    return rep.nu[static_cast<size_t>(j)] * (1.0 - pj) / pj;
  };

  rep.Sigma = rep.I0_inv;
  rep.Sigma_bern = rep.I0_inv;
  for (int j = 0; j < d.J; ++j) {
    rep.cond_mean.push_back(plain[static_cast<size_t>(j)].mean);
    rep.cond_raw2.push_back(plain[static_cast<size_t>(j)].raw2);
    rep.cond_var.push_back(plain[static_cast<size_t>(j)].var());
    rep.Sigma += weight_of(j) * plain[static_cast<size_t>(j)].var();
    rep.Sigma_bern += weight_of(j) * plain[static_cast<size_t>(j)].raw2;
  }

  for (WeightMethod m : methods) {
    if (m == WeightMethod::plain) continue;
    const std::string key = to_string(m);
    const Eigen::MatrixXd q = q_project(m, d, within_stratum);
    const Eigen::MatrixXd resid = d.ltilde - q;
    const auto rm = stratum_moments(d, resid);
    Eigen::MatrixXd S = rep.I0_inv, Sb = rep.I0_inv;
    for (int j = 0; j < d.J; ++j) {
      S += weight_of(j) * rm[static_cast<size_t>(j)].var();
      Sb += weight_of(j) * rm[static_cast<size_t>(j)].raw2;
    }
    rep.Sigma_adj[key] = S;
    rep.Sigma_adj_bern[key] = Sb;

    Eigen::MatrixXd gap = Eigen::MatrixXd::Zero(rep.p, rep.p);
    for (long i = 0; i < d.n(); ++i) {
      const double kap = (1.0 - d.pi0[i]) / d.pi0[i];
      gap.noalias() += (d.mass[i] * kap) * (q.row(i).transpose() * q.row(i));
    }
    rep.bern_gap[key] = gap / M;

    const auto qm = stratum_moments(d, q);
    std::vector<Eigen::MatrixXd> r2, vv;
    for (int j = 0; j < d.J; ++j) {
      r2.push_back(qm[static_cast<size_t>(j)].raw2);
      vv.push_back(qm[static_cast<size_t>(j)].var());
    }
    rep.proj_raw2[key] = r2;
    rep.proj_var[key] = vv;
  }
  return rep;
}

CorollaryResiduals corollary_identities(const DrawSet& draws) {
  const std::vector<WeightMethod> all{WeightMethod::e, WeightMethod::c, WeightMethod::mc,
                                      WeightMethod::cc};
  const VarianceReport rp = sigma_totals(draws, all, false);
  const VarianceReport rw = sigma_totals(draws, all, true);

  CorollaryResiduals out;
  auto weight_of = [&](int j) {
    return rp.nu[static_cast<size_t>(j)] * (1.0 - rp.pj[static_cast<size_t>(j)]) /
           rp.pj[static_cast<size_t>(j)];
  };

  {
    Eigen::MatrixXd rhs = rp.Sigma_bern;
    for (int j = 0; j < rp.J; ++j)
      rhs -= weight_of(j) * (rp.cond_mean[static_cast<size_t>(j)] *
                             rp.cond_mean[static_cast<size_t>(j)].transpose());
    out.cor31 = (rp.Sigma - rhs).lpNorm<Eigen::Infinity>();
  }
  for (const char* key : {"e", "mc", "cc"}) {
    const Eigen::MatrixXd rhs = rp.Sigma_bern - rp.bern_gap.at(key);
    out.cor32[key] = (rp.Sigma_adj_bern.at(key) - rhs).lpNorm<Eigen::Infinity>();
  }
  for (const char* key : {"e", "c", "mc", "cc"}) {
    Eigen::MatrixXd rhs = rp.Sigma_bern;
    for (int j = 0; j < rp.J; ++j)
      rhs -= weight_of(j) * rw.proj_raw2.at(key)[static_cast<size_t>(j)];
    out.cor33_bern[key] = (rw.Sigma_adj_bern.at(key) - rhs).lpNorm<Eigen::Infinity>();
  }
  {
    Eigen::MatrixXd rhs = rp.Sigma;
    for (int j = 0; j < rp.J; ++j) rhs -= weight_of(j) * rw.proj_var.at("cc")[static_cast<size_t>(j)];
    out.cor33_wor_cc = (rw.Sigma_adj.at("cc") - rhs).lpNorm<Eigen::Infinity>();
  }
  out.max_residual = out.cor31;
  for (auto& kv : out.cor32) out.max_residual = std::max(out.max_residual, kv.second);
  for (auto& kv : out.cor33_bern) out.max_residual = std::max(out.max_residual, kv.second);
  out.max_residual = std::max(out.max_residual, out.cor33_wor_cc);
  return out;
}

}  // namespace twophase
