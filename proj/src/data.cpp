#include "twophase/data.hpp"

#include <algorithm>
#include <string>

#include "twophase/errors.hpp"

namespace twophase {

int StratumRule::strata() const {
  int base = static_cast<int>(cuts.size()) + 1;
  return kind == Kind::DeltaByU ? 2 * base : base;
}

int StratumRule::operator()(const PhaseOneRecord& rec) const {
  if (component < 0 || component >= rec.u.size())
    throw DataError("StratumRule: u component out of range");
  double u = rec.u[component];
  int idx = 0;
  for (double c : cuts) idx += (u > c) ? 1 : 0;
  if (kind == Kind::DeltaByU) {
    int base = static_cast<int>(cuts.size()) + 1;
    return rec.delta * base + idx + 1;
  }
  return idx + 1;
}

void DesignSpec::validate() const {
  if (J < 1) throw UsageError("DesignSpec: J must be >= 1");
  if (static_cast<int>(p.size()) != J) throw UsageError("DesignSpec: p must have length J");
  if (!(p_floor > 0.0)) throw UsageError("DesignSpec: sampling-fraction floor must be positive");
  for (double pj : p) {
    if (!(pj >= p_floor && pj <= 1.0))
      throw UsageError("DesignSpec: every p_j must lie in [floor, 1]");
  }
  if (stratum_rule.strata() != J) throw UsageError("DesignSpec: stratum rule emits wrong J");
}

double TwoPhaseSample::pi0_stratum(int j) const {
  if (j < 1 || j > J) throw DataError("pi0: stratum index out of range");
  if (design == Design::Bernoulli) return p[static_cast<std::size_t>(j - 1)];
  long num = nj[static_cast<std::size_t>(j - 1)];
  long den = Nj[static_cast<std::size_t>(j - 1)];
  if (num <= 0) throw DataError("pi0: empty phase-II stratum (n_j = 0)");
  return static_cast<double>(num) / static_cast<double>(den);
}

const Eigen::VectorXd& TwoPhaseSample::x_of(int i) const {
  if (!xi[static_cast<std::size_t>(i)])
    throw DataError("x requested for unselected record " + std::to_string(i));
  return x[static_cast<std::size_t>(i)];
}

void TwoPhaseSample::validate() const {
  const std::size_t n = records.size();
  if (xi.size() != n || x.size() != n) throw DataError("TwoPhaseSample: ragged columns");
  if (static_cast<int>(Nj.size()) != J || static_cast<int>(nj.size()) != J ||
      static_cast<int>(p.size()) != J)
    throw DataError("TwoPhaseSample: per-stratum arrays must have length J");
  std::vector<long> cntN(static_cast<std::size_t>(J), 0), cntn(static_cast<std::size_t>(J), 0);
  for (std::size_t i = 0; i < n; ++i) {
    int j = records[i].stratum;
    if (j < 1 || j > J) throw DataError("TwoPhaseSample: stratum label out of range");
    if (xi[i] != 0 && xi[i] != 1) throw DataError("TwoPhaseSample: xi must be 0/1");
    ++cntN[static_cast<std::size_t>(j - 1)];
    if (xi[i]) {
      ++cntn[static_cast<std::size_t>(j - 1)];
      if (x[i].size() == 0) throw DataError("TwoPhaseSample: selected record lacks x");
    }
  }
  long total = 0;
  for (int j = 0; j < J; ++j) {
    if (cntN[static_cast<std::size_t>(j)] != Nj[static_cast<std::size_t>(j)])
      throw DataError("TwoPhaseSample: N_j inconsistent with records");
    if (cntn[static_cast<std::size_t>(j)] != nj[static_cast<std::size_t>(j)])
      throw DataError("TwoPhaseSample: n_j inconsistent with xi");
    if (design == Design::WithoutReplacement && Nj[static_cast<std::size_t>(j)] > 0 &&
        nj[static_cast<std::size_t>(j)] <= 0)
      throw DataError("TwoPhaseSample: empty phase-II stratum under WOR");
    total += Nj[static_cast<std::size_t>(j)];
  }
  if (total != N()) throw DataError("TwoPhaseSample: sum N_j != N");
}

int AuxiliaryMap::out_dim() const {
  if (mode == Mode::Pooled) return include_stratum_indicators ? J + k : k;
  return J * (include_stratum_indicators ? k + 1 : k);
}

Eigen::VectorXd AuxiliaryMap::base(const PhaseOneRecord& rec) const {
  Eigen::VectorXd z = builder(rec);
  if (z.size() != k) throw DataError("AuxiliaryMap: builder output dimension != declared k");
  for (int i = 0; i < z.size(); ++i) {
    if (z[i] > clamp_abs) {
      z[i] = clamp_abs;
      ++*clamped;
    } else if (z[i] < -clamp_abs) {
      z[i] = -clamp_abs;
      ++*clamped;
    }
  }
  return z;
}

Eigen::VectorXd AuxiliaryMap::build(const PhaseOneRecord& rec) const {
  Eigen::VectorXd z = base(rec);
  int j = rec.stratum;
  if (j < 1 || j > J) throw DataError("AuxiliaryMap: record stratum out of range");
  if (mode == Mode::Pooled) {
    if (!include_stratum_indicators) return z;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(J + k);
    out[j - 1] = 1.0;
    out.tail(k) = z;
    return out;
  }
  const int bs = include_stratum_indicators ? k + 1 : k;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(J) * bs);
  Eigen::Index off = static_cast<Eigen::Index>(j - 1) * bs;
  if (include_stratum_indicators) {
    out[off] = 1.0;
    out.segment(off + 1, k) = z;
  } else {
    out.segment(off, k) = z;
  }
  return out;
}

Eigen::VectorXd build_auxiliary(const AuxiliaryMap& map, const PhaseOneRecord& rec) {
  return map.build(rec);
}

AuxiliaryMap make_u_auxiliary(std::vector<int> u_indices, bool intercept, AuxiliaryMap::Mode mode,
                              int J, bool include_stratum_indicators) {
  AuxiliaryMap m;
  m.mode = mode;
  m.J = J;
  m.include_stratum_indicators = include_stratum_indicators;
  m.k = static_cast<int>(u_indices.size()) + (intercept ? 1 : 0);
  m.builder = [u_indices, intercept](const PhaseOneRecord& rec) {
    Eigen::VectorXd z(static_cast<Eigen::Index>(u_indices.size()) + (intercept ? 1 : 0));
    Eigen::Index at = 0;
    if (intercept) z[at++] = 1.0;
    for (int idx : u_indices) {
      if (idx < 0 || idx >= rec.u.size()) throw DataError("auxiliary: u index out of range");
      z[at++] = rec.u[idx];
    }
    return z;
  };
  return m;
}

}  // namespace twophase
