#pragma once
#include <Eigen/Dense>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace twophase {

// Phase-I observables V = (Y, Delta, U).
struct PhaseOneRecord {
  double y = 0.0;
  int delta = 0;
  Eigen::VectorXd u;
  int stratum = 0;  // 1-based index into {1..J}
};

enum class Design { WithoutReplacement, Bernoulli };

// Total, deterministic map V -> {1..J}. Kept as data (not a closure) so that
// configs can round-trip it.
struct StratumRule {
  enum class Kind { UCut, DeltaByU };
  Kind kind = Kind::UCut;
  std::vector<double> cuts;  // ascending thresholds on u[component]
  int component = 0;

  int strata() const;
  int operator()(const PhaseOneRecord& rec) const;
};

struct DesignSpec {
  int J = 1;
  StratumRule stratum_rule;
  std::vector<double> p;  // target sampling fractions p_j in (0, 1]
  Design design = Design::WithoutReplacement;
  double p_floor = 1e-3;  // sigma: every p_j >= sigma > 0

  void validate() const;
};

// Phase-I records plus phase-II selection; x_i accessible iff xi_i = 1.
struct TwoPhaseSample {
  std::vector<PhaseOneRecord> records;
  std::vector<std::uint8_t> xi;
  std::vector<Eigen::VectorXd> x;  // empty vector where xi = 0
  Design design = Design::WithoutReplacement;
  int J = 0;
  std::vector<long> Nj, nj;  // index j-1
  std::vector<double> p;     // design fractions

  long N() const { return static_cast<long>(records.size()); }
  // pi0 is a function of the stratum: n_j/N_j under WOR, design p_j under
  // Bernoulli (realized fractions would turn Bernoulli into
  // post-stratification and change the asymptotics).
  double pi0_stratum(int j) const;
  double pi0(int i) const { return pi0_stratum(records[static_cast<std::size_t>(i)].stratum); }
  const Eigen::VectorXd& x_of(int i) const;
  void validate() const;
};

// Z_i = g(V_i), optionally expanded with stratum indicators (estimated
// weights) or into per-stratum blocks (within-stratum adjustment). Entries are
// clamped to a box to honor the bounded-support condition on arbitrary data;
// clamp events are counted so callers can warn.
struct AuxiliaryMap {
  enum class Mode { Pooled, WithinStratum };

  std::function<Eigen::VectorXd(const PhaseOneRecord&)> builder;
  int k = 0;  // declared builder output dimension
  Mode mode = Mode::Pooled;
  // Pooled: prepend the J stratum indicator columns (required for estimated
  // weights). WithinStratum: include an intercept in each block (the blocks'
  // intercepts are the stratum indicators).
  bool include_stratum_indicators = false;
  int J = 1;
  double clamp_abs = 1e6;
  std::shared_ptr<std::atomic<long>> clamped = std::make_shared<std::atomic<long>>(0);

  int out_dim() const;
  Eigen::VectorXd build(const PhaseOneRecord& rec) const;
  // Raw builder output (clamped, no indicator/block expansion): the base Z
  // the asymptotic Q operators act on.
  Eigen::VectorXd base(const PhaseOneRecord& rec) const;
};

Eigen::VectorXd build_auxiliary(const AuxiliaryMap& map, const PhaseOneRecord& rec);

// Convenience: Z = selected u components, optional intercept inside the
// builder output.
AuxiliaryMap make_u_auxiliary(std::vector<int> u_indices, bool intercept, AuxiliaryMap::Mode mode,
                              int J, bool include_stratum_indicators = false);

}  // namespace twophase
