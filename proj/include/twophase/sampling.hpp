#pragma once
#include <functional>
#include <vector>

#include "twophase/data.hpp"
#include "twophase/rng.hpp"

namespace twophase {

// Real-valued f(x, v); x is empty for records where it is not needed/defined.
using SampleFn = std::function<double(const Eigen::VectorXd& x, const PhaseOneRecord& v)>;

// Assigns rec.stratum = rule(v) for every record and returns counts N_j.
// Errors on an empty stratum (downstream estimators need nu_j > 0).
std::vector<long> stratify(std::vector<PhaseOneRecord>& records, const DesignSpec& spec);

struct Phase2Draw {
  std::vector<std::uint8_t> xi;
  std::vector<long> nj;
};

// WOR: exactly floor(N_j p_j) ones per stratum via partial Fisher-Yates;
// Bernoulli: iid selections with probability p_j. One derived RNG stream per
// stratum so draws are independent of iteration order elsewhere.
Phase2Draw draw_phase2(const std::vector<PhaseOneRecord>& records, const std::vector<long>& Nj,
                       const DesignSpec& spec, RngStream rng);

// Assembles a TwoPhaseSample from complete data (simulation path): records
// must already be stratified; x kept only where selected.
TwoPhaseSample make_two_phase_sample(std::vector<PhaseOneRecord> records,
                                     const std::vector<Eigen::VectorXd>& x_complete,
                                     const DesignSpec& spec, RngStream rng);

// IPW empirical measure: (1/N) sum_i xi_i f(X_i, V_i) / pi0(V_i), accumulated
// per stratum so that constants are exact under WOR (n_j * (N_j/n_j) would
// not round-trip; (sum * N_j) / n_j does).
double ipw_mean(const TwoPhaseSample& sample, const SampleFn& f);

struct IpwProcessResult {
  double total = 0.0;  // sqrt(N) (P_N^pi f - P_0 f)
  bool has_split = false;
  double phase1 = 0.0;                // sqrt(N) (P_N f - P_0 f)
  std::vector<double> stratum_terms;  // sqrt(N_j/N) pi0j^{-1} G^xi_{j,N_j} f
};

// Decomposition (2.1); the split needs complete-data X (simulation mode).
IpwProcessResult ipw_process(const TwoPhaseSample& sample, const SampleFn& f, double P0f,
                             bool want_split = false,
                             const std::vector<Eigen::VectorXd>* x_complete = nullptr);

}  // namespace twophase
