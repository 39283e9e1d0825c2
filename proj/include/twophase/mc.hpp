#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twophase/weights.hpp"

namespace twophase {

struct McMethodSpec {
  WeightMethod method = WeightMethod::plain;
  bool within_stratum = false;
  std::string key() const { return to_string(method) + (within_stratum ? "+ws" : ""); }
};

struct McConfig {
  int schema_version = 1;
  std::string model = "cox_right";  // cox_right | cox_interval | mean_toy
  std::uint64_t seed = 1;
  int R = 100;
  std::vector<long> N_grid{500, 2000, 4000};
  int threads = 1;

  // dgp
  double theta0 = 0.7;
  double x_lo = -1.0, x_hi = 1.0;
  double sigma_u = 0.5;
  double lambda0_rate = 1.0;
  double cens_rate = 0.3;   // cox_right
  double tau = 1.5;         // cox_right
  double y_lo = 0.3, y_hi = 1.3;   // cox_interval

  // design (U-cut strata on u_1)
  std::vector<double> cuts{0.3};
  std::vector<double> p{0.8, 0.25};
  bool run_wor = true;
  bool run_bernoulli = false;
  std::vector<McMethodSpec> methods{{WeightMethod::plain, false}};
  std::string g_family = "trunclinear";
  double theta_lo = -4.0, theta_hi = 4.0;

  void validate() const;
  nlohmann::json to_json() const;
  static McConfig from_json(const nlohmann::json& j);  // rejects unknown fields
};

struct McRep {
  int rep = -1;
  bool ok = false;
  std::string fail_reason;
  Eigen::VectorXd theta_hat;
  Eigen::MatrixXd sigma_hat;   // empty when not produced
  double dlam = 0.0;           // interval model only
  double influence = 0.0;      // oracle P^pi l-tilde (first component)
};

struct McCellSummary {
  int n_ok = 0, n_fail = 0;
  double mean_err = 0.0;        // mean sqrt(N)(theta_1 - theta0)
  double var_err = 0.0;         // empirical variance of the above
  double mean_sigma = 0.0;      // mean plug-in Sigma_11
  double coverage = -1.0;       // 95% Wald, component 1
  double median_dlam = -1.0;
  double influence_corr = -2.0;
};

struct McCell {
  std::string design;  // "wor" | "bernoulli"
  std::string method;  // McMethodSpec::key()
  long N = 0;
  std::vector<McRep> reps;
  McCellSummary summary;
};

struct McCheck {
  std::string name;
  double value = 0.0, lo = 0.0, hi = 0.0;
  bool pass = false;
};

struct McReport {
  McConfig config;
  std::vector<McCell> cells;
  double oracle_sigma_wor = -1.0;   // scalar models; -1 when not available
  double oracle_sigma_bern = -1.0;
  std::vector<McCheck> checks;

  const McCell* find(const std::string& design, const std::string& method, long N) const;
  nlohmann::json to_json() const;
  static McReport from_json(const nlohmann::json& j);
  std::string per_rep_csv() const;
};

McReport run_experiment(const McConfig& config);

struct RateSummary {
  long n_lo = 0, n_hi = 0;
  double theta_sd_ratio = 0.0;  // sd at n_lo / sd at n_hi
  double dlam_ratio = 0.0;      // median d at n_lo / median d at n_hi (interval)
};

// Ratios between the smallest and largest N (requires N_hi/N_lo >= 4).
RateSummary check_rates(const McReport& report, const std::string& design,
                        const std::string& method);

// Evaluate the model-appropriate acceptance thresholds into report.checks.
void append_checks(McReport& report);

}  // namespace twophase
