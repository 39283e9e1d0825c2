// twophase: two-phase sampling estimation CLI.
//
// Subcommands: simulate-design, calibrate, fit-right, fit-interval, variance,
// mc run / mc check. Exit codes: 2 usage, 3 data, 4 numerical failure.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "twophase/asymptotics.hpp"
#include "twophase/cox_interval.hpp"
#include "twophase/cox_right.hpp"
#include "twophase/csv.hpp"
#include "twophase/data.hpp"
#include "twophase/dgp.hpp"
#include "twophase/errors.hpp"
#include "twophase/glink.hpp"
#include "twophase/mc.hpp"
#include "twophase/sampling.hpp"
#include "twophase/weights.hpp"

namespace {

using namespace twophase;

void emit(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    if (!content.empty() && content.back() != '\n') std::cout << '\n';
  } else {
    write_file_atomic(path, content);
  }
}

Design parse_design(const std::string& s) {
  if (s == "wor") return Design::WithoutReplacement;
  if (s == "bernoulli") return Design::Bernoulli;
  throw UsageError("unknown design '" + s + "' (wor | bernoulli)");
}

int threads_or_env(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("TWOPHASE_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  return 1;
}

std::vector<double> json_vec(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

nlohmann::json json_mat(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (long i = 0; i < m.rows(); ++i) {
    nlohmann::json r = nlohmann::json::array();
    for (long j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

nlohmann::json weight_diag_json(const WeightSet& ws) {
  nlohmann::json j;
  j["method"] = to_string(ws.method);
  j["alpha_hat"] = json_vec(ws.alpha_hat);
  j["iterations"] = ws.iterations;
  j["residual"] = ws.residual;
  j["degenerate_gram"] = ws.degenerate_gram;
  j["dropped_strata"] = ws.dropped_strata;
  return j;
}

struct CommonFitArgs {
  std::string input, output;
  std::string weights = "plain";
  bool within_stratum = false;
  std::string g_family = "trunclinear";
  std::string design = "wor";
  std::vector<double> p_bern;
  std::uint64_t seed = 0;  // accepted everywhere; fitting itself is deterministic
};

void add_fit_flags(CLI::App* cmd, CommonFitArgs& a) {
  cmd->add_option("--input", a.input, "two-phase CSV input")->required();
  cmd->add_option("--output", a.output, "output path (stdout if omitted)");
  cmd->add_option("--seed", a.seed, "rng seed (no-op for deterministic fits)");
  cmd->add_option("--weights", a.weights, "plain | e | c | mc | cc");
  cmd->add_flag("--within-stratum", a.within_stratum, "per-stratum adjustment");
  cmd->add_option("--g-family", a.g_family, "trunclinear | scaledlogit");
  cmd->add_option("--design", a.design, "wor | bernoulli");
  cmd->add_option("--p", a.p_bern, "stratum sampling fractions (bernoulli input)")
      ->delimiter(',');
}

struct LoadedSample {
  TwoPhaseSample sample;
  AuxiliaryMap aux;
  WeightSet ws;
};

LoadedSample load_and_weight(const CommonFitArgs& a) {
  LoadedSample out;
  std::istringstream is(read_file(a.input));
  out.sample = sample_from_csv(is, parse_design(a.design), a.p_bern.empty() ? nullptr : &a.p_bern);
  const WeightMethod m = weight_method_from_string(a.weights);
  std::vector<int> uidx;
  for (int k = 0; k < out.sample.records[0].u.size(); ++k) uidx.push_back(k);
  out.aux = make_u_auxiliary(uidx, false,
                             a.within_stratum ? AuxiliaryMap::Mode::WithinStratum
                                              : AuxiliaryMap::Mode::Pooled,
                             out.sample.J, m == WeightMethod::e);
  const GFunction G(g_family_from_string(a.g_family));
  out.ws = make_weights(m, a.within_stratum, out.sample, &out.aux, &G);
  return out;
}

int cmd_simulate(const std::string& model, long n, std::uint64_t seed, const std::string& design,
                 const std::vector<double>& cuts, const std::vector<double>& p, double theta0,
                 const std::string& output) {
  DesignSpec spec;
  spec.J = static_cast<int>(cuts.size()) + 1;
  spec.stratum_rule.kind = StratumRule::Kind::UCut;
  spec.stratum_rule.cuts = cuts;
  spec.p = p;
  spec.design = parse_design(design);
  spec.validate();

  RngStream rng(seed);
  std::vector<PhaseOneRecord> recs;
  std::vector<Eigen::VectorXd> xs;
  RngStream pop = rng.child(0);
  if (model == "cox_right") {
    CoxRightDgp d;
    d.theta0 = Eigen::VectorXd::Constant(1, theta0);
    d.generate(n, pop, recs, xs);
  } else if (model == "cox_interval") {
    CoxIntervalDgp d;
    d.theta0 = Eigen::VectorXd::Constant(1, theta0);
    d.generate(n, pop, recs, xs);
  } else if (model == "mean_toy") {
    MeanToyDgp d;
    d.generate(n, pop, recs, xs);
  } else {
    throw UsageError("unknown model '" + model + "'");
  }
  stratify(recs, spec);
  const TwoPhaseSample s = make_two_phase_sample(std::move(recs), xs, spec, rng.child(1));
  emit(output, sample_to_csv(s));
  return 0;
}

int cmd_calibrate(const CommonFitArgs& a) {
  const LoadedSample L = load_and_weight(a);
  emit(a.output, weights_to_csv(L.sample, L.ws));
  // diagnostics block on stdout (kept apart from the CSV payload)
  std::cout << weight_diag_json(L.ws).dump(2) << '\n';
  return 0;
}

int cmd_fit_right(const CommonFitArgs& a) {
  const LoadedSample L = load_and_weight(a);
  const CoxRightFit fit = fit_cox_right(L.sample, L.ws);
  const VarianceRightResult vr =
      variance_right(fit, L.sample, L.ws, &L.aux, a.within_stratum);
  nlohmann::json j;
  j["theta_hat"] = json_vec(fit.theta_hat);
  Eigen::VectorXd se(fit.theta_hat.size());
  for (long k = 0; k < se.size(); ++k)
    se[k] = std::sqrt(vr.sigma_hat(k, k) / static_cast<double>(L.sample.N()));
  j["se"] = json_vec(se);
  j["loglik"] = fit.loglik;
  j["iterations"] = fit.iterations;
  j["lambda_hat"] = {{"jumps", fit.lambda_hat.jumps()}, {"values", fit.lambda_hat.values()}};
  j["I_hat"] = json_mat(vr.I_hat);
  j["sigma_hat"] = json_mat(vr.sigma_hat);
  nlohmann::json strata = nlohmann::json::array();
  for (const auto& s : vr.strata) {
    nlohmann::json e;
    e["stratum"] = s.stratum;
    e["nu_hat"] = s.nu_hat;
    e["p_j"] = s.p_j;
    e["cond_mean"] = json_vec(s.cond_mean);
    e["cond_raw2"] = json_mat(s.cond_raw2);
    strata.push_back(e);
  }
  j["strata"] = strata;
  j["weights"] = weight_diag_json(L.ws);
  emit(a.output, j.dump(2) + "\n");
  return 0;
}

int cmd_fit_interval(const CommonFitArgs& a, double theta_lo, double theta_hi) {
  const LoadedSample L = load_and_weight(a);
  IntervalFitOptions opt;
  opt.theta_lo = theta_lo;
  opt.theta_hi = theta_hi;
  const CoxIntervalFit fit = fit_cox_interval(L.sample, L.ws, opt);
  nlohmann::json j;
  j["theta_hat"] = json_vec(fit.theta_hat);
  j["objective"] = fit.objective;
  j["profile_evals"] = fit.profile_evals;
  j["icm_sweeps"] = fit.icm_sweeps;
  j["boundary"] = fit.boundary;
  j["non_identifiable"] = fit.non_identifiable;
  j["lambda_hat"] = {{"jumps", fit.lambda_hat.jumps()}, {"values", fit.lambda_hat.values()}};
  j["weights"] = weight_diag_json(L.ws);
  emit(a.output, j.dump(2) + "\n");
  return 0;
}

int cmd_variance(const std::string& input, const std::string& output, const std::string& method,
                 bool within_stratum, const std::string& design) {
  std::istringstream is(read_file(input));
  DrawSet draws = draws_from_csv(is);
  const WeightMethod m = weight_method_from_string(method);
  const VarianceReport rep = sigma_totals(draws, {m}, within_stratum);
  const bool wor = parse_design(design) == Design::WithoutReplacement;
  nlohmann::json j;
  j["n"] = rep.n;
  j["p"] = rep.p;
  j["J"] = rep.J;
  j["design"] = design;
  j["method"] = to_string(m);
  j["within_stratum"] = within_stratum;
  j["nu"] = rep.nu;
  j["p_j"] = rep.pj;
  j["I0_inv"] = json_mat(rep.I0_inv);
  j["sigma_plain"] = json_mat(wor ? rep.Sigma : rep.Sigma_bern);
  j["sigma_plain_wor"] = json_mat(rep.Sigma);
  j["sigma_plain_bern"] = json_mat(rep.Sigma_bern);
  const std::string mkey = to_string(m);
  if (m != WeightMethod::plain) {
    j["sigma_adj"] = json_mat(wor ? rep.Sigma_adj.at(mkey) : rep.Sigma_adj_bern.at(mkey));
    j["sigma_adj_wor"] = json_mat(rep.Sigma_adj.at(mkey));
    j["sigma_adj_bern"] = json_mat(rep.Sigma_adj_bern.at(mkey));
    if (rep.bern_gap.count(mkey)) j["bern_gap"] = json_mat(rep.bern_gap.at(mkey));
  }
  nlohmann::json strata = nlohmann::json::array();
  for (int s = 0; s < rep.J; ++s) {
    nlohmann::json e;
    e["stratum"] = s + 1;
    e["nu"] = rep.nu[static_cast<size_t>(s)];
    e["p_j"] = rep.pj[static_cast<size_t>(s)];
    e["cond_mean"] = json_vec(rep.cond_mean[static_cast<size_t>(s)]);
    e["cond_var"] = json_mat(rep.cond_var[static_cast<size_t>(s)]);
    e["cond_raw2"] = json_mat(rep.cond_raw2[static_cast<size_t>(s)]);
    strata.push_back(e);
  }
  j["strata"] = strata;
  emit(output, j.dump(2) + "\n");
  return 0;
}

int cmd_mc_run(const std::string& config_path, const std::string& output,
               const std::string& csv_path, int threads_flag) {
  nlohmann::json cj;
  try {
    cj = nlohmann::json::parse(read_file(config_path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("config parse: ") + e.what());
  }
  McConfig cfg = McConfig::from_json(cj);
  cfg.threads = threads_or_env(threads_flag > 0 ? threads_flag : cfg.threads);
  const McReport report = run_experiment(cfg);
  emit(output, report.to_json().dump(2) + "\n");
  if (!csv_path.empty()) write_file_atomic(csv_path, report.per_rep_csv());
  return 0;
}

int cmd_mc_check(const std::string& report_path) {
  nlohmann::json rj;
  try {
    rj = nlohmann::json::parse(read_file(report_path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report parse: ") + e.what());
  }
  McReport report = McReport::from_json(rj);
  append_checks(report);  // re-evaluate; never trust stored pass flags
  bool all = true;
  for (const auto& c : report.checks) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " value=" << c.value << " bounds=["
              << c.lo << ", " << c.hi << "]\n";
    all = all && c.pass;
  }
  if (report.checks.empty()) {
    std::cout << "FAIL no checks evaluated\n";
    return 1;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weighted likelihood estimation under two-phase sampling"};
  app.require_subcommand(1);

  // simulate-design
  auto* sim = app.add_subcommand("simulate-design", "generate a two-phase sample as CSV");
  std::string sim_model = "cox_right", sim_design = "wor", sim_output;
  long sim_n = 1000;
  std::uint64_t sim_seed = 1;
  double sim_theta0 = 0.7;
  std::vector<double> sim_cuts{0.3}, sim_p{0.8, 0.25};
  sim->add_option("--model", sim_model, "cox_right | cox_interval | mean_toy");
  sim->add_option("--n", sim_n, "population size")->check(CLI::PositiveNumber);
  sim->add_option("--seed", sim_seed, "master seed");
  sim->add_option("--design", sim_design, "wor | bernoulli");
  sim->add_option("--cuts", sim_cuts, "stratum cut points on u_1")->delimiter(',');
  sim->add_option("--p", sim_p, "stratum sampling fractions")->delimiter(',');
  sim->add_option("--theta0", sim_theta0, "true regression coefficient");
  sim->add_option("--output", sim_output, "output path (stdout if omitted)");

  // calibrate / fit-right / fit-interval share flags
  CommonFitArgs cal_args, right_args, int_args;
  auto* cal = app.add_subcommand("calibrate", "fit adjusted weights, write weights CSV");
  add_fit_flags(cal, cal_args);
  auto* fitr = app.add_subcommand("fit-right", "weighted Cox fit under right censoring");
  add_fit_flags(fitr, right_args);
  auto* fiti = app.add_subcommand("fit-interval", "weighted Cox fit under interval censoring");
  add_fit_flags(fiti, int_args);
  double int_theta_lo = -4.0, int_theta_hi = 4.0;
  fiti->add_option("--theta-lo", int_theta_lo, "profile box lower edge");
  fiti->add_option("--theta-hi", int_theta_hi, "profile box upper edge");

  // variance
  auto* var = app.add_subcommand("variance", "evaluate variance formulas on a draw set");
  std::string var_input, var_output, var_method = "plain", var_design = "wor";
  bool var_ws = false;
  var->add_option("--input", var_input, "draws CSV")->required();
  var->add_option("--output", var_output, "output path (stdout if omitted)");
  var->add_option("--method", var_method, "plain | e | c | mc | cc");
  var->add_flag("--within-stratum", var_ws, "per-stratum adjustment");
  var->add_option("--design", var_design, "wor | bernoulli");

  // mc run / mc check
  auto* mc = app.add_subcommand("mc", "Monte Carlo harness");
  mc->require_subcommand(1);
  auto* mcr = mc->add_subcommand("run", "run an experiment from a JSON config");
  std::string mc_config, mc_output, mc_csv;
  int mc_threads = 0;
  mcr->add_option("config", mc_config, "config JSON path")->required();
  mcr->add_option("--output", mc_output, "report JSON path (stdout if omitted)");
  mcr->add_option("--csv", mc_csv, "per-replication long CSV path");
  mcr->add_option("--threads", mc_threads, "worker threads (TWOPHASE_THREADS fallback)");
  auto* mcc = mc->add_subcommand("check", "evaluate acceptance thresholds on a report");
  std::string mc_report;
  mcc->add_option("report", mc_report, "report JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (sim->parsed())
      return cmd_simulate(sim_model, sim_n, sim_seed, sim_design, sim_cuts, sim_p, sim_theta0,
                          sim_output);
    if (cal->parsed()) return cmd_calibrate(cal_args);
    if (fitr->parsed()) return cmd_fit_right(right_args);
    if (fiti->parsed()) return cmd_fit_interval(int_args, int_theta_lo, int_theta_hi);
    if (var->parsed()) return cmd_variance(var_input, var_output, var_method, var_ws, var_design);
    if (mc->parsed()) {
      if (mcr->parsed()) return cmd_mc_run(mc_config, mc_output, mc_csv, mc_threads);
      if (mcc->parsed()) return cmd_mc_check(mc_report);
    }
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
}
