#include "twophase/mc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <sstream>
#include <thread>

#include "twophase/asymptotics.hpp"
#include "twophase/cox_interval.hpp"
#include "twophase/cox_right.hpp"
#include "twophase/dgp.hpp"
#include "twophase/errors.hpp"
#include "twophase/sampling.hpp"

namespace twophase {

void McConfig::validate() const {
  if (schema_version != 1) throw DataError("mc config: unsupported schema_version");
  if (model != "cox_right" && model != "cox_interval" && model != "mean_toy")
    throw DataError("mc config: unknown model '" + model + "'");
  if (R < 1) throw DataError("mc config: R >= 1 required");
  if (N_grid.empty()) throw DataError("mc config: empty N grid");
  for (size_t i = 0; i < N_grid.size(); ++i) {
    if (N_grid[i] < 10) throw DataError("mc config: N too small");
    if (i > 0 && N_grid[i] <= N_grid[i - 1])
      throw DataError("mc config: N grid must be strictly increasing");
  }
  if (!(theta_lo < theta0 && theta0 < theta_hi))
    throw DataError("mc config: theta0 must be interior to the theta box");
  if (p.size() != cuts.size() + 1) throw DataError("mc config: p must have cuts+1 entries");
  for (double pj : p)
    if (!(pj > 0.0 && pj <= 1.0)) throw DataError("mc config: p_j outside (0,1]");
  for (size_t c = 1; c < cuts.size(); ++c)
    if (!(cuts[c] > cuts[c - 1])) throw DataError("mc config: cuts must be ascending");
  if (!run_wor && !run_bernoulli) throw DataError("mc config: no design enabled");
  if (methods.empty()) throw DataError("mc config: no methods requested");
  if (threads < 1) throw DataError("mc config: threads >= 1 required");
  g_family_from_string(g_family);  // throws on junk
}

namespace {

std::string method_key_parse_check(const std::string& s, McMethodSpec& out) {
  std::string base = s;
  out.within_stratum = false;
  const auto pos = s.find("+ws");
  if (pos != std::string::npos) {
    if (pos + 3 != s.size()) return "bad method key '" + s + "'";
    base = s.substr(0, pos);
    out.within_stratum = true;
  }
  try {
    out.method = weight_method_from_string(base);
  } catch (const UsageError&) {
    return "bad method key '" + s + "'";
  }
  return "";
}

}  // namespace

nlohmann::json McConfig::to_json() const {
  nlohmann::json j;
  j["schema_version"] = schema_version;
  j["model"] = model;
  j["seed"] = seed;
  j["R"] = R;
  j["N_grid"] = N_grid;
  j["threads"] = threads;
  j["theta0"] = theta0;
  j["x_lo"] = x_lo;
  j["x_hi"] = x_hi;
  j["sigma_u"] = sigma_u;
  j["lambda0_rate"] = lambda0_rate;
  j["cens_rate"] = cens_rate;
  j["tau"] = tau;
  j["y_lo"] = y_lo;
  j["y_hi"] = y_hi;
  j["cuts"] = cuts;
  j["p"] = p;
  j["run_wor"] = run_wor;
  j["run_bernoulli"] = run_bernoulli;
  std::vector<std::string> ms;
  for (const auto& m : methods) ms.push_back(m.key());
  j["methods"] = ms;
  j["g_family"] = g_family;
  j["theta_lo"] = theta_lo;
  j["theta_hi"] = theta_hi;
  return j;
}

McConfig McConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{
      "schema_version", "model", "seed", "R", "N_grid", "threads", "theta0", "x_lo", "x_hi",
      "sigma_u", "lambda0_rate", "cens_rate", "tau", "y_lo", "y_hi", "cuts", "p",
      "run_wor", "run_bernoulli", "methods", "g_family", "theta_lo", "theta_hi"};
  if (!j.is_object()) throw DataError("mc config: JSON object expected");
  for (const auto& item : j.items())
    if (!known.count(item.key())) throw DataError("mc config: unknown field '" + item.key() + "'");
  if (!j.contains("schema_version")) throw DataError("mc config: schema_version missing");
  McConfig c;
  try {
    c.schema_version = j.at("schema_version").get<int>();
    if (j.contains("model")) c.model = j.at("model").get<std::string>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("R")) c.R = j.at("R").get<int>();
    if (j.contains("N_grid")) c.N_grid = j.at("N_grid").get<std::vector<long>>();
    if (j.contains("threads")) c.threads = j.at("threads").get<int>();
    if (j.contains("theta0")) c.theta0 = j.at("theta0").get<double>();
    if (j.contains("x_lo")) c.x_lo = j.at("x_lo").get<double>();
    if (j.contains("x_hi")) c.x_hi = j.at("x_hi").get<double>();
    if (j.contains("sigma_u")) c.sigma_u = j.at("sigma_u").get<double>();
    if (j.contains("lambda0_rate")) c.lambda0_rate = j.at("lambda0_rate").get<double>();
    if (j.contains("cens_rate")) c.cens_rate = j.at("cens_rate").get<double>();
    if (j.contains("tau")) c.tau = j.at("tau").get<double>();
    if (j.contains("y_lo")) c.y_lo = j.at("y_lo").get<double>();
    if (j.contains("y_hi")) c.y_hi = j.at("y_hi").get<double>();
    if (j.contains("cuts")) c.cuts = j.at("cuts").get<std::vector<double>>();
    if (j.contains("p")) c.p = j.at("p").get<std::vector<double>>();
    if (j.contains("run_wor")) c.run_wor = j.at("run_wor").get<bool>();
    if (j.contains("run_bernoulli")) c.run_bernoulli = j.at("run_bernoulli").get<bool>();
    if (j.contains("g_family")) c.g_family = j.at("g_family").get<std::string>();
    if (j.contains("theta_lo")) c.theta_lo = j.at("theta_lo").get<double>();
    if (j.contains("theta_hi")) c.theta_hi = j.at("theta_hi").get<double>();
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& s : j.at("methods").get<std::vector<std::string>>()) {
        McMethodSpec spec;
        const std::string err = method_key_parse_check(s, spec);
        if (!err.empty()) throw DataError("mc config: " + err);
        c.methods.push_back(spec);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("mc config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

// The toy model's true mean is fixed by its covariate law, not by theta0.
double model_theta0(const McConfig& cfg) {
  if (cfg.model == "mean_toy") return 0.5 * (cfg.x_lo + cfg.x_hi);
  return cfg.theta0;
}

nlohmann::json rep_to_json(const McRep& r) {
  nlohmann::json j;
  j["rep"] = r.rep;
  j["ok"] = r.ok;
  if (!r.fail_reason.empty()) j["fail_reason"] = r.fail_reason;
  std::vector<double> th(r.theta_hat.data(), r.theta_hat.data() + r.theta_hat.size());
  j["theta_hat"] = th;
  if (r.sigma_hat.size() > 0) {
    std::vector<double> sg(r.sigma_hat.data(), r.sigma_hat.data() + r.sigma_hat.size());
    j["sigma_hat"] = sg;
    j["sigma_dim"] = static_cast<int>(r.sigma_hat.rows());
  }
  j["dlam"] = r.dlam;
  j["influence"] = r.influence;
  return j;
}

McRep rep_from_json(const nlohmann::json& j) {
  McRep r;
  r.rep = j.at("rep").get<int>();
  r.ok = j.at("ok").get<bool>();
  if (j.contains("fail_reason")) r.fail_reason = j.at("fail_reason").get<std::string>();
  const auto th = j.at("theta_hat").get<std::vector<double>>();
  r.theta_hat = Eigen::Map<const Eigen::VectorXd>(th.data(), static_cast<long>(th.size()));
  if (j.contains("sigma_hat")) {
    const auto sg = j.at("sigma_hat").get<std::vector<double>>();
    const int d = j.at("sigma_dim").get<int>();
    r.sigma_hat = Eigen::Map<const Eigen::MatrixXd>(sg.data(), d, d);
  }
  r.dlam = j.at("dlam").get<double>();
  r.influence = j.at("influence").get<double>();
  return r;
}

double median(std::vector<double> v) {
  if (v.empty()) return -1.0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return (n % 2) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void summarize(McCell& cell, double theta0) {
  auto& s = cell.summary;
  s = McCellSummary{};
  std::vector<double> errs, dls, infl;
  double sig_sum = 0.0;
  long sig_n = 0;
  long covered = 0, cov_n = 0;
  for (const auto& r : cell.reps) {
    if (!r.ok) {
      ++s.n_fail;
      continue;
    }
    ++s.n_ok;
    const double err = std::sqrt(static_cast<double>(cell.N)) * (r.theta_hat[0] - theta0);
    errs.push_back(err);
    infl.push_back(std::sqrt(static_cast<double>(cell.N)) * r.influence);
    if (r.dlam >= 0.0) dls.push_back(r.dlam);
    if (r.sigma_hat.size() > 0) {
      sig_sum += r.sigma_hat(0, 0);
      ++sig_n;
      const double se = std::sqrt(r.sigma_hat(0, 0) / static_cast<double>(cell.N));
      if (std::abs(r.theta_hat[0] - theta0) <= 1.959963984540054 * se) ++covered;
      ++cov_n;
    }
  }
  if (s.n_ok >= 2) {
    double m = 0.0;
    for (double e : errs) m += e;
    m /= static_cast<double>(errs.size());
    double v = 0.0;
    for (double e : errs) v += (e - m) * (e - m);
    v /= static_cast<double>(errs.size() - 1);
    s.mean_err = m;
    s.var_err = v;
    // influence correlation (component 1)
    double mi = 0.0;
    for (double x : infl) mi += x;
    mi /= static_cast<double>(infl.size());
    double vxy = 0.0, vi = 0.0;
    for (size_t k = 0; k < errs.size(); ++k) {
      vxy += (errs[k] - m) * (infl[k] - mi);
      vi += (infl[k] - mi) * (infl[k] - mi);
    }
    if (vi > 0.0 && v > 0.0)
      s.influence_corr = vxy / std::sqrt(vi * (v * static_cast<double>(errs.size() - 1)));
  }
  if (sig_n > 0) s.mean_sigma = sig_sum / static_cast<double>(sig_n);
  if (cov_n > 0) s.coverage = static_cast<double>(covered) / static_cast<double>(cov_n);
  if (!dls.empty()) s.median_dlam = median(dls);
}

}  // namespace

const McCell* McReport::find(const std::string& design, const std::string& method, long N) const {
  for (const auto& c : cells)
    if (c.design == design && c.method == method && c.N == N) return &c;
  return nullptr;
}

nlohmann::json McReport::to_json() const {
  nlohmann::json j;
  j["config"] = config.to_json();
  j["oracle_sigma_wor"] = oracle_sigma_wor;
  j["oracle_sigma_bern"] = oracle_sigma_bern;
  nlohmann::json cj = nlohmann::json::array();
  for (const auto& c : cells) {
    nlohmann::json e;
    e["design"] = c.design;
    e["method"] = c.method;
    e["N"] = c.N;
    nlohmann::json rj = nlohmann::json::array();
    for (const auto& r : c.reps) rj.push_back(rep_to_json(r));
    e["reps"] = rj;
    e["summary"] = {{"n_ok", c.summary.n_ok},
                    {"n_fail", c.summary.n_fail},
                    {"mean_err", c.summary.mean_err},
                    {"var_err", c.summary.var_err},
                    {"mean_sigma", c.summary.mean_sigma},
                    {"coverage", c.summary.coverage},
                    {"median_dlam", c.summary.median_dlam},
                    {"influence_corr", c.summary.influence_corr}};
    cj.push_back(e);
  }
  j["cells"] = cj;
  nlohmann::json chk = nlohmann::json::array();
  for (const auto& c : checks)
    chk.push_back({{"name", c.name}, {"value", c.value}, {"lo", c.lo}, {"hi", c.hi},
                   {"pass", c.pass}});
  j["checks"] = chk;
  return j;
}

McReport McReport::from_json(const nlohmann::json& j) {
  McReport rep;
  try {
    rep.config = McConfig::from_json(j.at("config"));
    rep.oracle_sigma_wor = j.at("oracle_sigma_wor").get<double>();
    rep.oracle_sigma_bern = j.at("oracle_sigma_bern").get<double>();
    for (const auto& e : j.at("cells")) {
      McCell c;
      c.design = e.at("design").get<std::string>();
      c.method = e.at("method").get<std::string>();
      c.N = e.at("N").get<long>();
      for (const auto& rj : e.at("reps")) c.reps.push_back(rep_from_json(rj));
      summarize(c, model_theta0(rep.config));
      rep.cells.push_back(std::move(c));
    }
    if (j.contains("checks")) {
      for (const auto& cj : j.at("checks")) {
        McCheck c;
        c.name = cj.at("name").get<std::string>();
        c.value = cj.at("value").get<double>();
        c.lo = cj.at("lo").get<double>();
        c.hi = cj.at("hi").get<double>();
        c.pass = cj.at("pass").get<bool>();
        rep.checks.push_back(c);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("mc report: ") + e.what());
  }
  return rep;
}

std::string McReport::per_rep_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "design,method,N,rep,ok,fail_reason,theta_hat,sigma_hat,dlam,influence\n";
  for (const auto& c : cells) {
    for (const auto& r : c.reps) {
      std::string reason = r.fail_reason;
      for (char& ch : reason)
        if (ch == ',' || ch == '\n') ch = ';';
      os << c.design << ',' << c.method << ',' << c.N << ',' << r.rep << ',' << (r.ok ? 1 : 0)
         << ',' << reason << ',';
      if (r.theta_hat.size() > 0) os << r.theta_hat[0];
      os << ',';
      if (r.sigma_hat.size() > 0) os << r.sigma_hat(0, 0);
      os << ',' << r.dlam << ',' << r.influence << '\n';
    }
  }
  return os.str();
}

namespace {

// One (design) arm; replications share the phase-I population across arms.
struct ArmContext {
  DesignSpec spec;
  std::string design_name;
};

}  // namespace

McReport run_experiment(const McConfig& cfg) {
  cfg.validate();
  McReport report;
  report.config = cfg;

  const int J = static_cast<int>(cfg.cuts.size()) + 1;
  auto make_spec = [&](Design d) {
    DesignSpec s;
    s.J = J;
    s.stratum_rule.kind = StratumRule::Kind::UCut;
    s.stratum_rule.cuts = cfg.cuts;
    s.stratum_rule.component = 0;
    s.p = cfg.p;
    s.design = d;
    s.validate();
    return s;
  };
  std::vector<ArmContext> arms;
  if (cfg.run_wor) arms.push_back({make_spec(Design::WithoutReplacement), "wor"});
  if (cfg.run_bernoulli) arms.push_back({make_spec(Design::Bernoulli), "bernoulli"});

  // Model-specific machinery.
  CoxRightDgp rdgp;
  CoxIntervalDgp idgp;
  MeanToyDgp tdgp;
  std::unique_ptr<CoxRightOracle> roracle;
  if (cfg.model == "cox_right") {
    rdgp.theta0 = Eigen::VectorXd::Constant(1, cfg.theta0);
    rdgp.x_lo = cfg.x_lo;
    rdgp.x_hi = cfg.x_hi;
    rdgp.sigma_u = cfg.sigma_u;
    rdgp.lambda0_rate = cfg.lambda0_rate;
    rdgp.cens_rate = cfg.cens_rate;
    rdgp.tau = cfg.tau;
    roracle = std::make_unique<CoxRightOracle>(rdgp, cfg.cuts);
    report.oracle_sigma_wor = roracle->sigma_plain(cfg.p, Design::WithoutReplacement)(0, 0);
    report.oracle_sigma_bern = roracle->sigma_plain(cfg.p, Design::Bernoulli)(0, 0);
  } else if (cfg.model == "cox_interval") {
    idgp.theta0 = Eigen::VectorXd::Constant(1, cfg.theta0);
    idgp.x_lo = cfg.x_lo;
    idgp.x_hi = cfg.x_hi;
    idgp.sigma_u = cfg.sigma_u;
    idgp.lambda0_rate = cfg.lambda0_rate;
    idgp.y_lo = cfg.y_lo;
    idgp.y_hi = cfg.y_hi;
    idgp.validate();
  } else {
    tdgp.x_lo = cfg.x_lo;
    tdgp.x_hi = cfg.x_hi;
    tdgp.sigma_u = cfg.sigma_u;
    report.oracle_sigma_wor =
        tdgp.sigma_plain(cfg.cuts, cfg.p, Design::WithoutReplacement)(0, 0);
    report.oracle_sigma_bern = tdgp.sigma_plain(cfg.cuts, cfg.p, Design::Bernoulli)(0, 0);
  }
  const GFunction G(g_family_from_string(cfg.g_family));

  // Cells in canonical order: N x design x method.
  for (long N : cfg.N_grid) {
    for (const auto& arm : arms) {
      for (const auto& m : cfg.methods) {
        McCell c;
        c.design = arm.design_name;
        c.method = m.key();
        c.N = N;
        c.reps.resize(static_cast<size_t>(cfg.R));
        report.cells.push_back(std::move(c));
      }
    }
  }
  auto cell_at = [&](size_t iN, size_t iArm, size_t iM) -> McCell& {
    return report.cells[(iN * arms.size() + iArm) * cfg.methods.size() + iM];
  };

  // Auxiliary maps per method spec (base Z = u_1).
  std::vector<AuxiliaryMap> auxes;
  for (const auto& m : cfg.methods) {
    const auto mode = m.within_stratum ? AuxiliaryMap::Mode::WithinStratum
                                       : AuxiliaryMap::Mode::Pooled;
    const bool ind = (m.method == WeightMethod::e);
    auxes.push_back(make_u_auxiliary({0}, false, mode, J, ind));
  }

  const RngStream master(cfg.seed);
  std::atomic<long> next_job{0};
  const long total_jobs = static_cast<long>(cfg.N_grid.size()) * cfg.R;

  auto run_one = [&](long job) {
    const size_t iN = static_cast<size_t>(job / cfg.R);
    const int r = static_cast<int>(job % cfg.R);
    const long N = cfg.N_grid[iN];
    RngStream rep_stream = master.child(iN).child(static_cast<std::uint64_t>(r));
    std::vector<PhaseOneRecord> recs;
    std::vector<Eigen::VectorXd> xs;
    RngStream pop_rng = rep_stream.child(0);
    if (cfg.model == "cox_right") {
      rdgp.generate(N, pop_rng, recs, xs);
    } else if (cfg.model == "cox_interval") {
      idgp.generate(N, pop_rng, recs, xs);
    } else {
      tdgp.generate(N, pop_rng, recs, xs);
    }
    stratify(recs, arms[0].spec);  // same rule across arms

    for (size_t iArm = 0; iArm < arms.size(); ++iArm) {
      const auto& arm = arms[iArm];
      // Stream tag fixed by design so WOR/Bernoulli arms share the population
      // but not selection noise, and disabling one arm does not shift the other.
      const std::uint64_t tag = (arm.spec.design == Design::WithoutReplacement) ? 1 : 2;
      TwoPhaseSample sample;
      try {
        sample = make_two_phase_sample(recs, xs, arm.spec, rep_stream.child(tag));
      } catch (const std::exception& e) {
        for (size_t iM = 0; iM < cfg.methods.size(); ++iM) {
          McRep& out = cell_at(iN, iArm, iM).reps[static_cast<size_t>(r)];
          out.rep = r;
          out.ok = false;
          out.fail_reason = e.what();
        }
        continue;
      }
      for (size_t iM = 0; iM < cfg.methods.size(); ++iM) {
        McRep& out = cell_at(iN, iArm, iM).reps[static_cast<size_t>(r)];
        out.rep = r;
        try {
          const auto& mspec = cfg.methods[iM];
          const WeightSet ws =
              make_weights(mspec.method, mspec.within_stratum, sample, &auxes[iM], &G);
          if (cfg.model == "cox_right") {
            const CoxRightFit fit = fit_cox_right(sample, ws);
            out.theta_hat = fit.theta_hat;
            const VarianceRightResult vr =
                variance_right(fit, sample, ws, &auxes[iM], mspec.within_stratum);
            out.sigma_hat = vr.sigma_hat;
            double acc = 0.0;
            for (long i = 0; i < sample.N(); ++i) {
              if (!sample.xi[i]) continue;
              acc += ws.w[i] * roracle->ell_tilde(sample.records[static_cast<size_t>(i)].y,
                                                  sample.records[static_cast<size_t>(i)].delta,
                                                  sample.x_of(static_cast<int>(i)))[0];
            }
            out.influence = acc / static_cast<double>(N);
            out.dlam = -1.0;
          } else if (cfg.model == "cox_interval") {
            IntervalFitOptions opt;
            opt.theta_lo = cfg.theta_lo;
            opt.theta_hi = cfg.theta_hi;
            // Fit over the rate theorem's truncated class H_M with the
            // tightest M satisfying M^{-1} <= Lambda0 <= M on the Y support;
            // the metric d is evaluated for that estimator.
            opt.icm.lambda_max =
                std::max(idgp.Lambda0(idgp.y_hi), 1.0 / idgp.Lambda0(idgp.y_lo));
            const CoxIntervalFit fit = fit_cox_interval(sample, ws, opt);
            if (fit.boundary) throw NumericalError("theta on the box boundary");
            out.theta_hat = fit.theta_hat;
            out.dlam = idgp.dist_lambda(fit.lambda_hat);
            out.influence = 0.0;
          } else {
            // WLE of the mean: root of sum w (x - theta) = 0.
            double swx = 0.0, sw = 0.0;
            for (long i = 0; i < sample.N(); ++i)
              if (sample.xi[i]) {
                swx += ws.w[i] * sample.x_of(static_cast<int>(i))[0];
                sw += ws.w[i];
              }
            if (sw <= 0.0) throw NumericalError("zero total weight");
            const double that = swx / sw;
            out.theta_hat = Eigen::VectorXd::Constant(1, that);
            // plug-in variance, same structure as (3.1)/(3.4)
            const double N_d = static_cast<double>(N);
            double i0 = 0.0;
            std::vector<double> s1(static_cast<size_t>(J), 0.0), s2(static_cast<size_t>(J), 0.0);
            for (long i = 0; i < sample.N(); ++i) {
              if (!sample.xi[i]) continue;
              const double l = sample.x_of(static_cast<int>(i))[0] - that;
              const int st = sample.records[static_cast<size_t>(i)].stratum;
              i0 += ws.w[i] * l * l;
              s1[static_cast<size_t>(st - 1)] += ws.w[i] * l;
              s2[static_cast<size_t>(st - 1)] += ws.w[i] * l * l;
            }
            double sig = i0 / N_d;
            for (int jj = 1; jj <= J; ++jj) {
              const double nuj = static_cast<double>(sample.Nj[static_cast<size_t>(jj - 1)]) / N_d;
              if (nuj <= 0.0) continue;
              const double pj = sample.pi0_stratum(jj);
              const double m1 = s1[static_cast<size_t>(jj - 1)] / (N_d * nuj);
              const double m2 = s2[static_cast<size_t>(jj - 1)] / (N_d * nuj);
              const double mom =
                  (arm.spec.design == Design::WithoutReplacement) ? m2 - m1 * m1 : m2;
              sig += nuj * (1.0 - pj) / pj * mom;
            }
            out.sigma_hat = Eigen::MatrixXd::Constant(1, 1, sig);
            const double t0 = tdgp.theta0();
            out.influence = ipw_mean(sample, [t0](const Eigen::VectorXd& x,
                                                  const PhaseOneRecord&) { return x[0] - t0; });
            out.dlam = -1.0;
          }
          out.ok = true;
        } catch (const std::exception& e) {
          out.ok = false;
          out.fail_reason = e.what();
        }
      }
    }
  };

  const int nthreads = std::max(1, cfg.threads);
  if (nthreads == 1) {
    for (long job = 0; job < total_jobs; ++job) run_one(job);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t)
      pool.emplace_back([&]() {
        while (true) {
          const long job = next_job.fetch_add(1);
          if (job >= total_jobs) break;
          run_one(job);
        }
      });
    for (auto& t : pool) t.join();
  }

  for (auto& c : report.cells) summarize(c, model_theta0(cfg));
  append_checks(report);
  return report;
}

RateSummary check_rates(const McReport& report, const std::string& design,
                        const std::string& method) {
  const auto& grid = report.config.N_grid;
  if (grid.size() < 2 || grid.back() < 4 * grid.front())
    throw DataError("check_rates: insufficient N grid (need >= 2 values with ratio >= 4)");
  const McCell* lo = report.find(design, method, grid.front());
  const McCell* hi = report.find(design, method, grid.back());
  if (!lo || !hi) throw DataError("check_rates: missing cells for " + design + "/" + method);
  RateSummary rs;
  rs.n_lo = grid.front();
  rs.n_hi = grid.back();
  // var_err is the variance of sqrt(N)(theta-theta0); undo the sqrt(N)
  // scaling to compare raw sds across N.
  const double sd_lo = std::sqrt(lo->summary.var_err / static_cast<double>(rs.n_lo));
  const double sd_hi = std::sqrt(hi->summary.var_err / static_cast<double>(rs.n_hi));
  rs.theta_sd_ratio = sd_lo / sd_hi;
  if (lo->summary.median_dlam > 0.0 && hi->summary.median_dlam > 0.0)
    rs.dlam_ratio = lo->summary.median_dlam / hi->summary.median_dlam;
  return rs;
}

namespace {

// Paired MC standard error of Var(a) - Var(b) over common successful reps.
double paired_var_diff_se(const McCell& ca, const McCell& cb, double theta0) {
  std::vector<double> a, b;
  const size_t R = std::min(ca.reps.size(), cb.reps.size());
  for (size_t r = 0; r < R; ++r) {
    if (!ca.reps[r].ok || !cb.reps[r].ok) continue;
    a.push_back(std::sqrt(static_cast<double>(ca.N)) * (ca.reps[r].theta_hat[0] - theta0));
    b.push_back(std::sqrt(static_cast<double>(cb.N)) * (cb.reps[r].theta_hat[0] - theta0));
  }
  const size_t n = a.size();
  if (n < 3) return 1e300;
  double ma = 0.0, mb = 0.0;
  for (size_t r = 0; r < n; ++r) {
    ma += a[r];
    mb += b[r];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  std::vector<double> d(n);
  double md = 0.0;
  for (size_t r = 0; r < n; ++r) {
    d[r] = (a[r] - ma) * (a[r] - ma) - (b[r] - mb) * (b[r] - mb);
    md += d[r];
  }
  md /= static_cast<double>(n);
  double v = 0.0;
  for (size_t r = 0; r < n; ++r) v += (d[r] - md) * (d[r] - md);
  v /= static_cast<double>(n - 1);
  return std::sqrt(v / static_cast<double>(n));
}

}  // namespace

void append_checks(McReport& report) {
  report.checks.clear();
  const auto& cfg = report.config;
  auto add = [&](const std::string& name, double value, double lo, double hi) {
    McCheck c;
    c.name = name;
    c.value = value;
    c.lo = lo;
    c.hi = hi;
    c.pass = (value >= lo && value <= hi) && std::isfinite(value);
    report.checks.push_back(c);
  };

  double worst_fail = 0.0;
  for (const auto& c : report.cells)
    worst_fail = std::max(
        worst_fail, static_cast<double>(c.summary.n_fail) / static_cast<double>(cfg.R));
  add("fail_frac_max", worst_fail, 0.0, 0.02);

  const long Nmax = cfg.N_grid.back();
  if (cfg.model == "cox_right" || cfg.model == "mean_toy") {
    const McCell* wp = report.find("wor", "plain", Nmax);
    const McCell* bp = report.find("bernoulli", "plain", Nmax);
    if (wp && report.oracle_sigma_wor > 0.0 && wp->summary.n_ok >= 2)
      add("var_vs_oracle_wor_plain", wp->summary.var_err / report.oracle_sigma_wor, 0.85, 1.15);
    if (bp && report.oracle_sigma_bern > 0.0 && bp->summary.n_ok >= 2)
      add("var_vs_oracle_bern_plain", bp->summary.var_err / report.oracle_sigma_bern, 0.85, 1.15);
    if (wp && wp->summary.var_err > 0.0 && wp->summary.mean_sigma > 0.0) {
      add("mean_sigma_vs_var_wor_plain", wp->summary.mean_sigma / wp->summary.var_err, 0.85,
          1.15);
      add("coverage_wor_plain", wp->summary.coverage, 0.93, 0.97);
    }
    if (cfg.model == "cox_right" && wp)
      add("influence_corr_wor_plain", wp->summary.influence_corr, 0.95, 1.000001);
    if (wp && bp && wp->summary.n_ok >= 3 && bp->summary.n_ok >= 3) {
      const double se = paired_var_diff_se(*wp, *bp, model_theta0(cfg));
      add("var_wor_le_bern_plain", wp->summary.var_err - bp->summary.var_err, -1e300, 2.0 * se);
    }
    const McCell* wcc = report.find("wor", "cc+ws", Nmax);
    if (wp && wcc && wp->summary.n_ok >= 3 && wcc->summary.n_ok >= 3) {
      const double se = paired_var_diff_se(*wcc, *wp, model_theta0(cfg));
      add("var_ccws_le_plain_wor", wcc->summary.var_err - wp->summary.var_err, -1e300, 2.0 * se);
    }
  }
  if (cfg.model == "cox_interval" && cfg.N_grid.size() >= 2 &&
      cfg.N_grid.back() >= 4 * cfg.N_grid.front()) {
    for (const auto& arm : {std::string("wor"), std::string("bernoulli")}) {
      if (!report.find(arm, "plain", cfg.N_grid.front())) continue;
      const RateSummary rs = check_rates(report, arm, "plain");
      const double target = std::sqrt(static_cast<double>(rs.n_hi) / static_cast<double>(rs.n_lo));
      add("theta_sd_ratio_" + arm, rs.theta_sd_ratio, 0.742 * target, 1.272 * target);
      if (rs.dlam_ratio > 0.0) {
        const double t3 = std::cbrt(static_cast<double>(rs.n_hi) / static_cast<double>(rs.n_lo));
        add("dlam_ratio_" + arm, rs.dlam_ratio, 0.75 * t3, 1.35 * t3);
      }
    }
  }
}

}  // namespace twophase
