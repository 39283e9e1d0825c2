#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "support/oracles.hpp"
#include "twophase/cox_interval.hpp"
#include "twophase/data.hpp"
#include "twophase/dgp.hpp"
#include "twophase/errors.hpp"
#include "twophase/isotonic.hpp"
#include "twophase/rng.hpp"
#include "twophase/sampling.hpp"
#include "twophase/weights.hpp"

using namespace twophase;

namespace {

// hand-rolled sample over given (y, delta, w); x = 0, full sampling
TwoPhaseSample tiny_sample(const std::vector<double>& y, const std::vector<int>& delta) {
  TwoPhaseSample s;
  s.design = Design::WithoutReplacement;
  s.J = 1;
  s.Nj = {static_cast<long>(y.size())};
  s.nj = {static_cast<long>(y.size())};
  s.p = {1.0};
  for (std::size_t i = 0; i < y.size(); ++i) {
    PhaseOneRecord r;
    r.y = y[i];
    r.delta = delta[i];
    r.u = Eigen::VectorXd::Zero(1);
    r.stratum = 1;
    s.records.push_back(r);
    s.xi.push_back(1);
    s.x.push_back(Eigen::VectorXd::Zero(1));
  }
  s.validate();
  return s;
}

WeightSet unit_weights(const TwoPhaseSample& s, const std::vector<double>& w) {
  WeightSet ws = plain_weights(s);
  for (long i = 0; i < s.N(); ++i) ws.w[i] = w[static_cast<std::size_t>(i)];
  return ws;
}

TwoPhaseSample gen_interval(long N, std::uint64_t seed, std::vector<double> p) {
  CoxIntervalDgp dgp;
  RngStream rng(seed);
  std::vector<PhaseOneRecord> recs;
  std::vector<Eigen::VectorXd> xs;
  dgp.generate(N, rng, recs, xs);
  DesignSpec spec;
  spec.stratum_rule.cuts = p.size() > 1 ? std::vector<double>{0.3} : std::vector<double>{};
  spec.J = spec.stratum_rule.strata();
  spec.p = std::move(p);
  stratify(recs, spec);
  return make_two_phase_sample(recs, xs, spec, rng.child(1));
}

double profile_objective(double theta, const TwoPhaseSample& s, const WeightSet& ws) {
  Eigen::VectorXd th = Eigen::VectorXd::Constant(1, theta);
  return loglik_interval(th, profile_lambda(th, s, ws), s, ws);
}

}  // namespace

TEST_CASE("loglik_interval: closed forms and feasibility") {
  TwoPhaseSample s = tiny_sample({1.0}, {1});
  WeightSet ws = plain_weights(s);
  Eigen::VectorXd th0 = Eigen::VectorXd::Zero(1);

  // Lambda = 0 everywhere with a failing record: -inf
  CHECK(loglik_interval(th0, StepFunction{}, s, ws) == -std::numeric_limits<double>::infinity());

  StepFunction lam({1.0}, {std::log(2.0)});
  CHECK(loglik_interval(th0, lam, s, ws) == doctest::Approx(std::log(0.5)).epsilon(1e-14));
}

TEST_CASE("loglik_interval: theta = 0 ignores the covariates") {
  TwoPhaseSample s = gen_interval(80, 51, {1.0});
  TwoPhaseSample s2 = s;
  for (auto& xv : s2.x) xv.array() += 3.7;  // different covariates, same (y, delta)
  WeightSet ws = plain_weights(s);
  StepFunction lam({0.5, 1.0}, {0.2, 0.9});
  Eigen::VectorXd th0 = Eigen::VectorXd::Zero(1);
  CHECK(loglik_interval(th0, lam, s, ws) == loglik_interval(th0, lam, s2, ws));
}

TEST_CASE("profile_lambda: three-point NPMLE pins F") {
  Eigen::VectorXd th0 = Eigen::VectorXd::Zero(1);
  {
    TwoPhaseSample s = tiny_sample({1, 2, 3}, {0, 1, 1});
    StepFunction lam = profile_lambda(th0, s, plain_weights(s));
    CHECK(lam(1.0) == 0.0);
    CHECK(1.0 - std::exp(-lam(2.0)) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(1.0 - std::exp(-lam(3.0)) == doctest::Approx(1.0).epsilon(1e-8));
  }
  {
    TwoPhaseSample s = tiny_sample({1, 2}, {1, 0});
    StepFunction lam = profile_lambda(th0, s, plain_weights(s));
    CHECK(1.0 - std::exp(-lam(1.0)) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(1.0 - std::exp(-lam(2.0)) == doctest::Approx(0.5).epsilon(1e-9));
  }
  {
    TwoPhaseSample s = tiny_sample({1, 2}, {1, 0});
    WeightSet ws = unit_weights(s, {2.0, 1.0});
    StepFunction lam = profile_lambda(th0, s, ws);
    CHECK(1.0 - std::exp(-lam(1.0)) == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
    CHECK(1.0 - std::exp(-lam(2.0)) == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
  }
}

TEST_CASE("profile_lambda: theta = 0 equals weighted PAVA of delta") {
  RngStream rng(52);
  Eigen::VectorXd th0 = Eigen::VectorXd::Zero(1);
  for (int inst = 0; inst < 50; ++inst) {
    const int n = 15 + static_cast<int>(rng.below(60));
    std::vector<double> y, w;
    std::vector<int> delta;
    for (int i = 0; i < n; ++i) {
      y.push_back(rng.uniform01() * 2.0 + 0.05);
      delta.push_back(static_cast<int>(rng.below(2)));
      w.push_back(0.5 + 2.5 * rng.uniform01());
    }
    TwoPhaseSample s = tiny_sample(y, delta);
    WeightSet ws = unit_weights(s, w);
    StepFunction lam = profile_lambda(th0, s, ws);

    std::vector<std::size_t> ord(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < ord.size(); ++i) ord[i] = i;
    std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
    std::vector<double> dd, wwv;
    for (std::size_t k : ord) {
      dd.push_back(delta[k]);
      wwv.push_back(w[k]);
    }
    std::vector<double> fhat = oracles::pava_slow(dd, wwv);
    for (std::size_t k = 0; k < ord.size(); ++k) {
      double f_prod = 1.0 - std::exp(-lam(y[ord[k]]));
      CHECK(std::abs(f_prod - fhat[k]) <= 1e-8);
    }
    // attained objective matches the oracle likelihood
    double ll = loglik_interval(th0, lam, s, ws);
    double ll_oracle = oracles::interval_theta0_loglik_pava(y, delta, w);
    CHECK(ll == doctest::Approx(ll_oracle).epsilon(1e-8));
  }
}

TEST_CASE("profile_lambda: nondecreasing, clamped, locally optimal") {
  TwoPhaseSample s = gen_interval(120, 53, {0.8, 0.4});
  WeightSet ws = plain_weights(s);
  Eigen::VectorXd th = Eigen::VectorXd::Constant(1, 0.3);
  IcmOptions icm;
  StepFunction lam = profile_lambda(th, s, ws, icm);
  const auto& v = lam.values();
  for (std::size_t k = 0; k < v.size(); ++k) {
    CHECK(v[k] >= 0.0);
    CHECK(v[k] <= icm.lambda_max + 1e-12);
    if (k > 0) CHECK(v[k] >= v[k - 1]);
  }
  // perturbing any single value by +-1e-3 (monotonicity preserved) never helps
  const double base = loglik_interval(th, lam, s, ws);
  int tried = 0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    for (double eps : {1e-3, -1e-3}) {
      std::vector<double> pv = v;
      pv[k] += eps;
      if (k > 0 && pv[k] < pv[k - 1]) continue;
      if (k + 1 < pv.size() && pv[k] > pv[k + 1]) continue;
      if (pv[k] < 0.0) continue;
      StepFunction pert(lam.jumps(), pv);
      CHECK(loglik_interval(th, pert, s, ws) <= base + 1e-10);
      ++tried;
    }
  }
  CHECK(tried > 0);
}

TEST_CASE("fit_cox_interval: constant covariate flags non-identifiability") {
  TwoPhaseSample s = gen_interval(60, 54, {1.0});
  for (auto& xv : s.x) xv.setConstant(2.0);
  CoxIntervalFit fit = fit_cox_interval(s, plain_weights(s));
  CHECK(fit.non_identifiable);
  CHECK(std::isfinite(fit.objective));
}

TEST_CASE("fit_cox_interval: matches a dense-grid profile search") {
  for (std::uint64_t seed : {55u, 56u}) {
    TwoPhaseSample s = gen_interval(60, seed, {1.0});
    WeightSet ws = plain_weights(s);
    CoxIntervalFit fit = fit_cox_interval(s, ws);

    double best = -4.0, best_v = profile_objective(-4.0, s, ws);
    for (double t = -4.0; t <= 4.0; t += 0.01) {
      double v = profile_objective(t, s, ws);
      if (v > best_v) {
        best_v = v;
        best = t;
      }
    }
    for (double t = best - 0.012; t <= best + 0.012; t += 2e-5) {
      double v = profile_objective(t, s, ws);
      if (v > best_v) {
        best_v = v;
        best = t;
      }
    }
    CHECK(std::abs(fit.theta_hat[0] - best) <= 1e-3);
    CHECK(fit.objective >= best_v - 1e-9);
    CHECK(fit.score_resid <= 1e-4);
    CHECK(!fit.boundary);
  }
}

TEST_CASE("fit_cox_interval: weight scale invariance") {
  TwoPhaseSample s = gen_interval(90, 57, {0.8, 0.4});
  WeightSet ws = plain_weights(s);
  CoxIntervalFit fit = fit_cox_interval(s, ws);
  WeightSet w3 = ws;
  w3.w *= 3.0;
  CoxIntervalFit fit3 = fit_cox_interval(s, w3);
  CHECK(std::abs(fit3.theta_hat[0] - fit.theta_hat[0]) <= 1e-6);
  REQUIRE(fit3.lambda_hat.size() == fit.lambda_hat.size());
  for (std::size_t k = 0; k < fit.lambda_hat.size(); ++k) {
    double f = 1.0 - std::exp(-fit.lambda_hat.values()[k]);
    double f3 = 1.0 - std::exp(-fit3.lambda_hat.values()[k]);
    CHECK(std::abs(f - f3) <= 1e-6);
  }
}

TEST_CASE("fit_cox_interval: optimum pushed to the theta box is flagged") {
  TwoPhaseSample s = gen_interval(200, 58, {1.0});
  IntervalFitOptions opt;
  opt.theta_lo = -0.05;
  opt.theta_hi = 0.05;
  CoxIntervalFit fit = fit_cox_interval(s, plain_weights(s), opt);
  CHECK(fit.boundary);
}

TEST_CASE("isotonic_fit: agrees with the slow block merger") {
  RngStream rng(59);
  for (int inst = 0; inst < 200; ++inst) {
    const int n = 1 + static_cast<int>(rng.below(40));
    std::vector<double> y, w;
    for (int i = 0; i < n; ++i) {
      y.push_back(rng.normal());
      w.push_back(0.1 + rng.uniform01());
    }
    std::vector<double> fast = isotonic_fit(y, w);
    std::vector<double> slow = oracles::pava_slow(y, w);
    REQUIRE(fast.size() == slow.size());
    for (int i = 0; i < n; ++i) {
      CHECK(fast[static_cast<std::size_t>(i)] ==
            doctest::Approx(slow[static_cast<std::size_t>(i)]).epsilon(1e-12));
      if (i > 0)
        CHECK(fast[static_cast<std::size_t>(i)] >= fast[static_cast<std::size_t>(i) - 1] - 1e-15);
    }
  }
}

TEST_CASE("oracle_efficient_score_interval: centering kills a degenerate X") {
  CovariateLawQuad law;
  law.nodes = {Eigen::VectorXd::Constant(1, 1.3)};
  law.weights = {1.0};
  auto Lam = [](double t) { return 0.8 * t; };
  Eigen::VectorXd th = Eigen::VectorXd::Constant(1, 0.5);
  for (int delta : {0, 1}) {
    Eigen::VectorXd v = oracle_efficient_score_interval(0.7, delta, law.nodes[0], th, Lam, law);
    CHECK(std::abs(v[0]) <= 1e-12);
  }
}

TEST_CASE("oracle_efficient_score_interval: mean zero at the truth") {
  CoxIntervalDgp dgp;
  CovariateLawQuad law = dgp.law();
  auto Lam = [&](double t) { return dgp.Lambda0(t); };
  RngStream rng(60);
  const int R = 100000;
  std::vector<double> vals;
  vals.reserve(R);
  std::vector<PhaseOneRecord> recs;
  std::vector<Eigen::VectorXd> xs;
  dgp.generate(R, rng, recs, xs);
  for (int i = 0; i < R; ++i) {
    Eigen::VectorXd v = oracle_efficient_score_interval(
        recs[static_cast<std::size_t>(i)].y, recs[static_cast<std::size_t>(i)].delta,
        xs[static_cast<std::size_t>(i)], dgp.theta0, Lam, law);
    vals.push_back(v[0]);
  }
  double m = oracles::mean_of(vals);
  double se = std::sqrt(oracles::variance_of(vals) / R);
  CHECK(std::abs(m) <= 3 * se);
}
