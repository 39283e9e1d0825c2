#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "support/oracles.hpp"
#include "twophase/data.hpp"
#include "twophase/dgp.hpp"
#include "twophase/errors.hpp"
#include "twophase/rng.hpp"
#include "twophase/sampling.hpp"

using namespace twophase;

namespace {

PhaseOneRecord recu(double u0, double y = 1.0, int delta = 0) {
  PhaseOneRecord r;
  r.y = y;
  r.delta = delta;
  r.u = Eigen::VectorXd::Constant(1, u0);
  return r;
}

DesignSpec cut_spec(std::vector<double> cuts, std::vector<double> p,
                    Design d = Design::WithoutReplacement) {
  DesignSpec spec;
  spec.stratum_rule.kind = StratumRule::Kind::UCut;
  spec.stratum_rule.cuts = std::move(cuts);
  spec.stratum_rule.component = 0;
  spec.J = spec.stratum_rule.strata();
  spec.p = std::move(p);
  spec.design = d;
  return spec;
}

}  // namespace

TEST_CASE("stratify: counts by cut rule") {
  std::vector<PhaseOneRecord> recs = {recu(-1), recu(-2), recu(3), recu(4)};
  DesignSpec spec = cut_spec({0.0}, {0.5, 0.5});
  std::vector<long> Nj = stratify(recs, spec);
  REQUIRE(Nj.size() == 2);
  CHECK(Nj[0] == 2);
  CHECK(Nj[1] == 2);
  CHECK(recs[0].stratum == 1);
  CHECK(recs[2].stratum == 2);
}

TEST_CASE("stratify: empty stratum is an error") {
  std::vector<PhaseOneRecord> recs = {recu(-1), recu(-2)};
  DesignSpec spec = cut_spec({0.0}, {0.5, 0.5});
  CHECK_THROWS_AS(stratify(recs, spec), DataError);
}

TEST_CASE("stratify: single record") {
  std::vector<PhaseOneRecord> recs = {recu(0.2)};
  DesignSpec spec = cut_spec({}, {1.0});
  std::vector<long> Nj = stratify(recs, spec);
  REQUIRE(Nj.size() == 1);
  CHECK(Nj[0] == 1);
}

TEST_CASE("draw_phase2: WOR exact counts") {
  // p = 1: everything selected
  std::vector<PhaseOneRecord> recs;
  for (int i = 0; i < 10; ++i) recs.push_back(recu(1.0));
  DesignSpec spec = cut_spec({}, {1.0});
  std::vector<long> Nj = stratify(recs, spec);
  Phase2Draw d = draw_phase2(recs, Nj, spec, RngStream(3));
  CHECK(d.nj[0] == 10);
  for (auto b : d.xi) CHECK(b == 1);

  // N_j = 5, p = 0.4: exactly 2 under any seed
  std::vector<PhaseOneRecord> recs5;
  for (int i = 0; i < 5; ++i) recs5.push_back(recu(1.0));
  DesignSpec spec5 = cut_spec({}, {0.4});
  std::vector<long> Nj5 = stratify(recs5, spec5);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Phase2Draw d5 = draw_phase2(recs5, Nj5, spec5, RngStream(seed));
    long ones = 0;
    for (auto b : d5.xi) ones += b;
    CHECK(ones == 2);
    CHECK(d5.nj[0] == 2);
  }
}

TEST_CASE("draw_phase2: n_j floored to zero is an error") {
  std::vector<PhaseOneRecord> recs = {recu(1.0), recu(1.0)};
  DesignSpec spec = cut_spec({}, {0.2});  // floor(2 * 0.2) = 0
  std::vector<long> Nj = stratify(recs, spec);
  CHECK_THROWS_AS(draw_phase2(recs, Nj, spec, RngStream(1)), DataError);
}

TEST_CASE("draw_phase2: WOR inclusion frequency and exchangeability") {
  std::vector<PhaseOneRecord> recs;
  for (int i = 0; i < 5; ++i) recs.push_back(recu(1.0));
  DesignSpec spec = cut_spec({}, {0.4});
  std::vector<long> Nj = stratify(recs, spec);

  const int S = 100000;
  std::vector<long> count(5, 0);
  for (int s = 0; s < S; ++s) {
    Phase2Draw d = draw_phase2(recs, Nj, spec, RngStream(static_cast<std::uint64_t>(s)));
    for (int i = 0; i < 5; ++i) count[static_cast<std::size_t>(i)] += d.xi[static_cast<std::size_t>(i)];
  }
  // marginal frequency of slot 0
  double phat = static_cast<double>(count[0]) / S;
  double se = std::sqrt(0.4 * 0.6 / S);
  CHECK(std::abs(phat - 0.4) <= 3 * se);

  // permutation invariance: n = 2 of N = 5 gives Cov(I_i, I_k) = -0.06, so
  // the centered counts have covariance S * 0.3 (I - J/5) and the Pearson
  // statistic with factor 0.3 is asymptotically chi-square(4)
  double T = 0.0;
  for (int i = 0; i < 5; ++i) {
    double dev = static_cast<double>(count[static_cast<std::size_t>(i)]) - 0.4 * S;
    T += dev * dev / (0.3 * S);
  }
  CHECK(T < 18.4668);  // 0.999 quantile of chi-square(4)
}

TEST_CASE("draw_phase2: Bernoulli realized counts near expectation") {
  std::vector<PhaseOneRecord> recs;
  for (int i = 0; i < 20000; ++i) recs.push_back(recu(1.0));
  DesignSpec spec = cut_spec({}, {0.3}, Design::Bernoulli);
  std::vector<long> Nj = stratify(recs, spec);
  Phase2Draw d = draw_phase2(recs, Nj, spec, RngStream(11));
  double se = std::sqrt(0.3 * 0.7 * 20000);
  CHECK(std::abs(static_cast<double>(d.nj[0]) - 6000.0) <= 4 * se);
}

TEST_CASE("ipw_mean: complete data reduces to the empirical mean") {
  RngStream rng(5);
  std::vector<PhaseOneRecord> recs;
  std::vector<Eigen::VectorXd> xs;
  double tot = 0.0;
  for (int i = 0; i < 57; ++i) {
    double v = rng.normal();
    recs.push_back(recu(v));
    xs.push_back(Eigen::VectorXd::Constant(1, v * v));
    tot += v * v;
  }
  DesignSpec spec = cut_spec({}, {1.0});
  stratify(recs, spec);
  TwoPhaseSample s = make_two_phase_sample(recs, xs, spec, rng.child(9));
  double m = ipw_mean(s, [](const Eigen::VectorXd& x, const PhaseOneRecord&) { return x[0]; });
  CHECK(m == doctest::Approx(tot / 57).epsilon(1e-14));
}

TEST_CASE("ipw_mean: constant 1 is exact under WOR") {
  RngStream rng(6);
  for (int it = 0; it < 20; ++it) {
    std::vector<PhaseOneRecord> recs;
    std::vector<Eigen::VectorXd> xs;
    long N = 53 + static_cast<long>(rng.below(400));
    for (long i = 0; i < N; ++i) {
      recs.push_back(recu(rng.normal()));
      xs.push_back(Eigen::VectorXd::Zero(1));
    }
    DesignSpec spec = cut_spec({0.0}, {0.37, 0.62});
    stratify(recs, spec);
    TwoPhaseSample s = make_two_phase_sample(recs, xs, spec, rng.child(100 + static_cast<std::uint64_t>(it)));
    double m = ipw_mean(s, [](const Eigen::VectorXd&, const PhaseOneRecord&) { return 1.0; });
    CHECK(m == 1.0);  // no tolerance
  }
}

TEST_CASE("ipw_mean: average over all C(4,2) subsets recovers the mean") {
  // N = 4, one stratum, n = 2, f(x) = x with x = 1..4: the IPW mean is
  // unbiased over the 6 equally likely subsets, average = 2.5
  std::vector<PhaseOneRecord> recs;
  std::vector<Eigen::VectorXd> xs;
  for (int i = 0; i < 4; ++i) {
    recs.push_back(recu(1.0));
    recs.back().stratum = 1;
    xs.push_back(Eigen::VectorXd::Constant(1, i + 1.0));
  }
  double acc = 0.0;
  int subsets = 0;
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b) {
      TwoPhaseSample s;
      s.records = recs;
      s.design = Design::WithoutReplacement;
      s.J = 1;
      s.Nj = {4};
      s.nj = {2};
      s.p = {0.5};
      s.xi.assign(4, 0);
      s.xi[static_cast<std::size_t>(a)] = 1;
      s.xi[static_cast<std::size_t>(b)] = 1;
      s.x.assign(4, Eigen::VectorXd());
      s.x[static_cast<std::size_t>(a)] = xs[static_cast<std::size_t>(a)];
      s.x[static_cast<std::size_t>(b)] = xs[static_cast<std::size_t>(b)];
      s.validate();
      acc += ipw_mean(s, [](const Eigen::VectorXd& x, const PhaseOneRecord&) { return x[0]; });
      ++subsets;
    }
  CHECK(subsets == 6);
  CHECK(acc / 6 == doctest::Approx(2.5).epsilon(1e-14));
}

TEST_CASE("ipw_process: constants vanish exactly under WOR") {
  RngStream rng(8);
  std::vector<PhaseOneRecord> recs;
  std::vector<Eigen::VectorXd> xs;
  for (int i = 0; i < 300; ++i) {
    recs.push_back(recu(rng.normal()));
    xs.push_back(Eigen::VectorXd::Zero(1));
  }
  DesignSpec spec = cut_spec({0.0}, {0.5, 0.25});
  stratify(recs, spec);
  TwoPhaseSample s = make_two_phase_sample(recs, xs, spec, rng.child(2));
  IpwProcessResult r = ipw_process(
      s, [](const Eigen::VectorXd&, const PhaseOneRecord&) { return 3.25; }, 3.25);
  CHECK(r.total == 0.0);
}

TEST_CASE("ipw_process: two-term split reproduces the total") {
  RngStream rng(9);
  for (int it = 0; it < 10; ++it) {
    std::vector<PhaseOneRecord> recs;
    std::vector<Eigen::VectorXd> xs;
    for (int i = 0; i < 211; ++i) {
      double v = rng.normal();
      recs.push_back(recu(v, std::abs(v) + 0.1, static_cast<int>(rng.below(2))));
      xs.push_back(Eigen::VectorXd::Constant(1, rng.uniform01()));
    }
    DesignSpec spec = cut_spec({0.2}, {0.6, 0.35});
    stratify(recs, spec);
    TwoPhaseSample s = make_two_phase_sample(recs, xs, spec, rng.child(40 + static_cast<std::uint64_t>(it)));
    auto f = [](const Eigen::VectorXd& x, const PhaseOneRecord& v) { return x[0] * (1 + v.y); };
    IpwProcessResult r = ipw_process(s, f, 0.42, true, &xs);
    REQUIRE(r.has_split);
    double rebuilt = r.phase1;
    for (double t : r.stratum_terms) rebuilt += t;
    CHECK(rebuilt == doctest::Approx(r.total).epsilon(1e-12));
  }
}

TEST_CASE("ipw_process: Monte Carlo variance matches the limit covariance") {
  // u ~ N(0,1), y = e^u, f = 1{y <= 1} = 1{u <= 0}; strata split at the 0.75
  // quantile of u. Limit: p(1-p) + sum nu_j (1-p_j)/p_j Var_j(f).
  const double cut = 0.6744897501960817;
  const long N = 2000;
  const int R = 10000;
  DesignSpec spec = cut_spec({cut}, {0.5, 0.8});
  RngStream master(20260814);
  std::vector<double> totals;
  totals.reserve(R);
  for (int r = 0; r < R; ++r) {
    RngStream rep = master.child(static_cast<std::uint64_t>(r));
    std::vector<PhaseOneRecord> recs;
    std::vector<Eigen::VectorXd> xs;
    recs.reserve(N);
    for (long i = 0; i < N; ++i) {
      double v = rep.normal();
      recs.push_back(recu(v, std::exp(v)));
      xs.push_back(Eigen::VectorXd::Zero(1));
    }
    stratify(recs, spec);
    TwoPhaseSample s = make_two_phase_sample(recs, xs, spec, rep.child(1));
    IpwProcessResult out = ipw_process(
        s, [](const Eigen::VectorXd&, const PhaseOneRecord& v) { return v.y <= 1.0 ? 1.0 : 0.0; },
        0.5);
    totals.push_back(out.total);
  }
  // Var_1(f) = (2/3)(1/3) in the lower stratum (P(u<=0 | u<=cut) = 2/3),
  // Var_2(f) = 0 above the cut.
  double limit = 0.25 + 0.75 * ((1 - 0.5) / 0.5) * (2.0 / 9.0);
  double vhat = oracles::variance_of(totals);
  CHECK(vhat == doctest::Approx(limit).epsilon(0.10));
}

TEST_CASE("ipw_process: split on real data (no complete X) is refused") {
  std::vector<PhaseOneRecord> recs = {recu(1.0), recu(2.0)};
  DesignSpec spec = cut_spec({}, {1.0});
  stratify(recs, spec);
  std::vector<Eigen::VectorXd> xs(2, Eigen::VectorXd::Zero(1));
  TwoPhaseSample s = make_two_phase_sample(recs, xs, spec, RngStream(2));
  CHECK_THROWS_AS(ipw_process(
                      s, [](const Eigen::VectorXd&, const PhaseOneRecord&) { return 1.0; }, 1.0,
                      true, nullptr),
                  DataError);
}

TEST_CASE("Glivenko-Cantelli: sup discrepancy halves from N=2000 to N=8000") {
  CoxRightDgp dgp;
  DesignSpec spec = cut_spec({0.3}, {0.8, 0.25});
  RngStream master(77);
  auto median_sup = [&](long N, std::uint64_t tag) {
    std::vector<double> sups;
    for (int r = 0; r < 100; ++r) {
      RngStream rep = master.child(tag).child(static_cast<std::uint64_t>(r));
      std::vector<PhaseOneRecord> recs;
      std::vector<Eigen::VectorXd> xs;
      dgp.generate(N, rep, recs, xs);
      stratify(recs, spec);
      TwoPhaseSample s = make_two_phase_sample(recs, xs, spec, rep.child(1));
      sups.push_back(sup_cdf_discrepancy(
          s, [&](double t) { return dgp.F_Y(t); }, [&](double t) { return dgp.F_Y_left(t); },
          dgp.tau));
    }
    return oracles::median_of(sups);
  };
  double m2000 = median_sup(2000, 1);
  double m8000 = median_sup(8000, 2);
  CHECK(m8000 < 0.6 * m2000);  // target ratio 0.5 plus Monte Carlo slack
}
