#include <cmath>
#include <sstream>

#include "../support/oracles.hpp"
#include "doctest.h"
#include "mvjump/ergodicity.hpp"
#include "mvjump/error.hpp"

using namespace mvjump;

namespace {

ModelConfig mvou(double a = 0.1, double beta = 0.01, double gamma = 0.01) {
  return {"mvou-jump", {{"a", a}, {"beta", beta}, {"s0sq", 0.005}, {"gamma", gamma}, {"rho", 0.01}}, {}, {}};
}

const ModelConfig kZero{"zero", {}, {}, {}};

}  // namespace

TEST_CASE("stationary estimates") {
  const auto zero = build_system(kZero);
  const auto z = estimate_stationary(zero, 50, 0.1, 5.0, 1);
  for (double v : z.cloud.points()) CHECK(v == 0.0);
  CHECK(z.stationary);
  CHECK(z.lags == std::vector<double>{1.0, 2.0, 4.0});

  const auto canon = build_system(mvou());
  const auto c = estimate_stationary(canon, 4000, 0.01, 40.0, 2);
  const auto st = oracle::sample_stats(c.cloud.points());
  CHECK(std::abs(st.mean) <= 3 * st.mean_se);
  CHECK(std::abs(st.m2 - 0.0250005) <= 3 * st.m2_se + 0.05 * 0.01);
  CHECK(c.stationary);
  CHECK(c.increments.size() == 4);

  const auto ou = build_system(mvou(0.1, 0.0, 0.0));
  const auto o = estimate_stationary(ou, 4000, 0.01, 40.0, 3);
  const auto so = oracle::sample_stats(o.cloud.points());
  CHECK(std::abs(so.m2 - so.mean * so.mean - 0.005 / 0.2) <= 3 * so.m2_se + 0.05 * 0.01);

  const auto drifting = build_system({"linear", {}, {{"A", {-0.1}}, {"c_t", {1.0}}}, {}});
  CHECK_THROWS_AS(estimate_stationary(drifting, 10, 0.1, 1.0, 0), InvalidArgument);
}

TEST_CASE("base decay curve") {
  const auto canon = build_system(mvou());
  const std::size_t n = 1024;
  const auto st = estimate_stationary(canon, n, 0.01, 40.0, 100);
  const TimeGrid g(0, 20, 0.01);
  const double lambda = 0.169994;
  const auto c = decay_curve(canon, InitialLaw::dirac({1.0}), st, g, n, {1, 2, 3}, lambda);
  REQUIRE(c.times.size() == 20);
  CHECK(c.times.back() == 20.0);
  CHECK(c.dominated());
  CHECK(c.fitted_rate >= lambda);
  for (double v : c.w2sq) CHECK(v >= 0.0);
  // Pair distance is non-increasing (up to noise) for the contracting coupling.
  for (std::size_t j = 1; j < c.pair_distance.size(); ++j) CHECK(c.pair_distance[j] <= c.pair_distance[j - 1] * 1.01);

  // Starting at the stationary cloud, the common-noise twin is the same system.
  const auto self = decay_curve(canon, InitialLaw::cloud(st.cloud), st, g, n, {5}, lambda);
  for (double v : self.pair_distance) CHECK(v == 0.0);
  CHECK(std::isinf(self.fitted_rate));
  for (double v : self.w2sq) CHECK(v <= 0.05 * 0.025);

  const auto ou = build_system(mvou(0.1, 0.0, 0.0));
  const auto ost = estimate_stationary(ou, 256, 0.01, 30.0, 7);
  DecayOptions o;
  o.checkpoints = 10;
  const auto oc = decay_curve(ou, InitialLaw::dirac({2.0}), ost, TimeGrid(0, 10, 0.01), 256, {1}, 0.2, o);
  CHECK(std::abs(oc.fitted_rate - 0.2) <= 0.15 * 0.2);

  CHECK_THROWS_AS(decay_curve(canon, InitialLaw::dirac({1.0}), st, g, n + 1, {1}, lambda), InvalidArgument);
  CHECK_THROWS_AS(decay_curve(canon, InitialLaw::dirac({1.0}), st, TimeGrid(0, 1, 0.3 / 7), n, {1}, lambda),
                  InvalidArgument);
}

TEST_CASE("distance options") {
  const auto a = EmpiricalMeasure::from_rows({{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}});
  const auto b = EmpiricalMeasure::from_rows({{0.0, 0.1}, {1.0, 0.1}, {0.0, 1.1}});
  CHECK(cloud_w2_squared(a.view(), b.view()) == doctest::Approx(0.01));
  DistanceOptions tight;
  tight.assignment_cap = 2;
  CHECK_THROWS_AS(cloud_w2_squared(a.view(), b.view(), tight), InvalidArgument);
  tight.allow_sliced = true;
  CHECK(cloud_w2_squared(a.view(), b.view(), tight) <= 0.01 + 1e-12);
}

TEST_CASE("coupled bound branches") {
  const ModelPair canon = build_model({mvou(), mvou(), std::nullopt});
  const auto one = EmpiricalMeasure::from_rows({{0.0}});
  const auto b = coupled_bound(canon, 1.0, 1.0, one, one);
  CHECK_FALSE(b.equal_rates);
  CHECK(b.lambda == doctest::Approx(0.169994));
  CHECK(b.lambda_hat == doctest::Approx(0.179997));
  const double t = 3.0;
  CHECK(b(t) == doctest::Approx(2 * std::exp(-b.lambda_hat * t) +
                                b.factor * 2 * (std::exp(-b.lambda * t) - std::exp(-b.lambda_hat * t)) /
                                    (b.lambda_hat - b.lambda)));
  const ModelPair tuned = build_model({mvou(), mvou(0.0949985), std::nullopt});
  const auto e = coupled_bound(tuned, 1.0, 1.0, one, one);
  CHECK(e.equal_rates);
  CHECK(e(t) == doctest::Approx(2 * std::exp(-e.lambda_hat * t) + e.factor * 2 * t * std::exp(-e.lambda_hat * t)));
  // The two branches agree in the limit.
  CoupledBound near = b;
  near.lambda_hat = b.lambda * (1 + 1e-7);
  CoupledBound same = near;
  same.equal_rates = true;
  CHECK(near(t) == doctest::Approx(same(t)).epsilon(1e-6));
}

TEST_CASE("coupled decay") {
  const ModelPair zhat = build_model({mvou(), kZero, std::nullopt});
  const std::size_t n = 512;
  const auto bst = estimate_stationary(zhat.base, n, 0.01, 30.0, 1);
  const auto zst = estimate_hat_stationary(zhat.hat, bst.cloud, n, 0.01, 5.0, 1);
  DecayOptions o;
  o.checkpoints = 10;
  const TimeGrid g(0, 10, 0.01);
  const auto zc = coupled_decay(zhat, {0.0}, InitialLaw::dirac({1.0}), bst, zst, g, n, {1, 2}, o);
  for (double v : zc.w2sq) CHECK(v == 0.0);

  const ModelPair canon = build_model({mvou(), mvou(), std::nullopt});
  const auto hst = estimate_hat_stationary(canon.hat, bst.cloud, n, 0.01, 30.0, 2);
  const auto st = oracle::sample_stats(hst.cloud.points());
  CHECK(std::abs(st.m2 - 0.0250005) <= 3 * st.m2_se + 0.05 * 0.01);
  const auto cc = coupled_decay(canon, {1.0}, InitialLaw::dirac({1.0}), bst, hst, TimeGrid(0, 20, 0.01), n, {3, 4, 5}, o);
  CHECK(cc.branch == "distinct");
  CHECK(cc.dominated());

  const ModelPair tuned = build_model({mvou(), mvou(0.0949985), std::nullopt});
  const auto tst = estimate_hat_stationary(tuned.hat, bst.cloud, n, 0.01, 30.0, 2);
  const auto tc = coupled_decay(tuned, {1.0}, InitialLaw::dirac({1.0}), bst, tst, TimeGrid(0, 20, 0.01), n, {3, 4}, o);
  CHECK(tc.branch == "equal");
  CHECK(tc.dominated());

  // Lockstep stepping reproduces the two-stage coupled solve.
  SimulationOptions so;
  so.seed = 3;
  const auto cf = simulate_coupled(canon, InitialLaw::dirac({1.0}), InitialLaw::dirac({1.0}), n, n, TimeGrid(0, 20, 0.01), so);
  CHECK(cloud_w2_squared(cf.hat.flow.view(200), hst.cloud.view()) ==
        coupled_decay(canon, {1.0}, InitialLaw::dirac({1.0}), bst, hst, TimeGrid(0, 20, 0.01), n, {3}, o).w2sq[0]);
}

TEST_CASE("flow property") {
  const GapTolerance loose{5.0, 0.1};
  for (const ModelConfig& c : {kZero, ModelConfig{"const-drift", {}, {{"v", {0.5}}}, {}}}) {
    const ModelPair p = build_model({c, kZero, std::nullopt});
    const auto rep = flow_property_check(p, InitialLaw::gaussian({0.0}, {1.0}), InitialLaw::gaussian({0.0}, {1.0}), 1.0,
                                         2.0, 0.01, 64, {1, 2}, {});
    for (const auto& r : rep.rows) {
      CHECK(r.base_gap == 0.0);
      CHECK(r.hat_gap == 0.0);
    }
    CHECK(rep.pass);
  }
  const ModelPair canon = build_model({mvou(), mvou(), std::nullopt});
  const auto rep = flow_property_check(canon, InitialLaw::dirac({1.0}), InitialLaw::dirac({0.5}), 2.0, 4.0, 0.01, 512,
                                       {1, 2}, loose);
  CHECK(rep.pass);
  for (const auto& r : rep.rows) {
    CHECK(r.base_gap > 0.0);
    CHECK(r.hat_gap > 0.0);
  }
  CHECK_THROWS_AS(flow_property_check(canon, InitialLaw::dirac({1.0}), InitialLaw::dirac({0.5}), 4.0, 4.0, 0.01, 8, {1},
                                      loose),
                  InvalidArgument);
}

TEST_CASE("product-form limit") {
  const ModelPair zz = build_model({kZero, kZero, std::nullopt});
  const std::size_t n = 64;
  const auto bst = estimate_stationary(zz.base, n, 0.1, 2.0, 1);
  const auto hst = estimate_hat_stationary(zz.hat, bst.cloud, n, 0.1, 2.0, 1);
  DecayOptions o;
  o.checkpoints = 4;
  const auto battery = default_cylindrical_battery(1);
  const auto z = ergodicity_equivalence_report(zz, {0.0}, InitialLaw::dirac({0.0}), bst, hst, TimeGrid(0, 2, 0.1), n, 1,
                                               battery, 0.0, o);
  for (const auto& r : z.rows) CHECK(r.gap == 0.0);
  CHECK(z.pass);

  const ModelPair canon = build_model({mvou(), mvou(), std::nullopt});
  const std::size_t m = 256;
  const auto cb = estimate_stationary(canon.base, m, 0.01, 30.0, 1);
  const auto ch = estimate_hat_stationary(canon.hat, cb.cloud, m, 0.01, 30.0, 1);
  const TestFunction phi = default_battery(1)[3];
  const CylindricalFunction zeta_only{"z", TestFunction::one(1), OuterFunction::quadratic({0.0}, {2.0}), {phi}};
  const auto rep = ergodicity_equivalence_report(canon, {1.0}, InitialLaw::dirac({1.0}), cb, ch, TimeGrid(0, 10, 0.01), m,
                                                 4, {zeta_only}, 1.0, o);
  // Re-run the base system to reproduce mu_t(phi) at the checkpoints.
  SimulationOptions so;
  so.seed = 4;
  const auto flow = simulate_mv(canon.base, InitialLaw::dirac({1.0}), m, TimeGrid(0, 10, 0.01), so).flow;
  const double limit = std::pow(integrate(cb.cloud.view(), [&](auto x) { return phi.value(x); }), 2);
  for (std::size_t j = 0; j < rep.rows.size(); ++j) {
    const auto k = *flow.grid().index_of(rep.rows[j].t);
    const double r = integrate(flow.view(k), [&](auto x) { return phi.value(x); });
    CHECK(rep.rows[j].gap == doctest::Approx(std::abs(r * r - limit)).epsilon(1e-12));
  }
  for (std::size_t j = 1; j < rep.base_w2sq.size(); ++j) CHECK(rep.base_w2sq[j] <= rep.base_w2sq[0]);
}

TEST_CASE("ergodicity output formats") {
  DecayCurve c;
  c.times = {1.0};
  c.w2sq = {0.5};
  c.bound = {2.0};
  c.se = {0.01};
  c.pair_distance = {0.25};
  std::ostringstream a, b, p;
  write_decay_csv(a, c);
  write_coupling_csv(b, c);
  write_decay_plot_script(p, "decay.csv", "base");
  CHECK(a.str() == "t,w2sq,bound,se\n1,0.5,2,0.01\n");
  CHECK(b.str() == "t,pair_distance\n1,0.25\n");
  CHECK(p.str().find("set logscale y") != std::string::npos);
  CHECK(p.str().find("'decay.csv'") != std::string::npos);
}
