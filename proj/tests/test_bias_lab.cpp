/*
 * Copyright 2026 The pfderiv Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "pfd/bias_lab.hpp"
#include "pfd/errors.hpp"
#include "pfd/reference_models.hpp"

using namespace pfd;

namespace {

BiasRow synthetic_row(std::size_t N, double bias, double se, double l2) {
  BiasRow r;
  r.N = N;
  r.n = 4;
  r.phi = "indicator:0";
  r.target = "derivative:0";
  r.bias = bias;
  r.bias_se = se;
  r.l2 = l2;
  r.l2_se = 1e-6;
  r.replicates = 1000;
  return r;
}

}  // namespace

TEST_SUITE("bias_lab") {

TEST_CASE("test function parsing") {
  const auto ind = parse_phi_spec("indicators", 3);
  REQUIRE(ind.size() == 3);
  CHECK(ind[1].name == "indicator:1");
  CHECK(ind[1].values == std::vector<double>{0.0, 1.0, 0.0});
  const auto one = parse_phi_spec("one", 2);
  REQUIRE(one.size() == 1);
  CHECK(one[0].values == std::vector<double>{1.0, 1.0});
  const auto two = parse_phi_spec("indicator:2", 5);
  REQUIRE(two.size() == 1);
  CHECK(two[0].values[2] == 1.0);
  CHECK_THROWS_AS(parse_phi_spec("indicator:5", 5), ConfigError);
  CHECK_THROWS_AS(parse_phi_spec("indicator:x", 5), ConfigError);
  CHECK_THROWS_AS(parse_phi_spec("cosine", 5), ConfigError);
  CHECK_THROWS_AS(parse_phi_spec("", 5), ConfigError);
}

TEST_CASE("scenario generation and JSON round trip") {
  const GridModel m = grid5();
  const Scenario s0 = make_scenario(m, "grid5", m.default_theta(), 0, 3);
  CHECK(s0.ys.size() == 1);
  const Scenario a = make_scenario(m, "grid5", m.default_theta(), 10, 11);
  const Scenario b = make_scenario(m, "grid5", m.default_theta(), 10, 11);
  CHECK(a.ys.size() == 11);
  const std::string ja = scenario_to_json(a);
  CHECK(ja == scenario_to_json(b));
  const Scenario back = scenario_from_json(ja, m.state_count());
  CHECK(scenario_to_json(back) == ja);
  CHECK(back.phis.size() == 5);
  CHECK_THROWS_AS(scenario_from_json("{\"n\": 3}", 5), ConfigError);
  CHECK_THROWS_AS(make_scenario(m, "grid5", ThetaVec{5.0, 0.0, 0.0}, 3, 1), ParameterError);
}

TEST_CASE("rate fit recovers synthetic slopes") {
  BiasReport rep;
  for (std::size_t N : {10, 20, 40, 80, 160})
    rep.rows.push_back(synthetic_row(N, 2.0 / N, 1e-6, 3.0 / std::sqrt(static_cast<double>(N))));
  const auto fits = fit_rates(rep);
  REQUIRE(fits.size() == 1);
  REQUIRE(fits[0].bias.has_value());
  CHECK(fits[0].bias->slope == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(fits[0].bias_points == 5);
  REQUIRE(fits[0].l2.has_value());
  CHECK(fits[0].l2->slope == doctest::Approx(-0.5).epsilon(1e-12));

  BiasReport quiet;
  for (std::size_t N : {10, 20, 40, 80, 160}) quiet.rows.push_back(synthetic_row(N, 1e-5, 1e-5, 0.1));
  const auto qf = fit_rates(quiet);
  REQUIRE(qf.size() == 1);
  CHECK_FALSE(qf[0].bias.has_value());
  CHECK(qf[0].bias_points == 0);
  const std::string js = rates_to_json(qf);
  CHECK(js.find("bias below noise floor") != std::string::npos);
  CHECK(js.find("null") != std::string::npos);
}

TEST_CASE("constant test function has no filter bias") {
  const GridModel m = grid5();
  const Scenario s = make_scenario(m, "grid5", m.default_theta(), 6, 5, "one");
  const BiasReport rep = bias_sweep(m, s, {10, 20}, 1000, 8);
  for (const auto& r : rep.rows) {
    if (r.target == "filter") {
      CHECK(std::abs(r.bias) < 1e-14);
      CHECK(r.exact == doctest::Approx(1.0));
    } else {
      CHECK(std::abs(r.bias) < 1e-12);
      CHECK(std::abs(r.exact) < 1e-12);
    }
  }
}

TEST_CASE("sweep output does not depend on the thread count") {
  const GridModel m = grid5();
  const Scenario s = make_scenario(m, "grid5", m.default_theta(), 5, 2);
  SweepOptions one, three;
  three.threads = 3;
  std::ostringstream a, b;
  bias_sweep(m, s, {10, 30}, 1000, 4, one).write_csv(a);
  bias_sweep(m, s, {10, 30}, 1000, 4, three).write_csv(b);
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("N,n,phi,target,exact,mean,bias,bias_se,l2,l2_se,replicates\n", 0) == 0);
  // 2 N values x 2 times x 5 indicators x (1 + 3) targets, plus header.
  std::size_t lines = 0;
  for (char c : a.str()) lines += c == '\n';
  CHECK(lines == 81);
}

TEST_CASE("large cloud filter bias is indistinguishable from zero") {
  const GridModel m = grid2();
  const Scenario s = make_scenario(m, "grid2", m.default_theta(), 10, 21);
  SweepOptions opts;
  opts.times = {10};
  const BiasReport rep = bias_sweep(m, s, {5000}, 1000, 22, opts);
  for (const auto& r : rep.rows)
    if (r.target == "filter") CHECK(std::abs(r.bias) < 3.0 * r.bias_se);
  CHECK(rep.monitor.xi_mass_dev < 1e-12);
}

TEST_CASE("sweep errors") {
  const GridModel m = grid5();
  const Scenario s = make_scenario(m, "grid5", m.default_theta(), 4, 2);
  CHECK_THROWS_AS(bias_sweep(m, s, {10}, 999, 1), ParameterError);
  CHECK_THROWS_AS(bias_sweep(m, s, {}, 1000, 1), ParameterError);
  SweepOptions late;
  late.times = {5};
  CHECK_THROWS_AS(bias_sweep(m, s, {10}, 1000, 1, late), ParameterError);
  CHECK_THROWS_AS(uniformity_check(m, s, 10, {2, 4}, 10, 1), ParameterError);
}

TEST_CASE("burn-in and stability trace") {
  CHECK(burn_in_steps(0.435) == 127);
  CHECK_THROWS_AS(burn_in_steps(0.0), ParameterError);
  CHECK_THROWS_AS(burn_in_steps(1.0), ParameterError);
  const GridModel m = grid5();
  const Scenario s = make_scenario(m, "grid5", m.default_theta(), 40, 9);
  const StabilityTrace tr = stability_trace(m, s, 30, {0.0, 1.0, 10.0}, 5);
  CHECK(tr.rows.size() == 3 * 41);
  CHECK(tr.rows[0].scale == 0.0);
  CHECK(tr.rows[0].zeta_norm_tv == 0.0);
  CHECK(tr.rows[41].zeta_norm_tv > 0.0);
  const StabilitySummary sum = summarize_stability(tr, 0.435);
  CHECK(sum.tau_violations == 0);
  CHECK(sum.a_violations == 0);
  CHECK(sum.identity_residual < 1e-10);
  CHECK_THROWS_AS(summarize_stability(tr, 0.435, 2.0), ParameterError);
  CHECK_THROWS_AS(stability_trace(m, s, 30, {}, 5), ParameterError);
}

TEST_CASE("RML demo") {
  const GridModel m = grid2();
  RmlSchedule frozen;
  frozen.a = 0.0;
  const RmlTrace c = rml_demo(m, ThetaVec{1.0}, ThetaVec{0.5}, 50, 20, frozen, 3);
  REQUIRE(c.theta.size() == 51);
  for (const auto& th : c.theta) CHECK(th[0] == 0.5);
  CHECK(c.events.empty());

  RmlSchedule wild;
  wild.a = 1e6;
  const RmlTrace w = rml_demo(m, ThetaVec{1.0}, ThetaVec{0.0}, 30, 20, wild, 3);
  CHECK_FALSE(w.events.empty());
  for (const auto& th : w.theta) CHECK(m.theta_box().contains_with_margin(ThetaVec(th), kRmlMargin * 0.5));
  for (const auto& e : w.events) CHECK(e.raw != e.projected);

  const RmlTrace a = rml_demo(m, ThetaVec{1.0}, ThetaVec{0.0}, 30, 20, RmlSchedule{2.0, 0.6}, 3);
  const RmlTrace b = rml_demo(m, ThetaVec{1.0}, ThetaVec{0.0}, 30, 20, RmlSchedule{2.0, 0.6}, 3);
  std::ostringstream sa, sb;
  a.write_csv(sa);
  b.write_csv(sb);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().rfind("k,theta_0\n", 0) == 0);

  CHECK_THROWS_AS(rml_demo(m, ThetaVec{1.0}, ThetaVec{0.0}, 0, 20, frozen, 3), ParameterError);
  CHECK_THROWS_AS(rml_demo(m, ThetaVec{1.0}, ThetaVec{0.0}, 10, 20, RmlSchedule{-1.0, 0.6}, 3), ParameterError);
  CHECK_THROWS_AS(rml_demo(m, ThetaVec{3.0}, ThetaVec{0.0}, 10, 20, frozen, 3), ParameterError);
}

}  // TEST_SUITE
