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

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "pfd/reference_models.hpp"
#include "test_support.hpp"

using namespace pfd;
using namespace pfd::testing;

namespace {

// Forwards to a grid model but perturbs one transition gradient entry.
class CorruptedGrid {
 public:
  using State = std::size_t;
  using Kernel = GridModel::Kernel;
  explicit CorruptedGrid(GridModel m) : m_(std::move(m)) {}
  std::string name() const { return m_.name(); }
  std::size_t theta_dim() const { return m_.theta_dim(); }
  const ThetaBox& theta_box() const { return m_.theta_box(); }
  ThetaVec default_theta() const { return m_.default_theta(); }
  std::size_t obs_count() const { return m_.obs_count(); }
  std::size_t state_count() const { return m_.state_count(); }
  double state_mass(std::size_t x) const { return m_.state_mass(x); }
  bool contains_state(State x) const { return m_.contains_state(x); }
  double transition_density(const ThetaVec& t, State x, State xn) const { return m_.transition_density(t, x, xn); }
  DVec transition_grad(const ThetaVec& t, State x, State xn) const {
    DVec g = m_.transition_grad(t, x, xn);
    if (x == 1 && xn == 2) g[0] += 0.05;
    return g;
  }
  double obs_density(const ThetaVec& t, Obs y, State x) const { return m_.obs_density(t, y, x); }
  DVec obs_grad(const ThetaVec& t, Obs y, State x) const { return m_.obs_grad(t, y, x); }
  double initial_density(const ThetaVec& t, State x) const { return m_.initial_density(t, x); }
  DVec initial_log_grad(const ThetaVec& t, State x) const { return m_.initial_log_grad(t, x); }
  DVec initial_weight_mean(const ThetaVec& t) const { return m_.initial_weight_mean(t); }
  State sample_initial(const ThetaVec& t, RandomStream& r) const { return m_.sample_initial(t, r); }
  State sample_transition(const ThetaVec& t, State x, RandomStream& r) const { return m_.sample_transition(t, x, r); }
  Obs sample_obs(const ThetaVec& t, State x, RandomStream& r) const { return m_.sample_obs(t, x, r); }
  Kernel kernel(const ThetaVec& t, Obs y) const { return m_.kernel(t, y); }

 private:
  GridModel m_;
};

static_assert(FiniteStateModel<CorruptedGrid>);

double chi_square_critical_1pct(std::size_t dof) {
  // Wilson-Hilferty approximation of the 99% quantile.
  const double k = static_cast<double>(dof);
  const double z = 2.326347874;
  const double a = 2.0 / (9.0 * k);
  return k * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("kernel products of tabulated densities") {
  const GridModel u4 = table_grid(4, 1, std::vector<double>(16, 0.25), std::vector<double>(4, 1.0),
                                  std::vector<double>(4, 0.25));
  const auto ku = u4.kernel(u4.default_theta(), 0);
  double g[1];
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) CHECK(ku.eval(a, b, g) == doctest::Approx(0.25).epsilon(1e-15));

  const GridModel two = table_grid(2, 2, {0.9, 0.1, 0.2, 0.8}, {0.8, 0.2, 0.3, 0.7}, {0.5, 0.5});
  const auto k2 = two.kernel(two.default_theta(), 0);
  CHECK(k2.eval(0, 0, g) == doctest::Approx(0.72).epsilon(1e-14));
  CHECK(g[0] == 0.0);

  const GridModel flat = table_grid(3, 2, {0.5, 0.3, 0.2, 0.1, 0.6, 0.3, 0.3, 0.3, 0.4}, std::vector<double>(6, 0.5),
                                    {0.2, 0.3, 0.5});
  const auto kf = flat.kernel(flat.default_theta(), 1);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      CHECK(kf.eval(a, b, g) == doctest::Approx(0.5 * flat.transition_density(flat.default_theta(), a, b)));
}

TEST_CASE("theta-free model has zero gradients and zero initial weight") {
  const GridModel m = table_grid(2, 2, {0.9, 0.1, 0.2, 0.8}, {0.8, 0.2, 0.3, 0.7}, {0.4, 0.6}, 2);
  const ThetaVec th{0.3, -0.2};
  for (std::size_t x = 0; x < 2; ++x) {
    CHECK(m.initial_log_grad(th, x).cwiseAbs().maxCoeff() == 0.0);
    for (std::size_t xn = 0; xn < 2; ++xn) CHECK(m.transition_grad(th, x, xn).cwiseAbs().maxCoeff() == 0.0);
    CHECK(m.obs_grad(th, 0, x).cwiseAbs().maxCoeff() == 0.0);
  }
  const auto rep = grad_consistency_check(m, th, 1e-5, 1e-6);
  CHECK(rep.pass);
  CHECK(rep.max_error == 0.0);
}

TEST_CASE("logistic cell gradient is one minus the stay probability") {
  const GridModel m = grid2();
  for (double t : {-2.0, -0.5, 0.0, 1.0, 2.2}) {
    const ThetaVec th{t};
    const double p = 1.0 / (1.0 + std::exp(-t));
    const auto tab = m.tables(th);
    CHECK(tab.trans_prob[0] == doctest::Approx(p).epsilon(1e-14));
    const double dens = m.transition_density(th, 0, 0);
    const double dlog = m.transition_grad(th, 0, 0)[0] / dens;
    CHECK(dlog == doctest::Approx(1.0 - p).epsilon(1e-13));
  }
}

TEST_CASE("softmax initial law has weight delta_ij - l_j") {
  GridSpec spec;
  spec.name = "init-softmax";
  spec.states = 3;
  spec.obs_alphabet = 2;
  spec.theta_dim = 3;
  spec.box = ThetaBox::symmetric(3, 1.0);
  spec.default_theta = spec.box.center();
  spec.transition = {3, 3, std::vector<double>(9, 0.0), std::vector<double>(27, 0.0)};
  spec.emission = {3, 2, std::vector<double>(6, 0.0), std::vector<double>(18, 0.0)};
  spec.initial = {1, 3, {0.1, -0.2, 0.3}, std::vector<double>(9, 0.0)};
  for (std::size_t k = 0; k < 3; ++k) spec.initial.coef[(k * 1 + 0) * 3 + k] = 1.0;
  const GridModel m(spec);
  const ThetaVec th{0.4, -0.5, 0.2};
  const auto tab = m.tables(th);
  for (std::size_t i = 0; i < 3; ++i) {
    const DVec w = m.initial_log_grad(th, i);
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(w[static_cast<Eigen::Index>(j)] == doctest::Approx((i == j ? 1.0 : 0.0) - tab.init_prob[j]).epsilon(1e-14));
  }
  CHECK(m.initial_weight_mean(th).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("initial weight integrates to zero on shipped grids") {
  for (const GridModel& m : {grid5(), grid2()})
    CHECK(m.initial_weight_mean(m.default_theta()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("rows normalize at random theta (property)") {
  RandomStream rng(StreamId{17, StreamPurpose::kProbe, 0, 0, 0});
  for (const GridModel& m : {grid5(), grid2(), random_grid(4, 3, 2, 5)}) {
    for (int trial = 0; trial < 25; ++trial) {
      const ThetaVec th = random_theta(m.theta_box(), rng, 0.999);
      const std::size_t S = m.state_count(), A = m.obs_count();
      for (std::size_t x = 0; x < S; ++x) {
        double ps = 0.0, qs = 0.0;
        for (std::size_t xn = 0; xn < S; ++xn) ps += m.transition_density(th, x, xn) * m.state_mass(xn);
        for (Obs y = 0; y < A; ++y) qs += m.obs_density(th, y, x) * m.obs_mass(y);
        CHECK(std::abs(ps - 1.0) < 1e-12);
        CHECK(std::abs(qs - 1.0) < 1e-12);
      }
    }
  }
}

TEST_CASE("analytic gradients match central differences") {
  for (const GridModel& m : {grid5(), grid2(), random_grid(4, 3, 2, 5)}) {
    const auto rep = grad_consistency_check(m, m.default_theta(), 1e-5, 1e-6);
    INFO(rep.describe());
    CHECK(rep.pass);
    const auto fine = grad_consistency_check(m, m.default_theta(), 1e-6, 1e-6);
    CHECK(fine.pass);
  }
  const IntervalModel iv = make_interval_model(0.1, 0.2, 2, 3);
  const auto rep = grad_consistency_check(iv, iv.default_theta(), 1e-5, 1e-6, 3, 200);
  INFO(rep.describe());
  CHECK(rep.pass);
}

TEST_CASE("corrupted gradient is caught and located") {
  const CorruptedGrid bad(random_grid(3, 2, 1, 9));
  const auto rep = grad_consistency_check(bad, bad.default_theta(), 1e-5, 1e-6);
  CHECK_FALSE(rep.pass);
  CHECK(rep.worst_quantity == "transition");
  CHECK(rep.worst_x == 1.0);
  CHECK(rep.worst_other == 2.0);
  CHECK(rep.worst_coord == 0);
}

TEST_CASE("mixing check examples") {
  const GridModel ones = table_grid(1, 1, {1.0}, {1.0}, {1.0});
  const auto r1 = mixing_check(ones, {ones.default_theta()}, 0, 0);
  CHECK(r1.violations.empty());
  CHECK(r1.eps_hat == 1.0 - kEpsTolerance);

  const GridModel two = table_grid(2, 2, {0.9, 0.1, 0.3, 0.7}, {0.6, 0.4, 0.2, 0.8}, {0.5, 0.5});
  const auto r2 = mixing_check(two, {two.default_theta()}, 0, 0);
  CHECK(r2.ok());
  CHECK(r2.eps_hat == doctest::Approx(0.1).epsilon(1e-14));

  GridSpec spec = two.spec();
  spec.transition.base[1] = -std::numeric_limits<double>::infinity();
  const GridModel holed(spec);
  const auto r3 = mixing_check(holed, {holed.default_theta()}, 0, 0);
  CHECK_FALSE(r3.violations.empty());
  CHECK(r3.eps_hat == 0.0);
  CHECK_THROWS_AS(box_density_floor(spec), ParameterError);
}

TEST_CASE("grid5 eps_hat equals the table minimum and holds at the box corners") {
  const GridModel m = grid5();
  const ThetaVec th = m.default_theta();
  const auto tab = m.tables(th);
  double eps = 1.0;
  for (double v : tab.trans_dens) eps = std::min({eps, v, 1.0 / v});
  for (double v : tab.emis_dens) eps = std::min({eps, v, 1.0 / v});
  const auto rep = mixing_check(m, {th}, 0, 0);
  CHECK(rep.eps_hat == doctest::Approx(eps).epsilon(1e-15));

  const auto corners = m.theta_box().corners(1e-9);
  const auto rc = mixing_check(m, corners, 0, 0);
  CHECK(rc.ok());
  CHECK(rc.eps_hat >= m.spec().eps_floor);
  for (const auto& c : corners) {
    const auto t = m.tables(c);
    for (double v : t.trans_dens) CHECK((v >= rc.eps_hat && v <= 1.0 / rc.eps_hat));
    for (double v : t.emis_dens) CHECK((v >= rc.eps_hat && v <= 1.0 / rc.eps_hat));
  }
}

TEST_CASE("symmetric two-state grid is doubly stochastic at theta = 0") {
  const GridModel m = table_grid(2, 2, {0.7, 0.3, 0.3, 0.7}, {0.6, 0.4, 0.4, 0.6}, {0.5, 0.5}, 1, 0.4);
  const auto tab = m.tables(ThetaVec{0.0});
  CHECK(tab.trans_prob[0] + tab.trans_prob[2] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(tab.trans_prob[1] + tab.trans_prob[3] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("grid transition sampler matches the table (chi-square)") {
  const GridModel m = grid5();
  const ThetaVec th = m.default_theta();
  const auto tab = m.tables(th);
  const std::size_t S = m.state_count(), draws = 100000;
  for (std::size_t x = 0; x < S; ++x) {
    std::vector<double> counts(S, 0.0);
    for (std::size_t i = 0; i < draws; ++i) {
      RandomStream rng(StreamId{21, StreamPurpose::kProbe, static_cast<std::uint32_t>(x), 0,
                                static_cast<std::uint32_t>(i)});
      counts[m.sample_transition(th, x, rng)] += 1.0;
    }
    double chi2 = 0.0;
    for (std::size_t xn = 0; xn < S; ++xn) {
      const double e = static_cast<double>(draws) * tab.trans_prob[x * S + xn];
      chi2 += (counts[xn] - e) * (counts[xn] - e) / e;
    }
    CHECK(chi2 < chi_square_critical_1pct(S - 1));
  }
}

TEST_CASE("interval transition density integrates to one") {
  const IntervalModel m = make_interval_model(0.1, 0.2, 2, 3);
  const ThetaVec th = m.default_theta();
  for (double x : {0.0, 0.13, 0.5, 0.92, 1.0}) {
    const std::size_t n = 4000;
    const double h = 1.0 / static_cast<double>(n);
    double s = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      s += w * m.transition_density(th, x, static_cast<double>(i) * h);
    }
    CHECK(std::abs(s * h / 3.0 - 1.0) < 1e-8);
  }
  const IntervalModel uni = make_interval_model(1.0, 0.2, 1, 3);
  for (double xn : {0.0, 0.3, 0.77, 1.0}) CHECK(uni.transition_density(uni.default_theta(), 0.4, xn) == doctest::Approx(1.0));
}

TEST_CASE("interval transition sampler passes Kolmogorov-Smirnov") {
  const IntervalModel m = make_interval_model(0.1, 0.2, 2, 3);
  const ThetaVec th = m.default_theta();
  const std::size_t n = 100000;
  for (double x : {0.1, 0.8}) {
    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; ++i) {
      RandomStream rng(StreamId{23, StreamPurpose::kProbe, 0, 0, static_cast<std::uint32_t>(i)});
      xs[i] = m.sample_transition(th, x, rng);
    }
    std::sort(xs.begin(), xs.end());
    double dmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double F = m.transition_cdf(th, x, xs[i]);
      dmax = std::max({dmax, std::abs(F - static_cast<double>(i) / n), std::abs(F - static_cast<double>(i + 1) / n)});
    }
    CHECK(dmax < 1.628 / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("simulate: n = 0, determinism and stationary occupancy") {
  const GridModel g5 = grid5();
  const auto t0 = simulate(g5, g5.default_theta(), 0, 5);
  CHECK(t0.states.size() == 1);
  CHECK(t0.obs.size() == 1);
  const auto a = simulate(g5, g5.default_theta(), 50, 5);
  const auto b = simulate(g5, g5.default_theta(), 50, 5);
  CHECK(a.states == b.states);
  CHECK(a.obs == b.obs);

  // p(0|0) = 0.99, p(1|1) = 0.98: stationary mass of state 0 is 2/3.
  const GridModel sticky = table_grid(2, 2, {0.99, 0.01, 0.02, 0.98}, {0.5, 0.5, 0.5, 0.5}, {0.5, 0.5});
  const auto tr = simulate(sticky, sticky.default_theta(), 400000, 9);
  double zeros = 0.0;
  for (auto x : tr.states) zeros += x == 0 ? 1.0 : 0.0;
  CHECK(zeros / static_cast<double>(tr.states.size()) == doctest::Approx(2.0 / 3.0).epsilon(0.03));
}

TEST_CASE("model configs round-trip bit-exactly") {
  for (const auto& name : model_names()) {
    const AnyModel m = make_named_model(name);
    const std::string text = serialize_model(m);
    const AnyModel back = parse_model(text);
    CHECK(serialize_model(back) == text);
    CHECK(model_name(back) == name);
  }
  GridSpec holed = table_grid(2, 2, {0.5, 0.5, 0.5, 0.5}, {0.5, 0.5, 0.5, 0.5}, {0.5, 0.5}).spec();
  holed.transition.base[1] = -std::numeric_limits<double>::infinity();
  const std::string text = serialize_model(GridModel(holed));
  CHECK(serialize_model(parse_model(text)) == text);
}

TEST_CASE("malformed configs are rejected") {
  CHECK_THROWS_AS(parse_model("{"), ConfigError);
  CHECK_THROWS_AS(parse_model("{\"kind\": \"nope\"}"), ConfigError);
  std::string text = serialize_model(grid2());
  const auto pos = text.find("\"states\"");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 8, "\"statez\"");
  CHECK_THROWS_AS(parse_model(text), ConfigError);
  CHECK_THROWS(load_model_ref("no-such-model"));
}

TEST_CASE("shipped model errors") {
  CHECK_THROWS_AS(make_grid_hmm(1, 2, 1, ThetaBox::symmetric(1, 1.0), 1), ParameterError);
  CHECK_THROWS_AS(make_grid_hmm(3, 2, 2, ThetaBox::symmetric(1, 1.0), 1), ParameterError);
  CHECK_THROWS_AS(make_interval_model(0.1, 0.0, 2, 1), ParameterError);
  const GridModel m = grid5();
  CHECK_THROWS_AS(m.tables(ThetaVec{0.0}), ParameterError);
}

}  // TEST_SUITE
