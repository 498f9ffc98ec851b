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

#include "pfd/exact_oracle.hpp"
#include "pfd/reference_models.hpp"
#include "test_support.hpp"

using namespace pfd;
using namespace pfd::testing;

namespace {

double max_abs(const DMat& a) { return a.size() ? a.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("uniform model keeps the predictor uniform") {
  const GridModel u = uniform_grid(4, 3);
  for (const auto& st : exact_derivative(u, u.default_theta(), {0, 2, 1, 1, 0})) {
    CHECK((st.P.array() - 0.25).abs().maxCoeff() < 1e-15);
    CHECK(max_abs(st.Q) == 0.0);
  }
}

TEST_CASE("one Bayes-then-propagate step by hand") {
  const GridModel m = table_grid(2, 2, {0.7, 0.3, 0.4, 0.6}, {0.8, 0.2, 0.25, 0.75}, {0.45, 0.55}, 1, 0.5, 4);
  const ThetaVec th{0.3};
  const auto tab = m.tables(th);
  const Obs y0 = 1;
  const double a0 = tab.init_prob[0] * tab.emis_prob[0 * 2 + y0];
  const double a1 = tab.init_prob[1] * tab.emis_prob[1 * 2 + y0];
  const double p0 = (a0 * tab.trans_prob[0] + a1 * tab.trans_prob[2]) / (a0 + a1);
  const auto st = exact_filter(m, th, {y0, 0});
  REQUIRE(st.size() == 2);
  CHECK(std::abs(st[0].P[0] - tab.init_prob[0]) < 1e-15);
  CHECK(std::abs(st[1].P[0] - p0) < 1e-14);
  CHECK(std::abs(st[1].P[1] - (1.0 - p0)) < 1e-14);
}

TEST_CASE("base case and theta-free model") {
  const GridModel m = grid5();
  const ThetaVec th = m.default_theta();
  const auto st = exact_derivative(m, th, {2});
  REQUIRE(st.size() == 1);
  CHECK((st[0].P - initial_law(m, th)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(max_abs(st[0].Q - initial_derivative_measure(m, th)) < 1e-15);
  const auto pb = path_bruteforce(m, th, {2});
  CHECK((pb.P - st[0].P).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(max_abs(pb.Q - st[0].Q) < 1e-15);

  const GridModel flat = table_grid(3, 2, {0.5, 0.3, 0.2, 0.1, 0.6, 0.3, 0.3, 0.3, 0.4}, {0.5, 0.5, 0.2, 0.8, 0.7, 0.3},
                                    {0.2, 0.3, 0.5});
  for (const auto& s : exact_derivative(flat, flat.default_theta(), {0, 1, 1, 0})) CHECK(max_abs(s.Q) == 0.0);
  for (const auto& q : fd_derivative(flat, flat.default_theta(), {0, 1, 1, 0}, 1e-4)) CHECK(max_abs(q) == 0.0);
}

TEST_CASE("eight two-state paths by hand") {
  const GridModel m = table_grid(2, 2, {0.7, 0.3, 0.4, 0.6}, {0.8, 0.2, 0.25, 0.75}, {0.45, 0.55}, 2, 0.6, 3);
  const ThetaVec th{0.2, -0.4};
  const std::vector<Obs> ys = {1, 0, 1};
  double R[2] = {0, 0};
  DVec T[2] = {DVec::Zero(2), DVec::Zero(2)};
  for (std::size_t x0 = 0; x0 < 2; ++x0)
    for (std::size_t x1 = 0; x1 < 2; ++x1)
      for (std::size_t x2 = 0; x2 < 2; ++x2) {
        const double p1 = m.transition_density(th, x0, x1), p2 = m.transition_density(th, x1, x2);
        const double q0 = m.obs_density(th, ys[0], x0), q1 = m.obs_density(th, ys[1], x1);
        const double w = m.initial_density(th, x0) * m.state_mass(x0) * q0 * p1 * m.state_mass(x1) * q1 * p2 *
                         m.state_mass(x2);
        const DVec score = m.initial_log_grad(th, x0) + m.obs_grad(th, ys[0], x0) / q0 +
                           m.transition_grad(th, x0, x1) / p1 + m.obs_grad(th, ys[1], x1) / q1 +
                           m.transition_grad(th, x1, x2) / p2;
        R[x2] += w;
        T[x2] += w * score;
      }
  const double Rbar = R[0] + R[1];
  const DVec Tbar = T[0] + T[1];
  const auto pb = path_bruteforce(m, th, ys);
  const auto ex = exact_derivative(m, th, ys);
  for (std::size_t x = 0; x < 2; ++x) {
    const double P = R[x] / Rbar;
    const DVec Q = T[x] / Rbar - P * Tbar / Rbar;
    CHECK(std::abs(pb.P[x] - P) < 1e-14);
    CHECK((pb.Q.col(x) - Q).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(std::abs(ex[2].P[x] - P) < 1e-14);
    CHECK((ex[2].Q.col(x) - Q).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("recursion, brute force and finite differences agree (property)") {
  RandomStream rng(StreamId{31, StreamPurpose::kProbe, 0, 0, 0});
  for (int trial = 0; trial < 30; ++trial) {
    const GridModel m = random_grid(4, 3, 2, 100 + trial);
    const ThetaVec th = random_theta(m.theta_box(), rng);
    const auto ys = random_obs(3, 4, rng);
    const auto ex = exact_derivative(m, th, ys);
    const auto filt = exact_filter(m, th, ys);
    const auto pb = path_bruteforce(m, th, ys);
    CHECK((ex.back().P - pb.P).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(max_abs(ex.back().Q - pb.Q) < 1e-10);
    CHECK((filt.back().P - pb.P).cwiseAbs().maxCoeff() < 1e-12);
    const auto fd = fd_derivative(m, th, ys, 1e-5);
    for (std::size_t k = 0; k < ex.size(); ++k) {
      CHECK(max_abs(fd[k] - ex[k].Q) / max_abs(ex[k].Q) < 1e-4);
      CHECK(fd[k].rowwise().sum().cwiseAbs().maxCoeff() < 1e-8);
      CHECK(std::abs(ex[k].P.sum() - 1.0) < 1e-12);
      CHECK(ex[k].P.minCoeff() >= 0.0);
      CHECK(ex[k].Q.rowwise().sum().cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("finite-difference error shrinks like h squared") {
  const GridModel m = grid5();
  const ThetaVec th = m.default_theta();
  const auto ys = simulate(m, th, 6, 3).obs;
  const auto ex = exact_derivative(m, th, ys);
  double err[3];
  const double hs[3] = {1e-3, 1e-4, 1e-5};
  for (int i = 0; i < 3; ++i) {
    const auto fd = fd_derivative(m, th, ys, hs[i]);
    err[i] = 0.0;
    for (std::size_t k = 0; k < ex.size(); ++k) err[i] = std::max(err[i], max_abs(fd[k] - ex[k].Q));
  }
  CHECK(err[1] < err[0] / 30.0);
  CHECK(err[2] < err[1]);
  CHECK_THROWS_AS(fd_derivative(m, ThetaVec{0.2, -0.3, 0.99999}, ys, 1e-4), ParameterError);
}

TEST_CASE("renormalization is inert") {
  const GridModel m = grid5();
  const ThetaVec th = m.default_theta();
  const auto ys = simulate(m, th, 40, 8).obs;
  const auto a = exact_derivative(m, th, ys, true);
  const auto b = exact_derivative(m, th, ys, false);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK((a[k].P - b[k].P).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(max_abs(a[k].Q - b[k].Q) < 1e-10);
  }
  const auto t = tangent_recursion(m, th, ys, initial_law(m, th), initial_derivative_measure(m, th));
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(max_abs(a[k].Q - t[k].Q) == 0.0);
}

TEST_CASE("filter and derivative forget their initial conditions") {
  const GridModel m = grid5();
  const ThetaVec th = m.default_theta();
  const std::size_t S = m.state_count();
  const auto ys = simulate(m, th, 300, 21).obs;
  DVec point = DVec::Zero(static_cast<Eigen::Index>(S));
  point[0] = 1.0;
  const DVec flat = DVec::Constant(static_cast<Eigen::Index>(S), 1.0 / static_cast<double>(S));
  const DMat zero = DMat::Zero(3, static_cast<Eigen::Index>(S));
  const auto a = tangent_recursion(m, th, ys, point, zero);
  const auto b = tangent_recursion(m, th, ys, flat, initial_derivative_measure(m, th));
  double prev = INFINITY;
  std::size_t below = 0;
  for (std::size_t k = 0; k <= 200; ++k) {
    const double tv = tv_distance(a[k].P, b[k].P);
    if (tv < 1e-13) break;  // round-off floor of the two recursions
    CHECK(std::log(tv) < std::log(prev));
    prev = tv;
    if (!below && tv < 1e-8) below = k;
  }
  CHECK(below > 0);
  CHECK(below < 200);
  std::size_t dbelow = 0;
  for (std::size_t k = 0; k <= 300 && !dbelow; ++k)
    if (signed_tv_distance(a[k].Q, b[k].Q) < 1e-6) dbelow = k;
  CHECK(dbelow > 0);
  CHECK(dbelow < 300);
}

TEST_CASE("tangent mass grows at most linearly") {
  const GridModel m = grid5();
  const ThetaVec th = m.default_theta();
  const auto ys = simulate(m, th, 100, 5).obs;
  const DMat z0 = initial_derivative_measure(m, th);
  const double zn = z0.cwiseAbs().sum();
  const auto st = exact_derivative(m, th, ys);
  double early = 0.0, late = 0.0;
  for (std::size_t k = 1; k <= 100; ++k) {
    const double g = st[k].H_mass.cwiseAbs().maxCoeff() / (static_cast<double>(k) + zn);
    (k <= 50 ? early : late) = std::max(k <= 50 ? early : late, g);
  }
  CHECK(late <= early);
}

TEST_CASE("exact predictive score matches differences of the log likelihood") {
  const GridModel m = grid5();
  const ThetaVec th = m.default_theta();
  const auto ys = simulate(m, th, 5, 6).obs;
  auto loglik = [&](const ThetaVec& t) {
    const auto f = exact_filter(m, t, ys);
    double s = 0.0;
    for (std::size_t x = 0; x < m.state_count(); ++x) s += f[5].P[static_cast<Eigen::Index>(x)] * m.obs_density(t, ys[5], x);
    return std::log(s);
  };
  const auto ex = exact_derivative(m, th, ys);
  const DVec score = exact_predictive_score(m, th, ex[5], ys[5]);
  for (std::size_t k = 0; k < 3; ++k) {
    const double fd = (loglik(th.shifted(k, 1e-5)) - loglik(th.shifted(k, -1e-5))) / 2e-5;
    CHECK(std::abs(fd - score[static_cast<Eigen::Index>(k)]) < 1e-7);
  }
}

TEST_CASE("brute force enumeration guard and csv shape") {
  const GridModel m = grid5();
  CHECK_THROWS_AS(path_bruteforce(m, m.default_theta(), std::vector<Obs>(9, 0)), SizeError);
  std::ostringstream os;
  write_oracle_csv(os, exact_derivative(m, m.default_theta(), std::vector<Obs>(6, 1)));
  std::size_t lines = 0;
  for (char c : os.str()) lines += c == '\n';
  CHECK(lines == 1 + 6 * 5);
  CHECK(os.str().rfind("n,state,P,Q_1,Q_2,Q_3\n", 0) == 0);
}

}  // TEST_SUITE
