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

#include "pfd/empirical_ratio.hpp"
#include "pfd/errors.hpp"

using namespace pfd;

TEST_SUITE("ratio") {

TEST_CASE("alpha and beta examples") {
  const AlphaBeta prop = alpha_beta({0.6, 1.5, 0.3}, {0.4, 1.0, 0.2});
  CHECK(prop.alpha == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(prop.beta == doctest::Approx(5.0));
  const AlphaBeta a = alpha_beta({1.0, 0.0}, {1.0, 1.0});
  CHECK(a.alpha == 1.0);
  CHECK(a.beta == 1.0);
  const AlphaBeta b = alpha_beta({2.0, 1.0}, {2.0, 0.5});
  CHECK(b.alpha == 1.0);
  CHECK(b.beta == 4.0);
  CHECK_THROWS_AS(alpha_beta({1.0, 1.0}, {1.0, 0.0}), DomainError);
  CHECK_THROWS_AS(alpha_beta({1.0}, {1.0, 2.0}), ParameterError);
}

TEST_CASE("proportional functions give a constant ratio") {
  const std::vector<double> g = {0.5, 2.0, 1.0}, f = {1.5, 6.0, 3.0}, xi = {0.2, 0.5, 0.3};
  const RatioStudy st = ratio_mc_study(f, g, xi, {1, 3, 20}, 10000, 4);
  for (const auto& r : st.rows) {
    CHECK(std::abs(r.bias) < 1e-15);
    CHECK(r.l2 < 1e-15);
  }
  CHECK(std::abs(ratio_exact_enumeration(f, g, xi, 3).bias) < 1e-15);
}

TEST_CASE("unit denominator reduces to a sample mean") {
  const std::vector<double> f = {1.0, -0.5, 0.25}, g = {1.0, 1.0, 1.0}, xi = {0.3, 0.3, 0.4};
  double mean = 0.0, sq = 0.0;
  for (std::size_t z = 0; z < 3; ++z) {
    mean += xi[z] * f[z];
    sq += xi[z] * f[z] * f[z];
  }
  const double sd = std::sqrt(sq - mean * mean);
  const RatioStudy st = ratio_mc_study(f, g, xi, {1, 4, 16}, 20000, 6);
  for (const auto& r : st.rows) {
    CHECK(std::abs(r.bias) < 3.0 * r.bias_se);
    CHECK(std::abs(r.l2 - sd / std::sqrt(static_cast<double>(r.k))) < 3.0 * r.l2_se);
  }
}

TEST_CASE("two outcomes: Monte Carlo matches enumeration") {
  const std::vector<double> f = {1.0, 0.0}, g = {2.0, 1.0}, xi = {0.5, 0.5};
  const RatioExact ex = ratio_exact_enumeration(f, g, xi, 1);
  // Target 1/3; outcomes 1/2 and 0.
  CHECK(ex.bias == doctest::Approx(0.25 - 1.0 / 3.0).epsilon(1e-15));
  const RatioStudy st = ratio_mc_study(f, g, xi, {1, 2}, 40000, 9);
  const RatioExact ex2 = ratio_exact_enumeration(f, g, xi, 2);
  CHECK(std::abs(st.rows[0].bias - ex.bias) < 4.0 * st.rows[0].bias_se);
  CHECK(std::abs(st.rows[1].bias - ex2.bias) < 4.0 * st.rows[1].bias_se);
  CHECK(std::abs(st.rows[0].l2 - ex.l2) < 4.0 * st.rows[0].l2_se);
}

TEST_CASE("shipped fixtures respect the bounds at small R") {
  for (const auto& fx : ratio_fixtures()) {
    const RatioStudy st = ratio_mc_study(fx.f, fx.g, fx.xi, {1, 2, 5, 10}, 10000, 11);
    CHECK(st.bounds_hold());
    for (const auto& r : st.rows) {
      const AlphaBeta ab = alpha_beta(fx.f, fx.g);
      CHECK(r.bound_bias == doctest::Approx(2.0 * ab.alpha * ab.beta * ab.beta / static_cast<double>(r.k)));
      CHECK(r.bound_l2 == doctest::Approx(2.0 * ab.alpha * ab.beta / std::sqrt(static_cast<double>(r.k))));
    }
  }
  CHECK_THROWS_AS(ratio_fixture("nope"), ParameterError);
}

TEST_CASE("constant absolute error has zero L2 standard error") {
  const auto& fx = ratio_fixture("three-point");
  const RatioStudy st = ratio_mc_study(fx.f, fx.g, fx.xi, {1}, 10000, 5);
  CHECK(st.rows[0].l2 == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(st.rows[0].l2_se == 0.0);
  CHECK(ratio_exact_enumeration(fx.f, fx.g, fx.xi, 1).l2 == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("ratio study output does not depend on the thread count") {
  const auto& fx = ratio_fixture("five-point");
  std::ostringstream a, b;
  ratio_mc_study(fx.f, fx.g, fx.xi, {1, 7}, 10000, 3, 1).write_csv(a);
  ratio_mc_study(fx.f, fx.g, fx.xi, {1, 7}, 10000, 3, 4).write_csv(b);
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("k,bias,bias_se,l2,l2_se,bound_bias,bound_l2\n", 0) == 0);
}

TEST_CASE("ratio study errors") {
  const std::vector<double> f = {1.0, 0.0}, g = {2.0, 1.0};
  CHECK_THROWS_AS(ratio_mc_study(f, g, {0.5, 0.5}, {1}, 100, 1), ParameterError);
  CHECK_THROWS_AS(ratio_mc_study(f, g, {0.5, 0.6}, {1}, 10000, 1), ParameterError);
  CHECK_THROWS_AS(ratio_mc_study(f, g, {0.5, 0.5}, {0}, 10000, 1), ParameterError);
  CHECK_THROWS_AS(ratio_mc_study(f, g, {1.0}, {1}, 10000, 1), ParameterError);
  CHECK_THROWS_AS(ratio_exact_enumeration(f, g, {0.5, 0.5}, 25), SizeError);
}

}  // TEST_SUITE
