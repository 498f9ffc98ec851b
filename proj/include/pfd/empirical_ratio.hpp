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

#pragma once

// Bias and L2 error of the ratio xi_k(f) / xi_k(g) of empirical integrals on
// a finite domain, against the bounds 2 alpha beta^2 / k and 2 alpha beta / sqrt(k).

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace pfd {

struct AlphaBeta {
  double alpha = 0.0;  // max f/g - min f/g
  double beta = 1.0;   // max g / min g
};

/// Throws DomainError if g <= 0 anywhere, ParameterError on size mismatch.
AlphaBeta alpha_beta(const std::vector<double>& f, const std::vector<double>& g);

struct RatioRow {
  std::size_t k = 0;
  double bias = 0.0;
  double bias_se = 0.0;
  double l2 = 0.0;
  double l2_se = 0.0;
  double bound_bias = 0.0;
  double bound_l2 = 0.0;

  // Bounds plus a noise band of `se_factor` standard errors.
  bool bias_within(double se_factor = 3.0) const { return std::abs(bias) <= bound_bias + se_factor * bias_se; }
  bool l2_within(double se_factor = 3.0) const { return l2 <= bound_l2 + se_factor * l2_se; }
};

struct RatioStudy {
  std::vector<double> f, g, xi;
  AlphaBeta ab;
  double target = 0.0;  // xi(f) / xi(g)
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
  std::vector<RatioRow> rows;

  bool bounds_hold(double se_factor = 3.0) const;
  void write_csv(std::ostream& os) const;
};

inline constexpr std::size_t kMinRatioReplicates = 10000;

/// For each k draws R independent k-samples from xi (one counter stream per
/// (k, replicate)) and records the error of xi_k(f)/xi_k(g). L2 is the root
/// mean squared error; its SE comes from the delta method.
RatioStudy ratio_mc_study(const std::vector<double>& f, const std::vector<double>& g,
                          const std::vector<double>& xi, const std::vector<std::size_t>& k_list,
                          std::size_t replicates, std::uint64_t seed, std::size_t threads = 1);

struct RatioExact {
  double bias = 0.0;
  double l2 = 0.0;
};

/// Exact bias and L2 by enumerating all |Z|^k ordered outcomes (at most 10^6).
RatioExact ratio_exact_enumeration(const std::vector<double>& f, const std::vector<double>& g,
                                   const std::vector<double>& xi, std::size_t k);

struct RatioFixture {
  std::string name;
  std::vector<double> f, g, xi;
};

/// Shipped (f, g, xi) fixtures: "two-point", "three-point", "five-point".
const std::vector<RatioFixture>& ratio_fixtures();
const RatioFixture& ratio_fixture(const std::string& name);

}  // namespace pfd
