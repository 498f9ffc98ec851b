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

// Experiment harness: conditional bias and L2 error of xi_hat_n(phi) and
// zeta_hat_n(phi) against the exact oracle, rate fits, uniformity in time,
// weight-forgetting traces and a recursive maximum-likelihood demo.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pfd/exact_oracle.hpp"
#include "pfd/grid_model.hpp"

namespace pfd {

struct TestFunction {
  std::string name;
  std::vector<double> values;  // one per state, clipped to [-1, 1]
};

/// Comma-separated items: "indicators" (one per state), "indicator:k", "one".
std::vector<TestFunction> parse_phi_spec(const std::string& spec, std::size_t states);

struct Scenario {
  std::string model_ref;
  ThetaVec theta{0.0};
  std::size_t n = 0;
  std::uint64_t seed = 0;  // observation path seed
  std::string phi_spec = "indicators";
  std::vector<Obs> ys;     // y_0..y_n, fixed across replicates
  std::vector<TestFunction> phis;
};

/// Simulates y_{0:n} at theta and freezes it. Throws MixingViolation if the
/// exhaustive mixing check at theta reports a violation.
Scenario make_scenario(const GridModel& model, const std::string& model_ref, const ThetaVec& theta,
                       std::size_t n, std::uint64_t seed, const std::string& phi_spec = "indicators");
std::string scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const std::string& text, std::size_t states);

/// "filter" or "derivative:j" (j zero-based).
struct BiasRow {
  std::size_t N = 0;
  std::size_t n = 0;
  std::string phi;
  std::string target;
  double exact = 0.0;
  double mean = 0.0;
  double bias = 0.0;
  double bias_se = 0.0;
  double l2 = 0.0;
  double l2_se = 0.0;
  std::size_t replicates = 0;

  bool above_noise(double se_factor = 3.0) const { return std::abs(bias) > se_factor * bias_se; }
};

/// Normalization monitors gathered over every step of every replicate.
struct InvariantMonitor {
  double xi_mass_dev = 0.0;     // max |xi_hat(1) - 1|
  double zeta_mass = 0.0;       // max l-inf |zeta_hat(1)|
  double oracle_simplex = 0.0;  // max |sum P - 1| and max(0, -min P)
  double oracle_q_rows = 0.0;   // max |row sum of Q|

  void merge(const InvariantMonitor& o);
};

struct BiasReport {
  std::vector<BiasRow> rows;
  InvariantMonitor monitor;
  void write_csv(std::ostream& os) const;
};

struct SweepOptions {
  std::vector<std::size_t> times;  // empty -> {ceil(n/2), n}
  std::size_t threads = 1;         // 0 -> hardware concurrency
};

inline constexpr std::size_t kMinSweepReplicates = 1000;

/// For each N, R replicate runs on the scenario's fixed y with particle seed
/// derive_seed(seed, N) and replicate ids 0..R-1.
BiasReport bias_sweep(const GridModel& model, const Scenario& scenario, const std::vector<std::size_t>& N_list,
                      std::size_t replicates, std::uint64_t seed, const SweepOptions& opts = {});

struct RateFit {
  std::size_t n = 0;
  std::string phi;
  std::string target;
  std::optional<LinearFit> bias;  // empty -> bias below noise floor
  std::size_t bias_points = 0;
  std::optional<LinearFit> l2;
  std::size_t l2_points = 0;
};

/// Log-log least squares of |bias| and L2 against N per (n, phi, target).
/// The bias fit uses only rows with |bias| > se_factor * SE and requires
/// `min_points` of them.
std::vector<RateFit> fit_rates(const BiasReport& report, double se_factor = 3.0, std::size_t min_points = 4);
std::string rates_to_json(const std::vector<RateFit>& fits);

struct UniformityTarget {
  std::string phi;
  std::string target;
  std::vector<BiasRow> per_time;
  bool above_noise_everywhere = false;
  double bias_ratio = 0.0;  // max/min |bias| across times
  double l2_ratio = 0.0;    // max/min L2 across times
};

struct UniformityReport {
  std::vector<std::size_t> times;
  std::vector<UniformityTarget> targets;  // derivative components only
  InvariantMonitor monitor;
  void write_csv(std::ostream& os) const;
};

/// One y path up to max(times); R replicates recorded at every listed time.
UniformityReport uniformity_check(const GridModel& model, const Scenario& scenario, std::size_t N,
                                  const std::vector<std::size_t>& times, std::size_t replicates,
                                  std::uint64_t seed, std::size_t threads = 1);

struct StabilityRow {
  double scale = 0.0;
  std::size_t n = 0;
  double zeta_norm_tv = 0.0;
  double zeta_norm_linf = 0.0;
  double tau = 0.0;
  double a_min = 0.0;
  double identity_residual = 0.0;
  double xi_mass_dev = 0.0;
  double zeta_mass = 0.0;
};

struct StabilityTrace {
  std::size_t N = 0;
  std::size_t n_long = 0;
  std::vector<double> scales;
  std::vector<StabilityRow> rows;  // scale-major, n = 0..n_long
  void write_csv(std::ostream& os) const;
};

/// For each scale s the initial weights are s * w_theta; every scale reuses
/// the same particle seed, so the particle paths coincide and only the
/// weights differ.
StabilityTrace stability_trace(const GridModel& model, const Scenario& scenario, std::size_t N,
                               const std::vector<double>& scales, std::uint64_t seed, std::size_t threads = 1);

struct StabilityScaleSummary {
  double scale = 0.0;
  double first_half_max = 0.0;   // n in [0, n_long / 2]
  double second_half_max = 0.0;  // n in (n_long / 2, n_long]
  double max_rel_dev = 0.0;      // vs the reference scale, n >= burn-in
};

struct StabilitySummary {
  std::size_t burn_in = 0;
  double eps = 0.0;
  double reference_scale = 1.0;
  std::vector<StabilityScaleSummary> scales;
  double tau_max = 0.0;
  double a_min = 0.0;
  std::size_t tau_violations = 0;  // tau > 1 - eps^4 + 1e-12
  std::size_t a_violations = 0;    // min A < eps^4 / N
  double identity_residual = 0.0;
};

/// ceil(log(100) / -log(1 - eps^4)).
std::size_t burn_in_steps(double eps);
StabilitySummary summarize_stability(const StabilityTrace& trace, double eps, double reference_scale = 1.0);

struct RmlSchedule {
  double a = 0.0;         // gamma_k = a / (k + 1)^exponent
  double exponent = 0.6;
};

struct RmlEvent {
  std::size_t k = 0;
  std::vector<double> raw;
  std::vector<double> projected;
};

struct RmlTrace {
  std::vector<std::vector<double>> theta;  // theta_0..theta_T
  std::vector<RmlEvent> events;
  void write_csv(std::ostream& os) const;
};

inline constexpr double kRmlMargin = 1e-3;

/// Simulates T observations at theta_true (seed), then runs a particle
/// cloud with the current estimate and ascends the predictive score with
/// step gamma_k, projecting back into the box with margin kRmlMargin.
RmlTrace rml_demo(const GridModel& model, const ThetaVec& theta_true, const ThetaVec& theta_init, std::size_t T,
                  std::size_t N, const RmlSchedule& schedule, std::uint64_t seed);

}  // namespace pfd
