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

// Exact one-step predictor P^n and its theta-derivative Q^n on grid models,
// computed three ways: the forward tangent recursion, enumeration of all
// state paths, and central differences of the exact filter.
//
// Convention: state k is conditioned on y_{0:k-1}. For y_{0:n} the results
// hold k = 0..n, k = 0 being the initial law, and y_n is not consumed.

#include <ostream>
#include <vector>

#include "pfd/grid_model.hpp"

namespace pfd {

struct ExactFilterState {
  std::size_t n = 0;
  DVec P;        // S probabilities
  DMat Q;        // d x S signed masses; empty for filter-only results
  DVec H_mass;   // H({X}) = total mass of the tangent numerator over the filter mass
};

/// Filter only: P^0 = xi_theta, then Bayes update with y_k and propagate.
std::vector<ExactFilterState> exact_filter(const GridModel& model, const ThetaVec& theta,
                                           const std::vector<Obs>& ys);

/// P and Q = G(.|xi_theta, zeta_theta) where zeta_theta = u xi_theta and
/// u = w - integral of w against xi_theta.
std::vector<ExactFilterState> exact_derivative(const GridModel& model, const ThetaVec& theta,
                                               const std::vector<Obs>& ys, bool renormalize = true);

/// Tangent recursion from an arbitrary pair (xi, zeta): xi an S-vector of
/// probabilities, zeta a d x S signed measure. Returns F and G per step.
/// Without renormalization the unnormalized numerators are carried and
/// divided out only at the end of each step's report.
std::vector<ExactFilterState> tangent_recursion(const GridModel& model, const ThetaVec& theta,
                                                const std::vector<Obs>& ys, const DVec& xi,
                                                const DMat& zeta, bool renormalize = true);

/// Initial law and zeta_theta at theta.
DVec initial_law(const GridModel& model, const ThetaVec& theta);
DMat initial_derivative_measure(const GridModel& model, const ThetaVec& theta);

/// Maximum path count enumerated by path_bruteforce.
inline constexpr std::size_t kMaxPaths = 1000000;

/// Enumerates all x_{0:n} with weight xi(x_0) prod_k p(x_k|x_{k-1}) mu(x_k) q(y_{k-1}|x_{k-1})
/// and score w(x_0) + sum_k t(x_k|x_{k-1}); returns the final (P^n, Q^n).
/// Throws SizeError when S^{n+1} > kMaxPaths.
ExactFilterState path_bruteforce(const GridModel& model, const ThetaVec& theta, const std::vector<Obs>& ys);

/// Central differences of exact_filter, one d x S array per step.
/// Throws ParameterError when theta +- h e_j leaves the box.
std::vector<DMat> fd_derivative(const GridModel& model, const ThetaVec& theta, const std::vector<Obs>& ys,
                                double h);

/// grad log sum_x q(y|x) P(x) from an exact state.
DVec exact_predictive_score(const GridModel& model, const ThetaVec& theta, const ExactFilterState& st, Obs y);

/// Total-variation norm of the difference of two measures on the grid (l1).
double tv_distance(const DVec& a, const DVec& b);
/// l1-based total variation of a d x S signed measure difference.
double signed_tv_distance(const DMat& a, const DMat& b);

/// CSV columns: n, state, P, Q_1..Q_d (one row per step and state).
void write_oracle_csv(std::ostream& os, const std::vector<ExactFilterState>& states);

}  // namespace pfd
