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

// Finite-state hidden Markov models whose transition rows, emission rows and
// initial law are softmax maps of logits that are affine in theta:
//
//   logit[r][c](theta) = base[r][c] + sum_k theta_k coef[k][r][c]
//   prob[r][c]         = softmax_c(logit[r])
//
// Densities are probabilities divided by the reference-measure mass of the
// target point, so sum_c density[r][c] * mass[c] = 1.

#include <cstddef>
#include <string>
#include <vector>

#include "pfd/model.hpp"

namespace pfd {

enum class ParamMap { kSoftmaxTable, kLogisticCell };
enum class GridTable { kTransition, kEmission, kInitial };

const char* to_string(ParamMap p);
const char* to_string(GridTable t);

struct SoftmaxTable {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> base;  // rows * cols, row-major
  std::vector<double> coef;  // theta_dim * rows * cols

  double& base_at(std::size_t r, std::size_t c) { return base[r * cols + c]; }
  double base_at(std::size_t r, std::size_t c) const { return base[r * cols + c]; }
  double coef_at(std::size_t k, std::size_t r, std::size_t c) const {
    return coef[(k * rows + r) * cols + c];
  }
};

/// logit(table, row, col) += theta[coord]
struct LogisticCell {
  GridTable table = GridTable::kTransition;
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t coord = 0;

  friend bool operator==(const LogisticCell&, const LogisticCell&) = default;
};

struct GridSpec {
  std::string name;
  std::size_t states = 0;
  std::size_t obs_alphabet = 0;
  std::size_t theta_dim = 0;
  ThetaBox box{{-1.0}, {1.0}};
  ThetaVec default_theta{0.0};
  std::vector<double> state_masses;  // mu; lambda = mu
  std::vector<double> obs_masses;    // nu
  ParamMap param_map = ParamMap::kSoftmaxTable;
  SoftmaxTable transition;  // states x states
  SoftmaxTable emission;    // states x obs_alphabet
  SoftmaxTable initial;     // 1 x states
  std::vector<LogisticCell> cells;  // logistic-cell only; coef tables derived
  double eps_floor = 0.0;           // declared eps_0 valid on the whole box
};

/// Densities, gradients and cumulative rows at one theta.
/// Gradient index layout: [(row * cols + col) * d + k].
struct GridTables {
  std::size_t S = 0, A = 0, d = 0;
  std::vector<double> trans_prob, trans_dens, trans_grad;
  std::vector<double> emis_prob, emis_dens, emis_grad;
  std::vector<double> init_prob, init_dens, init_weight;  // init_weight: [x * d + k]
};

class GridModel {
 public:
  using State = std::size_t;

  class Kernel {
   public:
    double eval(State from, State to, double* grad) const {
      const std::size_t idx = to * S_ + from;
      const double* g = &g_[idx * d_];
      for (std::size_t k = 0; k < d_; ++k) grad[k] = g[k];
      return r_[idx];
    }
    double obs_weight(State from) const { return q_[from]; }
    void obs_weight_grad(State from, double* grad) const {
      for (std::size_t k = 0; k < d_; ++k) grad[k] = qg_[from * d_ + k];
    }
    State propagate(State from, RandomStream& rng) const;

    // Column of r(to | .) over all `from` states; contiguous.
    const double* r_column(State to) const { return &r_[to * S_]; }
    const double* grad_column(State to) const { return &g_[to * S_ * d_]; }
    std::size_t state_count() const { return S_; }
    std::size_t theta_dim() const { return d_; }

   private:
    friend class GridModel;
    std::size_t S_ = 0, d_ = 0;
    std::vector<double> r_;    // [to * S + from]
    std::vector<double> g_;    // [(to * S + from) * d + k]
    std::vector<double> q_;    // [from]
    std::vector<double> qg_;   // [from * d + k]
    std::vector<double> cum_;  // [from * S + to], cumulative transition probabilities
  };

  explicit GridModel(GridSpec spec);

  const GridSpec& spec() const { return spec_; }
  std::string name() const { return spec_.name; }
  std::size_t theta_dim() const { return spec_.theta_dim; }
  const ThetaBox& theta_box() const { return spec_.box; }
  ThetaVec default_theta() const { return spec_.default_theta; }
  std::size_t obs_count() const { return spec_.obs_alphabet; }
  std::size_t state_count() const { return spec_.states; }
  double state_mass(std::size_t x) const { return spec_.state_masses.at(x); }
  double obs_mass(Obs y) const { return spec_.obs_masses.at(y); }
  bool contains_state(State x) const { return x < spec_.states; }

  GridTables tables(const ThetaVec& theta) const;

  double transition_density(const ThetaVec& theta, State x, State xn) const;
  DVec transition_grad(const ThetaVec& theta, State x, State xn) const;
  double obs_density(const ThetaVec& theta, Obs y, State x) const;
  DVec obs_grad(const ThetaVec& theta, Obs y, State x) const;
  double initial_density(const ThetaVec& theta, State x) const;
  DVec initial_log_grad(const ThetaVec& theta, State x) const;
  DVec initial_weight_mean(const ThetaVec& theta) const;

  State sample_initial(const ThetaVec& theta, RandomStream& rng) const;
  State sample_transition(const ThetaVec& theta, State x, RandomStream& rng) const;
  Obs sample_obs(const ThetaVec& theta, State x, RandomStream& rng) const;

  Kernel kernel(const ThetaVec& theta, Obs y) const;

 private:
  // Softmax row probabilities and their theta-gradients ([c * d + k]).
  void row(const SoftmaxTable& t, std::size_t r, const ThetaVec& theta, double* prob,
           double* grad) const;
  void check_theta(const ThetaVec& theta) const;

  GridSpec spec_;
};

/// Inverse-CDF draw: smallest index i with u * total < cumulative[i].
std::size_t draw_from_cumulative(const double* cumulative, std::size_t n, double u);

/// Valid lower bound eps_0 on min(p, q, 1/p, 1/q) over the whole theta box.
/// Throws ParameterError naming the first cell whose floor underflows.
double box_density_floor(const GridSpec& spec);

/// Expands logistic cells into coefficient tables (no-op for softmax-table).
void materialize_coefficients(GridSpec& spec);

}  // namespace pfd
