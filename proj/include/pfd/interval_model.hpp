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

// Continuous-state model on X = [0, 1] (Lebesgue reference measure) with a
// quantized emission alphabet.
//
//   m(x)      = 1/2 + theta_0 (x - 1/2)
//   p(x'|x)   = (1 - gamma) TN(x'; m(x), sigma, [0,1]) + gamma
//   q(y|x)    = A * softmax_y( -exp(theta_1) (x - c_y)^2 / (2 eta^2) )   (nu(y) = 1/A)
//   l(x)      = 1                                                        (w = 0)
//
// theta_1 is present only when theta_dim == 2; otherwise the emission
// sharpness is fixed at exp(0).

#include <string>
#include <vector>

#include "pfd/model.hpp"

namespace pfd {

struct IntervalSpec {
  std::string name;
  double gamma = 0.1;
  double sigma = 0.2;
  double emission_width = 0.15;  // eta
  std::size_t obs_alphabet = 6;
  std::size_t theta_dim = 2;
  ThetaBox box{{-0.9, -1.0}, {0.9, 1.0}};
  ThetaVec default_theta{0.5, 0.0};
  std::vector<double> centers;  // c_y, one per symbol
};

class IntervalModel {
 public:
  using State = double;

  class Kernel {
   public:
    double eval(State from, State to, double* grad) const;
    double obs_weight(State from) const;
    void obs_weight_grad(State from, double* grad) const;
    State propagate(State from, RandomStream& rng) const;

   private:
    friend class IntervalModel;
    const IntervalModel* model_ = nullptr;
    std::vector<double> theta_;
    Obs y_ = 0;
  };

  explicit IntervalModel(IntervalSpec spec);

  const IntervalSpec& spec() const { return spec_; }
  std::string name() const { return spec_.name; }
  std::size_t theta_dim() const { return spec_.theta_dim; }
  const ThetaBox& theta_box() const { return spec_.box; }
  ThetaVec default_theta() const { return spec_.default_theta; }
  std::size_t obs_count() const { return spec_.obs_alphabet; }
  bool contains_state(State x) const { return x >= 0.0 && x <= 1.0; }

  double transition_density(const ThetaVec& theta, State x, State xn) const;
  DVec transition_grad(const ThetaVec& theta, State x, State xn) const;
  // Mixture CDF of p(.|x) at xn; used by sampler tests.
  double transition_cdf(const ThetaVec& theta, State x, State xn) const;
  double obs_density(const ThetaVec& theta, Obs y, State x) const;
  DVec obs_grad(const ThetaVec& theta, Obs y, State x) const;
  double initial_density(const ThetaVec& theta, State x) const;
  DVec initial_log_grad(const ThetaVec& theta, State x) const;
  DVec initial_weight_mean(const ThetaVec& theta) const;

  State sample_initial(const ThetaVec& theta, RandomStream& rng) const;
  State sample_transition(const ThetaVec& theta, State x, RandomStream& rng) const;
  Obs sample_obs(const ThetaVec& theta, State x, RandomStream& rng) const;
  State probe_state(RandomStream& rng) const { return rng.uniform(); }

  Kernel kernel(const ThetaVec& theta, Obs y) const;

 private:
  struct Transition {
    double density;
    double dlog_dmean_tn;  // d/dm log TN(x'; m)
    double tn;
    double slope_factor;   // dm/dtheta_0 = x - 1/2
  };
  Transition transition_parts(std::span<const double> theta, State x, State xn) const;
  void emission_probs(std::span<const double> theta, State x, double* prob,
                      double* logits) const;
  double obs_density_raw(std::span<const double> theta, Obs y, State x) const;
  void obs_grad_raw(std::span<const double> theta, Obs y, State x, double* grad) const;
  void check_theta(const ThetaVec& theta) const;

  IntervalSpec spec_;
};

}  // namespace pfd
