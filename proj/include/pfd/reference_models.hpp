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

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pfd/grid_model.hpp"
#include "pfd/interval_model.hpp"

namespace pfd {

using AnyModel = std::variant<GridModel, IntervalModel>;

struct GridOptions {
  std::string name = "grid";
  // Base logits ~ U(-scale, scale), one scale per table.
  double transition_scale = 0.8;
  double emission_scale = 0.8;
  double initial_scale = 0.8;
  double coef_scale = 0.3;   // theta coefficients ~ U(-coef_scale, coef_scale)
  // Reference masses 1/S and 1/A instead of unit counting measure. Leaves the
  // filter unchanged and rescales densities toward 1, which raises eps.
  bool normalized_measures = false;
  std::vector<double> default_theta;  // empty -> box center
};

/// Random softmax-parameterized grid HMM with analytic gradients.
/// Throws ParameterError (naming the cell) when the box makes a density
/// underflow the floor.
GridModel make_grid_hmm(std::size_t states, std::size_t obs_alphabet, std::size_t theta_dim,
                        const ThetaBox& box, std::uint64_t seed, const GridOptions& opts = {});

/// Continuous mixture-kernel model on [0, 1]. `seed` jitters the emission
/// centers by at most a tenth of a bin.
IntervalModel make_interval_model(double gamma, double sigma, std::size_t theta_dim,
                                  std::uint64_t seed, std::size_t obs_alphabet = 6,
                                  double emission_width = 0.15);

template <class State>
struct Trajectory {
  std::vector<State> states;  // x_0..x_n
  std::vector<Obs> obs;       // y_0..y_n
};

/// Draws (x_{0:n}, y_{0:n}) from the model law; deterministic given seed.
template <StateSpaceModel M>
Trajectory<typename M::State> simulate(const M& model, const ThetaVec& theta, std::size_t n,
                                       std::uint64_t seed) {
  Trajectory<typename M::State> tr;
  tr.states.reserve(n + 1);
  tr.obs.reserve(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    RandomStream rng(StreamId{seed, StreamPurpose::kSimulate, 0, static_cast<std::uint32_t>(k), 0});
    if (k == 0) {
      tr.states.push_back(model.sample_initial(theta, rng));
    } else {
      tr.states.push_back(model.sample_transition(theta, tr.states.back(), rng));
    }
    tr.obs.push_back(model.sample_obs(theta, tr.states.back(), rng));
  }
  return tr;
}

/// CSV columns: n, x, y.
template <class State>
void write_simulation_csv(std::ostream& os, const Trajectory<State>& tr) {
  os << "n,x,y\n";
  char buf[64];
  for (std::size_t k = 0; k < tr.obs.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", detail::as_coordinate(tr.states[k]));
    os << k << ',' << buf << ',' << tr.obs[k] << '\n';
  }
}

// ---------------------------------------------------------------------------
// Shipped models

/// Names accepted by make_named_model: grid5, grid2, grid3, interval.
std::vector<std::string> model_names();
AnyModel make_named_model(std::string_view name);
/// A shipped model name, or a path to a model config file.
AnyModel load_model_ref(std::string_view ref);

GridModel grid5();
GridModel grid2();

// ---------------------------------------------------------------------------
// Config format (JSON text)

std::string serialize_model(const AnyModel& model);
std::string serialize_model(const GridModel& model);
std::string serialize_model(const IntervalModel& model);
/// Parses and validates (normalization checked at the default theta and the
/// box corners). Throws ConfigError.
AnyModel parse_model(std::string_view text);

inline const std::string& model_name(const AnyModel& m) {
  return std::visit([](const auto& x) -> const std::string& { return x.spec().name; }, m);
}

}  // namespace pfd
