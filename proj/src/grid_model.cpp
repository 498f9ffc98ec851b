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

#include "pfd/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace pfd {

const char* to_string(ParamMap p) {
  return p == ParamMap::kSoftmaxTable ? "softmax-table" : "logistic-cell";
}

const char* to_string(GridTable t) {
  switch (t) {
    case GridTable::kTransition:
      return "transition";
    case GridTable::kEmission:
      return "emission";
    case GridTable::kInitial:
      return "initial";
  }
  return "?";
}

namespace {

void check_table(const SoftmaxTable& t, std::size_t rows, std::size_t cols, std::size_t d,
                 const char* what) {
  if (t.rows != rows || t.cols != cols || t.base.size() != rows * cols ||
      t.coef.size() != d * rows * cols) {
    std::ostringstream os;
    os << what << " table has wrong shape (expected " << rows << "x" << cols << " with " << d
       << " coefficient layers)";
    throw ConfigError(os.str());
  }
  for (double v : t.base)
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
      throw ConfigError(std::string(what) + " base logits must be < +inf and not NaN");
  for (double v : t.coef)
    if (!std::isfinite(v)) throw ConfigError(std::string(what) + " coefficients must be finite");
}

SoftmaxTable& table_of(GridSpec& s, GridTable t) {
  switch (t) {
    case GridTable::kTransition:
      return s.transition;
    case GridTable::kEmission:
      return s.emission;
    case GridTable::kInitial:
      return s.initial;
  }
  return s.transition;
}

}  // namespace

void materialize_coefficients(GridSpec& spec) {
  if (spec.param_map != ParamMap::kLogisticCell) return;
  const std::size_t d = spec.theta_dim;
  for (GridTable t : {GridTable::kTransition, GridTable::kEmission, GridTable::kInitial}) {
    auto& tab = table_of(spec, t);
    tab.coef.assign(d * tab.rows * tab.cols, 0.0);
  }
  for (const auto& c : spec.cells) {
    auto& tab = table_of(spec, c.table);
    if (c.row >= tab.rows || c.col >= tab.cols || c.coord >= d)
      throw ConfigError("logistic cell outside its table or theta range");
    tab.coef[(c.coord * tab.rows + c.row) * tab.cols + c.col] += 1.0;
  }
}

GridModel::GridModel(GridSpec spec) : spec_(std::move(spec)) {
  const std::size_t S = spec_.states, A = spec_.obs_alphabet, d = spec_.theta_dim;
  if (S < 1 || A < 1 || d < 1) throw ConfigError("grid model needs states, alphabet, theta_dim >= 1");
  if (spec_.box.dim() != d) throw ConfigError("theta box dimension mismatch");
  if (spec_.default_theta.dim() != d || !spec_.box.contains(spec_.default_theta))
    throw ConfigError("default theta must lie inside the theta box");
  if (spec_.state_masses.empty()) spec_.state_masses.assign(S, 1.0);
  if (spec_.obs_masses.empty()) spec_.obs_masses.assign(A, 1.0);
  if (spec_.state_masses.size() != S || spec_.obs_masses.size() != A)
    throw ConfigError("reference-measure masses have the wrong length");
  for (double m : spec_.state_masses)
    if (!(m > 0.0) || !std::isfinite(m)) throw ConfigError("state masses must be positive");
  for (double m : spec_.obs_masses)
    if (!(m > 0.0) || !std::isfinite(m)) throw ConfigError("observation masses must be positive");
  materialize_coefficients(spec_);
  check_table(spec_.transition, S, S, d, "transition");
  check_table(spec_.emission, S, A, d, "emission");
  check_table(spec_.initial, 1, S, d, "initial");
}

void GridModel::check_theta(const ThetaVec& theta) const {
  if (theta.dim() != spec_.theta_dim) throw ParameterError("theta dimension mismatch");
}

void GridModel::row(const SoftmaxTable& t, std::size_t r, const ThetaVec& theta, double* prob,
                    double* grad) const {
  const std::size_t d = spec_.theta_dim, C = t.cols;
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < C; ++c) {
    double l = t.base_at(r, c);
    for (std::size_t k = 0; k < d; ++k) l += theta[k] * t.coef_at(k, r, c);
    prob[c] = l;
    mx = std::max(mx, l);
  }
  double total = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    prob[c] = std::exp(prob[c] - mx);
    total += prob[c];
  }
  for (std::size_t c = 0; c < C; ++c) prob[c] /= total;
  if (!grad) return;
  for (std::size_t k = 0; k < d; ++k) {
    double mean_coef = 0.0;
    for (std::size_t c = 0; c < C; ++c) mean_coef += prob[c] * t.coef_at(k, r, c);
    for (std::size_t c = 0; c < C; ++c) grad[c * d + k] = prob[c] * (t.coef_at(k, r, c) - mean_coef);
  }
}

GridTables GridModel::tables(const ThetaVec& theta) const {
  check_theta(theta);
  const std::size_t S = spec_.states, A = spec_.obs_alphabet, d = spec_.theta_dim;
  GridTables t;
  t.S = S;
  t.A = A;
  t.d = d;
  t.trans_prob.resize(S * S);
  t.trans_dens.resize(S * S);
  t.trans_grad.resize(S * S * d);
  t.emis_prob.resize(S * A);
  t.emis_dens.resize(S * A);
  t.emis_grad.resize(S * A * d);
  t.init_prob.resize(S);
  t.init_dens.resize(S);
  t.init_weight.resize(S * d);
  std::vector<double> pgrad(std::max(S, A) * d);
  for (std::size_t x = 0; x < S; ++x) {
    row(spec_.transition, x, theta, &t.trans_prob[x * S], pgrad.data());
    for (std::size_t xn = 0; xn < S; ++xn) {
      const double m = spec_.state_masses[xn];
      t.trans_dens[x * S + xn] = t.trans_prob[x * S + xn] / m;
      for (std::size_t k = 0; k < d; ++k) t.trans_grad[(x * S + xn) * d + k] = pgrad[xn * d + k] / m;
    }
    row(spec_.emission, x, theta, &t.emis_prob[x * A], pgrad.data());
    for (std::size_t y = 0; y < A; ++y) {
      const double m = spec_.obs_masses[y];
      t.emis_dens[x * A + y] = t.emis_prob[x * A + y] / m;
      for (std::size_t k = 0; k < d; ++k) t.emis_grad[(x * A + y) * d + k] = pgrad[y * d + k] / m;
    }
  }
  row(spec_.initial, 0, theta, t.init_prob.data(), nullptr);
  for (std::size_t x = 0; x < S; ++x) {
    t.init_dens[x] = t.init_prob[x] / spec_.state_masses[x];
    // grad log softmax = coef - E[coef]
    for (std::size_t k = 0; k < d; ++k) {
      double mean_coef = 0.0;
      for (std::size_t z = 0; z < S; ++z) mean_coef += t.init_prob[z] * spec_.initial.coef_at(k, 0, z);
      t.init_weight[x * d + k] = spec_.initial.coef_at(k, 0, x) - mean_coef;
    }
  }
  return t;
}

double GridModel::transition_density(const ThetaVec& theta, State x, State xn) const {
  check_theta(theta);
  std::vector<double> prob(spec_.states);
  row(spec_.transition, x, theta, prob.data(), nullptr);
  return prob.at(xn) / spec_.state_masses.at(xn);
}

DVec GridModel::transition_grad(const ThetaVec& theta, State x, State xn) const {
  check_theta(theta);
  const std::size_t d = spec_.theta_dim;
  std::vector<double> prob(spec_.states), grad(spec_.states * d);
  row(spec_.transition, x, theta, prob.data(), grad.data());
  DVec g(static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < d; ++k) g[static_cast<Eigen::Index>(k)] = grad.at(xn * d + k) / spec_.state_masses[xn];
  return g;
}

double GridModel::obs_density(const ThetaVec& theta, Obs y, State x) const {
  check_theta(theta);
  std::vector<double> prob(spec_.obs_alphabet);
  row(spec_.emission, x, theta, prob.data(), nullptr);
  return prob.at(y) / spec_.obs_masses.at(y);
}

DVec GridModel::obs_grad(const ThetaVec& theta, Obs y, State x) const {
  check_theta(theta);
  const std::size_t d = spec_.theta_dim;
  std::vector<double> prob(spec_.obs_alphabet), grad(spec_.obs_alphabet * d);
  row(spec_.emission, x, theta, prob.data(), grad.data());
  DVec g(static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < d; ++k) g[static_cast<Eigen::Index>(k)] = grad.at(y * d + k) / spec_.obs_masses[y];
  return g;
}

double GridModel::initial_density(const ThetaVec& theta, State x) const {
  check_theta(theta);
  std::vector<double> prob(spec_.states);
  row(spec_.initial, 0, theta, prob.data(), nullptr);
  return prob.at(x) / spec_.state_masses.at(x);
}

DVec GridModel::initial_log_grad(const ThetaVec& theta, State x) const {
  const GridTables t = tables(theta);
  if (x >= spec_.states) throw DomainError("state outside grid");
  return Eigen::Map<const DVec>(&t.init_weight[x * t.d], static_cast<Eigen::Index>(t.d));
}

DVec GridModel::initial_weight_mean(const ThetaVec& theta) const {
  const GridTables t = tables(theta);
  DVec mean = DVec::Zero(static_cast<Eigen::Index>(t.d));
  for (std::size_t x = 0; x < t.S; ++x)
    for (std::size_t k = 0; k < t.d; ++k)
      mean[static_cast<Eigen::Index>(k)] += t.init_prob[x] * t.init_weight[x * t.d + k];
  return mean;
}

std::size_t draw_from_cumulative(const double* cumulative, std::size_t n, double u) {
  const double target = u * cumulative[n - 1];
  const double* it = std::upper_bound(cumulative, cumulative + n, target);
  const auto idx = static_cast<std::size_t>(it - cumulative);
  return std::min(idx, n - 1);
}

GridModel::State GridModel::sample_initial(const ThetaVec& theta, RandomStream& rng) const {
  check_theta(theta);
  std::vector<double> cum(spec_.states);
  row(spec_.initial, 0, theta, cum.data(), nullptr);
  for (std::size_t i = 1; i < cum.size(); ++i) cum[i] += cum[i - 1];
  return draw_from_cumulative(cum.data(), cum.size(), rng.uniform());
}

GridModel::State GridModel::sample_transition(const ThetaVec& theta, State x,
                                              RandomStream& rng) const {
  check_theta(theta);
  if (x >= spec_.states) throw DomainError("state outside grid");
  std::vector<double> cum(spec_.states);
  row(spec_.transition, x, theta, cum.data(), nullptr);
  for (std::size_t i = 1; i < cum.size(); ++i) cum[i] += cum[i - 1];
  return draw_from_cumulative(cum.data(), cum.size(), rng.uniform());
}

Obs GridModel::sample_obs(const ThetaVec& theta, State x, RandomStream& rng) const {
  check_theta(theta);
  if (x >= spec_.states) throw DomainError("state outside grid");
  std::vector<double> cum(spec_.obs_alphabet);
  row(spec_.emission, x, theta, cum.data(), nullptr);
  for (std::size_t i = 1; i < cum.size(); ++i) cum[i] += cum[i - 1];
  return draw_from_cumulative(cum.data(), cum.size(), rng.uniform());
}

GridModel::State GridModel::Kernel::propagate(State from, RandomStream& rng) const {
  return draw_from_cumulative(&cum_[from * S_], S_, rng.uniform());
}

GridModel::Kernel GridModel::kernel(const ThetaVec& theta, Obs y) const {
  if (y >= spec_.obs_alphabet) throw DomainError("observation outside the model alphabet");
  const GridTables t = tables(theta);
  const std::size_t S = t.S, A = t.A, d = t.d;
  Kernel k;
  k.S_ = S;
  k.d_ = d;
  k.r_.resize(S * S);
  k.g_.resize(S * S * d);
  k.q_.resize(S);
  k.qg_.resize(S * d);
  k.cum_.resize(S * S);
  for (std::size_t from = 0; from < S; ++from) {
    k.q_[from] = t.emis_dens[from * A + y];
    for (std::size_t j = 0; j < d; ++j) k.qg_[from * d + j] = t.emis_grad[(from * A + y) * d + j];
    double acc = 0.0;
    for (std::size_t to = 0; to < S; ++to) {
      acc += t.trans_prob[from * S + to];
      k.cum_[from * S + to] = acc;
    }
  }
  for (std::size_t to = 0; to < S; ++to) {
    for (std::size_t from = 0; from < S; ++from) {
      const double p = t.trans_dens[from * S + to];
      const double q = k.q_[from];
      const std::size_t idx = to * S + from;
      k.r_[idx] = p * q;
      for (std::size_t j = 0; j < d; ++j)
        k.g_[idx * d + j] = t.trans_grad[(from * S + to) * d + j] * q + p * k.qg_[from * d + j];
    }
  }
  return k;
}

namespace {

// Bounds on softmax entry (r, c) over the closed box, in log space:
// log prob >= -log sum_m exp(max_box(l_m - l_c)),
// log prob <= -log sum_m exp(min_box(l_m - l_c)).
void softmax_log_bounds(const SoftmaxTable& t, const ThetaBox& box, std::size_t d, std::size_t r,
                        std::size_t c, double& lo, double& hi) {
  std::vector<double> dmax(t.cols), dmin(t.cols);
  for (std::size_t m = 0; m < t.cols; ++m) {
    double base = t.base_at(r, m) - t.base_at(r, c);
    if (m == c) base = 0.0;
    double up = base, dn = base;
    for (std::size_t k = 0; k < d; ++k) {
      const double a = t.coef_at(k, r, m) - t.coef_at(k, r, c);
      up += a > 0 ? a * box.upper()[k] : a * box.lower()[k];
      dn += a > 0 ? a * box.lower()[k] : a * box.upper()[k];
    }
    dmax[m] = up;
    dmin[m] = dn;
  }
  auto lse = [](const std::vector<double>& v) {
    const double mx = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
  };
  lo = -lse(dmax);
  hi = -lse(dmin);
}

}  // namespace

double box_density_floor(const GridSpec& spec_in) {
  GridSpec spec = spec_in;
  materialize_coefficients(spec);
  const std::size_t d = spec.theta_dim;
  const double log_floor = std::log(kDensityFloor);
  double eps = 1.0;
  auto scan = [&](const SoftmaxTable& t, const std::vector<double>& masses, GridTable which,
                  bool counts_for_eps) {
    for (std::size_t r = 0; r < t.rows; ++r) {
      for (std::size_t c = 0; c < t.cols; ++c) {
        double lo, hi;
        softmax_log_bounds(t, spec.box, d, r, c, lo, hi);
        const double log_mass = std::log(masses.at(c));
        const double log_lo = lo - log_mass;
        const double log_hi = hi - log_mass;
        if (!(log_lo > log_floor)) {
          std::ostringstream os;
          os << "density floor underflows on the theta box at " << to_string(which) << " cell ("
             << r << ", " << c << "): log lower bound " << log_lo;
          throw ParameterError(os.str());
        }
        if (counts_for_eps) eps = std::min({eps, std::exp(log_lo), std::exp(-log_hi)});
      }
    }
  };
  std::vector<double> smass = spec.state_masses.empty() ? std::vector<double>(spec.states, 1.0)
                                                        : spec.state_masses;
  std::vector<double> omass = spec.obs_masses.empty() ? std::vector<double>(spec.obs_alphabet, 1.0)
                                                      : spec.obs_masses;
  scan(spec.transition, smass, GridTable::kTransition, true);
  scan(spec.emission, omass, GridTable::kEmission, true);
  scan(spec.initial, smass, GridTable::kInitial, false);
  return std::min(eps, 1.0 - kEpsTolerance);
}

}  // namespace pfd
