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

#include "pfd/interval_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pfd {

namespace {

inline double std_normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

IntervalModel::IntervalModel(IntervalSpec spec) : spec_(std::move(spec)) {
  if (!(spec_.gamma >= 0.05 && spec_.gamma <= 1.0))
    throw ParameterError("mixture floor gamma must lie in [0.05, 1]");
  if (!(spec_.sigma > 0.0) || !std::isfinite(spec_.sigma))
    throw ParameterError("kernel width sigma must be positive");
  if (!(spec_.emission_width > 0.0) || !std::isfinite(spec_.emission_width))
    throw ParameterError("emission width must be positive");
  if (spec_.theta_dim != 1 && spec_.theta_dim != 2)
    throw ParameterError("interval model supports theta_dim 1 or 2");
  if (spec_.obs_alphabet < 2) throw ParameterError("interval model needs at least 2 symbols");
  if (spec_.box.dim() != spec_.theta_dim) throw ConfigError("theta box dimension mismatch");
  if (spec_.box.lower()[0] < -1.0 || spec_.box.upper()[0] > 1.0)
    throw ConfigError("AR coefficient box must lie within [-1, 1]");
  if (spec_.default_theta.dim() != spec_.theta_dim || !spec_.box.contains(spec_.default_theta))
    throw ConfigError("default theta must lie inside the theta box");
  if (spec_.centers.empty()) {
    spec_.centers.resize(spec_.obs_alphabet);
    for (std::size_t y = 0; y < spec_.obs_alphabet; ++y)
      spec_.centers[y] = (static_cast<double>(y) + 0.5) / static_cast<double>(spec_.obs_alphabet);
  }
  if (spec_.centers.size() != spec_.obs_alphabet)
    throw ConfigError("one emission center per observation symbol is required");
}

void IntervalModel::check_theta(const ThetaVec& theta) const {
  if (theta.dim() != spec_.theta_dim) throw ParameterError("theta dimension mismatch");
}

IntervalModel::Transition IntervalModel::transition_parts(std::span<const double> theta, State x,
                                                          State xn) const {
  const double s = spec_.sigma;
  const double m = 0.5 + theta[0] * (x - 0.5);
  const double a = (0.0 - m) / s, b = (1.0 - m) / s;
  const double z = std_normal_cdf(b) - std_normal_cdf(a);
  const double u = (xn - m) / s;
  const double tn = std_normal_pdf(u) / (s * z);
  const double dz_dm = (std_normal_pdf(a) - std_normal_pdf(b)) / s;
  Transition t;
  t.tn = tn;
  t.density = (1.0 - spec_.gamma) * tn + spec_.gamma;
  t.dlog_dmean_tn = u / s - dz_dm / z;
  t.slope_factor = x - 0.5;
  return t;
}

double IntervalModel::transition_density(const ThetaVec& theta, State x, State xn) const {
  check_theta(theta);
  if (!contains_state(x) || !contains_state(xn)) throw DomainError("state outside [0, 1]");
  return transition_parts(theta.coords(), x, xn).density;
}

DVec IntervalModel::transition_grad(const ThetaVec& theta, State x, State xn) const {
  check_theta(theta);
  if (!contains_state(x) || !contains_state(xn)) throw DomainError("state outside [0, 1]");
  const auto t = transition_parts(theta.coords(), x, xn);
  DVec g = DVec::Zero(static_cast<Eigen::Index>(spec_.theta_dim));
  g[0] = (1.0 - spec_.gamma) * t.tn * t.dlog_dmean_tn * t.slope_factor;
  return g;
}

double IntervalModel::transition_cdf(const ThetaVec& theta, State x, State xn) const {
  check_theta(theta);
  const double s = spec_.sigma;
  const double m = 0.5 + theta[0] * (x - 0.5);
  const double lo = std_normal_cdf((0.0 - m) / s);
  const double z = std_normal_cdf((1.0 - m) / s) - lo;
  const double c = std::clamp(xn, 0.0, 1.0);
  return (1.0 - spec_.gamma) * (std_normal_cdf((c - m) / s) - lo) / z + spec_.gamma * c;
}

void IntervalModel::emission_probs(std::span<const double> theta, State x, double* prob,
                                   double* logits) const {
  const double sharp = spec_.theta_dim == 2 ? std::exp(theta[1]) : 1.0;
  const double eta2 = spec_.emission_width * spec_.emission_width;
  const std::size_t A = spec_.obs_alphabet;
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t y = 0; y < A; ++y) {
    const double dx = x - spec_.centers[y];
    logits[y] = -sharp * dx * dx / (2.0 * eta2);
    mx = std::max(mx, logits[y]);
  }
  double total = 0.0;
  for (std::size_t y = 0; y < A; ++y) {
    prob[y] = std::exp(logits[y] - mx);
    total += prob[y];
  }
  for (std::size_t y = 0; y < A; ++y) prob[y] /= total;
}

double IntervalModel::obs_density_raw(std::span<const double> theta, Obs y, State x) const {
  std::vector<double> prob(spec_.obs_alphabet), logits(spec_.obs_alphabet);
  emission_probs(theta, x, prob.data(), logits.data());
  return prob[y] * static_cast<double>(spec_.obs_alphabet);
}

void IntervalModel::obs_grad_raw(std::span<const double> theta, Obs y, State x,
                                 double* grad) const {
  grad[0] = 0.0;
  if (spec_.theta_dim < 2) return;
  std::vector<double> prob(spec_.obs_alphabet), logits(spec_.obs_alphabet);
  emission_probs(theta, x, prob.data(), logits.data());
  double mean = 0.0;
  for (std::size_t c = 0; c < spec_.obs_alphabet; ++c) mean += prob[c] * logits[c];
  grad[1] = prob[y] * static_cast<double>(spec_.obs_alphabet) * (logits[y] - mean);
}

double IntervalModel::obs_density(const ThetaVec& theta, Obs y, State x) const {
  check_theta(theta);
  if (!contains_state(x)) throw DomainError("state outside [0, 1]");
  if (y >= spec_.obs_alphabet) throw DomainError("observation outside the model alphabet");
  return obs_density_raw(theta.coords(), y, x);
}

DVec IntervalModel::obs_grad(const ThetaVec& theta, Obs y, State x) const {
  check_theta(theta);
  if (!contains_state(x)) throw DomainError("state outside [0, 1]");
  if (y >= spec_.obs_alphabet) throw DomainError("observation outside the model alphabet");
  DVec g(static_cast<Eigen::Index>(spec_.theta_dim));
  obs_grad_raw(theta.coords(), y, x, g.data());
  return g;
}

double IntervalModel::initial_density(const ThetaVec& theta, State x) const {
  check_theta(theta);
  if (!contains_state(x)) throw DomainError("state outside [0, 1]");
  return 1.0;
}

DVec IntervalModel::initial_log_grad(const ThetaVec& theta, State x) const {
  check_theta(theta);
  if (!contains_state(x)) throw DomainError("state outside [0, 1]");
  return DVec::Zero(static_cast<Eigen::Index>(spec_.theta_dim));
}

DVec IntervalModel::initial_weight_mean(const ThetaVec& theta) const {
  check_theta(theta);
  return DVec::Zero(static_cast<Eigen::Index>(spec_.theta_dim));
}

IntervalModel::State IntervalModel::sample_initial(const ThetaVec& theta,
                                                   RandomStream& rng) const {
  check_theta(theta);
  return rng.uniform();
}

IntervalModel::State IntervalModel::sample_transition(const ThetaVec& theta, State x,
                                                      RandomStream& rng) const {
  check_theta(theta);
  if (rng.uniform() < spec_.gamma) return rng.uniform();
  const double m = 0.5 + theta[0] * (x - 0.5);
  for (;;) {
    const double v = m + spec_.sigma * rng.normal();
    if (v >= 0.0 && v <= 1.0) return v;
  }
}

Obs IntervalModel::sample_obs(const ThetaVec& theta, State x, RandomStream& rng) const {
  check_theta(theta);
  std::vector<double> prob(spec_.obs_alphabet), logits(spec_.obs_alphabet);
  emission_probs(theta.coords(), x, prob.data(), logits.data());
  for (std::size_t y = 1; y < prob.size(); ++y) prob[y] += prob[y - 1];
  const double target = rng.uniform() * prob.back();
  const auto it = std::upper_bound(prob.begin(), prob.end(), target);
  return std::min<std::size_t>(static_cast<std::size_t>(it - prob.begin()), prob.size() - 1);
}

IntervalModel::Kernel IntervalModel::kernel(const ThetaVec& theta, Obs y) const {
  check_theta(theta);
  if (y >= spec_.obs_alphabet) throw DomainError("observation outside the model alphabet");
  Kernel k;
  k.model_ = this;
  k.theta_.assign(theta.coords().begin(), theta.coords().end());
  k.y_ = y;
  return k;
}

double IntervalModel::Kernel::eval(State from, State to, double* grad) const {
  const auto t = model_->transition_parts(theta_, from, to);
  const double q = model_->obs_density_raw(theta_, y_, from);
  const std::size_t d = theta_.size();
  std::vector<double> qg(d);
  model_->obs_grad_raw(theta_, y_, from, qg.data());
  const double dp0 = (1.0 - model_->spec_.gamma) * t.tn * t.dlog_dmean_tn * t.slope_factor;
  grad[0] = dp0 * q + t.density * qg[0];
  if (d > 1) grad[1] = t.density * qg[1];
  return t.density * q;
}

double IntervalModel::Kernel::obs_weight(State from) const {
  return model_->obs_density_raw(theta_, y_, from);
}

void IntervalModel::Kernel::obs_weight_grad(State from, double* grad) const {
  model_->obs_grad_raw(theta_, y_, from, grad);
}

IntervalModel::State IntervalModel::Kernel::propagate(State from, RandomStream& rng) const {
  return model_->sample_transition(ThetaVec(theta_), from, rng);
}

}  // namespace pfd
