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

// Parametric state-space model abstraction and the assumption diagnostics
// that run against any model satisfying it.
//
// A model supplies, for each parameter point theta:
//   p(x'|x)   transition density w.r.t. the state reference measure mu
//   q(y|x)    emission density w.r.t. the observation reference measure nu
//   l(x)      initial density w.r.t. lambda = mu, so xi(dx) = l(x) mu(dx)
// plus their theta-gradients and exact samplers. Observations always live in
// a finite alphabet {0, ..., obs_count() - 1}.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "pfd/errors.hpp"
#include "pfd/numeric.hpp"
#include "pfd/rng.hpp"
#include "pfd/theta.hpp"

namespace pfd {

using Obs = std::size_t;

/// Densities at or below this value count as zero.
inline constexpr double kDensityFloor = 1e-300;

/// Per-(theta, y) evaluator used on the particle hot path.
///   eval(from, to, grad)  -> r(to|from) = p(to|from) q(y|from), grad <- gradient of r
///   obs_weight(from)      -> q(y|from)
///   obs_weight_grad(from, grad)
///   propagate(from, rng)  -> a draw from p(.|from) mu(.)
template <class K, class State>
concept StepKernel = requires(const K& k, const State& x, double* g, RandomStream& rng) {
  { k.eval(x, x, g) } -> std::convertible_to<double>;
  { k.obs_weight(x) } -> std::convertible_to<double>;
  { k.obs_weight_grad(x, g) };
  { k.propagate(x, rng) } -> std::convertible_to<State>;
};

template <class M>
concept StateSpaceModel =
    requires(const M& m, const ThetaVec& th, const typename M::State& x, Obs y, RandomStream& rng) {
      typename M::State;
      typename M::Kernel;
      { m.name() } -> std::convertible_to<std::string>;
      { m.theta_dim() } -> std::convertible_to<std::size_t>;
      { m.theta_box() } -> std::convertible_to<const ThetaBox&>;
      { m.default_theta() } -> std::convertible_to<ThetaVec>;
      { m.obs_count() } -> std::convertible_to<std::size_t>;
      { m.contains_state(x) } -> std::same_as<bool>;
      { m.transition_density(th, x, x) } -> std::convertible_to<double>;
      { m.transition_grad(th, x, x) } -> std::convertible_to<DVec>;
      { m.obs_density(th, y, x) } -> std::convertible_to<double>;
      { m.obs_grad(th, y, x) } -> std::convertible_to<DVec>;
      { m.initial_density(th, x) } -> std::convertible_to<double>;
      { m.initial_log_grad(th, x) } -> std::convertible_to<DVec>;
      { m.initial_weight_mean(th) } -> std::convertible_to<DVec>;
      { m.sample_initial(th, rng) } -> std::convertible_to<typename M::State>;
      { m.sample_transition(th, x, rng) } -> std::convertible_to<typename M::State>;
      { m.sample_obs(th, x, rng) } -> std::convertible_to<Obs>;
      { m.kernel(th, y) } -> std::same_as<typename M::Kernel>;
    } && StepKernel<typename M::Kernel, typename M::State>;

/// Models whose state space is the finite set {0, ..., state_count() - 1}.
template <class M>
concept FiniteStateModel = StateSpaceModel<M> && requires(const M& m) {
  { m.state_count() } -> std::convertible_to<std::size_t>;
  { m.state_mass(std::size_t{}) } -> std::convertible_to<double>;
};

/// Models on a continuum that can draw probe points for sampled diagnostics.
template <class M>
concept ProbeableModel = StateSpaceModel<M> && requires(const M& m, RandomStream& rng) {
  { m.probe_state(rng) } -> std::convertible_to<typename M::State>;
};

namespace detail {

template <class M>
void require_point(const M& model, const ThetaVec& theta, const typename M::State& x) {
  if (theta.dim() != model.theta_dim()) throw ParameterError("theta dimension mismatch");
  if (!model.contains_state(x)) throw DomainError("state point outside the model state space");
}

inline void require_obs(std::size_t alphabet, Obs y) {
  if (y >= alphabet) throw DomainError("observation outside the model alphabet");
}

template <class State>
double as_coordinate(const State& x) {
  return static_cast<double>(x);
}

inline double linf(const DVec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace detail

/// r(x'|x) = p(x'|x) q(y_prev|x).
template <StateSpaceModel M>
double eval_r(const M& model, const ThetaVec& theta, const typename M::State& x,
              const typename M::State& x_next, Obs y_prev) {
  detail::require_point(model, theta, x);
  detail::require_point(model, theta, x_next);
  detail::require_obs(model.obs_count(), y_prev);
  return model.transition_density(theta, x, x_next) * model.obs_density(theta, y_prev, x);
}

/// t(x'|x) = grad log r(x'|x) = grad p / p + grad q / q.
template <StateSpaceModel M>
DVec eval_t(const M& model, const ThetaVec& theta, const typename M::State& x,
            const typename M::State& x_next, Obs y_prev) {
  detail::require_point(model, theta, x);
  detail::require_point(model, theta, x_next);
  detail::require_obs(model.obs_count(), y_prev);
  const double p = model.transition_density(theta, x, x_next);
  const double q = model.obs_density(theta, y_prev, x);
  if (!(p > kDensityFloor) || !(q > kDensityFloor))
    throw SingularityError("log-gradient of r requested where a density vanishes");
  DVec t = model.transition_grad(theta, x, x_next) / p;
  t += model.obs_grad(theta, y_prev, x) / q;
  return t;
}

/// w(x) = grad log l(x).
template <StateSpaceModel M>
DVec initial_weight(const M& model, const ThetaVec& theta, const typename M::State& x) {
  detail::require_point(model, theta, x);
  if (!(model.initial_density(theta, x) > kDensityFloor))
    throw SingularityError("initial weight requested where the initial density vanishes");
  return model.initial_log_grad(theta, x);
}

// ---------------------------------------------------------------------------
// Assumption diagnostics

struct MixingViolationRecord {
  ThetaVec theta;
  double x = 0.0;
  double other = 0.0;  // x' for transition entries, y for emission entries
  std::string quantity;
  double value = 0.0;
};

struct MixingReport {
  double eps_hat = 0.0;  // largest eps with eps <= p, q <= 1/eps on the probed set
  double k_hat = 1.0;    // max(1, largest probed l-inf gradient of p and q)
  double w_sup = 0.0;    // largest probed l-inf norm of the initial weight
  std::size_t probe_count = 0;
  std::vector<MixingViolationRecord> violations;

  bool ok() const { return violations.empty() && eps_hat > 0.0; }
};

/// Upper end of a reported eps; eps lies in the open interval (0, 1).
inline constexpr double kEpsTolerance = 1e-12;

namespace detail {

class MixingAccumulator {
 public:
  void density(const ThetaVec& th, double x, double other, const char* what, double v) {
    ++report_.probe_count;
    if (!std::isfinite(v) || !(v > kDensityFloor)) {
      report_.violations.push_back({th, x, other, what, v});
      return;
    }
    eps_ = std::min(eps_, std::min(v, 1.0 / v));
  }
  void gradient(const ThetaVec& th, double x, double other, const char* what, const DVec& g) {
    if (!g.allFinite()) {
      report_.violations.push_back({th, x, other, what, std::numeric_limits<double>::quiet_NaN()});
      return;
    }
    report_.k_hat = std::max(report_.k_hat, linf(g));
  }
  void weight(const ThetaVec& th, double x, const DVec& w) {
    if (!w.allFinite()) {
      report_.violations.push_back({th, x, 0.0, "initial_weight", std::numeric_limits<double>::quiet_NaN()});
      return;
    }
    report_.w_sup = std::max(report_.w_sup, linf(w));
  }
  MixingReport finish() {
    report_.eps_hat = report_.violations.empty() ? std::min(eps_, 1.0 - kEpsTolerance) : 0.0;
    return std::move(report_);
  }

 private:
  MixingReport report_;
  double eps_ = 1.0;
};

template <class M>
void probe_point(const M& model, const ThetaVec& th, const typename M::State& x,
                 const typename M::State& xn, MixingAccumulator& acc, bool with_obs) {
  const double cx = as_coordinate(x);
  const double cxn = as_coordinate(xn);
  acc.density(th, cx, cxn, "transition", model.transition_density(th, x, xn));
  acc.gradient(th, cx, cxn, "transition_grad", model.transition_grad(th, x, xn));
  if (!with_obs) return;
  for (Obs y = 0; y < model.obs_count(); ++y) {
    acc.density(th, cx, static_cast<double>(y), "emission", model.obs_density(th, y, x));
    acc.gradient(th, cx, static_cast<double>(y), "emission_grad", model.obs_grad(th, y, x));
  }
}

}  // namespace detail

/// Scans the strong-mixing, gradient-bound and initial-weight conditions.
/// Exhaustive over (x, x', y) for finite state spaces; otherwise draws
/// `point_probes` (x, x') pairs per theta from the model's probe sampler.
/// Violations are recorded, never thrown.
template <StateSpaceModel M>
MixingReport mixing_check(const M& model, const std::vector<ThetaVec>& theta_probes,
                          std::size_t point_probes, std::uint64_t seed) {
  detail::MixingAccumulator acc;
  for (std::size_t t = 0; t < theta_probes.size(); ++t) {
    const ThetaVec& th = theta_probes[t];
    if (th.dim() != model.theta_dim()) throw ParameterError("theta probe dimension mismatch");
    if constexpr (FiniteStateModel<M>) {
      (void)point_probes;
      (void)seed;
      const std::size_t s = model.state_count();
      for (std::size_t x = 0; x < s; ++x) {
        for (std::size_t xn = 0; xn < s; ++xn) detail::probe_point(model, th, x, xn, acc, xn == 0);
        const double l = model.initial_density(th, x);
        if (l > kDensityFloor) acc.weight(th, static_cast<double>(x), model.initial_log_grad(th, x));
      }
    } else {
      static_assert(ProbeableModel<M>, "continuous models must provide probe_state()");
      RandomStream rng(StreamId{seed, StreamPurpose::kProbe, static_cast<std::uint32_t>(t), 0, 0});
      for (std::size_t i = 0; i < point_probes; ++i) {
        const auto x = model.probe_state(rng);
        const auto xn = model.probe_state(rng);
        detail::probe_point(model, th, x, xn, acc, true);
        if (model.initial_density(th, x) > kDensityFloor)
          acc.weight(th, detail::as_coordinate(x), model.initial_log_grad(th, x));
      }
    }
  }
  return acc.finish();
}

struct GradCheckReport {
  bool pass = true;
  double max_error = 0.0;  // max over probes of |fd - analytic| / max(1, |analytic|)
  std::size_t checked = 0;
  // Location of the worst entry.
  std::string worst_quantity;
  double worst_x = 0.0;
  double worst_other = 0.0;
  std::size_t worst_coord = 0;

  std::string describe() const;
};

inline std::string GradCheckReport::describe() const {
  std::ostringstream os;
  os.precision(6);
  os << (pass ? "pass" : "FAIL") << " max_error=" << max_error << " checked=" << checked;
  if (checked)
    os << " worst=" << worst_quantity << "(x=" << worst_x << ", other=" << worst_other
       << ", coord=" << worst_coord << ")";
  return os.str();
}

namespace detail {

class GradAccumulator {
 public:
  explicit GradAccumulator(double tolerance) : tol_(tolerance) {}
  void compare(const char* what, double x, double other, std::size_t coord, double analytic,
               double fd) {
    ++rep_.checked;
    const double err = std::abs(fd - analytic) / std::max(1.0, std::abs(analytic));
    if (!(err <= rep_.max_error)) {
      rep_.max_error = std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
      rep_.worst_quantity = what;
      rep_.worst_x = x;
      rep_.worst_other = other;
      rep_.worst_coord = coord;
    }
  }
  GradCheckReport finish() {
    rep_.pass = rep_.max_error <= tol_;
    return std::move(rep_);
  }

 private:
  double tol_;
  GradCheckReport rep_;
};

template <class M, class F, class G>
void fd_compare(const M& model, const ThetaVec& theta, double h, GradAccumulator& acc,
                const char* what, double x, double other, F&& value, G&& analytic_grad) {
  const DVec g = analytic_grad(theta);
  for (std::size_t k = 0; k < model.theta_dim(); ++k) {
    const double fp = value(theta.shifted(k, h));
    const double fm = value(theta.shifted(k, -h));
    acc.compare(what, x, other, k, g[static_cast<Eigen::Index>(k)], (fp - fm) / (2.0 * h));
  }
}

template <class M>
void grad_probe(const M& model, const ThetaVec& theta, double h, GradAccumulator& acc,
                const typename M::State& x, const typename M::State& xn, bool with_obs) {
  const double cx = as_coordinate(x);
  fd_compare(model, theta, h, acc, "transition", cx, as_coordinate(xn),
             [&](const ThetaVec& t) { return model.transition_density(t, x, xn); },
             [&](const ThetaVec& t) { return model.transition_grad(t, x, xn); });
  if (with_obs) {
    for (Obs y = 0; y < model.obs_count(); ++y) {
      fd_compare(model, theta, h, acc, "emission", cx, static_cast<double>(y),
                 [&](const ThetaVec& t) { return model.obs_density(t, y, x); },
                 [&](const ThetaVec& t) { return model.obs_grad(t, y, x); });
    }
    fd_compare(model, theta, h, acc, "initial", cx, 0.0,
               [&](const ThetaVec& t) { return model.initial_density(t, x); },
               [&](const ThetaVec& t) {
                 return DVec(model.initial_density(t, x) * model.initial_log_grad(t, x));
               });
  }
}

}  // namespace detail

/// Compares analytic gradients of p, q and l against central differences.
/// Exhaustive on finite state spaces, `probes` random points otherwise.
template <StateSpaceModel M>
GradCheckReport grad_consistency_check(const M& model, const ThetaVec& theta, double h,
                                       double tolerance, std::uint64_t seed = 0,
                                       std::size_t probes = 64) {
  if (!(h > 0.0)) throw ParameterError("finite-difference step must be positive");
  if (!model.theta_box().contains_with_margin(theta, h))
    throw ParameterError("theta must be interior to the box with margin h");
  detail::GradAccumulator acc(tolerance);
  if constexpr (FiniteStateModel<M>) {
    (void)seed;
    (void)probes;
    const std::size_t s = model.state_count();
    for (std::size_t x = 0; x < s; ++x)
      for (std::size_t xn = 0; xn < s; ++xn) detail::grad_probe(model, theta, h, acc, x, xn, xn == 0);
  } else {
    static_assert(ProbeableModel<M>, "continuous models must provide probe_state()");
    RandomStream rng(StreamId{seed, StreamPurpose::kProbe, 0xFFFFU, 0, 0});
    for (std::size_t i = 0; i < probes; ++i) {
      const auto x = model.probe_state(rng);
      const auto xn = model.probe_state(rng);
      detail::grad_probe(model, theta, h, acc, x, xn, true);
    }
  }
  return acc.finish();
}

}  // namespace pfd
