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

// O(N^2) particle approximation of the one-step predictor and its
// theta-derivative.
//
// A cloud at step n carries particles X_{n,i} and weight vectors W_{n,i}.
// One step with observation y_n draws
//   X_{n+1,i} ~ sum_j r(.|X_{n,j}) / sum_j q(y_n|X_{n,j}),   r = p q
// (ancestor by inverse CDF on q, then the transition kernel) and sets
//   W_{n+1,i} = [sum_j r_ij W_{n,j} + sum_j grad r_ij] / sum_j r_ij,
//   r_ij = r(X_{n+1,i} | X_{n,j}).
// The estimates are xi_hat = (1/N) sum_i delta_{X_i} and
// zeta_hat = (1/N) sum_i V_i delta_{X_i} with V_i = W_i - mean_j W_j.

#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pfd/model.hpp"

namespace pfd {

struct CloudKey {
  std::uint64_t seed = 0;
  std::uint32_t replicate = 0;
};

template <class State>
struct ParticleCloud {
  std::size_t n = 0;
  std::vector<State> particles;
  DMat weights;  // d x N, column i is W_{n,i}
  ThetaVec theta{0.0};
  CloudKey key;
  std::optional<Obs> last_obs;  // observation consumed to reach this step

  std::size_t size() const { return particles.size(); }
  std::size_t theta_dim() const { return static_cast<std::size_t>(weights.rows()); }
  // V = W - mean(W) column-wise.
  DMat centered_weights() const {
    const DVec mean = weights.rowwise().mean();
    return weights.colwise() - mean;
  }
};

namespace detail {

inline std::uint32_t as_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) throw SizeError(std::string(what) + " exceeds 2^32");
  return static_cast<std::uint32_t>(v);
}

inline RandomStream particle_stream(const CloudKey& key, std::size_t step, std::size_t i) {
  return RandomStream(StreamId{key.seed, StreamPurpose::kParticles, key.replicate,
                               as_u32(step, "step index"), as_u32(i, "particle index")});
}

}  // namespace detail

/// Draws N particles from xi_theta and sets W_{0,i} = scale * w_theta(X_{0,i}).
template <StateSpaceModel M>
ParticleCloud<typename M::State> init_cloud(const M& model, const ThetaVec& theta, std::size_t N,
                                            CloudKey key, double weight_scale = 1.0) {
  if (N < 2) throw ParameterError("particle count N must be at least 2");
  if (theta.dim() != model.theta_dim()) throw ParameterError("theta dimension mismatch");
  if (!model.theta_box().contains(theta)) throw ParameterError("theta outside the model box");
  if (!std::isfinite(weight_scale)) throw ParameterError("weight scale must be finite");
  ParticleCloud<typename M::State> c;
  c.n = 0;
  c.theta = theta;
  c.key = key;
  c.particles.reserve(N);
  c.weights.resize(static_cast<Eigen::Index>(model.theta_dim()), static_cast<Eigen::Index>(N));
  for (std::size_t i = 0; i < N; ++i) {
    RandomStream rng = detail::particle_stream(key, 0, i);
    const auto x = model.sample_initial(theta, rng);
    c.particles.push_back(x);
    c.weights.col(static_cast<Eigen::Index>(i)) = weight_scale * initial_weight(model, theta, x);
  }
  return c;
}

namespace detail {

/// W_{n+1,i} = [sum_j r_ij W_{n,j} + sum_j grad r_ij] / sum_j r_ij with
/// compensated sums. D > 0 fixes the theta dimension at compile time.
template <std::size_t D, class State, class Kernel, class Acc>
void update_weights_impl(const Kernel& kernel, const ParticleCloud<State>& cloud, ParticleCloud<State>& next,
                         std::size_t d, Acc& num, double* grad) {
  const std::size_t N = cloud.size();
  const double* W = cloud.weights.data();
  constexpr bool tabulated = requires(const State& x) {
    kernel.r_column(x);
    kernel.grad_column(x);
    kernel.state_count();
  };
  // On a tabulated kernel W_{n+1,i} depends on i only through X_{n+1,i}, so
  // particles sharing a state reuse the first one's (bit-identical) result.
  std::vector<std::size_t> first_with_state;
  if constexpr (tabulated) first_with_state.assign(kernel.state_count(), N);
  for (std::size_t i = 0; i < N; ++i) {
    const State& xi = next.particles[i];
    if constexpr (tabulated) {
      std::size_t& first = first_with_state[xi];
      if (first < N) {
        next.weights.col(static_cast<Eigen::Index>(i)) = next.weights.col(static_cast<Eigen::Index>(first));
        continue;
      }
      first = i;
    }
    NeumaierSum den;
    for (std::size_t k = 0; k < d; ++k) num[k] = NeumaierSum{};
    if constexpr (tabulated) {
      // Tabulated kernel: r(xi | .) and its gradient are contiguous columns.
      const double* rc = kernel.r_column(xi);
      const double* gc = kernel.grad_column(xi);
      for (std::size_t j = 0; j < N; ++j) {
        const std::size_t from = cloud.particles[j];
        const double r = rc[from];
        const double* g = gc + from * d;
        const double* w = W + j * d;
        den.add(r);
        for (std::size_t k = 0; k < d; ++k) num[k].add(r * w[k] + g[k]);
      }
    } else {
      for (std::size_t j = 0; j < N; ++j) {
        const double r = kernel.eval(cloud.particles[j], xi, grad);
        const double* w = W + j * d;
        den.add(r);
        for (std::size_t k = 0; k < d; ++k) num[k].add(r * w[k] + grad[k]);
      }
    }
    const double dv = den.value();
    if (!(dv > kDensityFloor))
      throw MixingViolation("weight denominator underflows at step " + std::to_string(next.n));
    for (std::size_t k = 0; k < d; ++k)
      next.weights(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = num[k].value() / dv;
  }
}

/// W_{n+1,i} = [sum_j r_ij W_{n,j} + sum_j grad r_ij] / sum_j r_ij with
/// compensated sums. D > 0 fixes the theta dimension at compile time so the
/// accumulators stay in registers.
template <std::size_t D, class State, class Kernel>
void update_weights(const Kernel& kernel, const ParticleCloud<State>& cloud, ParticleCloud<State>& next) {
  if constexpr (D > 0) {
    std::array<NeumaierSum, D> num;
    std::array<double, D> grad{};
    update_weights_impl<D>(kernel, cloud, next, D, num, grad.data());
  } else {
    const std::size_t d = cloud.theta_dim();
    std::vector<NeumaierSum> num(d);
    std::vector<double> grad(d);
    update_weights_impl<0>(kernel, cloud, next, d, num, grad.data());
  }
}

}  // namespace detail

/// One step of the scheme with a prebuilt kernel for (theta, y).
template <class State, class Kernel>
  requires StepKernel<Kernel, State>
ParticleCloud<State> step_with_kernel(const Kernel& kernel, const ParticleCloud<State>& cloud, Obs y) {
  const std::size_t N = cloud.size();
  const std::size_t d = cloud.theta_dim();
  std::vector<double> cum(N);
  double total = 0.0;
  for (std::size_t j = 0; j < N; ++j) {
    total += kernel.obs_weight(cloud.particles[j]);
    cum[j] = total;
  }
  if (!(total > kDensityFloor) || !std::isfinite(total))
    throw MixingViolation("all emission weights underflow at step " + std::to_string(cloud.n));

  ParticleCloud<State> next;
  next.n = cloud.n + 1;
  next.theta = cloud.theta;
  next.key = cloud.key;
  next.last_obs = y;
  next.particles.reserve(N);
  for (std::size_t i = 0; i < N; ++i) {
    RandomStream rng = detail::particle_stream(cloud.key, next.n, i);
    const std::size_t a = draw_from_cumulative(cum.data(), N, rng.uniform());
    next.particles.push_back(kernel.propagate(cloud.particles[a], rng));
  }

  next.weights.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(N));
  switch (d) {
    case 1: detail::update_weights<1>(kernel, cloud, next); break;
    case 2: detail::update_weights<2>(kernel, cloud, next); break;
    case 3: detail::update_weights<3>(kernel, cloud, next); break;
    default: detail::update_weights<0>(kernel, cloud, next); break;
  }
  return next;
}

template <StateSpaceModel M>
ParticleCloud<typename M::State> step(const M& model, const ParticleCloud<typename M::State>& cloud,
                                      Obs y) {
  if (y >= model.obs_count()) throw DomainError("observation outside the model alphabet");
  return step_with_kernel(model.kernel(cloud.theta, y), cloud, y);
}

// ---------------------------------------------------------------------------
// Matrix form

struct StepMatrices {
  DMat A;  // N x N, A(i, j) = r(X_{n+1,j} | X_{n,i}) / sum_k r(X_{n+1,j} | X_{n,k})
  DMat B;  // d x N
  double tau = 0.0;
};

/// Ergodicity coefficient of a column-stochastic matrix:
/// (1/2) max over column pairs of the l1 distance between them.
/// Bitwise-identical columns are compared once.
inline double ergodicity_coefficient(const DMat& A) {
  std::vector<Eigen::Index> distinct;
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    bool seen = false;
    for (Eigen::Index u : distinct)
      if ((A.col(u).array() == A.col(j).array()).all()) {
        seen = true;
        break;
      }
    if (!seen) distinct.push_back(j);
  }
  double worst = 0.0;
  for (std::size_t a = 0; a < distinct.size(); ++a)
    for (std::size_t b = a + 1; b < distinct.size(); ++b)
      worst = std::max(worst, (A.col(distinct[a]) - A.col(distinct[b])).cwiseAbs().sum());
  return 0.5 * worst;
}

template <StateSpaceModel M>
StepMatrices step_matrices(const M& model, const ParticleCloud<typename M::State>& prev,
                           const ParticleCloud<typename M::State>& next) {
  if (!next.last_obs || next.n != prev.n + 1 || next.size() != prev.size())
    throw ParameterError("step_matrices needs a cloud and its direct successor");
  const auto kernel = model.kernel(prev.theta, *next.last_obs);
  const std::size_t N = prev.size(), d = prev.theta_dim();
  StepMatrices m;
  m.A.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
  m.B.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(N));
  std::vector<double> grad(d);
  std::vector<NeumaierSum> gsum(d);
  for (std::size_t j = 0; j < N; ++j) {
    NeumaierSum den;
    std::fill(gsum.begin(), gsum.end(), NeumaierSum{});
    for (std::size_t i = 0; i < N; ++i) {
      const double r = kernel.eval(prev.particles[i], next.particles[j], grad.data());
      m.A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r;
      den.add(r);
      for (std::size_t k = 0; k < d; ++k) gsum[k].add(grad[k]);
    }
    const double dv = den.value();
    m.A.col(static_cast<Eigen::Index>(j)) /= dv;
    for (std::size_t k = 0; k < d; ++k)
      m.B(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = gsum[k].value() / dv;
  }
  m.tau = ergodicity_coefficient(m.A);
  return m;
}

/// max |W_{n+1} - (W_n A + B)| entrywise.
template <class State>
double matrix_identity_residual(const ParticleCloud<State>& prev, const ParticleCloud<State>& next,
                                const StepMatrices& m) {
  return (next.weights - (prev.weights * m.A + m.B)).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Empirical measures

template <class State>
struct EmpiricalMeasure {
  std::vector<State> atoms;  // each atom carries mass 1/N
  double total_mass() const { return 1.0; }
};

template <class State>
struct SignedEmpirical {
  std::vector<State> atoms;
  DMat masses;  // d x N, column i is V_i / N

  DVec total_mass() const { return masses.rowwise().sum(); }
  // sum_i ||V_i||_1 / N: total variation built on the l1 vector norm.
  double norm_tv() const { return masses.cwiseAbs().sum(); }
  // max_k sum_i |V_{k,i}| / N: largest per-component total variation.
  double norm_linf() const { return masses.cwiseAbs().rowwise().sum().maxCoeff(); }
};

template <class State>
EmpiricalMeasure<State> filter_measure(const ParticleCloud<State>& c) {
  return {c.particles};
}

template <class State>
SignedEmpirical<State> deriv_measure(const ParticleCloud<State>& c) {
  return {c.particles, c.centered_weights() / static_cast<double>(c.size())};
}

/// xi_hat(phi) = (sum_i phi(X_i)) / N, so phi = 1 gives exactly 1.
template <class State, class F>
double integrate(const EmpiricalMeasure<State>& m, F&& phi) {
  double s = 0.0;
  for (const auto& x : m.atoms) s += static_cast<double>(phi(x));
  return s / static_cast<double>(m.atoms.size());
}

template <class State, class F>
DVec integrate(const SignedEmpirical<State>& m, F&& phi) {
  DVec s = DVec::Zero(m.masses.rows());
  for (std::size_t i = 0; i < m.atoms.size(); ++i)
    s += static_cast<double>(phi(m.atoms[i])) * m.masses.col(static_cast<Eigen::Index>(i));
  return s;
}

/// Tabulated test function on a grid.
inline auto table_function(const std::vector<double>& table) {
  return [&table](std::size_t x) { return table.at(x); };
}

// ---------------------------------------------------------------------------
// Trajectories

struct RunOptions {
  bool record_clouds = false;
  bool record_matrices = false;  // tau, min entry and identity residual per step
  bool keep_matrices = false;    // also store A and B (N x N per step)
  double weight_scale = 1.0;
};

struct StepSummary {
  std::size_t n = 0;
  double zeta_norm_tv = 0.0;
  double zeta_norm_linf = 0.0;
  double xi_mass = 1.0;
  double zeta_mass = 0.0;           // l-inf of zeta_hat(1)
  double tau = std::numeric_limits<double>::quiet_NaN();  // steps >= 1 with matrices
  double a_min = std::numeric_limits<double>::quiet_NaN();
  double identity_residual = std::numeric_limits<double>::quiet_NaN();
};

template <class State>
struct CloudTrajectory {
  std::vector<StepSummary> steps;            // k = 0..n
  std::vector<ParticleCloud<State>> clouds;  // when recorded
  std::vector<StepMatrices> matrices;        // when kept; index k-1 holds the step k-1 -> k
  double weight_scale = 1.0;
};

template <class State>
StepSummary summarize(const ParticleCloud<State>& c) {
  StepSummary s;
  s.n = c.n;
  const auto xi = filter_measure(c);
  const auto zeta = deriv_measure(c);
  s.xi_mass = integrate(xi, [](const State&) { return 1.0; });
  s.zeta_mass = detail::linf(zeta.total_mass());
  s.zeta_norm_tv = zeta.norm_tv();
  s.zeta_norm_linf = zeta.norm_linf();
  return s;
}

/// Runs clouds k = 0..n over y_{0:n}; step k -> k+1 consumes y_k, so y_n
/// is not used by the weights.
template <StateSpaceModel M>
CloudTrajectory<typename M::State> run(const M& model, const ThetaVec& theta, const std::vector<Obs>& ys,
                                       std::size_t N, CloudKey key, const RunOptions& opts = {}) {
  if (ys.empty()) throw ParameterError("observation sequence must be nonempty");
  CloudTrajectory<typename M::State> tr;
  tr.weight_scale = opts.weight_scale;
  auto cloud = init_cloud(model, theta, N, key, opts.weight_scale);
  tr.steps.push_back(summarize(cloud));
  if (opts.record_clouds) tr.clouds.push_back(cloud);
  for (std::size_t k = 0; k + 1 < ys.size(); ++k) {
    auto next = step(model, cloud, ys[k]);
    StepSummary s = summarize(next);
    if (opts.record_matrices) {
      StepMatrices m = step_matrices(model, cloud, next);
      s.tau = m.tau;
      s.a_min = m.A.minCoeff();
      s.identity_residual = matrix_identity_residual(cloud, next, m);
      if (opts.keep_matrices) tr.matrices.push_back(std::move(m));
    }
    tr.steps.push_back(s);
    if (opts.record_clouds) tr.clouds.push_back(next);
    cloud = std::move(next);
  }
  return tr;
}

/// Recomputes v_hat^k from the step k-1 measures directly through the model
/// densities and returns max_{k,i,c} |V_{k,i} - (v_hat^k(X_{k,i}) - xi_hat_k(v_hat^k))|.
/// v_hat^0 = s (w - integral of w against xi) with s the run's weight scale.
template <StateSpaceModel M>
double centered_weight_check(const M& model, const CloudTrajectory<typename M::State>& tr) {
  if (tr.clouds.empty()) throw ParameterError("centered_weight_check needs recorded clouds");
  using State = typename M::State;
  double worst = 0.0;
  auto compare = [&worst](const DMat& V, const DMat& vhat) {
    const DVec mean = vhat.rowwise().mean();
    worst = std::max(worst, (V - (vhat.colwise() - mean)).cwiseAbs().maxCoeff());
  };
  const ThetaVec& theta = tr.clouds.front().theta;
  const Eigen::Index d = static_cast<Eigen::Index>(model.theta_dim());
  {
    const auto& c = tr.clouds.front();
    const DVec wbar = tr.weight_scale * model.initial_weight_mean(theta);
    DMat vhat(d, static_cast<Eigen::Index>(c.size()));
    for (std::size_t i = 0; i < c.size(); ++i)
      vhat.col(static_cast<Eigen::Index>(i)) = tr.weight_scale * initial_weight(model, theta, c.particles[i]) - wbar;
    compare(c.centered_weights(), vhat);
  }
  for (std::size_t k = 1; k < tr.clouds.size(); ++k) {
    const auto& prev = tr.clouds[k - 1];
    const auto& cur = tr.clouds[k];
    const Obs y = *cur.last_obs;
    const auto zeta = deriv_measure(prev);
    const double invN = 1.0 / static_cast<double>(prev.size());
    DMat vhat(d, static_cast<Eigen::Index>(cur.size()));
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const State& x = cur.particles[i];
      DVec num = DVec::Zero(d);
      double den = 0.0;
      for (std::size_t j = 0; j < prev.size(); ++j) {
        const State& xp = prev.particles[j];
        const double p = model.transition_density(theta, xp, x);
        const double q = model.obs_density(theta, y, xp);
        const DVec grad_r = model.transition_grad(theta, xp, x) * q + p * model.obs_grad(theta, y, xp);
        num += p * q * zeta.masses.col(static_cast<Eigen::Index>(j)) + invN * grad_r;
        den += invN * p * q;
      }
      vhat.col(static_cast<Eigen::Index>(i)) = num / den;
    }
    compare(cur.centered_weights(), vhat);
  }
  return worst;
}

/// Particle estimate of grad log of the one-step predictive likelihood of y:
/// [zeta_hat(q(y|.)) + xi_hat(grad q(y|.))] / xi_hat(q(y|.)).
template <StateSpaceModel M>
DVec predictive_score(const M& model, const ParticleCloud<typename M::State>& c, Obs y) {
  if (y >= model.obs_count()) throw DomainError("observation outside the model alphabet");
  const auto kernel = model.kernel(c.theta, y);
  const std::size_t N = c.size(), d = c.theta_dim();
  const DMat V = c.centered_weights();
  DVec zq = DVec::Zero(static_cast<Eigen::Index>(d));
  DVec gq = DVec::Zero(static_cast<Eigen::Index>(d));
  double sq = 0.0;
  std::vector<double> g(d);
  for (std::size_t i = 0; i < N; ++i) {
    const double q = kernel.obs_weight(c.particles[i]);
    kernel.obs_weight_grad(c.particles[i], g.data());
    sq += q;
    zq += q * V.col(static_cast<Eigen::Index>(i));
    gq += Eigen::Map<const DVec>(g.data(), static_cast<Eigen::Index>(d));
  }
  return (zq + gq) / sq;
}

/// CSV columns: n, xi_mass, zeta_mass, zeta_norm_tv, zeta_norm_linf, tau, a_min, identity_residual.
template <class State>
void write_steps_csv(std::ostream& os, const CloudTrajectory<State>& tr) {
  os << "n,xi_mass,zeta_mass,zeta_norm_tv,zeta_norm_linf,tau,a_min,identity_residual\n";
  char buf[512];
  for (const auto& s : tr.steps) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.n, s.xi_mass, s.zeta_mass,
                  s.zeta_norm_tv, s.zeta_norm_linf, s.tau, s.a_min, s.identity_residual);
    os << buf;
  }
}

/// One JSON object per line: n, particles, weights (d rows of N), tau, zeta_norm_tv.
template <class State>
void write_trajectory_jsonl(std::ostream& os, const CloudTrajectory<State>& tr) {
  if (tr.clouds.size() != tr.steps.size())
    throw ParameterError("trajectory dump needs recorded clouds");
  for (std::size_t k = 0; k < tr.clouds.size(); ++k) {
    const auto& c = tr.clouds[k];
    nlohmann::json j;
    j["n"] = c.n;
    j["particles"] = c.particles;
    nlohmann::json w = nlohmann::json::array();
    for (Eigen::Index r = 0; r < c.weights.rows(); ++r) {
      std::vector<double> row(c.weights.cols());
      for (Eigen::Index i = 0; i < c.weights.cols(); ++i) row[static_cast<std::size_t>(i)] = c.weights(r, i);
      w.push_back(row);
    }
    j["weights"] = w;
    const double tau = tr.steps[k].tau;
    j["tau"] = std::isnan(tau) ? nlohmann::json(nullptr) : nlohmann::json(tau);
    j["zeta_norm_tv"] = tr.steps[k].zeta_norm_tv;
    os << j.dump() << '\n';
  }
}

}  // namespace pfd
