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

#include "pfd/exact_oracle.hpp"

#include <cmath>
#include <cstdio>

namespace pfd {

namespace {

void check_inputs(const GridModel& model, const ThetaVec& theta, const std::vector<Obs>& ys) {
  if (theta.dim() != model.theta_dim()) throw ParameterError("theta dimension mismatch");
  if (ys.empty()) throw ParameterError("observation sequence must be nonempty");
  for (Obs y : ys)
    if (y >= model.obs_count()) throw DomainError("observation outside the model alphabet");
}

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

ExactFilterState report(std::size_t n, const DVec& a, const DMat& h) {
  ExactFilterState st;
  st.n = n;
  const double mass = a.sum();
  st.P = a / mass;
  const DMat H = h / mass;
  st.H_mass = H.rowwise().sum();
  st.Q = H - st.H_mass * st.P.transpose();
  return st;
}

}  // namespace

DVec initial_law(const GridModel& model, const ThetaVec& theta) {
  const GridTables t = model.tables(theta);
  return Eigen::Map<const DVec>(t.init_prob.data(), idx(t.S));
}

DMat initial_derivative_measure(const GridModel& model, const ThetaVec& theta) {
  const GridTables t = model.tables(theta);
  DMat zeta(idx(t.d), idx(t.S));
  DVec wbar = DVec::Zero(idx(t.d));
  for (std::size_t x = 0; x < t.S; ++x)
    for (std::size_t k = 0; k < t.d; ++k) wbar[idx(k)] += t.init_prob[x] * t.init_weight[x * t.d + k];
  for (std::size_t x = 0; x < t.S; ++x)
    for (std::size_t k = 0; k < t.d; ++k)
      zeta(idx(k), idx(x)) = (t.init_weight[x * t.d + k] - wbar[idx(k)]) * t.init_prob[x];
  return zeta;
}

std::vector<ExactFilterState> tangent_recursion(const GridModel& model, const ThetaVec& theta,
                                                const std::vector<Obs>& ys, const DVec& xi,
                                                const DMat& zeta, bool renormalize) {
  check_inputs(model, theta, ys);
  const GridTables t = model.tables(theta);
  const std::size_t S = t.S, A = t.A, d = t.d;
  if (static_cast<std::size_t>(xi.size()) != S) throw ParameterError("initial law has the wrong length");
  if (static_cast<std::size_t>(zeta.rows()) != d || static_cast<std::size_t>(zeta.cols()) != S)
    throw ParameterError("initial signed measure must be d x S");
  if (!(xi.minCoeff() >= 0.0) || !(xi.sum() > 0.0)) throw ParameterError("initial law must be a positive measure");

  std::vector<ExactFilterState> out;
  out.reserve(ys.size());
  DVec a = xi;
  DMat h = zeta;
  out.push_back(report(0, a, h));
  DVec an(idx(S));
  DMat hn(idx(d), idx(S));
  for (std::size_t k = 0; k + 1 < ys.size(); ++k) {
    const Obs y = ys[k];
    an.setZero();
    hn.setZero();
    for (std::size_t xn = 0; xn < S; ++xn) {
      const double mu = model.state_mass(xn);
      for (std::size_t x = 0; x < S; ++x) {
        const double q = t.emis_dens[x * A + y];
        const double p = t.trans_dens[x * S + xn];
        const double pm = t.trans_prob[x * S + xn];
        an[idx(xn)] += a[idx(x)] * pm * q;
        for (std::size_t c = 0; c < d; ++c) {
          const double grad_r = t.trans_grad[(x * S + xn) * d + c] * q + p * t.emis_grad[(x * A + y) * d + c];
          hn(idx(c), idx(xn)) += h(idx(c), idx(x)) * pm * q + a[idx(x)] * grad_r * mu;
        }
      }
    }
    if (renormalize) {
      const double c = an.sum();
      an /= c;
      hn /= c;
    }
    a = an;
    h = hn;
    out.push_back(report(k + 1, a, h));
  }
  return out;
}

std::vector<ExactFilterState> exact_derivative(const GridModel& model, const ThetaVec& theta,
                                               const std::vector<Obs>& ys, bool renormalize) {
  return tangent_recursion(model, theta, ys, initial_law(model, theta),
                           initial_derivative_measure(model, theta), renormalize);
}

std::vector<ExactFilterState> exact_filter(const GridModel& model, const ThetaVec& theta,
                                           const std::vector<Obs>& ys) {
  check_inputs(model, theta, ys);
  const GridTables t = model.tables(theta);
  const std::size_t S = t.S, A = t.A;
  std::vector<ExactFilterState> out;
  out.reserve(ys.size());
  DVec P = Eigen::Map<const DVec>(t.init_prob.data(), idx(S));
  out.push_back({0, P, {}, {}});
  DVec next(idx(S));
  for (std::size_t k = 0; k + 1 < ys.size(); ++k) {
    next.setZero();
    for (std::size_t x = 0; x < S; ++x) {
      const double wx = P[idx(x)] * t.emis_dens[x * A + ys[k]];
      for (std::size_t xn = 0; xn < S; ++xn) next[idx(xn)] += wx * t.trans_prob[x * S + xn];
    }
    P = next / next.sum();
    out.push_back({k + 1, P, {}, {}});
  }
  return out;
}

ExactFilterState path_bruteforce(const GridModel& model, const ThetaVec& theta, const std::vector<Obs>& ys) {
  check_inputs(model, theta, ys);
  const GridTables t = model.tables(theta);
  const std::size_t S = t.S, A = t.A, d = t.d;
  const std::size_t len = ys.size();  // path x_0..x_n has n + 1 = len states
  double count = 1.0;
  for (std::size_t k = 0; k < len; ++k) count *= static_cast<double>(S);
  if (count > static_cast<double>(kMaxPaths))
    throw SizeError("path enumeration exceeds " + std::to_string(kMaxPaths) + " paths");

  DVec R = DVec::Zero(idx(S));
  DMat T = DMat::Zero(idx(d), idx(S));
  std::vector<std::size_t> path(len, 0);
  DVec score(idx(d));
  for (;;) {
    double weight = t.init_prob[path[0]];
    for (std::size_t c = 0; c < d; ++c) score[idx(c)] = t.init_weight[path[0] * d + c];
    for (std::size_t k = 1; k < len; ++k) {
      const std::size_t x = path[k - 1], xn = path[k];
      const Obs y = ys[k - 1];
      const double p = t.trans_dens[x * S + xn];
      const double q = t.emis_dens[x * A + y];
      weight *= p * model.state_mass(xn) * q;
      for (std::size_t c = 0; c < d; ++c)
        score[idx(c)] += t.trans_grad[(x * S + xn) * d + c] / p + t.emis_grad[(x * A + y) * d + c] / q;
    }
    R[idx(path.back())] += weight;
    T.col(idx(path.back())) += weight * score;
    // Odometer increment, first coordinate fastest.
    std::size_t pos = 0;
    while (pos < len && ++path[pos] == S) path[pos++] = 0;
    if (pos == len) break;
  }
  ExactFilterState st;
  st.n = len - 1;
  const double Rbar = R.sum();
  const DVec Tbar = T.rowwise().sum();
  st.P = R / Rbar;
  st.Q = T / Rbar - (Tbar / Rbar) * st.P.transpose();
  st.H_mass = Tbar / Rbar;
  return st;
}

std::vector<DMat> fd_derivative(const GridModel& model, const ThetaVec& theta, const std::vector<Obs>& ys,
                                double h) {
  check_inputs(model, theta, ys);
  if (!(h > 0.0)) throw ParameterError("finite-difference step must be positive");
  const std::size_t d = model.theta_dim(), S = model.state_count();
  std::vector<DMat> out(ys.size(), DMat::Zero(idx(d), idx(S)));
  for (std::size_t c = 0; c < d; ++c) {
    const ThetaVec tp = theta.shifted(c, h), tm = theta.shifted(c, -h);
    if (!model.theta_box().contains(tp) || !model.theta_box().contains(tm))
      throw ParameterError("theta +- h leaves the parameter box in coordinate " + std::to_string(c));
    const auto fp = exact_filter(model, tp, ys);
    const auto fm = exact_filter(model, tm, ys);
    for (std::size_t k = 0; k < ys.size(); ++k)
      out[k].row(idx(c)) = ((fp[k].P - fm[k].P) / (2.0 * h)).transpose();
  }
  return out;
}

DVec exact_predictive_score(const GridModel& model, const ThetaVec& theta, const ExactFilterState& st, Obs y) {
  if (y >= model.obs_count()) throw DomainError("observation outside the model alphabet");
  if (st.Q.size() == 0) throw ParameterError("predictive score needs the derivative measure");
  const GridTables t = model.tables(theta);
  const std::size_t S = t.S, A = t.A, d = t.d;
  double den = 0.0;
  DVec num = DVec::Zero(idx(d));
  for (std::size_t x = 0; x < S; ++x) {
    const double q = t.emis_dens[x * A + y];
    den += q * st.P[idx(x)];
    for (std::size_t c = 0; c < d; ++c)
      num[idx(c)] += q * st.Q(idx(c), idx(x)) + t.emis_grad[(x * A + y) * d + c] * st.P[idx(x)];
  }
  return num / den;
}

double tv_distance(const DVec& a, const DVec& b) { return (a - b).cwiseAbs().sum(); }

double signed_tv_distance(const DMat& a, const DMat& b) { return (a - b).cwiseAbs().sum(); }

void write_oracle_csv(std::ostream& os, const std::vector<ExactFilterState>& states) {
  const Eigen::Index d = states.empty() ? 0 : states.front().Q.rows();
  os << "n,state,P";
  for (Eigen::Index j = 0; j < d; ++j) os << ",Q_" << (j + 1);
  os << '\n';
  char buf[64];
  for (const auto& st : states) {
    for (Eigen::Index x = 0; x < st.P.size(); ++x) {
      std::snprintf(buf, sizeof buf, "%.17g", st.P[x]);
      os << st.n << ',' << x << ',' << buf;
      for (Eigen::Index j = 0; j < d; ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", st.Q(j, x));
        os << ',' << buf;
      }
      os << '\n';
    }
  }
}

}  // namespace pfd
