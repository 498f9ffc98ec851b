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

#include "pfd/bias_lab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

#include "pfd/parallel.hpp"
#include "pfd/particle.hpp"
#include "pfd/reference_models.hpp"

namespace pfd {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string derivative_target(std::size_t j) { return "derivative:" + std::to_string(j); }

}  // namespace

// ---------------------------------------------------------------------------
// Scenarios

std::vector<TestFunction> parse_phi_spec(const std::string& spec, std::size_t states) {
  std::vector<TestFunction> out;
  for (const auto& item : split(spec, ',')) {
    if (item == "indicators") {
      for (std::size_t s = 0; s < states; ++s) {
        TestFunction f{"indicator:" + std::to_string(s), std::vector<double>(states, 0.0)};
        f.values[s] = 1.0;
        out.push_back(std::move(f));
      }
    } else if (item == "one") {
      out.push_back({"one", std::vector<double>(states, 1.0)});
    } else if (item.rfind("indicator:", 0) == 0) {
      std::size_t k = 0;
      try {
        k = std::stoul(item.substr(10));
      } catch (const std::exception&) {
        throw ConfigError("bad test function: " + item);
      }
      if (k >= states) throw ConfigError("indicator state out of range: " + item);
      TestFunction f{item, std::vector<double>(states, 0.0)};
      f.values[k] = 1.0;
      out.push_back(std::move(f));
    } else {
      throw ConfigError("unknown test function: " + item);
    }
  }
  if (out.empty()) throw ConfigError("empty test-function list");
  for (auto& f : out)
    for (double& v : f.values) v = std::clamp(v, -1.0, 1.0);
  return out;
}

Scenario make_scenario(const GridModel& model, const std::string& model_ref, const ThetaVec& theta,
                       std::size_t n, std::uint64_t seed, const std::string& phi_spec) {
  const MixingReport mix = mixing_check(model, {theta}, 0, seed);
  if (!mix.ok())
    throw MixingViolation("model fails the mixing check at theta " + theta.to_string() + " (" +
                          std::to_string(mix.violations.size()) + " violations)");
  if (!model.theta_box().contains(theta)) throw ParameterError("theta outside the model box");
  Scenario s;
  s.model_ref = model_ref;
  s.theta = theta;
  s.n = n;
  s.seed = seed;
  s.phi_spec = phi_spec;
  s.ys = simulate(model, theta, n, seed).obs;
  s.phis = parse_phi_spec(phi_spec, model.state_count());
  return s;
}

std::string scenario_to_json(const Scenario& s) {
  json j;
  j["model"] = s.model_ref;
  j["theta"] = std::vector<double>(s.theta.coords().begin(), s.theta.coords().end());
  j["n"] = s.n;
  j["seed"] = s.seed;
  j["phi"] = s.phi_spec;
  j["y"] = s.ys;
  return j.dump(2) + "\n";
}

Scenario scenario_from_json(const std::string& text, std::size_t states) {
  try {
    const json j = json::parse(text);
    Scenario s;
    s.model_ref = j.at("model").get<std::string>();
    s.theta = ThetaVec(j.at("theta").get<std::vector<double>>());
    s.n = j.at("n").get<std::size_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.phi_spec = j.value("phi", std::string("indicators"));
    s.ys = j.at("y").get<std::vector<Obs>>();
    if (s.ys.size() != s.n + 1) throw ConfigError("scenario y must hold n + 1 observations");
    s.phis = parse_phi_spec(s.phi_spec, states);
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Replicate engine

void InvariantMonitor::merge(const InvariantMonitor& o) {
  xi_mass_dev = std::max(xi_mass_dev, o.xi_mass_dev);
  zeta_mass = std::max(zeta_mass, o.zeta_mass);
  oracle_simplex = std::max(oracle_simplex, o.oracle_simplex);
  oracle_q_rows = std::max(oracle_q_rows, o.oracle_q_rows);
}

namespace {

struct ErrorStats {
  RunningStats err;
  RunningStats sq;
};

struct Accum {
  std::vector<ErrorStats> stats;  // [(time * phis + phi) * (1 + d) + comp]
  InvariantMonitor monitor;
};

InvariantMonitor oracle_monitor(const std::vector<ExactFilterState>& ex) {
  InvariantMonitor m;
  for (const auto& st : ex) {
    m.oracle_simplex = std::max({m.oracle_simplex, std::abs(st.P.sum() - 1.0), std::max(0.0, -st.P.minCoeff())});
    m.oracle_q_rows = std::max(m.oracle_q_rows, st.Q.rowwise().sum().cwiseAbs().maxCoeff());
  }
  return m;
}

void watch(const ParticleCloud<std::size_t>& c, InvariantMonitor& m) {
  const double xi = integrate(filter_measure(c), [](std::size_t) { return 1.0; });
  const DVec zeta = integrate(deriv_measure(c), [](std::size_t) { return 1.0; });
  m.xi_mass_dev = std::max(m.xi_mass_dev, std::abs(xi - 1.0));
  m.zeta_mass = std::max(m.zeta_mass, detail::linf(zeta));
}

/// R replicates with N particles; errors recorded at `times` for every phi.
Accum run_replicates(const GridModel& model, const Scenario& sc, const std::vector<ExactFilterState>& ex,
                     std::size_t N, std::size_t R, std::uint64_t particle_seed,
                     const std::vector<std::size_t>& times, std::size_t threads) {
  const std::size_t d = model.theta_dim();
  const std::size_t last = *std::max_element(times.begin(), times.end());
  std::vector<GridModel::Kernel> kernels;
  kernels.reserve(last);
  for (std::size_t k = 0; k < last; ++k) kernels.push_back(model.kernel(sc.theta, sc.ys[k]));
  std::vector<int> slot(last + 1, -1);
  for (std::size_t t = 0; t < times.size(); ++t) slot[times[t]] = static_cast<int>(t);
  const std::size_t width = 1 + d;
  const std::size_t cells = times.size() * sc.phis.size() * width;

  Accum init;
  init.stats.resize(cells);
  auto work = [&](std::size_t b, std::size_t e) {
    Accum acc;
    acc.stats.resize(cells);
    for (std::size_t r = b; r < e; ++r) {
      auto cloud = init_cloud(model, sc.theta, N, CloudKey{particle_seed, detail::as_u32(r, "replicate")});
      for (std::size_t k = 0;; ++k) {
        watch(cloud, acc.monitor);
        if (slot[k] >= 0) {
          const auto xi = filter_measure(cloud);
          const auto zeta = deriv_measure(cloud);
          const auto& target = ex[k];
          for (std::size_t f = 0; f < sc.phis.size(); ++f) {
            const auto& phi = sc.phis[f].values;
            const auto fn = table_function(phi);
            const DVec P = target.P;
            const double exact_filter_value = P.dot(Eigen::Map<const DVec>(phi.data(), static_cast<Eigen::Index>(phi.size())));
            const DVec exact_deriv = target.Q * Eigen::Map<const DVec>(phi.data(), static_cast<Eigen::Index>(phi.size()));
            ErrorStats* cell = &acc.stats[(static_cast<std::size_t>(slot[k]) * sc.phis.size() + f) * width];
            const double e0 = integrate(xi, fn) - exact_filter_value;
            cell[0].err.add(e0);
            cell[0].sq.add(e0 * e0);
            const DVec z = integrate(zeta, fn);
            for (std::size_t j = 0; j < d; ++j) {
              const double ej = z[static_cast<Eigen::Index>(j)] - exact_deriv[static_cast<Eigen::Index>(j)];
              cell[1 + j].err.add(ej);
              cell[1 + j].sq.add(ej * ej);
            }
          }
        }
        if (k == last) break;
        cloud = step_with_kernel(kernels[k], cloud, sc.ys[k]);
      }
    }
    return acc;
  };
  return chunked_reduce(R, threads, init, work, [](Accum& a, const Accum& p) {
    for (std::size_t c = 0; c < a.stats.size(); ++c) {
      a.stats[c].err.merge(p.stats[c].err);
      a.stats[c].sq.merge(p.stats[c].sq);
    }
    a.monitor.merge(p.monitor);
  });
}

BiasRow make_row(std::size_t N, std::size_t n, const std::string& phi, const std::string& target, double exact,
                 const ErrorStats& s) {
  BiasRow row;
  row.N = N;
  row.n = n;
  row.phi = phi;
  row.target = target;
  row.exact = exact;
  row.bias = s.err.mean();
  row.mean = exact + row.bias;
  row.bias_se = s.err.std_error();
  row.l2 = std::sqrt(s.sq.mean());
  row.l2_se = row.l2 > 0.0 ? s.sq.std_error() / (2.0 * row.l2) : 0.0;
  row.replicates = s.err.count();
  return row;
}

std::vector<BiasRow> rows_from(const Accum& acc, const Scenario& sc, const std::vector<ExactFilterState>& ex,
                               std::size_t N, const std::vector<std::size_t>& times, std::size_t d) {
  std::vector<BiasRow> rows;
  const std::size_t width = 1 + d;
  for (std::size_t t = 0; t < times.size(); ++t) {
    const auto& target = ex[times[t]];
    for (std::size_t f = 0; f < sc.phis.size(); ++f) {
      const auto& phi = sc.phis[f].values;
      const Eigen::Map<const DVec> pv(phi.data(), static_cast<Eigen::Index>(phi.size()));
      const ErrorStats* cell = &acc.stats[(t * sc.phis.size() + f) * width];
      rows.push_back(make_row(N, times[t], sc.phis[f].name, "filter", target.P.dot(pv), cell[0]));
      const DVec q = target.Q * pv;
      for (std::size_t j = 0; j < d; ++j)
        rows.push_back(make_row(N, times[t], sc.phis[f].name, derivative_target(j),
                                q[static_cast<Eigen::Index>(j)], cell[1 + j]));
    }
  }
  return rows;
}

void check_times(const Scenario& sc, const std::vector<std::size_t>& times) {
  if (times.empty()) throw ParameterError("no time indices requested");
  for (std::size_t t : times)
    if (t > sc.n) throw ParameterError("time index beyond the scenario horizon");
}

void write_bias_rows(std::ostream& os, const std::vector<BiasRow>& rows) {
  os << "N,n,phi,target,exact,mean,bias,bias_se,l2,l2_se,replicates\n";
  for (const auto& r : rows)
    os << r.N << ',' << r.n << ',' << r.phi << ',' << r.target << ',' << fmt(r.exact) << ',' << fmt(r.mean) << ','
       << fmt(r.bias) << ',' << fmt(r.bias_se) << ',' << fmt(r.l2) << ',' << fmt(r.l2_se) << ',' << r.replicates
       << '\n';
}

}  // namespace

BiasReport bias_sweep(const GridModel& model, const Scenario& scenario, const std::vector<std::size_t>& N_list,
                      std::size_t replicates, std::uint64_t seed, const SweepOptions& opts) {
  if (replicates < kMinSweepReplicates)
    throw ParameterError("bias sweep needs at least " + std::to_string(kMinSweepReplicates) + " replicates");
  if (N_list.empty()) throw ParameterError("empty particle-count list");
  if (scenario.theta.dim() != model.theta_dim()) throw ParameterError("scenario theta does not fit the model");
  std::vector<std::size_t> times = opts.times;
  if (times.empty()) {
    times = {(scenario.n + 1) / 2, scenario.n};
    if (times[0] == times[1]) times.pop_back();
  }
  check_times(scenario, times);
  const auto ex = exact_derivative(model, scenario.theta, scenario.ys);
  BiasReport report;
  report.monitor = oracle_monitor(ex);
  for (std::size_t N : N_list) {
    const Accum acc = run_replicates(model, scenario, ex, N, replicates, derive_seed(seed, N), times, opts.threads);
    auto rows = rows_from(acc, scenario, ex, N, times, model.theta_dim());
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
    report.monitor.merge(acc.monitor);
  }
  return report;
}

void BiasReport::write_csv(std::ostream& os) const { write_bias_rows(os, rows); }

// ---------------------------------------------------------------------------
// Rates

std::vector<RateFit> fit_rates(const BiasReport& report, double se_factor, std::size_t min_points) {
  std::vector<RateFit> fits;
  std::map<std::tuple<std::size_t, std::string, std::string>, std::size_t> index;
  std::vector<std::vector<const BiasRow*>> groups;
  for (const auto& r : report.rows) {
    const auto key = std::make_tuple(r.n, r.phi, r.target);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, groups.size()).first;
      groups.emplace_back();
      RateFit f;
      f.n = r.n;
      f.phi = r.phi;
      f.target = r.target;
      fits.push_back(f);
    }
    groups[it->second].push_back(&r);
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<double> bx, by, lx, ly;
    for (const BiasRow* r : groups[g]) {
      if (r->above_noise(se_factor)) {
        bx.push_back(std::log(static_cast<double>(r->N)));
        by.push_back(std::log(std::abs(r->bias)));
      }
      if (r->l2 > 0.0) {
        lx.push_back(std::log(static_cast<double>(r->N)));
        ly.push_back(std::log(r->l2));
      }
    }
    fits[g].bias_points = bx.size();
    fits[g].l2_points = lx.size();
    if (bx.size() >= min_points && bx.size() >= 2) fits[g].bias = least_squares(bx, by);
    if (lx.size() >= 2) fits[g].l2 = least_squares(lx, ly);
  }
  return fits;
}

std::string rates_to_json(const std::vector<RateFit>& fits) {
  json out = json::array();
  for (const auto& f : fits) {
    json j;
    j["n"] = f.n;
    j["phi"] = f.phi;
    j["target"] = f.target;
    j["bias_points"] = f.bias_points;
    if (f.bias) {
      j["bias_slope"] = f.bias->slope;
      j["bias_r2"] = f.bias->r_squared;
    } else {
      j["bias_slope"] = nullptr;
      j["bias_flag"] = "bias below noise floor";
    }
    j["l2_points"] = f.l2_points;
    if (f.l2) {
      j["l2_slope"] = f.l2->slope;
      j["l2_r2"] = f.l2->r_squared;
    } else {
      j["l2_slope"] = nullptr;
    }
    out.push_back(j);
  }
  return out.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Uniformity in time

UniformityReport uniformity_check(const GridModel& model, const Scenario& scenario, std::size_t N,
                                  const std::vector<std::size_t>& times, std::size_t replicates,
                                  std::uint64_t seed, std::size_t threads) {
  if (replicates < kMinSweepReplicates)
    throw ParameterError("uniformity check needs at least " + std::to_string(kMinSweepReplicates) + " replicates");
  check_times(scenario, times);
  const auto ex = exact_derivative(model, scenario.theta, scenario.ys);
  const Accum acc = run_replicates(model, scenario, ex, N, replicates, derive_seed(seed, N), times, threads);
  const auto rows = rows_from(acc, scenario, ex, N, times, model.theta_dim());
  UniformityReport rep;
  rep.times = times;
  rep.monitor = oracle_monitor(ex);
  rep.monitor.merge(acc.monitor);
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& r : rows) {
    if (r.target == "filter") continue;
    const auto key = std::make_pair(r.phi, r.target);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, rep.targets.size()).first;
      rep.targets.push_back({r.phi, r.target, {}, false, 0.0, 0.0});
    }
    rep.targets[it->second].per_time.push_back(r);
  }
  for (auto& t : rep.targets) {
    double bmin = INFINITY, bmax = 0.0, lmin = INFINITY, lmax = 0.0;
    bool all = true;
    for (const auto& r : t.per_time) {
      all = all && r.above_noise();
      bmin = std::min(bmin, std::abs(r.bias));
      bmax = std::max(bmax, std::abs(r.bias));
      lmin = std::min(lmin, r.l2);
      lmax = std::max(lmax, r.l2);
    }
    t.above_noise_everywhere = all;
    t.bias_ratio = bmin > 0.0 ? bmax / bmin : INFINITY;
    t.l2_ratio = lmin > 0.0 ? lmax / lmin : INFINITY;
  }
  return rep;
}

void UniformityReport::write_csv(std::ostream& os) const {
  std::vector<BiasRow> rows;
  for (const auto& t : targets) rows.insert(rows.end(), t.per_time.begin(), t.per_time.end());
  write_bias_rows(os, rows);
}

// ---------------------------------------------------------------------------
// Stability traces

StabilityTrace stability_trace(const GridModel& model, const Scenario& scenario, std::size_t N,
                               const std::vector<double>& scales, std::uint64_t seed, std::size_t threads) {
  if (scales.empty()) throw ParameterError("no weight scales requested");
  StabilityTrace tr;
  tr.N = N;
  tr.n_long = scenario.n;
  tr.scales = scales;
  using Rows = std::vector<StabilityRow>;
  auto work = [&](std::size_t b, std::size_t e) {
    Rows rows;
    for (std::size_t si = b; si < e; ++si) {
      RunOptions opts;
      opts.record_matrices = true;
      opts.weight_scale = scales[si];
      const auto run_tr = run(model, scenario.theta, scenario.ys, N, CloudKey{seed, 0}, opts);
      for (const auto& s : run_tr.steps) {
        StabilityRow row;
        row.scale = scales[si];
        row.n = s.n;
        row.zeta_norm_tv = s.zeta_norm_tv;
        row.zeta_norm_linf = s.zeta_norm_linf;
        row.tau = s.tau;
        row.a_min = s.a_min;
        row.identity_residual = s.identity_residual;
        row.xi_mass_dev = std::abs(s.xi_mass - 1.0);
        row.zeta_mass = s.zeta_mass;
        rows.push_back(row);
      }
    }
    return rows;
  };
  tr.rows = chunked_reduce(
      scales.size(), threads, Rows{}, work, [](Rows& a, const Rows& p) { a.insert(a.end(), p.begin(), p.end()); }, 1);
  return tr;
}

void StabilityTrace::write_csv(std::ostream& os) const {
  os << "scale,n,zeta_norm_tv,zeta_norm_linf,tau,a_min,identity_residual,xi_mass_dev,zeta_mass\n";
  for (const auto& r : rows)
    os << fmt(r.scale) << ',' << r.n << ',' << fmt(r.zeta_norm_tv) << ',' << fmt(r.zeta_norm_linf) << ','
       << fmt(r.tau) << ',' << fmt(r.a_min) << ',' << fmt(r.identity_residual) << ',' << fmt(r.xi_mass_dev) << ','
       << fmt(r.zeta_mass) << '\n';
}

std::size_t burn_in_steps(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw ParameterError("eps must lie in (0, 1)");
  const double e4 = eps * eps * eps * eps;
  return static_cast<std::size_t>(std::ceil(std::log(100.0) / -std::log1p(-e4)));
}

StabilitySummary summarize_stability(const StabilityTrace& trace, double eps, double reference_scale) {
  StabilitySummary s;
  s.eps = eps;
  s.burn_in = burn_in_steps(eps);
  s.reference_scale = reference_scale;
  const double e4 = eps * eps * eps * eps;
  const double a_floor = e4 / static_cast<double>(trace.N);
  s.a_min = INFINITY;
  std::map<double, std::vector<double>> by_scale;
  for (const auto& r : trace.rows) {
    auto& v = by_scale[r.scale];
    if (v.size() <= r.n) v.resize(r.n + 1, 0.0);
    v[r.n] = r.zeta_norm_tv;
    if (r.n == 0) continue;
    s.tau_max = std::max(s.tau_max, r.tau);
    s.a_min = std::min(s.a_min, r.a_min);
    if (!(r.tau <= 1.0 - e4 + 1e-12)) ++s.tau_violations;
    if (!(r.a_min >= a_floor)) ++s.a_violations;
    s.identity_residual = std::max(s.identity_residual, r.identity_residual);
  }
  const auto ref = by_scale.find(reference_scale);
  if (ref == by_scale.end()) throw ParameterError("reference scale missing from the trace");
  const std::size_t half = trace.n_long / 2;
  for (double scale : trace.scales) {
    const auto& v = by_scale.at(scale);
    StabilityScaleSummary ss;
    ss.scale = scale;
    for (std::size_t n = 0; n < v.size(); ++n) {
      if (n <= half) {
        ss.first_half_max = std::max(ss.first_half_max, v[n]);
      } else {
        ss.second_half_max = std::max(ss.second_half_max, v[n]);
      }
      if (n >= s.burn_in && n < ref->second.size())
        ss.max_rel_dev = std::max(ss.max_rel_dev, std::abs(v[n] - ref->second[n]) / ref->second[n]);
    }
    s.scales.push_back(ss);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Recursive maximum likelihood

RmlTrace rml_demo(const GridModel& model, const ThetaVec& theta_true, const ThetaVec& theta_init, std::size_t T,
                  std::size_t N, const RmlSchedule& schedule, std::uint64_t seed) {
  if (T < 1) throw ParameterError("RML demo needs at least one observation");
  if (!(schedule.a >= 0.0) || !std::isfinite(schedule.exponent)) throw ParameterError("invalid step-size schedule");
  const ThetaBox& box = model.theta_box();
  if (!box.contains(theta_true) || !box.contains(theta_init)) throw ParameterError("theta outside the model box");
  const std::vector<Obs> ys = simulate(model, theta_true, T - 1, seed).obs;
  RmlTrace tr;
  auto cloud = init_cloud(model, theta_init, N, CloudKey{derive_seed(seed, 1), 0});
  tr.theta.emplace_back(theta_init.coords().begin(), theta_init.coords().end());
  for (std::size_t k = 0; k < T; ++k) {
    const DVec g = predictive_score(model, cloud, ys[k]);
    auto next = step(model, cloud, ys[k]);
    const double gamma = schedule.a / std::pow(static_cast<double>(k + 1), schedule.exponent);
    std::vector<double> raw(cloud.theta.coords().begin(), cloud.theta.coords().end());
    for (std::size_t c = 0; c < raw.size(); ++c) raw[c] += gamma * g[static_cast<Eigen::Index>(c)];
    const ThetaVec proposed(raw);
    ThetaVec projected = proposed;
    if (!box.contains_with_margin(proposed, kRmlMargin)) {
      projected = box.project(proposed, kRmlMargin);
      if (!(projected == proposed))
        tr.events.push_back({k, raw, std::vector<double>(projected.coords().begin(), projected.coords().end())});
    }
    next.theta = projected;
    cloud = std::move(next);
    tr.theta.emplace_back(projected.coords().begin(), projected.coords().end());
  }
  return tr;
}

void RmlTrace::write_csv(std::ostream& os) const {
  os << "k";
  const std::size_t d = theta.empty() ? 0 : theta.front().size();
  for (std::size_t c = 0; c < d; ++c) os << ",theta_" << c;
  os << '\n';
  for (std::size_t k = 0; k < theta.size(); ++k) {
    os << k;
    for (double v : theta[k]) os << ',' << fmt(v);
    os << '\n';
  }
}

}  // namespace pfd
