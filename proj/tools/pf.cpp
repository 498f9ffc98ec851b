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

// pf: command-line front end. Each subcommand parses flags, calls the
// library and writes the result.

#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pfd/bias_lab.hpp"
#include "pfd/empirical_ratio.hpp"
#include "pfd/exact_oracle.hpp"
#include "pfd/particle.hpp"
#include "pfd/reference_models.hpp"

namespace {

using namespace pfd;
using nlohmann::json;

constexpr int kExitCheck = 1;
constexpr int kExitUsage = 2;

// Thrown by a subcommand whose result fails a check (output is still written).
struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string model = "grid5";
  std::string theta = "default";
  std::uint64_t seed = 0;
  std::string out = "-";
  std::string summary;
  std::size_t threads = 0;
};

class Output {
 public:
  explicit Output(const std::string& path) {
    if (path != "-") {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw std::runtime_error("cannot open output file: " + path);
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

void emit_summary(const std::string& path, const json& j) {
  if (path.empty()) {
    std::cerr << j.dump(2) << '\n';
  } else {
    Output o(path);
    o.stream() << j.dump(2) << '\n';
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ThetaVec resolve_theta(const AnyModel& m, const std::string& text) {
  if (text == "default") return std::visit([](const auto& x) { return x.default_theta(); }, m);
  if (text == "center") return std::visit([](const auto& x) { return x.theta_box().center(); }, m);
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ParameterError("bad theta coordinate: " + item);
    }
  }
  if (v.empty()) throw ParameterError("empty theta");
  return ThetaVec(v);
}

const GridModel& require_grid(const AnyModel& m) {
  if (const auto* g = std::get_if<GridModel>(&m)) return *g;
  throw UnsupportedModel("this subcommand needs a grid model with an exact oracle");
}

json theta_json(const ThetaVec& t) { return std::vector<double>(t.coords().begin(), t.coords().end()); }

json monitor_json(const InvariantMonitor& m) {
  return {{"xi_mass_dev", m.xi_mass_dev},
          {"zeta_mass", m.zeta_mass},
          {"oracle_simplex", m.oracle_simplex},
          {"oracle_q_rows", m.oracle_q_rows}};
}

Scenario load_or_make_scenario(const GridModel& g, const Common& c, const AnyModel& m, std::size_t n,
                               const std::string& phi, const std::string& scenario_in,
                               const std::string& scenario_out) {
  Scenario sc = scenario_in.empty()
                    ? make_scenario(g, c.model, resolve_theta(m, c.theta), n, c.seed, phi)
                    : scenario_from_json(read_file(scenario_in), g.state_count());
  if (!scenario_out.empty()) {
    Output o(scenario_out);
    o.stream() << scenario_to_json(sc);
  }
  return sc;
}

void add_common(CLI::App* sub, Common& c, bool stochastic, bool with_model = true) {
  if (with_model) {
    sub->add_option("--model", c.model, "shipped model name or model config path")->capture_default_str();
    sub->add_option("--theta", c.theta, "default, center or a comma list")->capture_default_str();
  }
  auto* seed = sub->add_option("--seed", c.seed, "master seed");
  if (stochastic) seed->required();
  sub->add_option("--out", c.out, "output path, - for stdout")->capture_default_str();
  sub->add_option("--threads", c.threads, "worker threads, 0 for all cores")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Particle filter derivative estimation and bias experiments"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI config file; command-line flags override it");
  std::function<void()> action;

  // model ------------------------------------------------------------------
  auto* model_cmd = app.add_subcommand("model", "list or show shipped models");
  model_cmd->require_subcommand(1);
  auto* model_list = model_cmd->add_subcommand("list", "print shipped model names");
  model_list->callback([&] {
    action = [] {
      for (const auto& n : model_names()) std::cout << n << '\n';
    };
  });
  std::string show_name;
  std::string show_out = "-";
  auto* model_show = model_cmd->add_subcommand("show", "print a model config");
  model_show->add_option("name", show_name, "model name or config path")->required();
  model_show->add_option("--out", show_out, "output path, - for stdout");
  model_show->callback([&] {
    action = [&] {
      Output o(show_out);
      o.stream() << serialize_model(load_model_ref(show_name));
    };
  });

  // simulate ---------------------------------------------------------------
  Common sim;
  std::size_t sim_n = 10;
  auto* sim_cmd = app.add_subcommand("simulate", "draw (x, y) from the model law");
  add_common(sim_cmd, sim, true);
  sim_cmd->add_option("--n", sim_n, "final time index")->capture_default_str();
  sim_cmd->callback([&] {
    action = [&] {
      const AnyModel m = load_model_ref(sim.model);
      const ThetaVec th = resolve_theta(m, sim.theta);
      Output o(sim.out);
      std::visit([&](const auto& x) { write_simulation_csv(o.stream(), simulate(x, th, sim_n, sim.seed)); }, m);
    };
  });

  // run --------------------------------------------------------------------
  Common run_c;
  std::size_t run_n = 10, run_N = 100;
  bool run_matrices = false;
  double run_scale = 1.0;
  std::string run_format = "csv";
  auto* run_cmd = app.add_subcommand("run", "one particle run on a simulated observation path");
  add_common(run_cmd, run_c, true);
  run_cmd->add_option("--n", run_n, "final time index")->capture_default_str();
  run_cmd->add_option("--particles", run_N, "particle count N")->capture_default_str();
  run_cmd->add_flag("--matrices", run_matrices, "record tau, min A entry and identity residual per step");
  run_cmd->add_option("--weight-scale", run_scale, "initial weight scale")->capture_default_str();
  run_cmd->add_option("--format", run_format, "csv (per-step summary) or json (clouds, one per line)")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  run_cmd->callback([&] {
    action = [&] {
      const AnyModel m = load_model_ref(run_c.model);
      const ThetaVec th = resolve_theta(m, run_c.theta);
      Output o(run_c.out);
      std::visit(
          [&](const auto& x) {
            const auto ys = simulate(x, th, run_n, run_c.seed).obs;
            RunOptions opts;
            opts.record_matrices = run_matrices;
            opts.record_clouds = run_format == "json";
            opts.weight_scale = run_scale;
            const auto tr = run(x, th, ys, run_N, CloudKey{derive_seed(run_c.seed, run_N), 0}, opts);
            if (run_format == "json") {
              write_trajectory_jsonl(o.stream(), tr);
            } else {
              write_steps_csv(o.stream(), tr);
            }
          },
          m);
    };
  });

  // oracle -----------------------------------------------------------------
  Common orc;
  std::size_t orc_n = 10;
  std::string orc_scenario;
  auto* orc_cmd = app.add_subcommand("oracle", "exact filter and derivative on a simulated observation path");
  add_common(orc_cmd, orc, true);
  orc_cmd->add_option("--n", orc_n, "final time index")->capture_default_str();
  orc_cmd->add_option("--scenario", orc_scenario, "read theta and y from a scenario file instead");
  orc_cmd->callback([&] {
    action = [&] {
      const AnyModel m = load_model_ref(orc.model);
      const GridModel& g = require_grid(m);
      Scenario sc;
      if (orc_scenario.empty()) {
        sc.theta = resolve_theta(m, orc.theta);
        sc.ys = simulate(g, sc.theta, orc_n, orc.seed).obs;
      } else {
        sc = scenario_from_json(read_file(orc_scenario), g.state_count());
      }
      Output o(orc.out);
      write_oracle_csv(o.stream(), exact_derivative(g, sc.theta, sc.ys));
    };
  });

  // bias-sweep -------------------------------------------------------------
  Common bs;
  std::size_t bs_n = 10, bs_reps = 50000;
  std::vector<std::size_t> bs_N = {10, 20, 40, 80, 160}, bs_times;
  std::string bs_phi = "indicators", bs_slopes, bs_scen_in, bs_scen_out;
  auto* bs_cmd = app.add_subcommand("bias-sweep", "bias and L2 error against the exact oracle over N");
  add_common(bs_cmd, bs, true);
  bs_cmd->add_option("--n", bs_n, "final time index")->capture_default_str();
  bs_cmd->add_option("--particles", bs_N, "comma list of N")->delimiter(',')->capture_default_str();
  bs_cmd->add_option("--reps", bs_reps, "replicates R per N")->capture_default_str();
  bs_cmd->add_option("--phi", bs_phi, "test functions: indicators, indicator:k, one")->capture_default_str();
  bs_cmd->add_option("--times", bs_times, "recorded time indices (default ceil(n/2), n)")->delimiter(',');
  bs_cmd->add_option("--slopes", bs_slopes, "slopes JSON path (default <out>.slopes.json, stderr for stdout)");
  bs_cmd->add_option("--scenario", bs_scen_in, "read the scenario from a file");
  bs_cmd->add_option("--save-scenario", bs_scen_out, "write the scenario to a file");
  bs_cmd->callback([&] {
    action = [&] {
      const AnyModel m = load_model_ref(bs.model);
      const GridModel& g = require_grid(m);
      const Scenario sc = load_or_make_scenario(g, bs, m, bs_n, bs_phi, bs_scen_in, bs_scen_out);
      SweepOptions opts;
      opts.times = bs_times;
      opts.threads = bs.threads;
      const BiasReport rep = bias_sweep(g, sc, bs_N, bs_reps, bs.seed, opts);
      {
        Output o(bs.out);
        rep.write_csv(o.stream());
      }
      json slopes = json::parse(rates_to_json(fit_rates(rep)));
      json doc = {{"fits", slopes}, {"monitor", monitor_json(rep.monitor)}};
      std::string path = bs_slopes;
      if (path.empty() && bs.out != "-") path = bs.out + ".slopes.json";
      emit_summary(path, doc);
    };
  });

  // uniformity -------------------------------------------------------------
  Common un;
  std::size_t un_N = 40, un_reps = 50000;
  std::vector<std::size_t> un_times = {10, 50, 100};
  std::string un_phi = "indicators";
  auto* un_cmd = app.add_subcommand("uniformity", "derivative bias at several times on one observation path");
  add_common(un_cmd, un, true);
  un_cmd->add_option("--particles", un_N, "particle count N")->capture_default_str();
  un_cmd->add_option("--times", un_times, "comma list of time indices")->delimiter(',')->capture_default_str();
  un_cmd->add_option("--reps", un_reps, "replicates R")->capture_default_str();
  un_cmd->add_option("--phi", un_phi, "test functions")->capture_default_str();
  un_cmd->add_option("--summary", un.summary, "ratio summary JSON path (default stderr)");
  un_cmd->callback([&] {
    action = [&] {
      const AnyModel m = load_model_ref(un.model);
      const GridModel& g = require_grid(m);
      if (un_times.empty()) throw ParameterError("no time indices requested");
      const std::size_t n = *std::max_element(un_times.begin(), un_times.end());
      const Scenario sc = make_scenario(g, un.model, resolve_theta(m, un.theta), n, un.seed, un_phi);
      const UniformityReport rep = uniformity_check(g, sc, un_N, un_times, un_reps, un.seed, un.threads);
      {
        Output o(un.out);
        rep.write_csv(o.stream());
      }
      json targets = json::array();
      for (const auto& t : rep.targets)
        targets.push_back({{"phi", t.phi},
                           {"target", t.target},
                           {"above_noise_everywhere", t.above_noise_everywhere},
                           {"bias_ratio", t.bias_ratio},
                           {"l2_ratio", t.l2_ratio}});
      emit_summary(un.summary, {{"times", rep.times}, {"targets", targets}, {"monitor", monitor_json(rep.monitor)}});
    };
  });

  // stability --------------------------------------------------------------
  Common st;
  std::size_t st_N = 100, st_n = 500;
  std::vector<double> st_scales = {0, 1, 10, 100};
  auto* st_cmd = app.add_subcommand("stability", "derivative-weight traces for scaled initial weights");
  add_common(st_cmd, st, true);
  st_cmd->add_option("--particles", st_N, "particle count N")->capture_default_str();
  st_cmd->add_option("--n", st_n, "trace length")->capture_default_str();
  st_cmd->add_option("--scales", st_scales, "comma list of weight scales (must include 1)")
      ->delimiter(',')
      ->capture_default_str();
  st_cmd->add_option("--summary", st.summary, "summary JSON path (default stderr)");
  st_cmd->callback([&] {
    action = [&] {
      const AnyModel m = load_model_ref(st.model);
      const GridModel& g = require_grid(m);
      const ThetaVec th = resolve_theta(m, st.theta);
      const Scenario sc = make_scenario(g, st.model, th, st_n, st.seed);
      const StabilityTrace tr = stability_trace(g, sc, st_N, st_scales, st.seed, st.threads);
      {
        Output o(st.out);
        tr.write_csv(o.stream());
      }
      const double eps = mixing_check(g, {th}, 0, st.seed).eps_hat;
      const StabilitySummary s = summarize_stability(tr, eps);
      json scales = json::array();
      for (const auto& x : s.scales)
        scales.push_back({{"scale", x.scale},
                          {"first_half_max", x.first_half_max},
                          {"second_half_max", x.second_half_max},
                          {"max_rel_dev", x.max_rel_dev}});
      emit_summary(st.summary, {{"eps_hat", s.eps},
                                {"burn_in", s.burn_in},
                                {"tau_max", s.tau_max},
                                {"a_min", s.a_min},
                                {"tau_violations", s.tau_violations},
                                {"a_violations", s.a_violations},
                                {"identity_residual", s.identity_residual},
                                {"scales", scales}});
      if (s.tau_violations || s.a_violations) throw CheckFailure("contraction bound violated");
    };
  });

  // ratio-study ------------------------------------------------------------
  Common rs;
  std::string rs_fixture = "three-point";
  std::vector<double> rs_f, rs_g, rs_xi;
  std::vector<std::size_t> rs_k = {1, 2, 5, 10, 50, 100};
  std::size_t rs_reps = 100000;
  auto* rs_cmd = app.add_subcommand("ratio-study", "bias and L2 error of a ratio of empirical integrals");
  add_common(rs_cmd, rs, true, false);
  auto* fx_opt = rs_cmd->add_option("--fixture", rs_fixture, "two-point, three-point or five-point")
                     ->capture_default_str();
  auto* f_opt = rs_cmd->add_option("--f", rs_f, "comma list f(z)")->delimiter(',');
  auto* g_opt = rs_cmd->add_option("--g", rs_g, "comma list g(z) > 0")->delimiter(',');
  auto* xi_opt = rs_cmd->add_option("--xi", rs_xi, "comma list xi(z)")->delimiter(',');
  f_opt->needs(g_opt)->needs(xi_opt)->excludes(fx_opt);
  g_opt->needs(f_opt);
  xi_opt->needs(f_opt);
  rs_cmd->add_option("--k", rs_k, "comma list of sample sizes")->delimiter(',')->capture_default_str();
  rs_cmd->add_option("--reps", rs_reps, "replicates R per k")->capture_default_str();
  rs_cmd->callback([&] {
    action = [&] {
      RatioFixture fx = rs_f.empty() ? ratio_fixture(rs_fixture) : RatioFixture{"custom", rs_f, rs_g, rs_xi};
      const RatioStudy study = ratio_mc_study(fx.f, fx.g, fx.xi, rs_k, rs_reps, rs.seed, rs.threads);
      Output o(rs.out);
      study.write_csv(o.stream());
      if (!study.bounds_hold()) throw CheckFailure("ratio bounds exceeded beyond 3 SE");
    };
  });

  // mixing-check -----------------------------------------------------------
  Common mc;
  bool mc_corners = false;
  std::size_t mc_probes = 2000;
  auto* mc_cmd = app.add_subcommand("mixing-check", "probe the mixing, gradient and weight conditions");
  add_common(mc_cmd, mc, false);
  mc_cmd->add_flag("--corners", mc_corners, "also probe the box corners");
  mc_cmd->add_option("--probes", mc_probes, "point probes per theta (continuous models)")->capture_default_str();
  mc_cmd->callback([&] {
    action = [&] {
      const AnyModel m = load_model_ref(mc.model);
      const bool finite = std::holds_alternative<GridModel>(m);
      if (!finite && mc_cmd->count("--seed") == 0) throw CLI::RequiredError("--seed");
      std::vector<ThetaVec> probes = {resolve_theta(m, mc.theta)};
      if (mc_corners) {
        const auto corners = std::visit([](const auto& x) { return x.theta_box().corners(1e-6); }, m);
        probes.insert(probes.end(), corners.begin(), corners.end());
      }
      const MixingReport rep =
          std::visit([&](const auto& x) { return mixing_check(x, probes, mc_probes, mc.seed); }, m);
      json v = json::array();
      for (const auto& r : rep.violations)
        v.push_back({{"theta", theta_json(r.theta)}, {"x", r.x}, {"other", r.other}, {"quantity", r.quantity},
                     {"value", r.value}});
      Output o(mc.out);
      o.stream() << json{{"eps_hat", rep.eps_hat},
                         {"k_hat", rep.k_hat},
                         {"w_sup", rep.w_sup},
                         {"probe_count", rep.probe_count},
                         {"violations", v}}
                        .dump(2)
                 << '\n';
      if (!rep.ok()) throw CheckFailure("mixing check reported violations");
    };
  });

  // rml-demo ---------------------------------------------------------------
  Common rml;
  rml.model = "grid2";
  std::string rml_init = "center";
  std::size_t rml_T = 10000, rml_N = 100;
  RmlSchedule rml_sched{2.0, 0.6};
  auto* rml_cmd = app.add_subcommand("rml-demo", "recursive maximum likelihood by projected score ascent");
  add_common(rml_cmd, rml, true);
  rml_cmd->add_option("--theta-init", rml_init, "starting theta: default, center or a comma list")
      ->capture_default_str();
  rml_cmd->add_option("--T", rml_T, "number of observations")->capture_default_str();
  rml_cmd->add_option("--particles", rml_N, "particle count N")->capture_default_str();
  rml_cmd->add_option("--step-a", rml_sched.a, "step size a in a / (k + 1)^exponent")->capture_default_str();
  rml_cmd->add_option("--step-exponent", rml_sched.exponent, "step size exponent")->capture_default_str();
  rml_cmd->callback([&] {
    action = [&] {
      const AnyModel m = load_model_ref(rml.model);
      const GridModel& g = require_grid(m);
      const RmlTrace tr =
          rml_demo(g, resolve_theta(m, rml.theta), resolve_theta(m, rml_init), rml_T, rml_N, rml_sched, rml.seed);
      Output o(rml.out);
      tr.write_csv(o.stream());
      for (const auto& e : tr.events) {
        std::cerr << "# projected at k=" << e.k << ':';
        for (std::size_t c = 0; c < e.raw.size(); ++c) std::cerr << ' ' << e.raw[c] << "->" << e.projected[c];
        std::cerr << '\n';
      }
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  // Resolved configuration, for reproducibility.
  {
    std::string text;
    for (const CLI::App* sub : app.get_subcommands()) text += sub->config_to_str(true, false);
    std::istringstream cfg(text);
    std::string line;
    std::cerr << "# pf";
    for (int i = 1; i < argc; ++i) std::cerr << ' ' << argv[i];
    std::cerr << '\n';
    while (std::getline(cfg, line))
      if (!line.empty()) std::cerr << "# " << line << '\n';
  }

  try {
    if (action) action();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "pf: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CheckFailure& e) {
    std::cerr << "pf: check failed: " << e.what() << '\n';
    return kExitCheck;
  } catch (const MixingViolation& e) {
    std::cerr << "pf: mixing violation: " << e.what() << '\n';
    return kExitCheck;
  } catch (const ParameterError& e) {
    std::cerr << "pf: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "pf: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UnsupportedModel& e) {
    std::cerr << "pf: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DomainError& e) {
    std::cerr << "pf: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "pf: " << e.what() << '\n';
    return kExitCheck;
  }
}
