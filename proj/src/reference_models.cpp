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

#include "pfd/reference_models.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace pfd {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Constructors

GridModel make_grid_hmm(std::size_t states, std::size_t obs_alphabet, std::size_t theta_dim,
                        const ThetaBox& box, std::uint64_t seed, const GridOptions& opts) {
  if (states < 2 || obs_alphabet < 2) throw ParameterError("grid HMM needs S >= 2 and A >= 2");
  if (theta_dim < 1 || box.dim() != theta_dim) throw ParameterError("theta box dimension mismatch");
  RandomStream rng(StreamId{seed, StreamPurpose::kModelBuild, 0, 0, 0});
  auto uniform = [&](double half) { return half * (2.0 * rng.uniform() - 1.0); };
  auto fill = [&](SoftmaxTable& t, std::size_t rows, std::size_t cols, double scale) {
    t.rows = rows;
    t.cols = cols;
    t.base.resize(rows * cols);
    t.coef.resize(theta_dim * rows * cols);
    for (double& v : t.base) v = uniform(scale);
    for (double& v : t.coef) v = uniform(opts.coef_scale);
  };
  GridSpec spec;
  spec.name = opts.name;
  spec.states = states;
  spec.obs_alphabet = obs_alphabet;
  spec.theta_dim = theta_dim;
  spec.box = box;
  spec.default_theta = opts.default_theta.empty() ? box.center() : ThetaVec(opts.default_theta);
  spec.param_map = ParamMap::kSoftmaxTable;
  fill(spec.transition, states, states, opts.transition_scale);
  fill(spec.emission, states, obs_alphabet, opts.emission_scale);
  fill(spec.initial, 1, states, opts.initial_scale);
  const double smass = opts.normalized_measures ? 1.0 / static_cast<double>(states) : 1.0;
  const double omass = opts.normalized_measures ? 1.0 / static_cast<double>(obs_alphabet) : 1.0;
  spec.state_masses.assign(states, smass);
  spec.obs_masses.assign(obs_alphabet, omass);
  spec.eps_floor = box_density_floor(spec);
  return GridModel(std::move(spec));
}

IntervalModel make_interval_model(double gamma, double sigma, std::size_t theta_dim,
                                  std::uint64_t seed, std::size_t obs_alphabet,
                                  double emission_width) {
  if (!(sigma > 0.0)) throw ParameterError("kernel width sigma must be positive");
  IntervalSpec spec;
  spec.name = "interval";
  spec.gamma = gamma;
  spec.sigma = sigma;
  spec.emission_width = emission_width;
  spec.obs_alphabet = obs_alphabet;
  spec.theta_dim = theta_dim;
  if (theta_dim == 1) {
    spec.box = ThetaBox({-0.9}, {0.9});
    spec.default_theta = ThetaVec{0.5};
  } else {
    spec.box = ThetaBox({-0.9, -1.0}, {0.9, 1.0});
    spec.default_theta = ThetaVec{0.5, 0.0};
  }
  RandomStream rng(StreamId{seed, StreamPurpose::kModelBuild, 1, 0, 0});
  const double bin = 1.0 / static_cast<double>(obs_alphabet);
  spec.centers.resize(obs_alphabet);
  for (std::size_t y = 0; y < obs_alphabet; ++y)
    spec.centers[y] = (static_cast<double>(y) + 0.5) * bin + 0.1 * bin * (2.0 * rng.uniform() - 1.0);
  return IntervalModel(std::move(spec));
}

// ---------------------------------------------------------------------------
// Shipped models

GridModel grid5() {
  GridOptions opts;
  opts.name = "grid5";
  opts.normalized_measures = true;
  opts.default_theta = {0.2, -0.3, 0.1};
  return make_grid_hmm(5, 4, 3, ThetaBox::symmetric(3, 1.0), 7, opts);
}

GridModel grid2() {
  // Persistence parameter: p(stay) = sigmoid(theta) in both rows. Emissions
  // and initial law are theta-free.
  GridSpec spec;
  spec.name = "grid2";
  spec.states = 2;
  spec.obs_alphabet = 2;
  spec.theta_dim = 1;
  spec.box = ThetaBox({-2.5}, {2.5});
  spec.default_theta = ThetaVec{1.0};
  spec.state_masses = {0.5, 0.5};
  spec.obs_masses = {0.5, 0.5};
  spec.param_map = ParamMap::kLogisticCell;
  spec.transition = {2, 2, {0.0, 0.0, 0.0, 0.0}, {}};
  spec.emission = {2, 2, {1.2, 0.0, 0.0, 1.2}, {}};
  spec.initial = {1, 2, {0.0, 0.0}, {}};
  spec.cells = {{GridTable::kTransition, 0, 0, 0}, {GridTable::kTransition, 1, 1, 0}};
  spec.eps_floor = box_density_floor(spec);
  return GridModel(std::move(spec));
}

namespace {

GridModel grid3() {
  GridOptions opts;
  opts.name = "grid3";
  opts.normalized_measures = true;
  return make_grid_hmm(3, 3, 2, ThetaBox::symmetric(2, 1.0), 11, opts);
}

}  // namespace

std::vector<std::string> model_names() { return {"grid5", "grid2", "grid3", "interval"}; }

AnyModel make_named_model(std::string_view name) {
  if (name == "grid5") return grid5();
  if (name == "grid2") return grid2();
  if (name == "grid3") return grid3();
  if (name == "interval") return make_interval_model(0.1, 0.2, 2, 3);
  throw ConfigError("unknown model name: " + std::string(name));
}

AnyModel load_model_ref(std::string_view ref) {
  for (const auto& n : model_names())
    if (n == ref) return make_named_model(ref);
  std::ifstream in{std::string(ref)};
  if (!in) throw ConfigError("not a shipped model and not a readable file: " + std::string(ref));
  std::ostringstream os;
  os << in.rdbuf();
  return parse_model(os.str());
}

// ---------------------------------------------------------------------------
// Config format

namespace {

json logit_value(double v) {
  if (v == -std::numeric_limits<double>::infinity()) return "-inf";
  return v;
}

double logit_from(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "-inf") return -std::numeric_limits<double>::infinity();
    throw ConfigError("logit strings other than \"-inf\" are not allowed");
  }
  return j.get<double>();
}

json table_to_json(const SoftmaxTable& t, std::size_t d, bool with_coef, bool single_row) {
  json j;
  json base = json::array();
  for (std::size_t r = 0; r < t.rows; ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < t.cols; ++c) row.push_back(logit_value(t.base_at(r, c)));
    if (single_row) {
      base = row;
    } else {
      base.push_back(row);
    }
  }
  j["base"] = base;
  if (with_coef) {
    json coef = json::array();
    for (std::size_t k = 0; k < d; ++k) {
      json layer = json::array();
      for (std::size_t r = 0; r < t.rows; ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < t.cols; ++c) row.push_back(t.coef_at(k, r, c));
        if (single_row) {
          layer = row;
        } else {
          layer.push_back(row);
        }
      }
      coef.push_back(layer);
    }
    j["coef"] = coef;
  }
  return j;
}

SoftmaxTable table_from_json(const json& j, std::size_t rows, std::size_t cols, std::size_t d,
                             bool with_coef, bool single_row) {
  SoftmaxTable t;
  t.rows = rows;
  t.cols = cols;
  const json& base = j.at("base");
  auto read_row = [&](const json& row, std::vector<double>& out, bool logits) {
    if (!row.is_array() || row.size() != cols) throw ConfigError("table row has wrong length");
    for (const auto& v : row) out.push_back(logits ? logit_from(v) : v.get<double>());
  };
  if (single_row) {
    read_row(base, t.base, true);
  } else {
    if (!base.is_array() || base.size() != rows) throw ConfigError("table has wrong row count");
    for (const auto& row : base) read_row(row, t.base, true);
  }
  if (with_coef) {
    const json& coef = j.at("coef");
    if (!coef.is_array() || coef.size() != d) throw ConfigError("coef needs one layer per theta coordinate");
    for (const auto& layer : coef) {
      if (single_row) {
        read_row(layer, t.coef, false);
      } else {
        if (!layer.is_array() || layer.size() != rows) throw ConfigError("coef layer has wrong row count");
        for (const auto& row : layer) read_row(row, t.coef, false);
      }
    }
  }
  return t;
}

json box_to_json(const ThetaBox& b) {
  return json{{"lower", std::vector<double>(b.lower().begin(), b.lower().end())},
              {"upper", std::vector<double>(b.upper().begin(), b.upper().end())}};
}

ThetaBox box_from_json(const json& j) {
  return ThetaBox(j.at("lower").get<std::vector<double>>(), j.at("upper").get<std::vector<double>>());
}

GridTable table_id(const std::string& s) {
  if (s == "transition") return GridTable::kTransition;
  if (s == "emission") return GridTable::kEmission;
  if (s == "initial") return GridTable::kInitial;
  throw ConfigError("unknown table name: " + s);
}

json grid_to_json(const GridSpec& s) {
  const bool coef = s.param_map == ParamMap::kSoftmaxTable;
  json j;
  j["kind"] = "grid";
  j["name"] = s.name;
  j["states"] = s.states;
  j["obs_alphabet"] = s.obs_alphabet;
  j["theta_dim"] = s.theta_dim;
  j["theta_box"] = box_to_json(s.box);
  j["theta_default"] = std::vector<double>(s.default_theta.coords().begin(), s.default_theta.coords().end());
  j["param_map"] = to_string(s.param_map);
  j["state_masses"] = s.state_masses;
  j["obs_masses"] = s.obs_masses;
  j["eps_floor"] = s.eps_floor;
  j["tables"] = {{"transition", table_to_json(s.transition, s.theta_dim, coef, false)},
                 {"emission", table_to_json(s.emission, s.theta_dim, coef, false)},
                 {"initial", table_to_json(s.initial, s.theta_dim, coef, true)}};
  if (!coef) {
    json cells = json::array();
    for (const auto& c : s.cells)
      cells.push_back({{"table", to_string(c.table)}, {"row", c.row}, {"col", c.col}, {"coord", c.coord}});
    j["cells"] = cells;
  }
  return j;
}

GridSpec grid_from_json(const json& j) {
  GridSpec s;
  s.name = j.value("name", std::string("grid"));
  s.states = j.at("states").get<std::size_t>();
  s.obs_alphabet = j.at("obs_alphabet").get<std::size_t>();
  s.theta_dim = j.at("theta_dim").get<std::size_t>();
  s.box = box_from_json(j.at("theta_box"));
  s.default_theta = j.contains("theta_default") ? ThetaVec(j["theta_default"].get<std::vector<double>>())
                                                : s.box.center();
  const std::string pm = j.value("param_map", std::string("softmax-table"));
  if (pm == "softmax-table") {
    s.param_map = ParamMap::kSoftmaxTable;
  } else if (pm == "logistic-cell") {
    s.param_map = ParamMap::kLogisticCell;
  } else {
    throw ConfigError("unknown param_map: " + pm);
  }
  if (j.contains("state_masses")) s.state_masses = j["state_masses"].get<std::vector<double>>();
  if (j.contains("obs_masses")) s.obs_masses = j["obs_masses"].get<std::vector<double>>();
  const bool coef = s.param_map == ParamMap::kSoftmaxTable;
  const json& tabs = j.at("tables");
  s.transition = table_from_json(tabs.at("transition"), s.states, s.states, s.theta_dim, coef, false);
  s.emission = table_from_json(tabs.at("emission"), s.states, s.obs_alphabet, s.theta_dim, coef, false);
  s.initial = table_from_json(tabs.at("initial"), 1, s.states, s.theta_dim, coef, true);
  if (!coef) {
    for (const auto& c : j.at("cells"))
      s.cells.push_back({table_id(c.at("table").get<std::string>()), c.at("row").get<std::size_t>(),
                         c.at("col").get<std::size_t>(), c.at("coord").get<std::size_t>()});
  }
  s.eps_floor = j.contains("eps_floor") ? j["eps_floor"].get<double>() : box_density_floor(s);
  return s;
}

json interval_to_json(const IntervalSpec& s) {
  json j;
  j["kind"] = "interval";
  j["name"] = s.name;
  j["bounds"] = {0.0, 1.0};
  j["obs_alphabet"] = s.obs_alphabet;
  j["theta_dim"] = s.theta_dim;
  j["theta_box"] = box_to_json(s.box);
  j["theta_default"] = std::vector<double>(s.default_theta.coords().begin(), s.default_theta.coords().end());
  j["gamma"] = s.gamma;
  j["sigma"] = s.sigma;
  j["emission_width"] = s.emission_width;
  j["centers"] = s.centers;
  return j;
}

IntervalSpec interval_from_json(const json& j) {
  IntervalSpec s;
  if (j.contains("bounds") && j["bounds"].get<std::vector<double>>() != std::vector<double>{0.0, 1.0})
    throw ConfigError("interval models are defined on [0, 1] only");
  s.name = j.value("name", std::string("interval"));
  s.obs_alphabet = j.at("obs_alphabet").get<std::size_t>();
  s.theta_dim = j.at("theta_dim").get<std::size_t>();
  s.box = box_from_json(j.at("theta_box"));
  s.default_theta = j.contains("theta_default") ? ThetaVec(j["theta_default"].get<std::vector<double>>())
                                                : s.box.center();
  s.gamma = j.at("gamma").get<double>();
  s.sigma = j.at("sigma").get<double>();
  s.emission_width = j.at("emission_width").get<double>();
  if (j.contains("centers")) s.centers = j["centers"].get<std::vector<double>>();
  return s;
}

void validate_grid(const GridModel& m) {
  std::vector<ThetaVec> probes = m.theta_box().corners();
  probes.push_back(m.default_theta());
  for (const auto& th : probes) {
    const GridTables t = m.tables(th);
    for (std::size_t x = 0; x < t.S; ++x) {
      double sp = 0.0, sq = 0.0;
      for (std::size_t xn = 0; xn < t.S; ++xn) sp += t.trans_dens[x * t.S + xn] * m.state_mass(xn);
      for (std::size_t y = 0; y < t.A; ++y) sq += t.emis_dens[x * t.A + y] * m.obs_mass(y);
      if (std::abs(sp - 1.0) > 1e-12 || std::abs(sq - 1.0) > 1e-12)
        throw ConfigError("grid model rows do not normalize under the reference measures");
    }
  }
}

void validate_interval(const IntervalModel& m) {
  // Composite Simpson on [0, 1]; the integrand is smooth.
  const ThetaVec th = m.default_theta();
  constexpr int kIntervals = 2000;
  for (double x : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    double s = 0.0;
    for (int i = 0; i <= kIntervals; ++i) {
      const double xn = static_cast<double>(i) / kIntervals;
      const double w = (i == 0 || i == kIntervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      s += w * m.transition_density(th, x, xn);
    }
    s /= 3.0 * kIntervals;
    if (std::abs(s - 1.0) > 1e-8) throw ConfigError("interval transition density does not normalize");
    double sq = 0.0;
    for (Obs y = 0; y < m.obs_count(); ++y) sq += m.obs_density(th, y, x) / static_cast<double>(m.obs_count());
    if (std::abs(sq - 1.0) > 1e-12) throw ConfigError("interval emission does not normalize");
  }
}

}  // namespace

std::string serialize_model(const GridModel& model) { return grid_to_json(model.spec()).dump(2) + "\n"; }

std::string serialize_model(const IntervalModel& model) {
  return interval_to_json(model.spec()).dump(2) + "\n";
}

std::string serialize_model(const AnyModel& model) {
  return std::visit([](const auto& m) { return serialize_model(m); }, model);
}

AnyModel parse_model(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
  }
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "grid") {
      GridModel m(grid_from_json(j));
      validate_grid(m);
      return m;
    }
    if (kind == "interval") {
      IntervalModel m(interval_from_json(j));
      validate_interval(m);
      return m;
    }
    throw ConfigError("unknown model kind: " + kind);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("invalid model parameters: ") + e.what());
  }
}

}  // namespace pfd
