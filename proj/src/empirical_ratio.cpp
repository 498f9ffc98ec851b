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

#include "pfd/empirical_ratio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pfd/errors.hpp"
#include "pfd/grid_model.hpp"
#include "pfd/numeric.hpp"
#include "pfd/parallel.hpp"
#include "pfd/rng.hpp"

namespace pfd {

namespace {

void check_law(const std::vector<double>& f, const std::vector<double>& g, const std::vector<double>& xi) {
  if (xi.size() != f.size()) throw ParameterError("base law and functions differ in size");
  double total = 0.0;
  for (double p : xi) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ParameterError("base law must be nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ParameterError("base law must sum to 1");
  (void)g;
}

double target_ratio(const std::vector<double>& f, const std::vector<double>& g, const std::vector<double>& xi) {
  double nf = 0.0, ng = 0.0;
  for (std::size_t z = 0; z < xi.size(); ++z) {
    nf += xi[z] * f[z];
    ng += xi[z] * g[z];
  }
  return nf / ng;
}

struct ErrStats {
  RunningStats err;
  RunningStats sq;
};

}  // namespace

AlphaBeta alpha_beta(const std::vector<double>& f, const std::vector<double>& g) {
  if (f.empty() || f.size() != g.size()) throw ParameterError("f and g must be nonempty and of equal size");
  double rmin = INFINITY, rmax = -INFINITY, gmin = INFINITY, gmax = -INFINITY;
  for (std::size_t z = 0; z < f.size(); ++z) {
    if (!(g[z] > 0.0)) throw DomainError("g must be strictly positive");
    if (!std::isfinite(f[z]) || !std::isfinite(g[z])) throw DomainError("f and g must be finite");
    const double r = f[z] / g[z];
    rmin = std::min(rmin, r);
    rmax = std::max(rmax, r);
    gmin = std::min(gmin, g[z]);
    gmax = std::max(gmax, g[z]);
  }
  return {rmax - rmin, gmax / gmin};
}

RatioStudy ratio_mc_study(const std::vector<double>& f, const std::vector<double>& g,
                          const std::vector<double>& xi, const std::vector<std::size_t>& k_list,
                          std::size_t replicates, std::uint64_t seed, std::size_t threads) {
  RatioStudy st;
  st.ab = alpha_beta(f, g);
  check_law(f, g, xi);
  if (replicates < kMinRatioReplicates)
    throw ParameterError("ratio study needs at least " + std::to_string(kMinRatioReplicates) + " replicates");
  st.f = f;
  st.g = g;
  st.xi = xi;
  st.replicates = replicates;
  st.seed = seed;
  st.target = target_ratio(f, g, xi);

  std::vector<double> cum(xi.size());
  double acc = 0.0;
  for (std::size_t z = 0; z < xi.size(); ++z) cum[z] = (acc += xi[z]);

  for (std::size_t t = 0; t < k_list.size(); ++t) {
    const std::size_t k = k_list[t];
    if (k < 1) throw ParameterError("sample sizes must be at least 1");
    auto work = [&](std::size_t b, std::size_t e) {
      ErrStats s;
      for (std::size_t r = b; r < e; ++r) {
        RandomStream rng(StreamId{seed, StreamPurpose::kRatioStudy, static_cast<std::uint32_t>(r),
                                  static_cast<std::uint32_t>(t), 0});
        double nf = 0.0, ng = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
          const std::size_t z = draw_from_cumulative(cum.data(), cum.size(), rng.uniform());
          nf += f[z];
          ng += g[z];
        }
        const double err = nf / ng - st.target;
        s.err.add(err);
        s.sq.add(err * err);
      }
      return s;
    };
    const ErrStats total = chunked_reduce(replicates, threads, ErrStats{}, work, [](ErrStats& a, const ErrStats& b) {
      a.err.merge(b.err);
      a.sq.merge(b.sq);
    });
    RatioRow row;
    row.k = k;
    row.bias = total.err.mean();
    row.bias_se = total.err.std_error();
    row.l2 = std::sqrt(total.sq.mean());
    row.l2_se = row.l2 > 0.0 ? total.sq.std_error() / (2.0 * row.l2) : 0.0;
    const double kk = static_cast<double>(k);
    row.bound_bias = 2.0 * st.ab.alpha * st.ab.beta * st.ab.beta / kk;
    row.bound_l2 = 2.0 * st.ab.alpha * st.ab.beta / std::sqrt(kk);
    st.rows.push_back(row);
  }
  return st;
}

bool RatioStudy::bounds_hold(double se_factor) const {
  return std::all_of(rows.begin(), rows.end(),
                     [&](const RatioRow& r) { return r.bias_within(se_factor) && r.l2_within(se_factor); });
}

void RatioStudy::write_csv(std::ostream& os) const {
  os << "k,bias,bias_se,l2,l2_se,bound_bias,bound_l2\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.k, r.bias, r.bias_se, r.l2,
                  r.l2_se, r.bound_bias, r.bound_l2);
    os << buf;
  }
}

RatioExact ratio_exact_enumeration(const std::vector<double>& f, const std::vector<double>& g,
                                   const std::vector<double>& xi, std::size_t k) {
  alpha_beta(f, g);
  check_law(f, g, xi);
  if (k < 1) throw ParameterError("sample size must be at least 1");
  const std::size_t Z = xi.size();
  double count = 1.0;
  for (std::size_t i = 0; i < k; ++i) count *= static_cast<double>(Z);
  if (count > 1e6) throw SizeError("outcome enumeration exceeds 10^6 outcomes");
  const double target = target_ratio(f, g, xi);
  std::vector<std::size_t> idx(k, 0);
  NeumaierSum bias, sq;
  for (;;) {
    double prob = 1.0, nf = 0.0, ng = 0.0;
    for (std::size_t z : idx) {
      prob *= xi[z];
      nf += f[z];
      ng += g[z];
    }
    const double err = nf / ng - target;
    bias.add(prob * err);
    sq.add(prob * err * err);
    std::size_t pos = 0;
    while (pos < k && ++idx[pos] == Z) idx[pos++] = 0;
    if (pos == k) break;
  }
  return {bias.value(), std::sqrt(sq.value())};
}

const std::vector<RatioFixture>& ratio_fixtures() {
  static const std::vector<RatioFixture> fixtures = {
      {"two-point", {1.0, 0.0}, {1.0, 3.0}, {0.3, 0.7}},
      {"three-point", {1.0, -1.0, 0.5}, {1.0, 2.0, 0.5}, {0.5, 0.3, 0.2}},
      {"five-point", {0.2, -0.8, 1.0, 0.4, -0.3}, {0.5, 1.5, 1.0, 2.0, 0.8}, {0.1, 0.2, 0.3, 0.25, 0.15}},
  };
  return fixtures;
}

const RatioFixture& ratio_fixture(const std::string& name) {
  for (const auto& fx : ratio_fixtures())
    if (fx.name == name) return fx;
  throw ParameterError("unknown ratio fixture: " + name);
}

}  // namespace pfd
