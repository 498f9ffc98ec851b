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

#include "pfd/theta.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pfd/errors.hpp"

namespace pfd {

ThetaVec::ThetaVec(std::vector<double> coords) : coords_(std::move(coords)) {
  if (coords_.empty()) throw ParameterError("theta must have at least one coordinate");
  for (double c : coords_) {
    if (!std::isfinite(c)) throw ParameterError("theta coordinates must be finite");
  }
}

ThetaVec::ThetaVec(std::initializer_list<double> coords)
    : ThetaVec(std::vector<double>(coords)) {}

ThetaVec ThetaVec::shifted(std::size_t i, double delta) const {
  auto c = coords_;
  c.at(i) += delta;
  return ThetaVec(std::move(c));
}

std::string ThetaVec::to_string() const {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < coords_.size(); ++i) {
    if (i) os << ',';
    os << coords_[i];
  }
  return os.str();
}

ThetaBox::ThetaBox(std::vector<double> lower, std::vector<double> upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.empty() || lower_.size() != upper_.size())
    throw ParameterError("theta box bounds must be nonempty and of equal length");
  for (std::size_t i = 0; i < lower_.size(); ++i) {
    if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i]) || !(lower_[i] < upper_[i]))
      throw ParameterError("theta box requires finite lower < upper in every coordinate");
  }
}

ThetaBox ThetaBox::symmetric(std::size_t dim, double half_width) {
  return ThetaBox(std::vector<double>(dim, -half_width), std::vector<double>(dim, half_width));
}

bool ThetaBox::contains(const ThetaVec& theta) const {
  return contains_with_margin(theta, 0.0);
}

bool ThetaBox::contains_with_margin(const ThetaVec& theta, double margin) const {
  if (theta.dim() != dim()) return false;
  for (std::size_t i = 0; i < dim(); ++i) {
    if (!(theta[i] - margin > lower_[i] && theta[i] + margin < upper_[i])) return false;
  }
  return true;
}

ThetaVec ThetaBox::project(const ThetaVec& theta, double margin) const {
  if (theta.dim() != dim()) throw ParameterError("theta dimension does not match box");
  std::vector<double> c(theta.coords().begin(), theta.coords().end());
  for (std::size_t i = 0; i < dim(); ++i) {
    c[i] = std::clamp(c[i], lower_[i] + margin, upper_[i] - margin);
  }
  return ThetaVec(std::move(c));
}

ThetaVec ThetaBox::center() const {
  std::vector<double> c(dim());
  for (std::size_t i = 0; i < dim(); ++i) c[i] = 0.5 * (lower_[i] + upper_[i]);
  return ThetaVec(std::move(c));
}

std::vector<ThetaVec> ThetaBox::corners(double inset) const {
  if (dim() > 20) throw SizeError("corner enumeration limited to 20 coordinates");
  std::vector<ThetaVec> out;
  const std::size_t count = std::size_t{1} << dim();
  out.reserve(count);
  for (std::size_t mask = 0; mask < count; ++mask) {
    std::vector<double> c(dim());
    for (std::size_t i = 0; i < dim(); ++i) {
      c[i] = (mask >> i) & 1U ? upper_[i] - inset : lower_[i] + inset;
    }
    out.emplace_back(std::move(c));
  }
  return out;
}

}  // namespace pfd
