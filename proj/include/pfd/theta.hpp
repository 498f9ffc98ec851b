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

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace pfd {

/// A point in parameter space. Always at least one coordinate, all finite.
class ThetaVec {
 public:
  explicit ThetaVec(std::vector<double> coords);
  ThetaVec(std::initializer_list<double> coords);

  std::size_t dim() const { return coords_.size(); }
  double operator[](std::size_t i) const { return coords_[i]; }
  std::span<const double> coords() const { return coords_; }

  // Copy with coordinate i shifted by delta.
  ThetaVec shifted(std::size_t i, double delta) const;

  std::string to_string() const;

  friend bool operator==(const ThetaVec&, const ThetaVec&) = default;

 private:
  std::vector<double> coords_;
};

/// Open axis-aligned parameter box.
class ThetaBox {
 public:
  ThetaBox(std::vector<double> lower, std::vector<double> upper);
  static ThetaBox symmetric(std::size_t dim, double half_width);

  std::size_t dim() const { return lower_.size(); }
  std::span<const double> lower() const { return lower_; }
  std::span<const double> upper() const { return upper_; }

  bool contains(const ThetaVec& theta) const;
  // Every coordinate at least `margin` away from the boundary.
  bool contains_with_margin(const ThetaVec& theta, double margin) const;
  // Clamp into [lower + margin, upper - margin].
  ThetaVec project(const ThetaVec& theta, double margin) const;

  ThetaVec center() const;
  // The 2^d vertices, optionally pulled inward by `inset`.
  std::vector<ThetaVec> corners(double inset = 0.0) const;

  friend bool operator==(const ThetaBox&, const ThetaBox&) = default;

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
};

}  // namespace pfd
