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

#include <stdexcept>
#include <string>

namespace pfd {

// A state or observation outside the model's declared space.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A density that is zero (or below the representable floor) where a log or
// a ratio is required.
class SingularityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Invalid construction or call parameters (sigma <= 0, theta outside box, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The strong mixing floor is violated at run time.
class MixingViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Enumeration guard exceeded.
class SizeError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// Operation requires an exact oracle that the model does not provide.
class UnsupportedModel : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed model or scenario configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pfd
