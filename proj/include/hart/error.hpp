/*
 * Copyright 2026 The hart-cpp authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
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

namespace hart {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shape / dimension mismatches. Carries a shape diagnostic in what().
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration: unknown variant, invalid hyperparameter, malformed config file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad input data: missing files, malformed recordings, label problems.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Numeric failure: divergence, non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace hart
