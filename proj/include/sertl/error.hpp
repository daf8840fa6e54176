// Copyright 2026 The sertl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace sertl {

/// Base class of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter or option value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a contract (bad label, empty clip, missing file...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// An object was used out of order (e.g. backward twice on one tape).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure; the message always carries the path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Binary container validation failure; kind() separates a corrupted
/// payload from a wrong feature dimension.
class FormatError : public Error {
 public:
  enum class Kind { kBadMagic, kBadVersion, kLengthMismatch, kCrcMismatch, kDimensionMismatch, kBadHeader };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace sertl
