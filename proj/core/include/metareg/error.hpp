// Copyright 2026 The metareg Authors
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

namespace metareg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor dims, grids, or parameter layouts.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside an operation's domain (non-binary mask, bad fraction, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Misuse of a differentiation tape.
class TapeError : public Error {
 public:
  using Error::Error;
};

/// A loss or parameter became NaN/Inf during optimization.
class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& what, int step) : Error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

}  // namespace metareg
