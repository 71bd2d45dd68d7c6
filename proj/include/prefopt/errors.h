// Copyright 2026 The Prefopt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PREFOPT_ERRORS_H_
#define PREFOPT_ERRORS_H_

#include <stdexcept>
#include <string>

namespace prefopt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unknown context or outcome.
class LookupError : public Error {
 public:
  using Error::Error;
};

// Out-of-range hyperparameter or malformed input value.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// KL(p||q) with q(y) = 0 where p(y) > 0.
class DivergenceUndefinedError : public Error {
 public:
  using Error::Error;
};

// Structural precondition on a dataset or instance was violated.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// A descent run produced a NaN or infinite loss or gradient.
class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& what, long step)
      : Error(what + " at step " + std::to_string(step)), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

// Grid oracle would enumerate too many points.
class GridTooLargeError : public Error {
 public:
  using Error::Error;
};

}  // namespace prefopt

#endif  // PREFOPT_ERRORS_H_
