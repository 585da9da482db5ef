// Copyright 2026 The RGD Authors.
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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rgd {

/// Bad arguments: non-finite values, mismatched lengths, out-of-range indices.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A verification oracle could not produce a usable answer.
class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Internal numerical failure (e.g. a bisection that failed to bracket).
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Baseline or optimizer state violated its invariants.
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss or update direction.
class TrainingDivergence : public std::runtime_error {
 public:
  static constexpr std::size_t kNoSample = static_cast<std::size_t>(-1);

  TrainingDivergence(std::size_t step, std::size_t sample,
                     const std::string& what)
      : std::runtime_error(describe(step, sample, what)),
        step_(step),
        sample_(sample) {}

  std::size_t step() const noexcept { return step_; }
  // kNoSample when the failure is in the aggregated direction.
  std::size_t sample() const noexcept { return sample_; }

 private:
  static std::string describe(std::size_t step, std::size_t sample,
                              const std::string& what) {
    std::string msg = "training diverged at step " + std::to_string(step);
    if (sample != kNoSample) msg += ", sample " + std::to_string(sample);
    return msg + ": " + what;
  }

  std::size_t step_;
  std::size_t sample_;
};

}  // namespace rgd
