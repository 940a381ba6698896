/*
 * Copyright 2026 The Bitleak Authors
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

#ifndef BITLEAK_ERROR_HPP
#define BITLEAK_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bitleak {

// Root of the library's exception hierarchy. Every failure raised by this
// library derives from Error, so callers can catch one type at the boundary.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor or matrix dimensions do not chain.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A function precondition on plain values was violated.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// An operation was invoked in the wrong order (e.g. backward without a
// matching forward cache).
class StateError : public Error {
 public:
  using Error::Error;
};

// Invalid experiment configuration: unknown keys, bad layer names,
// inconsistent grids.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Numerical breakdown: non-finite values, non-positive-definite matrices.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. For binary formats the two-argument form carries the
// byte offset of the first bad byte; structural (JSON-level) failures use the
// message-only form and report offset 0.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what)
      : Error(what), byte_offset_(0) {}
  FormatError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

// Training diverged. Carries the epoch at which the loss became non-finite.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t epoch)
      : Error(what + " (epoch " + std::to_string(epoch) + ")"),
        epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

// Iterative quantization optimizer hit a non-finite loss. Carries the
// iteration index.
class OptimizationError : public Error {
 public:
  OptimizationError(const std::string& what, std::size_t iteration)
      : Error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

// A queried example has no shadow models on the required side of the split.
class CoverageError : public Error {
 public:
  using Error::Error;
};

// Stored artifact violates its own declared contract (e.g. quantized codes
// outside the grid range).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

}  // namespace bitleak

#endif  // BITLEAK_ERROR_HPP
