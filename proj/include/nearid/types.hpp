/*
 * Copyright 2026 The nearid Authors
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

#ifndef NEARID_TYPES_HPP
#define NEARID_TYPES_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace nearid {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Index = Eigen::Index;

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// An input violates an operation's documented precondition.
class PreconditionError : public Error {
public:
  using Error::Error;
};

/// A numerical procedure failed (divergence, non-convergence, singularity).
class NumericalError : public Error {
public:
  using Error::Error;
};

/// A metric is undefined for the given inputs (e.g. zero denominators).
class UndefinedMetricError : public Error {
public:
  using Error::Error;
};

/// Rows are samples, columns are coordinates. Provenance is free-form metadata
/// (model id, seed, layer, ...) carried along for reporting.
template <typename Scalar = double>
struct RepresentationSet {
  Matrix<Scalar> points;
  std::map<std::string, std::string> provenance;

  RepresentationSet() = default;
  explicit RepresentationSet(Matrix<Scalar> p) : points(std::move(p)) {}

  [[nodiscard]] Index size() const { return points.rows(); }
  [[nodiscard]] Index dimension() const { return points.cols(); }
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw PreconditionError(message);
}

inline void require_dims(bool condition, const std::string& message) {
  if (!condition) throw DimensionError(message);
}

} // namespace nearid

#endif // NEARID_TYPES_HPP
