#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace dmslam {

using Vec2 = Eigen::Vector2d;
using VectorXcd = Eigen::VectorXcd;
using MatrixXcd = Eigen::MatrixXcd;

/// Propagation speed used for every delay/range conversion (m/s).
inline constexpr double kSpeedOfLight = 299'792'458.0;
inline constexpr double kPi = 3.14159265358979323846;

// ---- Errors ----

/// Precondition violated by a caller (degenerate geometry, bad parameter).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Input file could not be parsed; message carries line/field context.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parsed data violates a type invariant; message names the field.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure: non-PD covariance, non-finite input, collapsed weights.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Birth cell has no admissible area inside the surveillance region.
class DegenerateCell : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Every particle weight vanished during a measurement update.
class DegenerateUpdate : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Data on disk is inconsistent with the requested run (metadata mismatch, missing files).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dmslam
