#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stihc {

enum class ErrorKind {
  // input errors
  invalid_argument,
  parse_error,
  unknown_spot,
  empty_after_filter,
  negative_value,
  duplicate_point,
  collinear_input,
  length_mismatch,
  too_few_spots,
  non_finite_response,
  // numerical failures
  degenerate_triangle,
  singular_mass,
  singular_system,
  saturated_fit,
  identical_centroids,
  single_cluster,
  empty_cluster,
  // limits
  iteration_limit,
  no_eligible_lambda,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "InvalidArgument";
    case ErrorKind::parse_error: return "ParseError";
    case ErrorKind::unknown_spot: return "UnknownSpot";
    case ErrorKind::empty_after_filter: return "EmptyAfterFilter";
    case ErrorKind::negative_value: return "NegativeValue";
    case ErrorKind::duplicate_point: return "DuplicatePoint";
    case ErrorKind::collinear_input: return "CollinearInput";
    case ErrorKind::length_mismatch: return "LengthMismatch";
    case ErrorKind::too_few_spots: return "TooFewSpots";
    case ErrorKind::non_finite_response: return "NonFiniteResponse";
    case ErrorKind::degenerate_triangle: return "DegenerateTriangle";
    case ErrorKind::singular_mass: return "SingularMass";
    case ErrorKind::singular_system: return "SingularSystem";
    case ErrorKind::saturated_fit: return "SaturatedFit";
    case ErrorKind::identical_centroids: return "IdenticalCentroids";
    case ErrorKind::single_cluster: return "SingleCluster";
    case ErrorKind::empty_cluster: return "EmptyCluster";
    case ErrorKind::iteration_limit: return "IterationLimit";
    case ErrorKind::no_eligible_lambda: return "NoEligibleLambda";
  }
  return "Unknown";
}

// Process exit code for each error class: 2 input, 3 numerical, 4 limit.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument:
    case ErrorKind::parse_error:
    case ErrorKind::unknown_spot:
    case ErrorKind::empty_after_filter:
    case ErrorKind::negative_value:
    case ErrorKind::duplicate_point:
    case ErrorKind::collinear_input:
    case ErrorKind::length_mismatch:
    case ErrorKind::too_few_spots:
    case ErrorKind::non_finite_response:
      return 2;
    case ErrorKind::iteration_limit:
    case ErrorKind::no_eligible_lambda:
      return 4;
    default:
      return 3;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace stihc
