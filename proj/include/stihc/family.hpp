#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>

#include "stihc/error.hpp"

namespace stihc {

enum class Family { poisson, gaussian };

/// Exponential family with its canonical link: log for Poisson, identity for
/// Gaussian.
class FamilySpec {
 public:
  constexpr FamilySpec() = default;
  constexpr explicit FamilySpec(Family f) : family_(f) {}

  static FamilySpec parse(std::string_view name) {
    if (name == "poisson") return FamilySpec(Family::poisson);
    if (name == "gaussian") return FamilySpec(Family::gaussian);
    throw Error(ErrorKind::invalid_argument, "unknown family '" + std::string(name) + "' (expected poisson or gaussian)");
  }

  constexpr Family family() const { return family_; }
  std::string_view name() const { return family_ == Family::poisson ? "poisson" : "gaussian"; }

  double link(double mu) const { return family_ == Family::poisson ? std::log(mu) : mu; }

  double inverse_link(double eta) const {
    // exp(700) is the last safe value before overflow
    return family_ == Family::poisson ? std::exp(std::min(eta, 700.0)) : eta;
  }

  // d mu / d eta
  double mu_eta(double eta) const { return family_ == Family::poisson ? inverse_link(eta) : 1.0; }

  double variance(double mu) const { return family_ == Family::poisson ? mu : 1.0; }

  // IRLS weight (d mu/d eta)^2 / V(mu); canonical link reduces this to mu_eta.
  double weight(double eta) const { return mu_eta(eta); }

  double unit_deviance(double y, double mu) const {
    if (family_ == Family::gaussian) return (y - mu) * (y - mu);
    if (y == 0.0) return 2.0 * mu;
    return 2.0 * (y * std::log(y / mu) - (y - mu));
  }

  double initial_mean(double y) const { return family_ == Family::poisson ? y + 0.5 : y; }

  void validate(std::span<const double> y) const {
    for (double v : y) {
      if (!std::isfinite(v)) throw Error(ErrorKind::non_finite_response, "response contains a non-finite value");
      if (family_ == Family::poisson && (v < 0.0 || v != std::floor(v)))
        throw Error(ErrorKind::invalid_argument, "poisson responses must be nonnegative integers");
    }
  }

 private:
  Family family_ = Family::poisson;
};

}  // namespace stihc
