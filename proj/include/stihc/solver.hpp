#pragma once

// Penalized IRLS for exponential-family spatial fields and unified smoothing
// parameter selection by generalized cross-validation.

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stihc/error.hpp"
#include "stihc/family.hpp"
#include "stihc/fem.hpp"
#include "stihc/parallel.hpp"
#include "stihc/supernodal.hpp"

namespace stihc {

using RowSparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

inline RowSparseMatrix identity_basis(Eigen::Index k) {
  RowSparseMatrix phi(k, k);
  phi.setIdentity();
  return phi;
}

/// Factorizes the penalized normal matrix A = Phi' W Phi + lambda P for a
/// fixed basis and penalty. For lambda > 0 it works on the sparse
/// quasi-definite mixed system
///
///   [ Phi' W Phi    sqrt(l) R1 ] [ c ]   [ Phi' W z ]
///   [ sqrt(l) R1       -R0     ] [ g ] = [    0     ]
///
/// whose leading block of the inverse is A^{-1}, so P is never formed.
class PenalizedSystem {
 public:
  PenalizedSystem(const RowSparseMatrix& basis, const PenaltyMatrices& penalty)
      : basis_(&basis), penalty_(&penalty), k_(penalty.size()) {
    if (basis.cols() != k_) throw Error(ErrorKind::length_mismatch, "basis columns must equal the penalty size");
    // with lambda > 0 and positive weights the mixed system is nonsingular
    // (rows of Phi sum to one, so Phi' W Phi is positive on null(P)); the
    // pivot spread grows with lambda and is not a sign of singularity
    mixed_.set_pivot_tolerance(0.0);
  }

  Eigen::Index basis_size() const { return k_; }
  Eigen::Index observation_count() const { return basis_->rows(); }

  void factorize(const Eigen::VectorXd& weights, double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
      throw Error(ErrorKind::invalid_argument, "smoothing parameter must be finite and nonnegative");
    lambda_ = lambda;
    weights_ = weights;
    build_gram(weights);
    const bool mixed = lambda > 0.0;
    system_ = mixed ? mixed_matrix(std::sqrt(lambda)) : gram_;
    SupernodalLdlt& ldlt = mixed ? mixed_ : plain_;
    active_ = nullptr;
    ldlt.factorize(system_);
    active_ = &ldlt;
  }

  const Eigen::VectorXd& weights() const { return weights_; }
  double lambda() const { return lambda_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    if (!active_) throw Error(ErrorKind::invalid_argument, "no factorization available");
    if (lambda_ > 0.0) {
      Eigen::VectorXd full = Eigen::VectorXd::Zero(2 * k_);
      full.head(k_) = rhs;
      return refined(full).head(k_);
    }
    return refined(rhs);
  }

  // Phi' W v for an n-vector v
  Eigen::VectorXd weighted_transpose(const Eigen::VectorXd& v) const {
    return basis_->transpose() * weights_.cwiseProduct(v);
  }

  /// trace(Phi A^{-1} Phi' W) = trace(A^{-1} Phi' W Phi) at the current
  /// factorization, exact via the selected inverse.
  double effective_dof() {
    if (!active_) throw Error(ErrorKind::invalid_argument, "no factorization available");
    active_->compute_selected_inverse();
    double tr = 0.0;
    for (Eigen::Index col = 0; col < gram_.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(gram_, col); it; ++it)
        tr += active_->inverse(int(col), int(it.row())) * it.value();
    return tr;
  }

 private:
  // the unpivoted factorization loses digits when lambda spreads the pivots;
  // one refinement step recovers most of them
  Eigen::VectorXd refined(const Eigen::VectorXd& b) const {
    const Eigen::VectorXd x = active_->solve(b);
    return x + active_->solve(b - system_ * x);
  }

  void build_gram(const Eigen::VectorXd& w) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(std::size_t(basis_->nonZeros()) * 3);
    for (Eigen::Index j = 0; j < basis_->rows(); ++j)
      for (RowSparseMatrix::InnerIterator a(*basis_, j); a; ++a)
        for (RowSparseMatrix::InnerIterator b(*basis_, j); b; ++b)
          trips.emplace_back(a.col(), b.col(), w[j] * a.value() * b.value());
    gram_.resize(k_, k_);
    gram_.setFromTriplets(trips.begin(), trips.end());
  }

  SparseMatrix mixed_matrix(double s) const {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(std::size_t(gram_.nonZeros() + 3 * penalty_->stiffness().nonZeros()));
    for (Eigen::Index col = 0; col < k_; ++col)
      for (SparseMatrix::InnerIterator it(gram_, col); it; ++it) trips.emplace_back(it.row(), col, it.value());
    for (Eigen::Index col = 0; col < k_; ++col) {
      for (SparseMatrix::InnerIterator it(penalty_->stiffness(), col); it; ++it) {
        trips.emplace_back(k_ + it.row(), col, s * it.value());
        trips.emplace_back(it.row(), k_ + col, s * it.value());
      }
      for (SparseMatrix::InnerIterator it(penalty_->mass(), col); it; ++it)
        trips.emplace_back(k_ + it.row(), k_ + col, -it.value());
    }
    SparseMatrix m(2 * k_, 2 * k_);
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
  }

  const RowSparseMatrix* basis_;
  const PenaltyMatrices* penalty_;
  Eigen::Index k_;
  double lambda_ = 0.0;
  Eigen::VectorXd weights_;
  SparseMatrix gram_, system_;
  SupernodalLdlt mixed_, plain_;
  SupernodalLdlt* active_ = nullptr;
};

struct IrlsOptions {
  int max_iterations = 50;
  int max_step_halvings = 10;
  double coefficient_tolerance = 1e-6;
  double deviance_tolerance = 1e-8;
};

struct FitResult {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd fitted_means;
  double deviance = 0.0;
  double penalized_deviance = 0.0;
  double edf = 0.0;
  double gcv = std::numeric_limits<double>::quiet_NaN();
  double lambda = 0.0;
  int iterations = 0;
  bool converged = false;
  // penalized deviance after each accepted iteration
  std::vector<double> objective_trace;
};

/// Craven-Wahba GCV with the family deviance: n D / (n - edf)^2.
inline double gcv_score(double deviance, double edf, std::size_t n) {
  const double nd = double(n);
  const double resid_dof = nd - edf;
  if (!(resid_dof > 1e-8 * nd)) throw Error(ErrorKind::saturated_fit, "effective degrees of freedom reach n");
  return nd * deviance / (resid_dof * resid_dof);
}

inline double gcv_score(const FitResult& fit, std::size_t n) { return gcv_score(fit.deviance, fit.edf, n); }

namespace detail {

inline double total_deviance(const FamilySpec& family, std::span<const double> y, const Eigen::VectorXd& mu) {
  double d = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) d += family.unit_deviance(y[j], mu[Eigen::Index(j)]);
  return d;
}

}  // namespace detail

/// Penalized IRLS fit of one response vector, reusing `system`'s symbolic
/// factorization. `start` warm-starts from given coefficients.
inline FitResult irls_fit(PenalizedSystem& system, const RowSparseMatrix& basis, const PenaltyMatrices& penalty,
                          std::span<const double> y, const FamilySpec& family, double lambda,
                          const IrlsOptions& options = {}, const Eigen::VectorXd* start = nullptr) {
  const auto n = Eigen::Index(y.size());
  if (basis.rows() != n) throw Error(ErrorKind::length_mismatch, "response length must equal basis rows");
  family.validate(y);
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);

  auto objective = [&](const Eigen::VectorXd& c, Eigen::VectorXd& eta, Eigen::VectorXd& mu) {
    eta = basis * c;
    mu = eta.unaryExpr([&](double e) { return family.inverse_link(e); });
    const double dev = detail::total_deviance(family, y, mu);
    return dev + (lambda > 0.0 ? lambda * penalty.quadratic_form(c) : 0.0);
  };

  FitResult fit;
  fit.lambda = lambda;
  Eigen::VectorXd eta(n), mu(n), c, c_new, eta_new(n), mu_new(n);
  double obj = std::numeric_limits<double>::infinity();
  if (start) {
    c = *start;
    obj = objective(c, eta, mu);
  } else {
    mu = yv.unaryExpr([&](double v) { return family.initial_mean(v); });
    eta = mu.unaryExpr([&](double m) { return family.link(m); });
  }

  Eigen::VectorXd w(n), z(n);
  for (int it = 1; it <= options.max_iterations; ++it) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = family.mu_eta(eta[j]);
      w[j] = std::max(family.weight(eta[j]), 1e-300);
      z[j] = eta[j] + (yv[j] - mu[j]) / d;
    }
    system.factorize(w, lambda);
    c_new = system.solve(system.weighted_transpose(z));
    if (!c_new.allFinite()) throw Error(ErrorKind::singular_system, "non-finite coefficients");
    double obj_new = objective(c_new, eta_new, mu_new);

    bool stalled = false;
    if (c.size() > 0) {
      int halvings = 0;
      while (!(obj_new <= obj) && halvings < options.max_step_halvings) {
        c_new = 0.5 * (c + c_new);
        obj_new = objective(c_new, eta_new, mu_new);
        ++halvings;
      }
      // no descent direction left: numerically stationary
      if (!(obj_new <= obj)) stalled = true;
    }
    fit.iterations = it;
    if (stalled) {
      fit.converged = true;
      break;
    }

    const double step = c.size() > 0 ? (c_new - c).norm() : std::numeric_limits<double>::infinity();
    const double rel_step = step / (c_new.norm() + 1e-8);
    const double rel_obj = std::abs(obj_new - obj) / (std::abs(obj_new) + 0.1);
    c = c_new;
    eta = eta_new;
    mu = mu_new;
    obj = obj_new;
    fit.objective_trace.push_back(obj);
    if (rel_step < options.coefficient_tolerance || rel_obj < options.deviance_tolerance) {
      fit.converged = true;
      break;
    }
  }

  // smoothing operator at the converged weights
  for (Eigen::Index j = 0; j < n; ++j) w[j] = std::max(family.weight(eta[j]), 1e-300);
  if (!(w == system.weights()) || system.lambda() != lambda) system.factorize(w, lambda);

  fit.coefficients = c;
  fit.fitted_means = mu;
  fit.deviance = detail::total_deviance(family, y, mu);
  fit.penalized_deviance = obj;
  fit.edf = system.effective_dof();
  try {
    fit.gcv = gcv_score(fit.deviance, fit.edf, std::size_t(n));
  } catch (const Error&) {
    fit.gcv = std::numeric_limits<double>::quiet_NaN();
  }
  return fit;
}

inline FitResult irls_fit(const RowSparseMatrix& basis, const PenaltyMatrices& penalty, std::span<const double> y,
                          const FamilySpec& family, double lambda, const IrlsOptions& options = {}) {
  PenalizedSystem system(basis, penalty);
  return irls_fit(system, basis, penalty, y, family, lambda, options);
}

/// `count` log-spaced values in [lo, hi], multiplied by `scale`.
inline std::vector<double> log_lambda_grid(double lo, double hi, std::size_t count, double scale = 1.0) {
  if (!(lo > 0.0) || !(hi >= lo) || count == 0)
    throw Error(ErrorKind::invalid_argument, "lambda grid needs 0 < lo <= hi and count >= 1");
  std::vector<double> grid(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : double(i) / double(count - 1);
    grid[i] = scale * std::pow(10.0, std::log10(lo) + t * (std::log10(hi) - std::log10(lo)));
  }
  return grid;
}

/// Typical IRLS weight at the starting values, averaged over all genes and
/// spots: mean(y + 0.5) for Poisson, 1 for Gaussian.
inline double mean_initial_weight(const Eigen::MatrixXd& expression, const FamilySpec& family) {
  if (expression.size() == 0) throw Error(ErrorKind::invalid_argument, "empty expression matrix");
  double total = 0.0;
  for (Eigen::Index i = 0; i < expression.rows(); ++i)
    for (Eigen::Index j = 0; j < expression.cols(); ++j) {
      const double mu = family.initial_mean(expression(i, j));
      total += family.weight(family.link(mu));
    }
  return total / double(expression.size());
}

/// Default grid: 20 log-spaced values over [1, 1e8] times
/// mean_weight * n / trace(P), which balances the data and penalty terms of
/// the normal equations at the low end.
inline std::vector<double> default_lambda_grid(std::size_t n, const PenaltyMatrices& penalty, double mean_weight,
                                               double lo = 1.0, double hi = 1e8, std::size_t count = 20) {
  const double tr = penalty.trace();
  if (!(tr > 0.0)) throw Error(ErrorKind::invalid_argument, "penalty has zero trace");
  if (!(mean_weight > 0.0)) throw Error(ErrorKind::invalid_argument, "mean weight must be positive");
  return log_lambda_grid(lo, hi, count, mean_weight * double(n) / tr);
}

struct LambdaSelection {
  std::vector<double> grid;
  Eigen::MatrixXd per_gene_gcv;  // G x |grid|, NaN where the fit failed
  Eigen::VectorXd total_gcv;     // NaN for ineligible grid points
  std::vector<bool> eligible;
  std::size_t opt_index = 0;
  double lambda_opt = 0.0;
  std::vector<std::string> warnings;
};

struct SelectionOutput {
  LambdaSelection selection;
  Eigen::MatrixXd coefficients;  // G x K, refit at lambda_opt
  std::vector<FitResult> fits;   // refits at lambda_opt (coefficients moved out)
};

struct SelectOptions {
  IrlsOptions irls;
  unsigned threads = 1;
};

/// Fits every gene (row of `expression`) at every grid value and returns the
/// lambda minimizing the summed GCV, with coefficients refit there.
inline SelectionOutput select_lambda(const RowSparseMatrix& basis, const PenaltyMatrices& penalty,
                                     const Eigen::MatrixXd& expression, const FamilySpec& family,
                                     const std::vector<double>& grid, const SelectOptions& options = {},
                                     const std::vector<std::string>& gene_names = {}) {
  if (grid.empty()) throw Error(ErrorKind::invalid_argument, "lambda grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0) || !std::isfinite(grid[i]))
      throw Error(ErrorKind::invalid_argument, "lambda grid values must be positive");
    if (i > 0 && !(grid[i] > grid[i - 1]))
      throw Error(ErrorKind::invalid_argument, "lambda grid must be strictly increasing");
  }
  const auto genes = std::size_t(expression.rows());
  if (genes == 0) throw Error(ErrorKind::invalid_argument, "no genes to fit");
  auto gene_label = [&](std::size_t g) {
    return g < gene_names.size() ? gene_names[g] : "#" + std::to_string(g);
  };

  SelectionOutput out;
  auto& sel = out.selection;
  sel.grid = grid;
  sel.per_gene_gcv = Eigen::MatrixXd::Constant(Eigen::Index(genes), Eigen::Index(grid.size()),
                                               std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> failures(genes);

  // Each gene walks the grid from the smoothest fit down, warm-starting.
  parallel_for(genes, options.threads, [&](std::size_t g) {
    PenalizedSystem system(basis, penalty);
    const Eigen::VectorXd y = expression.row(Eigen::Index(g)).transpose();
    std::optional<Eigen::VectorXd> start;
    for (std::size_t li = grid.size(); li-- > 0;) {
      try {
        FitResult fit = irls_fit(system, basis, penalty, std::span<const double>(y.data(), std::size_t(y.size())),
                                 family, grid[li], options.irls, start ? &*start : nullptr);
        if (fit.converged && std::isfinite(fit.gcv)) sel.per_gene_gcv(Eigen::Index(g), Eigen::Index(li)) = fit.gcv;
        start = std::move(fit.coefficients);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::non_finite_response || e.kind() == ErrorKind::invalid_argument ||
            e.kind() == ErrorKind::length_mismatch)
          throw Error(e.kind(), "gene " + gene_label(g) + ": " + e.what());
        if (failures[g].empty()) failures[g] = e.what();
        start.reset();
      }
    }
  });

  sel.total_gcv.resize(Eigen::Index(grid.size()));
  sel.eligible.assign(grid.size(), true);
  std::optional<std::size_t> best;
  for (std::size_t li = 0; li < grid.size(); ++li) {
    double total = 0.0;
    for (std::size_t g = 0; g < genes; ++g) {
      const double v = sel.per_gene_gcv(Eigen::Index(g), Eigen::Index(li));
      if (std::isnan(v)) {
        sel.eligible[li] = false;
        break;
      }
      total += v;
    }
    sel.total_gcv[Eigen::Index(li)] = sel.eligible[li] ? total : std::numeric_limits<double>::quiet_NaN();
    if (sel.eligible[li] && (!best || total < sel.total_gcv[Eigen::Index(*best)])) best = li;
  }
  for (std::size_t g = 0; g < genes; ++g)
    if (!failures[g].empty()) sel.warnings.push_back("gene " + gene_label(g) + ": " + failures[g]);
  if (!best) {
    std::string why = sel.warnings.empty() ? "no fit converged" : sel.warnings.front();
    throw Error(ErrorKind::no_eligible_lambda, "no lambda value was eligible for every gene (" + why + ")");
  }
  sel.opt_index = *best;
  sel.lambda_opt = grid[*best];

  out.coefficients.resize(Eigen::Index(genes), penalty.size());
  out.fits.resize(genes);
  parallel_for(genes, options.threads, [&](std::size_t g) {
    PenalizedSystem system(basis, penalty);
    const Eigen::VectorXd y = expression.row(Eigen::Index(g)).transpose();
    try {
      FitResult fit = irls_fit(system, basis, penalty, std::span<const double>(y.data(), std::size_t(y.size())),
                               family, sel.lambda_opt, options.irls);
      out.coefficients.row(Eigen::Index(g)) = fit.coefficients.transpose();
      fit.coefficients.resize(0);
      out.fits[g] = std::move(fit);
    } catch (const Error& e) {
      throw Error(e.kind(), "gene " + gene_label(g) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace stihc
