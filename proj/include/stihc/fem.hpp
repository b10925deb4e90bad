#pragma once

// Linear finite elements: mass and stiffness matrices, and the squared
// Laplacian roughness penalty in mixed form, P = R1 R0^{-1} R1.

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <array>
#include <memory>
#include <vector>

#include "stihc/error.hpp"
#include "stihc/mesh.hpp"

namespace stihc {

using SparseMatrix = Eigen::SparseMatrix<double>;

namespace detail {

inline void check_areas(const Mesh& mesh) {
  const double total = mesh.total_area();
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t)
    if (!(mesh.triangle_area(t) >= 1e-12 * total))
      throw Error(ErrorKind::degenerate_triangle, "triangle " + std::to_string(t) + " has (near) zero area");
}

// Gradients of the three barycentric coordinates, constant on the element.
inline std::array<Eigen::Vector2d, 3> barycentric_gradients(const Mesh& mesh, std::size_t t) {
  const auto& tri = mesh.triangles()[t];
  const Point2& p0 = mesh.nodes()[tri[0]];
  const Point2& p1 = mesh.nodes()[tri[1]];
  const Point2& p2 = mesh.nodes()[tri[2]];
  const double twice_area = geometry::orient(p0, p1, p2);
  return {Eigen::Vector2d(p1.y - p2.y, p2.x - p1.x) / twice_area,
          Eigen::Vector2d(p2.y - p0.y, p0.x - p2.x) / twice_area,
          Eigen::Vector2d(p0.y - p1.y, p1.x - p0.x) / twice_area};
}

}  // namespace detail

/// Local mass block of a triangle with the given area.
inline Eigen::Matrix3d local_mass(double area) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Constant(1.0);
  m.diagonal().setConstant(2.0);
  return m * (area / 12.0);
}

inline Eigen::Matrix3d local_stiffness(const Mesh& mesh, std::size_t t) {
  const auto grads = detail::barycentric_gradients(mesh, t);
  const double area = mesh.triangle_area(t);
  Eigen::Matrix3d k;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) k(a, b) = area * grads[a].dot(grads[b]);
  return k;
}

/// R0_ij = integral of phi_i phi_j over the domain.
inline SparseMatrix assemble_mass(const Mesh& mesh) {
  detail::check_areas(mesh);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(9 * mesh.triangle_count());
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const auto local = local_mass(mesh.triangle_area(t));
    const auto& tri = mesh.triangles()[t];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) trips.emplace_back(tri[a], tri[b], local(a, b));
  }
  const auto k = Eigen::Index(mesh.node_count());
  SparseMatrix r0(k, k);
  r0.setFromTriplets(trips.begin(), trips.end());
  return r0;
}

/// R1_ij = integral of grad phi_i . grad phi_j over the domain.
inline SparseMatrix assemble_stiffness(const Mesh& mesh) {
  detail::check_areas(mesh);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(9 * mesh.triangle_count());
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const auto local = local_stiffness(mesh, t);
    const auto& tri = mesh.triangles()[t];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) trips.emplace_back(tri[a], tri[b], local(a, b));
  }
  const auto k = Eigen::Index(mesh.node_count());
  SparseMatrix r1(k, k);
  r1.setFromTriplets(trips.begin(), trips.end());
  return r1;
}

/// Mass and stiffness matrices plus a factorization of the mass matrix, which
/// together define the penalty P = R1 R0^{-1} R1 without forming R0^{-1}.
class PenaltyMatrices {
 public:
  using MassFactor = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;

  static constexpr Eigen::Index max_dense_size = 2000;

  PenaltyMatrices(SparseMatrix r0, SparseMatrix r1) : r0_(std::move(r0)), r1_(std::move(r1)) {
    if (r0_.rows() != r0_.cols() || r1_.rows() != r1_.cols() || r0_.rows() != r1_.rows())
      throw Error(ErrorKind::invalid_argument, "mass and stiffness matrices must be square and equally sized");
    auto factor = std::make_shared<MassFactor>();
    factor->compute(r0_);
    if (factor->info() != Eigen::Success) throw Error(ErrorKind::singular_mass, "mass matrix factorization failed");
    mass_factor_ = std::move(factor);
  }

  Eigen::Index size() const { return r0_.rows(); }
  const SparseMatrix& mass() const { return r0_; }
  const SparseMatrix& stiffness() const { return r1_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& c) const {
    Eigen::VectorXd v = r1_ * c;
    Eigen::VectorXd w = mass_factor_->solve(v);
    return r1_ * w;
  }

  // c' P c = (R1 c)' R0^{-1} (R1 c)
  double quadratic_form(const Eigen::VectorXd& c) const {
    Eigen::VectorXd v = r1_ * c;
    return v.dot(mass_factor_->solve(v));
  }

  // Dense P, for K up to max_dense_size.
  Eigen::MatrixXd dense() const {
    if (size() > max_dense_size)
      throw Error(ErrorKind::invalid_argument, "dense penalty requested for K > " + std::to_string(max_dense_size));
    Eigen::MatrixXd r1 = Eigen::MatrixXd(r1_);
    Eigen::MatrixXd x = mass_factor_->solve(r1);
    Eigen::MatrixXd p = r1 * x;
    return 0.5 * (p + p.transpose());
  }

  double trace() const {
    double tr = 0.0;
    Eigen::VectorXd col(size());
    for (Eigen::Index k = 0; k < size(); ++k) {
      col = r1_.col(k);
      tr += col.dot(mass_factor_->solve(col));
    }
    return tr;
  }

 private:
  SparseMatrix r0_;
  SparseMatrix r1_;
  std::shared_ptr<const MassFactor> mass_factor_;
};

inline PenaltyMatrices assemble_penalty(SparseMatrix r0, SparseMatrix r1) {
  return PenaltyMatrices(std::move(r0), std::move(r1));
}

inline PenaltyMatrices assemble_penalty(const Mesh& mesh) {
  return PenaltyMatrices(assemble_mass(mesh), assemble_stiffness(mesh));
}

}  // namespace stihc
