#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "stihc/error.hpp"

namespace stihc {

/// Genes x spots matrix of observations.
struct ExpressionMatrix {
  std::vector<std::string> genes;
  std::vector<std::string> spots;
  Eigen::MatrixXd values;

  std::size_t gene_count() const { return genes.size(); }
  std::size_t spot_count() const { return spots.size(); }

  void validate() const {
    if (values.rows() != Eigen::Index(genes.size()) || values.cols() != Eigen::Index(spots.size()))
      throw Error(ErrorKind::length_mismatch, "expression values do not match gene and spot counts");
    if (!values.allFinite()) throw Error(ErrorKind::non_finite_response, "expression contains a non-finite value");
  }
};

}  // namespace stihc
