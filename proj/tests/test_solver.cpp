#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "stihc/solver.hpp"
#include "support.hpp"

using namespace stihc;
using namespace stihc::test;

namespace {

struct Problem {
  SpotGrid grid;
  Mesh mesh;
  PenaltyMatrices penalty;
  RowSparseMatrix phi;

  explicit Problem(SpotGrid g)
      : grid(std::move(g)), mesh(build_delaunay(grid)), penalty(assemble_penalty(mesh)),
        phi(evaluate_basis(mesh, grid.coords()).values) {}
};

FamilySpec poisson{Family::poisson}, gaussian{Family::gaussian};

}  // namespace

TEST(Gcv, Formula) {
  EXPECT_NEAR(gcv_score(50.0, 10.0, 100), 100.0 * 50.0 / 8100.0, 1e-15);
  EXPECT_NEAR(gcv_score(50.0, 10.0, 100), 0.6173, 1e-4);
  EXPECT_EQ(gcv_score(0.0, 3.0, 10), 0.0);
  EXPECT_LT(gcv_score(1.0, 5.0, 20), gcv_score(2.0, 5.0, 20));
  try {
    gcv_score(1.0, 10.0, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::saturated_fit);
  }
}

TEST(Irls, GaussianUnpenalizedInterpolates) {
  Problem pr(test::regular_grid(6));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  Eigen::VectorXd y = Eigen::VectorXd::NullaryExpr(36, [&] { return z(rng); });
  FitResult fit = irls_fit(pr.phi, pr.penalty, {y.data(), 36}, gaussian, 0.0);
  EXPECT_LT((fit.coefficients - y).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(fit.deviance, 1e-20);
  EXPECT_NEAR(fit.edf, 36.0, 1e-9);
  EXPECT_TRUE(std::isnan(fit.gcv));
}

TEST(Irls, GaussianMatchesClosedForm) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> loglam(-3, 3);
  for (int trial = 0; trial < 50; ++trial) {
    Problem pr(test::random_grid(40 + trial, rng));
    const auto n = Eigen::Index(pr.grid.size());
    Eigen::VectorXd y = Eigen::VectorXd::NullaryExpr(n, [&] { return z(rng); });
    const double lambda = std::pow(10.0, loglam(rng));
    FitResult fit = irls_fit(pr.phi, pr.penalty, {y.data(), std::size_t(n)}, gaussian, lambda);
    Eigen::VectorXd expected = gaussian_closed_form(pr.phi, pr.penalty, y, lambda);
    EXPECT_LT((fit.coefficients - expected).norm() / expected.norm(), 1e-8) << "trial " << trial;
    EXPECT_TRUE(fit.converged);
  }
}

TEST(Irls, GaussianOffNodeBasisMatchesClosedForm) {
  // observations at random points inside a coarse mesh
  std::mt19937_64 rng(3);
  SpotGrid nodes = test::regular_grid(5);
  Mesh mesh = build_delaunay(nodes);
  PenaltyMatrices pen = assemble_penalty(mesh);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point2> pts;
  for (int i = 0; i < 90; ++i) pts.push_back({u(rng), u(rng)});
  RowSparseMatrix phi = evaluate_basis(mesh, pts).values;
  std::normal_distribution<double> z;
  Eigen::VectorXd y = Eigen::VectorXd::NullaryExpr(90, [&] { return z(rng); });
  FitResult fit = irls_fit(phi, pen, {y.data(), 90}, gaussian, 0.05);
  Eigen::VectorXd expected = gaussian_closed_form(phi, pen, y, 0.05);
  EXPECT_LT((fit.coefficients - expected).norm() / expected.norm(), 1e-8);
  // edf = trace of the hat matrix
  Eigen::MatrixXd f(phi);
  Eigen::MatrixXd hat = f * (f.transpose() * f + 0.05 * dense_penalty(pen)).inverse() * f.transpose();
  EXPECT_NEAR(fit.edf, hat.trace(), 1e-8 * hat.trace());
}

TEST(Irls, GaussianLargeLambdaGivesMean) {
  std::mt19937_64 rng(4);
  Problem pr(test::random_grid(70, rng));
  std::normal_distribution<double> z(5.0, 2.0);
  Eigen::VectorXd y = Eigen::VectorXd::NullaryExpr(70, [&] { return z(rng); });
  FitResult fit = irls_fit(pr.phi, pr.penalty, {y.data(), 70}, gaussian, 1e12);
  const double mean = y.mean();
  for (Eigen::Index j = 0; j < 70; ++j) EXPECT_NEAR(fit.fitted_means[j], mean, 1e-6 * std::abs(mean));
}

TEST(Irls, PoissonConstantResponse) {
  Problem pr(test::regular_grid(7));
  for (double m : {1.0, 4.0, 30.0})
    for (double lambda : {1e-3, 1.0, 1e3}) {
      Eigen::VectorXd y = Eigen::VectorXd::Constant(49, m);
      FitResult fit = irls_fit(pr.phi, pr.penalty, {y.data(), 49}, poisson, lambda);
      EXPECT_TRUE(fit.converged);
      EXPECT_LT((fit.fitted_means.array() - m).abs().maxCoeff(), 1e-8 * m);
    }
}

TEST(Irls, PoissonDescentAndStationarity) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> loglam(-2, 2);
  for (int trial = 0; trial < 100; ++trial) {
    Problem pr(test::random_grid(30 + trial % 20, rng));
    const auto n = Eigen::Index(pr.grid.size());
    Eigen::VectorXd y(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& p = pr.grid.coords()[std::size_t(j)];
      std::poisson_distribution<int> draw(1.0 + 6.0 * std::exp(-8.0 * ((p.x - 0.3) * (p.x - 0.3) + p.y * p.y)));
      y[j] = draw(rng);
    }
    const double lambda = std::pow(10.0, loglam(rng));
    FitResult fit = irls_fit(pr.phi, pr.penalty, {y.data(), std::size_t(n)}, poisson, lambda);
    ASSERT_TRUE(fit.converged) << "trial " << trial;
    for (std::size_t i = 1; i < fit.objective_trace.size(); ++i)
      EXPECT_LE(fit.objective_trace[i], fit.objective_trace[i - 1]) << "trial " << trial << " iteration " << i;
    // canonical link: Phi'(y - mu) = lambda P c at the optimum. Random meshes
    // make P stiff, so the residual is measured in the Newton decrement
    // g' H^{-1} g rather than in the raw gradient
    Eigen::MatrixXd f(pr.phi);
    Eigen::VectorXd g = f.transpose() * (y - fit.fitted_means) - lambda * pr.penalty.apply(fit.coefficients);
    Eigen::MatrixXd h = f.transpose() * fit.fitted_means.asDiagonal() * f + lambda * dense_penalty(pr.penalty);
    EXPECT_LT(g.dot(h.ldlt().solve(g)), 1e-8 * (1.0 + fit.penalized_deviance)) << "trial " << trial;
    // fitted means follow the inverse link
    EXPECT_LT((fit.fitted_means - (f * fit.coefficients).array().exp().matrix()).norm(), 1e-9 * fit.fitted_means.norm());
  }
}

TEST(Irls, PoissonEdfMatchesDenseTrace) {
  std::mt19937_64 rng(6);
  Problem pr(test::random_grid(60, rng));
  std::poisson_distribution<int> draw(3.0);
  Eigen::VectorXd y = Eigen::VectorXd::NullaryExpr(60, [&] { return double(draw(rng)); });
  FitResult fit = irls_fit(pr.phi, pr.penalty, {y.data(), 60}, poisson, 0.3);
  Eigen::MatrixXd f(pr.phi);
  Eigen::VectorXd w = fit.fitted_means;
  Eigen::MatrixXd a = f.transpose() * w.asDiagonal() * f + 0.3 * dense_penalty(pr.penalty);
  const double edf = (f * a.inverse() * f.transpose() * w.asDiagonal()).trace();
  EXPECT_NEAR(fit.edf, edf, 1e-8 * edf);
  EXPECT_NEAR(fit.gcv, 60.0 * fit.deviance / ((60.0 - edf) * (60.0 - edf)), 1e-8 * fit.gcv);
}

TEST(Irls, EdfDecreasesWithLambda) {
  std::mt19937_64 rng(7);
  Problem pr(test::random_grid(80, rng));
  std::poisson_distribution<int> draw(5.0);
  Eigen::VectorXd y = Eigen::VectorXd::NullaryExpr(80, [&] { return double(draw(rng)); });
  double previous = 81.0;
  for (double lambda : log_lambda_grid(1e-4, 1e4, 12)) {
    FitResult fit = irls_fit(pr.phi, pr.penalty, {y.data(), 80}, poisson, lambda);
    EXPECT_GT(fit.edf, 0.0);
    EXPECT_LT(fit.edf, previous);
    previous = fit.edf;
  }
}

TEST(Irls, RejectsInvalidResponses) {
  Problem pr(test::regular_grid(3));
  std::vector<double> y(9, 1.0);
  y[2] = std::nan("");
  try {
    irls_fit(pr.phi, pr.penalty, y, gaussian, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::non_finite_response);
  }
  y[2] = -1.0;
  EXPECT_THROW(irls_fit(pr.phi, pr.penalty, y, poisson, 1.0), Error);
  y[2] = 1.5;
  EXPECT_THROW(irls_fit(pr.phi, pr.penalty, y, poisson, 1.0), Error);
  EXPECT_THROW(irls_fit(pr.phi, pr.penalty, std::vector<double>(8, 1.0), gaussian, 1.0), Error);
}

TEST(LambdaGrid, LogSpacingAndDefaultScale) {
  auto g = log_lambda_grid(1e-2, 1e2, 5, 3.0);
  ASSERT_EQ(g.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(g[i], 3.0 * std::pow(10.0, -2.0 + i), 1e-12 * g[i]);
  Problem pr(test::regular_grid(6));
  auto d = default_lambda_grid(36, pr.penalty, 2.0);
  ASSERT_EQ(d.size(), 20u);
  EXPECT_NEAR(d.front(), 2.0 * 36 / pr.penalty.trace(), 1e-12 * d.front());
  EXPECT_NEAR(d.back() / d.front(), 1e8, 1e-4);
  Eigen::MatrixXd e(2, 2);
  e << 0, 1, 2, 3;
  EXPECT_NEAR(mean_initial_weight(e, poisson), 2.0, 1e-12);
  EXPECT_NEAR(mean_initial_weight(e, gaussian), 1.0, 1e-12);
}

class SelectLambda : public ::testing::Test {
 protected:
  SelectLambda() : pr(test::regular_grid(8)) {}
  Problem pr;
};

TEST_F(SelectLambda, SingletonGrid) {
  std::mt19937_64 rng(8);
  std::poisson_distribution<int> draw(4.0);
  Eigen::MatrixXd y = Eigen::MatrixXd::NullaryExpr(1, 64, [&] { return double(draw(rng)); });
  SelectionOutput out = select_lambda(pr.phi, pr.penalty, y, poisson, {0.7});
  EXPECT_EQ(out.selection.lambda_opt, 0.7);
  FitResult direct = irls_fit(pr.phi, pr.penalty, {y.data(), 64}, poisson, 0.7);
  EXPECT_EQ(Eigen::VectorXd(out.coefficients.row(0).transpose()), direct.coefficients);
}

TEST_F(SelectLambda, ConstantFieldPrefersSmoothest) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z(3.0, 1.0);
  Eigen::MatrixXd y = Eigen::MatrixXd::NullaryExpr(5, 64, [&] { return z(rng); });
  auto grid = log_lambda_grid(1e-3, 1e5, 9);
  SelectionOutput out = select_lambda(pr.phi, pr.penalty, y, gaussian, grid);
  // total GCV computed directly for each grid value
  std::vector<double> totals;
  for (double lambda : grid) {
    double t = 0;
    for (int g = 0; g < 5; ++g) {
      Eigen::VectorXd row = y.row(g).transpose();
      t += irls_fit(pr.phi, pr.penalty, {row.data(), 64}, gaussian, lambda).gcv;
    }
    totals.push_back(t);
  }
  EXPECT_EQ(std::min_element(totals.begin(), totals.end()) - totals.begin(), long(grid.size() - 1));
  EXPECT_EQ(out.selection.lambda_opt, grid.back());
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(out.selection.total_gcv[Eigen::Index(i)], totals[i], 1e-9 * totals[i]);
}

TEST_F(SelectLambda, DuplicatingGenesKeepsLambda) {
  std::mt19937_64 rng(10);
  Eigen::MatrixXd y(3, 64);
  for (int g = 0; g < 3; ++g)
    for (int j = 0; j < 64; ++j) {
      const auto& p = pr.grid.coords()[std::size_t(j)];
      std::poisson_distribution<int> draw(2.0 + 5.0 * std::exp(-6.0 * ((p.x - 0.2 * g) * (p.x - 0.2 * g) + p.y * p.y)));
      y(g, j) = draw(rng);
    }
  Eigen::MatrixXd yy(6, 64);
  yy << y, y;
  auto grid = log_lambda_grid(1e-3, 1e3, 10);
  auto a = select_lambda(pr.phi, pr.penalty, y, poisson, grid);
  auto b = select_lambda(pr.phi, pr.penalty, yy, poisson, grid);
  EXPECT_EQ(a.selection.lambda_opt, b.selection.lambda_opt);
  for (std::size_t i = 0; i < grid.size(); ++i)
    EXPECT_NEAR(b.selection.total_gcv[Eigen::Index(i)], 2.0 * a.selection.total_gcv[Eigen::Index(i)],
                1e-12 * b.selection.total_gcv[Eigen::Index(i)]);
}

TEST_F(SelectLambda, IndependentOfThreadCount) {
  std::mt19937_64 rng(11);
  std::poisson_distribution<int> draw(6.0);
  Eigen::MatrixXd y = Eigen::MatrixXd::NullaryExpr(9, 64, [&] { return double(draw(rng)); });
  auto grid = log_lambda_grid(1e-2, 1e2, 6);
  SelectOptions one, many;
  many.threads = 4;
  auto a = select_lambda(pr.phi, pr.penalty, y, poisson, grid, one);
  auto b = select_lambda(pr.phi, pr.penalty, y, poisson, grid, many);
  EXPECT_EQ(a.coefficients, b.coefficients);
  EXPECT_EQ(a.selection.opt_index, b.selection.opt_index);
  for (std::size_t i = 0; i < grid.size(); ++i)
    EXPECT_EQ(a.selection.total_gcv[Eigen::Index(i)], b.selection.total_gcv[Eigen::Index(i)]);
}

TEST_F(SelectLambda, RejectsBadGridsAndReportsNoEligibleLambda) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Constant(2, 64, 3.0);
  y(0, 5) = 40;
  EXPECT_THROW(select_lambda(pr.phi, pr.penalty, y, poisson, {}), Error);
  EXPECT_THROW(select_lambda(pr.phi, pr.penalty, y, poisson, {1.0, 1.0}), Error);
  EXPECT_THROW(select_lambda(pr.phi, pr.penalty, y, poisson, {-1.0}), Error);
  SelectOptions strict;
  strict.irls.max_iterations = 1;
  try {
    select_lambda(pr.phi, pr.penalty, y, poisson, {1.0, 10.0}, strict);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::no_eligible_lambda);
  }
}
