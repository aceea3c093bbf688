#include <cmath>
#include <filesystem>
#include <fstream>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "gclrec/error.hpp"
#include "gclrec/spectral.hpp"
#include "support/fd.hpp"

using namespace gclrec;
using gclrec::testing::numeric_gradient;
using gclrec::testing::random_matrix;
using gclrec::testing::relative_error;

namespace {

// Squared singular values from the Gram matrix, descending.
Eigen::VectorXd gram_sigma(const Matrix& z) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Eigen::MatrixXd(z.transpose() * z));
  Eigen::VectorXd ev = eig.eigenvalues().reverse().cwiseMax(0.0).cwiseSqrt();
  return ev.head(std::min(z.rows(), z.cols()));
}

Matrix random_orthogonal(int n, std::uint64_t seed) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Eigen::MatrixXd(random_matrix(n, n, seed)));
  return qr.householderQ();
}

}  // namespace

TEST(Svd, DiagonalCase) {
  Matrix z = Matrix::Zero(3, 3);
  z.diagonal() << 3, 1, 2;
  const auto d = svd(z);
  EXPECT_NEAR(d.singular_values[0], 3, 1e-14);
  EXPECT_NEAR(d.singular_values[1], 2, 1e-14);
  EXPECT_NEAR(d.singular_values[2], 1, 1e-14);
}

TEST(Svd, ZeroMatrix) {
  const auto d = svd(Matrix::Zero(4, 3));
  EXPECT_EQ(d.singular_values.norm(), 0.0);
}

TEST(Svd, MatchesGramOracle) {
  const Matrix z = random_matrix(6, 4, 1);
  const auto d = svd(z);
  EXPECT_LT((d.singular_values - gram_sigma(z)).norm() / gram_sigma(z).norm(), 1e-8);
}

TEST(Svd, InvariantsHold) {
  for (auto [r, c] : {std::pair{9, 4}, {4, 9}, {7, 7}}) {
    const Matrix z = random_matrix(r, c, static_cast<std::uint64_t>(r * 10 + c));
    const auto d = svd(z);
    for (Eigen::Index k = 1; k < d.singular_values.size(); ++k) {
      EXPECT_GE(d.singular_values[k - 1], d.singular_values[k]);
    }
    const Eigen::Index k = d.singular_values.size();
    EXPECT_LT((d.left.transpose() * d.left - Matrix::Identity(k, k)).norm(), 1e-8);
    EXPECT_LT((d.right.transpose() * d.right - Matrix::Identity(k, k)).norm(), 1e-8);
    const Matrix back = d.left * d.singular_values.asDiagonal() * d.right.transpose();
    EXPECT_LT((z - back).norm() / z.norm(), 1e-8);
    for (Eigen::Index col = 0; col < k; ++col) {
      for (Eigen::Index row = 0; row < d.left.rows(); ++row) {
        if (std::abs(d.left(row, col)) > 1e-12) {
          EXPECT_GT(d.left(row, col), 0.0);
          break;
        }
      }
    }
  }
}

TEST(Svd, Errors) {
  Matrix z = random_matrix(3, 3, 2);
  EXPECT_THROW(svd(z, 4), ConfigError);
  z(1, 1) = std::nan("");
  EXPECT_THROW(svd(z), NumericalError);
}

TEST(Spectrum, RankOne) {
  const Matrix z = Vector::LinSpaced(5, 1, 5) * Vector::LinSpaced(3, 1, 3).transpose();
  const auto r = spectrum_report(z);
  EXPECT_NEAR(r.top_share, 1.0, 1e-12);
  EXPECT_NEAR(r.effective_rank, 1.0, 1e-10);
}

TEST(Spectrum, EqualSingularValues) {
  const auto r = spectrum_report(random_orthogonal(6, 3) * 2.5);
  EXPECT_NEAR(r.effective_rank, 6.0, 1e-10);
  EXPECT_NEAR(r.top_share, 1.0 / 6.0, 1e-12);
  EXPECT_TRUE(std::isnan(r.top_to_tenth));
}

TEST(Spectrum, StatsMatchDirectComputation) {
  const Matrix z = random_matrix(30, 12, 4);
  const auto r = spectrum_report(z);
  const auto s = svd(z).singular_values;
  EXPECT_NEAR(r.top_share, s[0] / s.sum(), 1e-14);
  EXPECT_NEAR(r.top_to_tenth, s[0] / s[9], 1e-12);
  double h = 0;
  for (int i = 0; i < s.size(); ++i) h -= s[i] / s.sum() * std::log(s[i] / s.sum());
  EXPECT_NEAR(r.effective_rank, std::exp(h), 1e-12);
}

TEST(Spectrum, CsvLayout) {
  const auto path = std::filesystem::temp_directory_path() / "gclrec_spectrum.csv";
  write_spectrum_csv(spectrum_report_from_sigma({3, 2, 1}), path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "rank,sigma");
  std::getline(in, line);
  EXPECT_EQ(line, "1,3");
  std::filesystem::remove(path);
}

TEST(Bound, Examples) {
  const std::vector<double> ones(4, 1.0);
  EXPECT_NEAR(gcl_upper_bound(ones, ones, 10), 10 - 4 + 10 * std::log(10.0), 1e-12);
  const std::vector<double> one = {1.0};
  EXPECT_EQ(gcl_upper_bound(one, one, 1), 0.0);
  EXPECT_THROW(gcl_upper_bound(one, ones, 3), ConfigError);
}

TEST(Dispersion, RankOneLossIsEntrywiseNorm) {
  Matrix z(2, 2);
  z << 1, 2, 0, 0;
  Vector v(2);
  v << 0.3, -0.8;
  EXPECT_NEAR(dispersion_loss(z, v).loss, -3.0, 1e-12);
  EXPECT_NEAR(dispersion_loss(z, v, DispersionNorm::kFrobenius).loss, -std::sqrt(5.0), 1e-12);
}

TEST(Dispersion, AlignedProbeRemovesThatComponent) {
  // Orthogonal rows: right singular vectors are the coordinate axes.
  Matrix z = Matrix::Zero(3, 3);
  z.diagonal() << 4, 2, 1;
  const auto r = svd(z);
  for (int i = 0; i < 3; ++i) {
    const Vector ri = r.right.col(i);
    const auto d = dispersion_loss(z, ri);
    EXPECT_LT((d.state.approx * ri).norm(), 1e-12);
    // The other components are untouched.
    for (int j = 0; j < 3; ++j) {
      if (j != i) EXPECT_NEAR((d.state.approx * r.right.col(j)).norm(), r.singular_values[j], 1e-12);
    }
  }
}

TEST(Dispersion, ApproximationAnnihilatesProjectedProbe) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix z = random_matrix(7, 4, s);
    const auto d = dispersion_loss(z, s + 100);
    EXPECT_LT((d.state.approx * d.state.projected).norm(), 1e-8 * std::max(1.0, d.state.projected.norm()));
  }
}

TEST(Dispersion, GradientMatchesFiniteDifferences) {
  for (auto norm : {DispersionNorm::kEntrywiseL1, DispersionNorm::kFrobenius}) {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const Matrix z = random_matrix(5, 3, 50 + s);
      const auto d = dispersion_loss(z, s, norm);
      const auto f = [&](const Matrix& x) { return dispersion_loss(x, d.state.probe, norm).loss; };
      EXPECT_LT(relative_error(d.grad, numeric_gradient(f, z)), 1e-4);
    }
  }
}

TEST(Dispersion, AnnihilatedProbeErrors) {
  EXPECT_THROW(dispersion_loss(Matrix::Zero(3, 2), std::uint64_t{1}), NumericalError);
}

TEST(Dispersion, AscentFlattensSpectrum) {
  Matrix z = random_matrix(40, 8, 3);
  z.col(0) *= 4.0;
  const double before = spectrum_report(z).top_share;
  for (int step = 0; step < 200; ++step) {
    const auto d = dispersion_loss(z, static_cast<std::uint64_t>(step));
    z += 1e-3 * d.grad / std::max(1.0, d.grad.norm());
  }
  EXPECT_LT(spectrum_report(z).top_share, before);
}

TEST(Reconstruction, FullRankIsExact) {
  Matrix z = random_matrix(6, 3, 1).leftCols(2) * random_matrix(2, 4, 2);  // rank 2, 6x4
  for (double e : reconstruction_errors(z, 2)) EXPECT_LT(e, 1e-8);
}

TEST(Reconstruction, PlantedOrthogonalItemHasLargestError) {
  Matrix z = Matrix::Zero(5, 4);
  z.row(0) << 3, 1, 0, 0;
  z.row(1) << 2, 2, 0, 0;
  z.row(2) << 3, -1, 0, 0;
  z.row(3) << 4, 1, 0, 0;
  z.row(4) << 0, 0, 1.5, 0;  // outside everyone else's span
  const auto e = reconstruction_errors(z, 2);
  EXPECT_EQ(std::max_element(e.begin(), e.end()) - e.begin(), 4);
}

TEST(Reconstruction, MatchesGramProjection) {
  const Matrix z = random_matrix(8, 4, 9);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Eigen::MatrixXd(z.transpose() * z));
  const Eigen::MatrixXd top = eig.eigenvectors().rightCols(2);
  const Matrix residual = z - z * top * top.transpose();
  const auto e = reconstruction_errors(z, 2);
  for (int i = 0; i < 8; ++i) EXPECT_NEAR(e[i], residual.row(i).norm(), 1e-8 * std::max(1.0, residual.row(i).norm()));
}

TEST(Reconstruction, RotationInvariant) {
  const Matrix z = random_matrix(12, 5, 4);
  const auto a = reconstruction_errors(z, 3);
  const auto b = reconstruction_errors(z * random_orthogonal(5, 8), 3);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-8);
}

TEST(Reconstruction, RankBounds) {
  const Matrix z = random_matrix(6, 4, 1);
  EXPECT_THROW(reconstruction_errors(z, 0), ConfigError);
  EXPECT_THROW(reconstruction_errors(z, 4), ConfigError);
}

TEST(Reconstruction, CsvUsesItemIds) {
  const auto path = std::filesystem::temp_directory_path() / "gclrec_recon.csv";
  const std::vector<double> e = {0.5, 1.25};
  write_reconstruction_csv(e, {"apple", "pear"}, path);
  std::ifstream in(path);
  std::string a, b, c;
  std::getline(in, a);
  std::getline(in, b);
  std::getline(in, c);
  EXPECT_EQ(a, "item_id,epsilon");
  EXPECT_EQ(b, "apple,0.5");
  EXPECT_EQ(c, "pear,1.25");
  std::filesystem::remove(path);
}
