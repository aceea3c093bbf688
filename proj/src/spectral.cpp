#include "gclrec/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/SVD>

#include "gclrec/error.hpp"

namespace gclrec {

SpectralDecomposition svd(const Matrix& z, std::optional<std::size_t> k) {
  if (!z.allFinite()) throw NumericalError("svd input contains non-finite values");
  const auto full = static_cast<std::size_t>(std::min(z.rows(), z.cols()));
  const std::size_t rank = k.value_or(full);
  if (rank > full) throw ConfigError("svd rank exceeds min(rows, cols)");

  const Eigen::MatrixXd dense = z;
  Eigen::JacobiSVD<Eigen::MatrixXd, Eigen::ColPivHouseholderQRPreconditioner> solver(
      dense, Eigen::ComputeThinU | Eigen::ComputeThinV);

  SpectralDecomposition out;
  out.rank = rank;
  const auto r = static_cast<Eigen::Index>(rank);
  out.left = solver.matrixU().leftCols(r);
  out.right = solver.matrixV().leftCols(r);
  out.singular_values = solver.singularValues().head(r);

  for (Eigen::Index c = 0; c < r; ++c) {
    const double scale = out.left.col(c).cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < out.left.rows(); ++i) {
      if (std::abs(out.left(i, c)) > 1e-12 * scale) {
        if (out.left(i, c) < 0.0) {
          out.left.col(c) *= -1.0;
          out.right.col(c) *= -1.0;
        }
        break;
      }
    }
  }
  return out;
}

SpectrumReport spectrum_report_from_sigma(std::vector<double> sigma) {
  SpectrumReport report;
  report.sigma = std::move(sigma);
  const double total = std::accumulate(report.sigma.begin(), report.sigma.end(), 0.0);
  report.top_to_tenth = std::numeric_limits<double>::quiet_NaN();
  if (report.sigma.empty() || total <= 0.0) return report;
  report.top_share = report.sigma.front() / total;
  if (report.sigma.size() >= 10 && report.sigma[9] > 0.0) {
    report.top_to_tenth = report.sigma.front() / report.sigma[9];
  }
  double entropy = 0.0;
  for (double s : report.sigma) {
    const double p = s / total;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  report.effective_rank = std::exp(entropy);
  return report;
}

SpectrumReport spectrum_report(const Matrix& z) {
  const auto dec = svd(z);
  return spectrum_report_from_sigma(
      {dec.singular_values.data(), dec.singular_values.data() + dec.singular_values.size()});
}

void write_spectrum_csv(const SpectrumReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  out.precision(17);
  out << "rank,sigma\n";
  for (std::size_t i = 0; i < report.sigma.size(); ++i) out << i + 1 << ',' << report.sigma[i] << '\n';
}

double gcl_upper_bound(std::span<const double> sigma_first, std::span<const double> sigma_second,
                       std::size_t num_nodes) {
  if (sigma_first.size() != sigma_second.size()) throw ConfigError("singular value lists differ in length");
  if (num_nodes == 0) throw ConfigError("gcl_upper_bound needs N >= 1");
  double largest = 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < sigma_first.size(); ++i) {
    if (sigma_first[i] < 0.0 || sigma_second[i] < 0.0) throw ConfigError("singular values must be nonnegative");
    const double product = sigma_first[i] * sigma_second[i];
    largest = std::max(largest, product);
    sum += product;
  }
  const double n = static_cast<double>(num_nodes);
  return n * largest - sum + n * std::log(n);
}

DispersionResult dispersion_loss(const Matrix& z, const Vector& probe, DispersionNorm norm) {
  if (probe.size() != z.cols()) throw ConfigError("dispersion probe has wrong dimension");
  DispersionResult out;
  const Vector p = z * probe;           // Z V
  const Vector w = z.transpose() * p;   // V' = Z^T Z V
  const double c = w.squaredNorm();
  if (c == 0.0) throw NumericalError("dispersion probe is annihilated by Z");
  const Vector q = z * w;               // Z V'

  // |q w^T| factorizes as A(q) B(w) for both supported norms.
  double a = 0.0;
  double b = 0.0;
  Vector grad_a(q.size());
  Vector grad_b(w.size());
  if (norm == DispersionNorm::kEntrywiseL1) {
    a = q.lpNorm<1>();
    b = w.lpNorm<1>();
    grad_a = q.unaryExpr([](double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); });
    grad_b = w.unaryExpr([](double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); });
  } else {
    a = q.norm();
    b = w.norm();
    grad_a = a > 0.0 ? Vector(q / a) : Vector::Zero(q.size());
    grad_b = w / b;
  }
  out.loss = -a * b / c;

  // dL = -(b/c) grad_a^T dq + g^T dw, dq = dZ w + Z dw, dw = dZ^T p + Z^T dZ v.
  const Vector g = -(b / c) * (z.transpose() * grad_a) - (a / c) * grad_b + (2.0 * a * b / (c * c)) * w;
  out.grad = -(b / c) * grad_a * w.transpose() + p * g.transpose() + (z * g) * probe.transpose();

  out.state.probe = probe;
  out.state.projected = w;
  out.state.approx = z - (q * w.transpose()) / c;
  return out;
}

DispersionResult dispersion_loss(const Matrix& z, std::uint64_t seed, DispersionNorm norm) {
  if (z.cols() == 0) throw ConfigError("dispersion needs a nonempty matrix");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector probe(z.cols());
  for (int attempt = 0; attempt < 8; ++attempt) {
    for (Eigen::Index i = 0; i < probe.size(); ++i) probe[i] = normal(rng);
    const Vector w = z.transpose() * (z * probe);
    if (w.squaredNorm() > 0.0) return dispersion_loss(z, probe, norm);
  }
  throw NumericalError("dispersion probe annihilated by Z after 8 draws");
}

std::vector<double> reconstruction_errors(const Matrix& items, std::size_t k) {
  const auto limit = static_cast<std::size_t>(std::min(items.rows(), items.cols()));
  if (k < 1 || k >= limit) {
    throw ConfigError("reconstruction rank must satisfy 1 <= k < min(rows, cols)");
  }
  const auto dec = svd(items, k);
  const Matrix residual = items - (items * dec.right) * dec.right.transpose();
  std::vector<double> errors(static_cast<std::size_t>(items.rows()));
  for (Eigen::Index i = 0; i < items.rows(); ++i) errors[static_cast<std::size_t>(i)] = residual.row(i).norm();
  return errors;
}

void write_reconstruction_csv(std::span<const double> errors, const std::vector<std::string>& item_ids,
                              const std::filesystem::path& path) {
  if (errors.size() != item_ids.size()) throw ConfigError("error/id count mismatch");
  std::ofstream out(path);
  out.precision(17);
  out << "item_id,epsilon\n";
  for (std::size_t i = 0; i < errors.size(); ++i) out << item_ids[i] << ',' << errors[i] << '\n';
}

}  // namespace gclrec
