#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gclrec/linalg.hpp"

namespace gclrec {

// Thin singular value decomposition Z ~= left * diag(singular_values) * right^T.
// Singular values are descending; each left vector has its first nonzero
// entry positive.
struct SpectralDecomposition {
  Matrix left;             // rows x k
  Vector singular_values;  // k
  Matrix right;            // cols x k
  std::size_t rank = 0;
};

// `k` defaults to min(rows, cols).
SpectralDecomposition svd(const Matrix& z, std::optional<std::size_t> k = std::nullopt);

struct SpectrumReport {
  std::vector<double> sigma;      // descending
  double top_share = 0.0;         // sigma_1 / sum(sigma)
  double top_to_tenth = 0.0;      // sigma_1 / sigma_10, NaN with fewer than 10 values
  double effective_rank = 0.0;    // exp(entropy of sigma / sum(sigma))
};

SpectrumReport spectrum_report(const Matrix& z);
SpectrumReport spectrum_report_from_sigma(std::vector<double> sigma);
void write_spectrum_csv(const SpectrumReport& report, const std::filesystem::path& path);

// N * max_j(s'_j s''_j) - sum_i s'_i s''_i + N log N
double gcl_upper_bound(std::span<const double> sigma_first, std::span<const double> sigma_second,
                       std::size_t num_nodes);

enum class DispersionNorm { kEntrywiseL1, kFrobenius };

struct DispersionState {
  Vector probe;      // V, d x 1
  Vector projected;  // V' = Z^T Z V
  Matrix approx;     // Z - Z V' V'^T / |V'|^2
};

struct DispersionResult {
  double loss = 0.0;  // L_D = -|Z V' V'^T| / |V'|_2^2
  Matrix grad;        // dL_D / dZ, V held fixed, V' recomputed from Z
  DispersionState state;
};

// Draws V ~ N(0, I) from `seed`; redraws up to 8 times if Z^T Z V = 0.
DispersionResult dispersion_loss(const Matrix& z, std::uint64_t seed,
                                 DispersionNorm norm = DispersionNorm::kEntrywiseL1);
DispersionResult dispersion_loss(const Matrix& z, const Vector& probe,
                                 DispersionNorm norm = DispersionNorm::kEntrywiseL1);

// eps_i = |z_i - projection of z_i onto the top-k right singular subspace|_2.
std::vector<double> reconstruction_errors(const Matrix& items, std::size_t k);
void write_reconstruction_csv(std::span<const double> errors, const std::vector<std::string>& item_ids,
                              const std::filesystem::path& path);

}  // namespace gclrec
