#pragma once

#include "panelsvd/linalg.hpp"

// Brute-force references for desk-scale checks. Nothing here calls into the
// decompositions of linalg.hpp; the eigen-solver is a plain cyclic Jacobi.
namespace panelsvd::oracle {

inline constexpr Index kMaxOracleDim = 512;

struct SymmetricEigen {
  std::vector<double> values;   // descending
  std::vector<double> vectors;  // column-major, size*size; column i pairs with values[i]
  Index size = 0;
  int sweeps = 0;
};

/// Cyclic Jacobi until the off-diagonal Frobenius norm is at most
/// `off_tolerance` times the Frobenius norm of the input.
[[nodiscard]] SymmetricEigen jacobi_eigen(std::vector<double> symmetric, Index size,
                                          double off_tolerance = 1e-12);

/// SVD from the eigendecomposition of [[0, A], [A^T, 0]]; refuses inputs
/// with min(n, m) above kMaxOracleDim.
[[nodiscard]] SvdResult oracle_svd(const DenseMatrix& a);

[[nodiscard]] DenseMatrix oracle_best_rank_s(const DenseMatrix& a, Index s);

struct OracleReport {
  double max_singular_value_deviation = 0.0;  // relative to sigma_1
  double max_subspace_angle = 0.0;            // radians, over checked ranks
  double reconstruction_gap = 0.0;            // relative Frobenius
};

/// Compares `candidate` (e.g. svd_dense or svd_truncated output) against the
/// oracle on the leading candidate.size() components. Subspaces and
/// reconstructions are only compared at ranks whose gap is at least
/// 1e-6 * sigma_1.
[[nodiscard]] OracleReport compare_with_oracle(const DenseMatrix& a, const SvdResult& candidate);

}  // namespace panelsvd::oracle
