#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace panelsvd {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Finite real matrix. Entries are validated once on construction and the
/// value is immutable afterwards, so it can be shared freely across threads.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  explicit DenseMatrix(Matrix values);

  static DenseMatrix zeros(Index rows, Index cols);
  static DenseMatrix identity(Index size);
  /// `entries` holds rows*cols values in row-major order.
  static DenseMatrix from_row_major(Index rows, Index cols, std::span<const double> entries);
  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  [[nodiscard]] Index rows() const noexcept { return values_.rows(); }
  [[nodiscard]] Index cols() const noexcept { return values_.cols(); }
  [[nodiscard]] double operator()(Index i, Index j) const { return values_(i, j); }
  [[nodiscard]] const Matrix& values() const noexcept { return values_; }
  [[nodiscard]] std::vector<double> row_major() const;

  friend bool operator==(const DenseMatrix& a, const DenseMatrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a.values_ == b.values_;
  }

 private:
  Matrix values_;
};

struct SvdResult {
  Matrix left;    // n x k, orthonormal columns
  Vector values;  // nonincreasing, nonnegative
  Matrix right;   // m x k, orthonormal columns

  [[nodiscard]] Index size() const noexcept { return values.size(); }
  /// Sum of the leading `s` rank-one terms; s = 0 gives the zero matrix.
  [[nodiscard]] Matrix reconstruct(Index s) const;
};

enum class TruncatedMethod {
  lanczos,     // Golub-Kahan-Lanczos with full reorthogonalization
  randomized,  // range finder + subspace iteration
};

struct SvdParams {
  TruncatedMethod method = TruncatedMethod::lanczos;
  Index dense_cutoff = 64;  // min(n, m) at or below this uses the dense path
  Index oversampling = 10;
  int power_iterations = 2;
  int max_iterations = 300;     // randomized refinement cap before dense fallback
  double tolerance = 1e-11;     // residual bound relative to sigma_1
  std::uint64_t seed = 0x5eedULL;
};

[[nodiscard]] SvdResult svd_dense(const DenseMatrix& a);
[[nodiscard]] SvdResult svd_truncated(const DenseMatrix& a, Index k, const SvdParams& params = {});
[[nodiscard]] DenseMatrix best_rank_s(const DenseMatrix& a, Index s, const SvdParams& params = {});

enum class NormKind { operator_norm, frobenius, two_infty, entry_max };

[[nodiscard]] double norm(const DenseMatrix& a, NormKind kind);
[[nodiscard]] double norm(const Matrix& a, NormKind kind);

/// gap[s-1] = sigma_s - sigma_{s+1}, with sigma_{len+1} = 0.
[[nodiscard]] std::vector<double> singular_gaps(std::span<const double> singular_values);
[[nodiscard]] std::vector<double> singular_gaps(const Vector& singular_values);

/// [[0, A], [A^T, 0]]
[[nodiscard]] DenseMatrix symmetric_dilation(const DenseMatrix& a);

/// Largest principal angle (radians) between the column spans of two
/// matrices with orthonormal columns.
[[nodiscard]] double max_principal_angle(const Matrix& q1, const Matrix& q2);

/// Orthonormal basis for the column space via thin Householder QR.
[[nodiscard]] Matrix orthonormalize(const Matrix& a);

[[nodiscard]] Matrix gaussian_matrix(Index rows, Index cols, std::uint64_t seed);

}  // namespace panelsvd
