#include "panelsvd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "panelsvd/errors.hpp"
#include "panelsvd/rng.hpp"

namespace panelsvd {

DenseMatrix::DenseMatrix(Matrix values) : values_(std::move(values)) {
  require(values_.allFinite(), "matrix has non-finite entries");
}

DenseMatrix DenseMatrix::zeros(Index rows, Index cols) {
  require(rows >= 0 && cols >= 0, "negative matrix dimension");
  return DenseMatrix(Matrix::Zero(rows, cols));
}

DenseMatrix DenseMatrix::identity(Index size) { return DenseMatrix(Matrix::Identity(size, size)); }

DenseMatrix DenseMatrix::from_row_major(Index rows, Index cols, std::span<const double> entries) {
  require(rows >= 0 && cols >= 0, "negative matrix dimension");
  require(static_cast<Index>(entries.size()) == rows * cols,
          "entry count " + std::to_string(entries.size()) + " does not match " +
              std::to_string(rows) + "x" + std::to_string(cols));
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = entries[static_cast<std::size_t>(i * cols + j)];
  return DenseMatrix(std::move(m));
}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const auto n = static_cast<Index>(rows.size());
  const Index m = n == 0 ? 0 : static_cast<Index>(rows.begin()->size());
  Matrix out(n, m);
  Index i = 0;
  for (const auto& row : rows) {
    require(static_cast<Index>(row.size()) == m, "ragged row list");
    Index j = 0;
    for (double v : row) out(i, j++) = v;
    ++i;
  }
  return DenseMatrix(std::move(out));
}

std::vector<double> DenseMatrix::row_major() const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(rows() * cols()));
  for (Index i = 0; i < rows(); ++i)
    for (Index j = 0; j < cols(); ++j) out.push_back(values_(i, j));
  return out;
}

Matrix SvdResult::reconstruct(Index s) const {
  require(s >= 0 && s <= size(), "reconstruction rank out of range");
  if (s == 0) return Matrix::Zero(left.rows(), right.rows());
  return left.leftCols(s) * values.head(s).asDiagonal() * right.leftCols(s).transpose();
}

Matrix orthonormalize(const Matrix& a) {
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ() * Matrix::Identity(a.rows(), std::min(a.rows(), a.cols()));
}

Matrix gaussian_matrix(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(rows, cols);
  // Column-major fill keeps the draw order independent of Eigen's storage.
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) g(i, j) = normal(rng);
  return g;
}

namespace {

void check_nonempty(const DenseMatrix& a) {
  require(a.rows() > 0 && a.cols() > 0, "matrix must be non-empty");
}

SvdResult take_leading(SvdResult full, Index k) {
  SvdResult out;
  out.left = full.left.leftCols(k);
  out.values = full.values.head(k);
  out.right = full.right.leftCols(k);
  return out;
}

// Project `x` off span(basis) twice (CGS2).
void reorthogonalize(Vector& x, const Eigen::Ref<const Matrix>& basis) {
  if (basis.cols() == 0) return;
  for (int pass = 0; pass < 2; ++pass) x.noalias() -= basis * (basis.transpose() * x);
}

Vector random_orthogonal_unit(Index size, const Eigen::Ref<const Matrix>& basis, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int attempt = 0; attempt < 8; ++attempt) {
    Vector x(size);
    for (Index i = 0; i < size; ++i) x(i) = normal(rng);
    reorthogonalize(x, basis);
    const double nrm = x.norm();
    if (nrm > 1e-8) return x / nrm;
  }
  throw std::runtime_error("unable to extend orthonormal basis");
}

struct RitzSet {
  Vector values;
  Matrix left;   // coordinates in the Krylov basis
  Matrix right;
  double max_residual = 0.0;
};

// Golub-Kahan-Lanczos bidiagonalization with full reorthogonalization. On a
// breakdown (zero alpha or beta) the recurrence restarts from a fresh random
// direction orthogonal to the current basis, which keeps the decomposition
// A V_j = U_j B_j exact. Returns false when the step cap is reached first.
bool lanczos_svd(const Matrix& a, Index k, const SvdParams& params, SvdResult& out) {
  const Index n = a.rows();
  const Index m = a.cols();
  const Index dmin = std::min(n, m);
  const double scale = a.norm();
  if (scale == 0.0) {
    out.left = Matrix::Identity(n, k);
    out.values = Vector::Zero(k);
    out.right = Matrix::Identity(m, k);
    return true;
  }
  const double tiny = 64.0 * std::numeric_limits<double>::epsilon() * scale;
  // Reaching the full dimension means the projected problem is the whole
  // problem; leave that case to the dense path.
  const Index cap = dmin - 1;

  Rng rng(params.seed);
  Matrix u_basis(n, cap);
  Matrix v_basis(m, cap + 1);
  std::vector<double> alpha;
  std::vector<double> beta;
  alpha.reserve(static_cast<std::size_t>(cap));
  beta.reserve(static_cast<std::size_t>(cap));

  v_basis.col(0) = random_orthogonal_unit(m, v_basis.leftCols(0), rng);
  Vector u = a * v_basis.col(0);

  for (Index j = 0; j < cap; ++j) {
    reorthogonalize(u, u_basis.leftCols(j));
    double a_j = u.norm();
    if (a_j <= tiny) {
      a_j = 0.0;
      u = random_orthogonal_unit(n, u_basis.leftCols(j), rng);
    } else {
      u /= a_j;
    }
    u_basis.col(j) = u;
    alpha.push_back(a_j);

    Vector v = a.transpose() * u - a_j * v_basis.col(j);
    reorthogonalize(v, v_basis.leftCols(j + 1));
    double b_j = v.norm();
    const bool v_breakdown = b_j <= tiny;
    if (v_breakdown) b_j = 0.0;
    beta.push_back(b_j);

    const Index steps = j + 1;
    const bool check = steps >= k && (steps <= k + 4 || steps % 3 == 0 || v_breakdown);
    if (check) {
      Matrix bidiag = Matrix::Zero(steps, steps);
      for (Index i = 0; i < steps; ++i) {
        bidiag(i, i) = alpha[static_cast<std::size_t>(i)];
        if (i + 1 < steps) bidiag(i, i + 1) = beta[static_cast<std::size_t>(i)];
      }
      Eigen::BDCSVD<Matrix> small(bidiag, Eigen::ComputeFullU | Eigen::ComputeFullV);
      const Vector& sv = small.singularValues();
      double worst = 0.0;
      for (Index i = 0; i < k; ++i)
        worst = std::max(worst, b_j * std::abs(small.matrixU()(steps - 1, i)));
      if (worst <= params.tolerance * std::max(sv(0), tiny)) {
        out.values = sv.head(k);
        out.left = u_basis.leftCols(steps) * small.matrixU().leftCols(k);
        out.right = v_basis.leftCols(steps) * small.matrixV().leftCols(k);
        return true;
      }
    }

    if (j + 1 == cap) break;
    if (v_breakdown) {
      v = random_orthogonal_unit(m, v_basis.leftCols(j + 1), rng);
    } else {
      v /= b_j;
    }
    v_basis.col(j + 1) = v;
    u = a * v - b_j * u_basis.col(j);
  }
  return false;
}

double ritz_residual(const Matrix& a, const SvdResult& r, Index k) {
  double worst = 0.0;
  for (Index i = 0; i < k; ++i)
    worst = std::max(worst, (a * r.right.col(i) - r.values(i) * r.left.col(i)).norm());
  return worst;
}

bool randomized_svd(const Matrix& a, Index k, const SvdParams& params, SvdResult& out) {
  const Index dmin = std::min(a.rows(), a.cols());
  const Index width = std::min(k + params.oversampling, dmin);
  Matrix q = orthonormalize(a * gaussian_matrix(a.cols(), width, params.seed));
  for (int i = 0; i < params.power_iterations; ++i) q = orthonormalize(a * orthonormalize(a.transpose() * q));

  for (int it = 0;; ++it) {
    const Matrix b = q.transpose() * a;
    Eigen::BDCSVD<Matrix> small(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
    SvdResult candidate;
    candidate.values = small.singularValues().head(k);
    candidate.left = q * small.matrixU().leftCols(k);
    candidate.right = small.matrixV().leftCols(k);
    const double top = small.singularValues()(0);
    if (top == 0.0 || ritz_residual(a, candidate, k) <= params.tolerance * top) {
      out = std::move(candidate);
      return true;
    }
    if (it >= params.max_iterations) return false;
    q = orthonormalize(a * orthonormalize(a.transpose() * q));
  }
}

}  // namespace

SvdResult svd_dense(const DenseMatrix& a) {
  check_nonempty(a);
  Eigen::BDCSVD<Matrix> svd(a.values(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  SvdResult out;
  out.left = svd.matrixU();
  out.values = svd.singularValues();
  out.right = svd.matrixV();
  return out;
}

SvdResult svd_truncated(const DenseMatrix& a, Index k, const SvdParams& params) {
  check_nonempty(a);
  const Index dmin = std::min(a.rows(), a.cols());
  require(k >= 1 && k <= dmin,
          "truncation rank " + std::to_string(k) + " outside [1, " + std::to_string(dmin) + "]");

  if (dmin > params.dense_cutoff && k < dmin) {
    SvdResult out;
    const bool ok = params.method == TruncatedMethod::lanczos
                        ? lanczos_svd(a.values(), k, params, out)
                        : randomized_svd(a.values(), k, params, out);
    if (ok) return out;
  }
  return take_leading(svd_dense(a), k);
}

DenseMatrix best_rank_s(const DenseMatrix& a, Index s, const SvdParams& params) {
  const Index dmin = std::min(a.rows(), a.cols());
  require(s >= 0 && s <= dmin, "rank " + std::to_string(s) + " outside [0, " + std::to_string(dmin) + "]");
  if (s == 0) return DenseMatrix::zeros(a.rows(), a.cols());
  return DenseMatrix(svd_truncated(a, s, params).reconstruct(s));
}

double norm(const Matrix& a, NormKind kind) {
  if (a.size() == 0) return 0.0;
  switch (kind) {
    case NormKind::operator_norm: {
      if (a.isZero(0.0)) return 0.0;
      return svd_truncated(DenseMatrix(a), 1).values(0);
    }
    case NormKind::frobenius:
      return a.norm();
    case NormKind::two_infty:
      return a.rowwise().norm().maxCoeff();
    case NormKind::entry_max:
      return a.cwiseAbs().maxCoeff();
  }
  return 0.0;
}

double norm(const DenseMatrix& a, NormKind kind) { return norm(a.values(), kind); }

std::vector<double> singular_gaps(std::span<const double> sv) {
  for (std::size_t i = 0; i < sv.size(); ++i) {
    require(sv[i] >= 0.0, "singular values must be nonnegative");
    if (i + 1 < sv.size()) require(sv[i] >= sv[i + 1], "singular values must be nonincreasing");
  }
  std::vector<double> gaps(sv.size());
  for (std::size_t i = 0; i < sv.size(); ++i) gaps[i] = sv[i] - (i + 1 < sv.size() ? sv[i + 1] : 0.0);
  return gaps;
}

std::vector<double> singular_gaps(const Vector& singular_values) {
  return singular_gaps(std::span<const double>(singular_values.data(), static_cast<std::size_t>(singular_values.size())));
}

DenseMatrix symmetric_dilation(const DenseMatrix& a) {
  const Index n = a.rows();
  const Index m = a.cols();
  Matrix d = Matrix::Zero(n + m, n + m);
  d.topRightCorner(n, m) = a.values();
  d.bottomLeftCorner(m, n) = a.values().transpose();
  return DenseMatrix(std::move(d));
}

double max_principal_angle(const Matrix& q1, const Matrix& q2) {
  require(q1.rows() == q2.rows(), "subspace ambient dimensions differ");
  require(q1.cols() == q2.cols(), "subspace dimensions differ");
  if (q1.cols() == 0) return 0.0;
  // sin of the largest angle is the norm of q2's component outside span(q1).
  const Matrix outside = q2 - q1 * (q1.transpose() * q2);
  Eigen::JacobiSVD<Matrix> svd(outside);
  return std::asin(std::clamp(svd.singularValues()(0), 0.0, 1.0));
}

}  // namespace panelsvd
