#include "panelsvd/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "panelsvd/errors.hpp"

namespace panelsvd::oracle {

namespace {

double& at(std::vector<double>& a, Index size, Index i, Index j) {
  return a[static_cast<std::size_t>(i * size + j)];
}

}  // namespace

SymmetricEigen jacobi_eigen(std::vector<double> a, Index size, double off_tolerance) {
  require(static_cast<Index>(a.size()) == size * size, "jacobi input is not square");
  for (Index i = 0; i < size; ++i)
    for (Index j = i + 1; j < size; ++j)
      require(at(a, size, i, j) == at(a, size, j, i), "jacobi input is not symmetric");

  std::vector<double> v(static_cast<std::size_t>(size * size), 0.0);
  for (Index i = 0; i < size; ++i) v[static_cast<std::size_t>(i * size + i)] = 1.0;

  const double total = std::sqrt(std::accumulate(a.begin(), a.end(), 0.0,
                                                 [](double s, double x) { return s + x * x; }));
  const double target = off_tolerance * total;
  auto off_norm = [&] {
    double s = 0.0;
    for (Index i = 0; i < size; ++i)
      for (Index j = i + 1; j < size; ++j) s += 2.0 * at(a, size, i, j) * at(a, size, i, j);
    return std::sqrt(s);
  };

  SymmetricEigen out;
  out.size = size;
  // Row-major storage; v is stored with eigenvectors in rows during the
  // sweep (row i of v <-> column i of the result) so rotations touch
  // contiguous memory.
  constexpr int kMaxSweeps = 100;
  while (total > 0.0 && off_norm() > target) {
    if (out.sweeps++ >= kMaxSweeps) throw std::runtime_error("jacobi did not converge");
    for (Index p = 0; p < size - 1; ++p) {
      for (Index q = p + 1; q < size; ++q) {
        const double apq = at(a, size, p, q);
        if (apq == 0.0) continue;
        const double app = at(a, size, p, p);
        const double aqq = at(a, size, q, q);
        // Skip elements that are negligible against both diagonal entries.
        if (std::abs(apq) < 1e-18 * total) {
          at(a, size, p, q) = 0.0;
          at(a, size, q, p) = 0.0;
          continue;
        }
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        // A <- J^T A J touches rows and columns p, q; by symmetry the new
        // columns mirror the new rows outside the 2x2 block.
        double* row_p = &at(a, size, p, 0);
        double* row_q = &at(a, size, q, 0);
        for (Index k = 0; k < size; ++k) {
          if (k == p || k == q) continue;
          const double x = row_p[k];
          const double y = row_q[k];
          row_p[k] = c * x - s * y;
          row_q[k] = s * x + c * y;
          at(a, size, k, p) = row_p[k];
          at(a, size, k, q) = row_q[k];
        }
        at(a, size, p, p) = app - t * apq;
        at(a, size, q, q) = aqq + t * apq;
        at(a, size, p, q) = 0.0;
        at(a, size, q, p) = 0.0;

        double* vp = &v[static_cast<std::size_t>(p * size)];
        double* vq = &v[static_cast<std::size_t>(q * size)];
        for (Index k = 0; k < size; ++k) {
          const double x = vp[k];
          const double y = vq[k];
          vp[k] = c * x - s * y;
          vq[k] = s * x + c * y;
        }
      }
    }
  }

  std::vector<Index> order(static_cast<std::size_t>(size));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index x, Index y) { return at(a, size, x, x) > at(a, size, y, y); });
  out.values.resize(static_cast<std::size_t>(size));
  out.vectors.assign(static_cast<std::size_t>(size * size), 0.0);
  for (Index col = 0; col < size; ++col) {
    const Index src = order[static_cast<std::size_t>(col)];
    out.values[static_cast<std::size_t>(col)] = at(a, size, src, src);
    for (Index k = 0; k < size; ++k)
      out.vectors[static_cast<std::size_t>(col * size + k)] = v[static_cast<std::size_t>(src * size + k)];
  }
  return out;
}

SvdResult oracle_svd(const DenseMatrix& a) {
  const Index n = a.rows();
  const Index m = a.cols();
  require(n > 0 && m > 0, "matrix must be non-empty");
  const Index dmin = std::min(n, m);
  if (dmin > kMaxOracleDim)
    throw ValidationError("oracle_svd is desk-scale only: min(n, m) = " + std::to_string(dmin) +
                          " exceeds " + std::to_string(kMaxOracleDim));

  const Index size = n + m;
  std::vector<double> dil(static_cast<std::size_t>(size * size), 0.0);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) {
      dil[static_cast<std::size_t>(i * size + n + j)] = a(i, j);
      dil[static_cast<std::size_t>((n + j) * size + i)] = a(i, j);
    }
  const SymmetricEigen eig = jacobi_eigen(std::move(dil), size);

  // The dmin largest eigenvalues are +sigma_i with eigenvectors (u_i; v_i)/sqrt(2).
  SvdResult out;
  out.left = Matrix::Zero(n, dmin);
  out.right = Matrix::Zero(m, dmin);
  out.values = Vector::Zero(dmin);
  for (Index c = 0; c < dmin; ++c) {
    out.values(c) = std::max(eig.values[static_cast<std::size_t>(c)], 0.0);
    const double* w = &eig.vectors[static_cast<std::size_t>(c * size)];
    double nu = 0.0;
    double nv = 0.0;
    for (Index i = 0; i < n; ++i) nu += w[i] * w[i];
    for (Index j = 0; j < m; ++j) nv += w[n + j] * w[n + j];
    nu = std::sqrt(nu);
    nv = std::sqrt(nv);
    for (Index i = 0; i < n; ++i) out.left(i, c) = nu > 0.0 ? w[i] / nu : 0.0;
    for (Index j = 0; j < m; ++j) out.right(j, c) = nv > 0.0 ? w[n + j] / nv : 0.0;
  }
  return out;
}

DenseMatrix oracle_best_rank_s(const DenseMatrix& a, Index s) {
  const Index dmin = std::min(a.rows(), a.cols());
  require(s >= 0 && s <= dmin, "rank outside [0, min(n, m)]");
  if (s == 0) return DenseMatrix::zeros(a.rows(), a.cols());
  const SvdResult svd = oracle_svd(a);
  Matrix out = Matrix::Zero(a.rows(), a.cols());
  for (Index c = 0; c < s; ++c) out += svd.values(c) * svd.left.col(c) * svd.right.col(c).transpose();
  return DenseMatrix(std::move(out));
}

OracleReport compare_with_oracle(const DenseMatrix& a, const SvdResult& candidate) {
  const SvdResult ref = oracle_svd(a);
  const Index k = candidate.size();
  require(k <= ref.size(), "candidate has more components than min(n, m)");
  OracleReport report;
  const double top = ref.values(0);
  if (top == 0.0) {
    report.max_singular_value_deviation = candidate.values.cwiseAbs().maxCoeff();
    return report;
  }
  for (Index i = 0; i < k; ++i)
    report.max_singular_value_deviation =
        std::max(report.max_singular_value_deviation, std::abs(candidate.values(i) - ref.values(i)) / top);

  const double a_norm = a.values().norm();
  for (Index s = 1; s <= k; ++s) {
    const double next = s < ref.size() ? ref.values(s) : 0.0;
    if (ref.values(s - 1) - next < 1e-6 * top) continue;
    const Matrix ref_s = ref.reconstruct(s);
    const Matrix cand_s = candidate.reconstruct(s);
    report.reconstruction_gap = std::max(report.reconstruction_gap, (ref_s - cand_s).norm() / a_norm);
    report.max_subspace_angle = std::max(
        report.max_subspace_angle, max_principal_angle(ref.left.leftCols(s), candidate.left.leftCols(s)));
    report.max_subspace_angle = std::max(
        report.max_subspace_angle, max_principal_angle(ref.right.leftCols(s), candidate.right.leftCols(s)));
  }
  return report;
}

}  // namespace panelsvd::oracle
