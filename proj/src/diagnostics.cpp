#include "panelsvd/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "panelsvd/errors.hpp"
#include "panelsvd/estimator.hpp"
#include "panelsvd/rng.hpp"

namespace panelsvd {

namespace {

double log_nm(Index n, Index m) { return std::log(static_cast<double>(n + m)); }

void require_positive(double x, const char* name) {
  if (!(x > 0.0) || !std::isfinite(x)) throw ValidationError(std::string(name) + " must be positive and finite");
}

void require_nonnegative(double x, const char* name) {
  if (!(x >= 0.0) || !std::isfinite(x)) throw ValidationError(std::string(name) + " must be nonnegative and finite");
}

void require_dims(Index n, Index m) { require(n > 0 && m > 0, "dimensions must be positive"); }

void flatten_matrix_error(FlatRecord& rec, const std::string& prefix, const MatrixError& e) {
  rec.add(prefix + "_two_infty_raw", e.two_infty_raw);
  rec.add(prefix + "_two_infty_norm", e.two_infty_normalized);
  rec.add(prefix + "_frob_norm", e.frobenius_normalized);
  rec.add(prefix + "_op", e.operator_norm);
  rec.add(prefix + "_entry_max", e.entry_max);
}

}  // namespace

void FlatRecord::add(const std::string& key, double value) {
  if (std::find(keys_.begin(), keys_.end(), key) != keys_.end())
    throw std::logic_error("duplicate record key '" + key + "'");
  keys_.push_back(key);
  values_.push_back(value);
}

void FlatRecord::append(const std::string& prefix, const FlatRecord& other) {
  for (std::size_t i = 0; i < other.size(); ++i) add(prefix + other.keys_[i], other.values_[i]);
}

std::optional<double> FlatRecord::get(const std::string& key) const {
  const auto it = std::find(keys_.begin(), keys_.end(), key);
  if (it == keys_.end()) return std::nullopt;
  return values_[static_cast<std::size_t>(it - keys_.begin())];
}

double t_param(Index n, Index m, double q, double r_p, double p_op_norm) {
  require_dims(n, m);
  require_positive(q, "q");
  require_positive(r_p, "r_p");
  require_nonnegative(p_op_norm, "p_op_norm");
  const double nn = static_cast<double>(n);
  const double mm = static_cast<double>(m);
  return std::sqrt((mm + r_p * nn) / q * log_nm(n, m)) + p_op_norm;
}

FlatRecord DesignParams::flatten() const {
  FlatRecord rec;
  rec.add("q", q);
  rec.add("r_p", r_p);
  rec.add("p_op_0", p_op_norm[0]);
  rec.add("p_op_1", p_op_norm[1]);
  rec.add("t_0", t[0]);
  rec.add("t_1", t[1]);
  return rec;
}

DesignParams design_params(const PanelDesign& design) {
  DesignParams out;
  out.n = design.n_units();
  out.m = design.n_times();
  out.q = 1.0;
  out.r_p = 1.0;
  for (Action a : kActions) {
    const std::size_t k = index_of(a);
    out.p_bar[k] = row_mean_propensity(design.propensity(), a);
    out.p_matrix[k] = deviation_matrix(design.propensity(), a);
    out.q = std::min(out.q, out.p_bar[k].minCoeff());
    out.r_p = std::max(out.r_p, out.p_matrix[k].maxCoeff() + 1.0);
    out.p_op_norm[k] = norm(out.p_matrix[k], NormKind::operator_norm);
  }
  for (Action a : kActions)
    out.t[index_of(a)] = t_param(out.n, out.m, out.q, out.r_p, out.p_op_norm[index_of(a)]);
  return out;
}

DesignParams design_params_plug_in(const DenseMatrix& assignments) {
  DesignParams out;
  out.n = assignments.rows();
  out.m = assignments.cols();
  out.q = 1.0;
  out.plug_in = true;
  for (Action a : kActions) {
    const std::size_t k = index_of(a);
    out.p_bar[k] = empirical_row_propensity(assignments, a);
    out.p_matrix[k] = Matrix::Zero(out.n, out.m);
    out.q = std::min(out.q, out.p_bar[k].minCoeff());
  }
  for (Action a : kActions) out.t[index_of(a)] = t_param(out.n, out.m, out.q, 1.0, 0.0);
  return out;
}

Incoherence incoherence(const DenseMatrix& a, Index r, const SvdParams& params) {
  const Index dmin = std::min(a.rows(), a.cols());
  require(r >= 1 && r <= dmin, "incoherence rank outside [1, min(n, m)]");
  const SvdResult dec = svd_truncated(a, r, params);
  Incoherence out;
  const double top = dec.values(0);
  for (Index i = 0; i < r; ++i)
    if (top > 0.0 && dec.values(i) > 1e-9 * top) out.rank_used = i + 1;
  out.rank_warning = out.rank_used < r;
  if (out.rank_used == 0) return out;
  const Matrix u = dec.left.leftCols(out.rank_used);
  const Matrix v = dec.right.leftCols(out.rank_used);
  out.mu_row = std::sqrt(static_cast<double>(a.rows())) * u.rowwise().norm().maxCoeff();
  out.mu_col = std::sqrt(static_cast<double>(a.cols())) * v.rowwise().norm().maxCoeff();
  out.mu = std::max(out.mu_row, out.mu_col);
  return out;
}

NamedSubset subset_preset(const std::string& name, Index m, std::uint64_t seed) {
  require(m >= 1, "subset needs at least one column");
  NamedSubset out{name, {}};
  if (name == "all") {
    out.columns.resize(static_cast<std::size_t>(m));
    std::iota(out.columns.begin(), out.columns.end(), Index{0});
  } else if (name == "first-half") {
    for (Index j = 0; j < std::max<Index>(1, m / 2); ++j) out.columns.push_back(j);
  } else if (name == "even-indices") {
    for (Index j = 0; j < m; j += 2) out.columns.push_back(j);
  } else if (name == "random-half") {
    std::vector<Index> all(static_cast<std::size_t>(m));
    std::iota(all.begin(), all.end(), Index{0});
    Rng rng(seed);
    const std::size_t take = static_cast<std::size_t>(std::max<Index>(1, m / 2));
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
      std::swap(all[i], all[pick(rng)]);
    }
    out.columns.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(out.columns.begin(), out.columns.end());
  } else {
    throw ValidationError("unknown subset preset '" + name +
                          "' (expected all, first-half, even-indices, random-half)");
  }
  return out;
}

MatrixError matrix_error(const Matrix& diff) {
  MatrixError e;
  const double n = static_cast<double>(diff.rows());
  const double m = static_cast<double>(diff.cols());
  e.two_infty_raw = norm(diff, NormKind::two_infty);
  e.two_infty_normalized = e.two_infty_raw / std::sqrt(m);
  e.frobenius_normalized = diff.norm() / std::sqrt(n * m);
  e.operator_norm = norm(diff, NormKind::operator_norm);
  e.entry_max = norm(diff, NormKind::entry_max);
  return e;
}

FlatRecord ErrorReport::flatten() const {
  FlatRecord rec;
  flatten_matrix_error(rec, "m", effect);
  flatten_matrix_error(rec, "a0", action[0]);
  flatten_matrix_error(rec, "a1", action[1]);
  for (const SubsetError& s : avg_errors) rec.add("avg_err_max_" + s.name, s.max);
  return rec;
}

ErrorReport error_report(const Matrix& m_hat, const Matrix& m_true, const std::array<Matrix, 2>& a_hats,
                         const std::array<Matrix, 2>& a_trues, const std::vector<NamedSubset>& subsets) {
  const Index n = m_true.rows();
  const Index m = m_true.cols();
  auto same = [n, m](const Matrix& x) { return x.rows() == n && x.cols() == m; };
  require(n > 0 && m > 0, "error report needs non-empty matrices");
  require(same(m_hat) && same(a_hats[0]) && same(a_hats[1]) && same(a_trues[0]) && same(a_trues[1]),
          "error report inputs differ in shape");

  ErrorReport out;
  const Matrix diff = m_hat - m_true;
  out.effect = matrix_error(diff);
  for (std::size_t k = 0; k < 2; ++k) out.action[k] = matrix_error(a_hats[k] - a_trues[k]);
  out.row_errors = diff.rowwise().norm();

  for (const NamedSubset& s : subsets) {
    if (s.columns.empty()) throw ValidationError("subset '" + s.name + "' is empty");
    for (Index j : s.columns) require(j >= 0 && j < m, "subset '" + s.name + "' has a column outside [0, m)");
    SubsetError e{s.name, s.columns.size(), Vector::Zero(n), 0.0};
    const double size = static_cast<double>(s.columns.size());
    for (Index i = 0; i < n; ++i) {
      double hat = 0.0;
      double truth = 0.0;
      for (Index j : s.columns) {
        hat += m_hat(i, j);
        truth += m_true(i, j);
      }
      e.per_unit(i) = std::abs(hat / size - truth / size);
    }
    e.max = e.per_unit.maxCoeff();
    out.avg_errors.push_back(std::move(e));
  }
  return out;
}

double bound_theorem_main(double k, double r, double mu, double r_p, double q, double p_op_norm, Index n, Index m) {
  require_positive(k, "k");
  require_positive(r, "r");
  require_positive(mu, "mu");
  require_positive(r_p, "r_p");
  require_positive(q, "q");
  require_nonnegative(p_op_norm, "p_op_norm");
  require_dims(n, m);
  const double nn = static_cast<double>(n);
  const double mm = static_cast<double>(m);
  const double l = log_nm(n, m);
  const double bracket = std::sqrt(r_p / (mm * q) + r_p / (nn * q)) + p_op_norm / std::sqrt(mm * nn);
  return k * std::pow(r, 1.5) * mu * std::sqrt(mm + nn) * std::pow(l, 4) * bracket;
}

double bound_lemma_er(double k, double r_p, double q, Index n, Index m) {
  require_nonnegative(k, "k");
  require_positive(r_p, "r_p");
  require_positive(q, "q");
  require_dims(n, m);
  const double total = static_cast<double>(n + m);
  return 12.0 * k * std::sqrt(log_nm(n, m)) * std::sqrt(r_p * total / q);
}

namespace {

double perturb_prefactor(double r, double k, double delta_s, double sigma_s, Index n, Index m) {
  require_positive(r, "r");
  require_nonnegative(k, "k");
  require_nonnegative(sigma_s, "sigma_s");
  if (!(delta_s > 0.0)) throw ValidationError("delta_s must be positive");
  require_dims(n, m);
  const double l = log_nm(n, m);
  const double total = static_cast<double>(n + m);
  return std::sqrt(r) * (l * l + k * std::pow(l, 4) / std::sqrt(total)) * std::sqrt(total) * sigma_s / delta_s;
}

}  // namespace

double bound_theorem_perturb(double r, double k, double sigma, double e0_op, double sigma_s, double delta_s,
                             double mu, Index n, Index m) {
  const double pre = perturb_prefactor(r, k, delta_s, sigma_s, n, m);
  require_nonnegative(sigma, "sigma");
  require_nonnegative(e0_op, "e0_op");
  require_positive(mu, "mu");
  const double spread = mu / std::sqrt(static_cast<double>(m)) + mu / std::sqrt(static_cast<double>(n));
  return pre * spread * (sigma + e0_op);
}

double bound_theorem_perturb_refined(double r, double k, double sigma, double e0_op, double x0, double sigma_s,
                                     double delta_s, double mu, Index n, Index m) {
  const double pre = perturb_prefactor(r, k, delta_s, sigma_s, n, m);
  require_nonnegative(sigma, "sigma");
  require_nonnegative(e0_op, "e0_op");
  require_nonnegative(x0, "x0");
  require_positive(mu, "mu");
  const double nn = static_cast<double>(n);
  const double mm = static_cast<double>(m);
  const double bracket = mu * (1.0 / std::sqrt(mm) + 1.0 / std::sqrt(nn)) * (x0 + sigma) + e0_op / std::sqrt(mm + nn);
  return pre * bracket;
}

bool perturb_gap_condition(double delta_s, double er_op, double e0_op) {
  return delta_s >= 6.0 * (er_op + e0_op);
}

double x0_statistic(const Matrix& e0, const SvdResult& a_svd, Index r) {
  require(r >= 1 && r <= a_svd.size(), "x0 rank outside the decomposition");
  require(e0.rows() == a_svd.left.rows() && e0.cols() == a_svd.right.rows(), "x0 shapes disagree");
  const Matrix inner = a_svd.left.leftCols(r).transpose() * e0 * a_svd.right.leftCols(r);
  return inner.cwiseAbs().maxCoeff();
}

EDecomposition e_decomposition(const ObservedPanel& obs, const PanelInstance& instance, Action a) {
  const PanelDesign& design = instance.design;
  require(obs.n_units() == design.n_units() && obs.n_times() == design.n_times(),
          "observed panel and instance differ in shape");
  const Matrix& signal = instance.signal.of(a).values();
  const Matrix e0 = deviation_matrix(design.propensity(), a).cwiseProduct(signal);
  const Vector pbar = row_mean_propensity(design.propensity(), a);
  Matrix scaled = action_mask(obs.assignments(), a).cwiseProduct(obs.y_obs().values());
  for (Index i = 0; i < scaled.rows(); ++i) scaled.row(i) /= pbar(i);
  Matrix e_r = scaled - signal - e0;
  return {DenseMatrix(e0), DenseMatrix(std::move(e_r))};
}

NoiseParameters er_noise_parameters(const PanelInstance& instance, Action a) {
  const Matrix pa = action_propensity(instance.design.propensity(), a);
  const Vector pbar = row_mean_propensity(instance.design.propensity(), a);
  const Matrix& signal = instance.signal.of(a).values();
  const double k_e = instance.noise.k_e;
  const double v = instance.noise.variance();
  NoiseParameters out;
  double var = 0.0;
  for (Index i = 0; i < pa.rows(); ++i)
    for (Index j = 0; j < pa.cols(); ++j) {
      const double p = pa(i, j);
      const double x = std::abs(signal(i, j));
      // D = 1: ((1 - p) A + E) / pbar; D = 0: -p A / pbar.
      out.k = std::max(out.k, std::max((1.0 - p) * x + k_e, p * x) / pbar(i));
      var = std::max(var, (p * (1.0 - p) * x * x + p * v) / (pbar(i) * pbar(i)));
    }
  out.sigma = std::sqrt(var);
  return out;
}

double propensity_estimation_gap(const DenseMatrix& assignments, const PanelDesign& design) {
  require(assignments.rows() == design.n_units() && assignments.cols() == design.n_times(),
          "assignments and design differ in shape");
  double gap = 0.0;
  for (Action a : kActions)
    gap = std::max(gap, (empirical_row_propensity(assignments, a) - row_mean_propensity(design.propensity(), a))
                            .cwiseAbs()
                            .maxCoeff());
  return gap;
}

}  // namespace panelsvd
