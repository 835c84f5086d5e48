#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "panelsvd/linalg.hpp"
#include "panelsvd/panel.hpp"

namespace panelsvd {

/// Ordered flat key/value record; keys are unique within a record.
class FlatRecord {
 public:
  void add(const std::string& key, double value);
  void append(const std::string& prefix, const FlatRecord& other);
  [[nodiscard]] const std::vector<std::string>& keys() const noexcept { return keys_; }
  [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }
  [[nodiscard]] std::optional<double> get(const std::string& key) const;
  [[nodiscard]] std::size_t size() const noexcept { return keys_.size(); }

 private:
  std::vector<std::string> keys_;
  std::vector<double> values_;
};

/// T(a) = sqrt((m + r_p n) / q * log(m + n)) + ||P(a)||_op
[[nodiscard]] double t_param(Index n, Index m, double q, double r_p, double p_op_norm);

struct DesignParams {
  Index n = 0;
  Index m = 0;
  double q = 0.0;
  double r_p = 1.0;
  std::array<Vector, 2> p_bar;        // indexed by action
  std::array<Matrix, 2> p_matrix;     // P(a)
  std::array<double, 2> p_op_norm{};  // ||P(a)||_op
  std::array<double, 2> t{};          // T(a)
  bool plug_in = false;               // built from observed row frequencies

  [[nodiscard]] FlatRecord flatten() const;
};

[[nodiscard]] DesignParams design_params(const PanelDesign& design);
/// Data-driven variant: the propensity of every entry is replaced by its
/// observed row frequency (floored at 1/m), so r_p = 1 and P(a) = 0.
[[nodiscard]] DesignParams design_params_plug_in(const DenseMatrix& assignments);

struct Incoherence {
  double mu_row = 0.0;
  double mu_col = 0.0;
  double mu = 0.0;
  Index rank_used = 0;
  bool rank_warning = false;  // requested r exceeded the numerical rank
};

/// mu_R = sqrt(n) max_i ||U_i||, mu_C = sqrt(m) max_j ||V_j|| over the leading
/// r singular vectors; components below 1e-9 sigma_1 are dropped with a warning.
[[nodiscard]] Incoherence incoherence(const DenseMatrix& a, Index r, const SvdParams& params = {});

struct NamedSubset {
  std::string name;
  std::vector<Index> columns;
};

/// "all", "first-half", "even-indices" (0-based even columns), "random-half"
/// (seeded draw of floor(m/2) columns, sorted).
[[nodiscard]] NamedSubset subset_preset(const std::string& name, Index m, std::uint64_t seed = 0);

struct MatrixError {
  double two_infty_raw = 0.0;
  double two_infty_normalized = 0.0;  // / sqrt(m)
  double frobenius_normalized = 0.0;  // / sqrt(n m)
  double operator_norm = 0.0;
  double entry_max = 0.0;
};

struct SubsetError {
  std::string name;
  std::size_t size = 0;
  Vector per_unit;  // |Avg_hat_i(S) - Avg_i(S)|
  double max = 0.0;
};

struct ErrorReport {
  MatrixError effect;                 // M_hat - M
  std::array<MatrixError, 2> action;  // A_hat(a) - A(a)
  Vector row_errors;                  // per-unit rows of M_hat - M
  std::vector<SubsetError> avg_errors;

  [[nodiscard]] FlatRecord flatten() const;
};

[[nodiscard]] MatrixError matrix_error(const Matrix& diff);
[[nodiscard]] ErrorReport error_report(const Matrix& m_hat, const Matrix& m_true, const std::array<Matrix, 2>& a_hats,
                                       const std::array<Matrix, 2>& a_trues, const std::vector<NamedSubset>& subsets);

// Bound evaluators, unit leading constants, natural logarithm.
[[nodiscard]] double bound_theorem_main(double k, double r, double mu, double r_p, double q, double p_op_norm, Index n,
                                        Index m);
[[nodiscard]] double bound_lemma_er(double k, double r_p, double q, Index n, Index m);
[[nodiscard]] double bound_theorem_perturb(double r, double k, double sigma, double e0_op, double sigma_s,
                                           double delta_s, double mu, Index n, Index m);
/// Variant with the bracket [mu (1/sqrt m + 1/sqrt n)(X0 + sigma) + ||E0||_op / sqrt(m + n)].
[[nodiscard]] double bound_theorem_perturb_refined(double r, double k, double sigma, double e0_op, double x0,
                                                   double sigma_s, double delta_s, double mu, Index n, Index m);
/// delta_s >= 6 (||E_R||_op + ||E_0||_op)
[[nodiscard]] bool perturb_gap_condition(double delta_s, double er_op, double e0_op);

/// X0 = max_{i,j <= r} |u_i^T E0 v_j| for the leading r singular vectors of A.
[[nodiscard]] double x0_statistic(const Matrix& e0, const SvdResult& a_svd, Index r);

struct EDecomposition {
  DenseMatrix e0;   // (p_ij(a)/pbar_i(a) - 1) A_ij(a)
  DenseMatrix e_r;  // D(a) Y^obs / pbar_i(a) - A(a) - e0
};

[[nodiscard]] EDecomposition e_decomposition(const ObservedPanel& obs, const PanelInstance& instance, Action a);

/// Bernstein parameters of E_R(a) computed entrywise from the instance:
/// k bounds |E_R,ij|, sigma^2 bounds its variance.
struct NoiseParameters {
  double k = 0.0;
  double sigma = 0.0;
};
[[nodiscard]] NoiseParameters er_noise_parameters(const PanelInstance& instance, Action a);

/// max over actions and units of |phat_i(a) - pbar_i(a)|
[[nodiscard]] double propensity_estimation_gap(const DenseMatrix& assignments, const PanelDesign& design);

}  // namespace panelsvd
