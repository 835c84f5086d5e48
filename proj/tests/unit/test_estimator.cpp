#include <doctest.h>

#include <cmath>
#include <limits>

#include "panelsvd/diagnostics.hpp"
#include "panelsvd/errors.hpp"
#include "panelsvd/estimator.hpp"
#include "panelsvd/oracle.hpp"
#include "panelsvd/panel.hpp"
#include "test_util.hpp"

using namespace panelsvd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct World {
  PanelDesign design;
  PanelInstance instance;
  ObservedPanel observed;
};

World make_world(Index n, Index m, Index r, double k_e, const DesignSpec& ds, std::uint64_t seed) {
  auto design = build_design(n, m, ds, seed);
  SignalSpec ss;
  ss.n = n;
  ss.m = m;
  ss.rank = r;
  const auto signal = generate_signal(ss, seed + 1);
  const auto noise = generate_noise(n, m, k_e, NoiseLaw::uniform_symmetric, seed + 2);
  auto [inst, obs] = realize(design, signal, noise, seed + 3);
  return {design, inst, obs};
}

EstimatorConfig oracle_config(Index cap, double tau0, double tau1) {
  EstimatorConfig c;
  c.rank_cap = cap;
  c.threshold = OracleThresholds{tau0, tau1};
  return c;
}

}  // namespace

TEST_CASE("empirical_row_propensity examples") {
  const auto d = DenseMatrix::from_rows({{1, 0, 1, 0}, {0, 0, 0, 0}});
  const Vector t = empirical_row_propensity(d, Action::treated);
  CHECK(t(0) == 0.5);
  CHECK(t(1) == 0.25);
  const Vector c = empirical_row_propensity(d, Action::control);
  CHECK(c(0) == 0.5);
  CHECK(c(1) == 1.0);
}

TEST_CASE("row_scaled_matrix examples") {
  const ObservedPanel obs(DenseMatrix::from_rows({{2, 9, 4, 9}, {1, 2, 3, 4}}),
                          DenseMatrix::from_rows({{1, 0, 1, 0}, {1, 1, 1, 1}}));
  const auto s = row_scaled_matrix(obs, Action::treated);
  CHECK(s.values().row(0) == (Eigen::RowVectorXd(4) << 4, 0, 8, 0).finished());
  CHECK(s.values().row(1) == obs.y_obs().values().row(1));
  const auto c = row_scaled_matrix(obs, Action::control);
  CHECK(c.values().row(0) == (Eigen::RowVectorXd(4) << 0, 18, 0, 18).finished());
  CHECK(c.values().row(1).isZero(0.0));
}

TEST_CASE("select_rank examples") {
  const Vector s = (Vector(4) << 10, 1, 0.5, 0.1).finished();
  CHECK(select_rank(s, 3, 5.0) == 1);
  CHECK(select_rank(s, 3, 0.3) == 3);
  CHECK(select_rank(s, 3, 20.0) == 0);
  CHECK(select_rank(s, 2, 0.3) == 2);
  CHECK(select_rank(s, 3, kInf) == 0);
}

TEST_CASE("noiseless rank-1 recovery with an oracle threshold") {
  DesignSpec ds;
  for (Index n : {64, 160}) {
    const auto w = make_world(n, n, 1, 0.0, ds, 10);
    const double planted0 = w.instance.signal.singular_values_0(0);
    const double planted1 = w.instance.signal.singular_values_1(0);
    const auto est = estimate(w.observed, oracle_config(2, 0.5 * planted0, 0.5 * planted1));
    for (Action a : kActions) {
      const auto& ae = est.of(a);
      CHECK(ae.selected_rank == 1);
      CHECK(ae.singular_values.size() == 3);
      CHECK(ae.gaps.size() == 2);
      // Independent recomputation: scale by hand, truncate with the Jacobi oracle.
      const Matrix da = action_mask(w.observed.assignments(), a);
      Matrix scaled = da.cwiseProduct(w.observed.y_obs().values());
      for (Index i = 0; i < n; ++i) scaled.row(i) /= std::max(da.row(i).mean(), 1.0 / double(n));
      const auto ref = oracle::oracle_best_rank_s(DenseMatrix(scaled), 1);
      CHECK((ae.a_hat.values() - ref.values()).norm() <= 1e-9 * ref.values().norm());
      // Masking noise at n = 64 leaves a relative error near 0.3; 0.2 is reached from n of about 140.
      const Matrix& truth = w.instance.signal.of(a).values();
      CHECK((ae.a_hat.values() - truth).norm() / truth.norm() <= (n == 64 ? 0.4 : 0.2));
    }
  }
}

TEST_CASE("fully observed arm is not rescaled") {
  DesignSpec ds;
  const auto w = make_world(12, 15, 2, 0.0, ds, 20);
  const ObservedPanel all_on(w.instance.y1, DenseMatrix(Matrix::Ones(12, 15)));
  const auto est = estimate(all_on, oracle_config(3, 0.0, 1e-6));
  const auto& t = est.of(Action::treated);
  CHECK((t.row_propensity_hat.array() == 1.0).all());
  const auto ref = best_rank_s(w.instance.y1, t.selected_rank);
  CHECK((t.a_hat.values() - ref.values()).norm() <= 1e-10 * ref.values().norm());
  CHECK(t.selected_rank == 2);
}

TEST_CASE("infinite thresholds select nothing") {
  DesignSpec ds;
  const auto w = make_world(20, 30, 2, 0.5, ds, 30);
  const auto est = estimate(w.observed, oracle_config(2, kInf, kInf));
  CHECK(est.of(Action::control).selected_rank == 0);
  CHECK(est.of(Action::treated).selected_rank == 0);
  CHECK(est.m_hat.values().isZero(0.0));
}

TEST_CASE("configuration errors") {
  DesignSpec ds;
  const auto w = make_world(10, 12, 2, 0.5, ds, 40);
  EstimatorConfig pc;
  pc.rank_cap = 2;
  pc.threshold = PaperConstantThresholds{};
  CHECK_THROWS_AS((void)estimate(w.observed, pc), ConfigError);
  CHECK_NOTHROW((void)estimate(w.observed, pc, &w.design));
  CHECK_THROWS_AS((void)estimate(w.observed, oracle_config(10, 1, 1)), ValidationError);
  CHECK_THROWS_AS((void)estimate(w.observed, oracle_config(0, 1, 1)), ValidationError);
  CHECK_THROWS_AS((void)estimate(w.observed, oracle_config(2, -1, 1)), ConfigError);
}

TEST_CASE("action symmetry negates M_hat exactly") {
  DesignSpec ds;
  ds.family = DesignFamily::nonuniform;
  ds.nu = 0.3;
  const auto w = make_world(40, 90, 2, 0.5, ds, 50);
  for (int method = 0; method < 2; ++method) {
    auto cfg = oracle_config(2, 2.0, 3.0);
    cfg.svd.method = method == 0 ? TruncatedMethod::lanczos : TruncatedMethod::randomized;
    cfg.svd.dense_cutoff = 8;
    const auto est = estimate(w.observed, cfg);
    const ObservedPanel swapped(w.observed.y_obs(), DenseMatrix(Matrix(1.0 - w.observed.assignments().values().array())));
    auto swapped_cfg = oracle_config(2, 3.0, 2.0);
    swapped_cfg.svd = cfg.svd;
    const auto flip = estimate(swapped, swapped_cfg);
    CHECK(flip.m_hat.values() == Matrix(-est.m_hat.values()));
    CHECK(flip.of(Action::control).selected_rank == est.of(Action::treated).selected_rank);
  }
}

TEST_CASE("scaling outcomes scales the estimate") {
  DesignSpec ds;
  const auto w = make_world(30, 45, 2, 0.5, ds, 60);
  const double c = 3.0;
  const auto base = estimate(w.observed, oracle_config(2, 1.0, 1.5));
  const ObservedPanel scaled_obs(DenseMatrix(Matrix(c * w.observed.y_obs().values())), w.observed.assignments());
  const auto scaled = estimate(scaled_obs, oracle_config(2, c * 1.0, c * 1.5));
  for (Action a : kActions) {
    CHECK(scaled.of(a).selected_rank == base.of(a).selected_rank);
    const Matrix& x = base.of(a).a_hat.values();
    CHECK((scaled.of(a).a_hat.values() - c * x).norm() <= 1e-10 * std::max(1.0, c * x.norm()));
    CHECK((scaled.of(a).singular_values - c * base.of(a).singular_values).norm() <=
          1e-10 * c * base.of(a).singular_values(0));
  }
  CHECK((scaled.m_hat.values() - c * base.m_hat.values()).norm() <= 1e-10 * std::max(1.0, c * base.m_hat.values().norm()));
}

TEST_CASE("selected rank and truncation are consistent") {
  DesignSpec ds;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto w = make_world(25, 40, 3, 0.5, ds, 100 + 10 * seed);
    EstimatorConfig cfg;
    cfg.rank_cap = 4;
    const auto est = estimate(w.observed, cfg);
    for (Action a : kActions) {
      const auto& ae = est.of(a);
      CHECK(ae.selected_rank <= 4);
      REQUIRE(ae.scaled.has_value());
      const auto ref = best_rank_s(*ae.scaled, ae.selected_rank);
      CHECK((ae.a_hat.values() - ref.values()).norm() <= 1e-10 * std::max(1.0, ref.values().norm()));
      const Matrix da = action_mask(w.observed.assignments(), a);
      if ((da.rowwise().sum().array() > 0).all())
        CHECK((ae.row_propensity_hat - da.rowwise().mean()).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("ipw and row scaling coincide when every row frequency is one half") {
  const Index n = 6, m = 8;
  Matrix d(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) d(i, j) = (i + j) % 2;
  const auto y = testutil::random_matrix(n, m, 5);
  const ObservedPanel obs(y, DenseMatrix(d));
  const DenseMatrix p(Matrix::Constant(n, m, 0.5));
  for (Action a : kActions) CHECK(row_scaled_matrix(obs, a) == ipw_scaled_matrix(obs, p, a));
  const auto ipw = ipw_oracle_estimate(obs, p, 2, {0.1, 0.1});
  const auto rs = estimate(obs, oracle_config(2, 0.1, 0.1));
  CHECK((ipw.m_hat.values() - rs.m_hat.values()).norm() <= 1e-12);
}

TEST_CASE("ipw near the propensity floor stays finite") {
  Matrix p = Matrix::Constant(5, 6, 0.5);
  p(0, 0) = kPropensityFloor;
  p(3, 4) = 1.0 - kPropensityFloor;
  const auto y = testutil::random_matrix(5, 6, 9);
  Matrix d = Matrix::Zero(5, 6);
  d(0, 0) = 1;
  d(2, 2) = 1;
  const ObservedPanel obs(y, DenseMatrix(d));
  const auto s = ipw_scaled_matrix(obs, DenseMatrix(p), Action::treated);
  CHECK(s(0, 0) == doctest::Approx(y(0, 0) / kPropensityFloor));
  const auto c = ipw_scaled_matrix(obs, DenseMatrix(p), Action::control);
  CHECK(c(3, 4) == doctest::Approx(y(3, 4) / kPropensityFloor));
  CHECK(std::isfinite(ipw_oracle_estimate(obs, DenseMatrix(p), 1, {0.0, 0.0}).m_hat.values().norm()));
}

TEST_CASE("plug-in rule threshold is a multiple of the trailing value") {
  DesignSpec ds;
  const auto w = make_world(30, 40, 2, 0.5, ds, 70);
  EstimatorConfig cfg;
  cfg.rank_cap = 2;
  cfg.threshold = PlugInThresholds{3.0};
  const auto est = estimate(w.observed, cfg);
  for (Action a : kActions) CHECK(est.of(a).tau == 3.0 * est.of(a).singular_values(2));
}

TEST_CASE("paper-constant gap set is nonempty on compliant instances") {
  int nonempty = 0;
  const int seeds = 40;
  for (int seed = 0; seed < seeds; ++seed) {
    DesignSpec ds;
    const auto w = make_world(100, 100, 2, 1.0, ds, 1000 + 7 * seed);
    EstimatorConfig cfg;
    cfg.rank_cap = 2;
    cfg.threshold = PaperConstantThresholds{0.005, 2.0};
    const auto est = estimate(w.observed, cfg, &w.design);
    if (est.of(Action::control).selected_rank > 0 && est.of(Action::treated).selected_rank > 0) ++nonempty;
  }
  CHECK(nonempty >= 0.95 * seeds);
}
