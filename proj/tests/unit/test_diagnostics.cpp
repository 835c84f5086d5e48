#include <doctest.h>

#include <cmath>

#include "panelsvd/diagnostics.hpp"
#include "panelsvd/errors.hpp"
#include "panelsvd/panel.hpp"
#include "test_util.hpp"

using namespace panelsvd;

namespace {

DenseMatrix constant_design_matrix(Index n, Index m, double c) { return DenseMatrix(Matrix::Constant(n, m, c)); }

PanelInstance small_instance(const DesignSpec& ds, Index n, Index m, double k_e, std::uint64_t seed) {
  const auto design = build_design(n, m, ds, seed);
  SignalSpec ss;
  ss.n = n;
  ss.m = m;
  ss.rank = 2;
  const auto signal = generate_signal(ss, seed + 1);
  const auto noise = generate_noise(n, m, k_e, NoiseLaw::uniform_symmetric, seed + 2);
  return realize(design, signal, noise, seed + 3).first;
}

}  // namespace

TEST_CASE("design_params of a constant design") {
  for (double c : {0.2, 0.5, 0.9}) {
    const PanelDesign d(constant_design_matrix(30, 50, c), DesignFamily::constant);
    const auto p = design_params(d);
    const double qmin = std::min(c, 1.0 - c);
    CHECK(p.q == doctest::Approx(qmin));
    CHECK(p.r_p == 1.0);
    CHECK(p.p_op_norm[0] == 0.0);
    CHECK(p.p_op_norm[1] == 0.0);
    const double t = std::sqrt(80.0 / qmin * std::log(80.0));
    CHECK(p.t[0] == doctest::Approx(t));
    CHECK(p.t[1] == doctest::Approx(t));
  }
}

TEST_CASE("design_params q is attained and bounds every row mean") {
  DesignSpec ds;
  ds.family = DesignFamily::nonuniform;
  ds.nu = 0.4;
  const auto d = build_design(40, 60, ds, 3);
  const auto p = design_params(d);
  double attained = 1.0;
  for (Action a : kActions) {
    const Vector pbar = row_mean_propensity(d.propensity(), a);
    CHECK(pbar.minCoeff() >= p.q);
    attained = std::min(attained, pbar.minCoeff());
    const Matrix ratio = (p.p_matrix[index_of(a)].array() + 1.0).matrix();
    CHECK(ratio.maxCoeff() <= p.r_p + 1e-15);
  }
  CHECK(attained == p.q);
  CHECK(p.r_p > 1.0);

  DesignSpec rh;
  rh.family = DesignFamily::row_homogeneous;
  const auto prh = design_params(build_design(20, 30, rh, 4));
  CHECK(prh.r_p == 1.0);
  CHECK(prh.p_matrix[0].isZero(0.0));
  CHECK(prh.p_matrix[1].isZero(0.0));
}

TEST_CASE("plug-in design params") {
  const auto d = DenseMatrix::from_rows({{1, 0, 1, 0}, {1, 1, 1, 0}});
  const auto p = design_params_plug_in(d);
  CHECK(p.plug_in);
  CHECK(p.r_p == 1.0);
  CHECK(p.q == doctest::Approx(0.25));
}

TEST_CASE("incoherence examples") {
  Matrix e = Matrix::Zero(4, 4);
  e(0, 0) = 3.0;
  const auto c = incoherence(DenseMatrix(e), 1);
  CHECK(c.mu_row == doctest::Approx(2.0));
  CHECK(c.mu_col == doctest::Approx(2.0));
  CHECK_FALSE(c.rank_warning);

  const auto spread = incoherence(DenseMatrix(Matrix::Ones(5, 7)), 1);
  CHECK(spread.mu == doctest::Approx(1.0));

  const auto low = incoherence(DenseMatrix(e), 3);
  CHECK(low.rank_warning);
  CHECK(low.rank_used == 1);
}

TEST_CASE("subset presets") {
  CHECK(subset_preset("all", 4).columns == std::vector<Index>{0, 1, 2, 3});
  CHECK(subset_preset("first-half", 5).columns == std::vector<Index>{0, 1});
  CHECK(subset_preset("even-indices", 5).columns == std::vector<Index>{0, 2, 4});
  const auto r = subset_preset("random-half", 10, 7);
  CHECK(r.columns.size() == 5);
  CHECK(std::is_sorted(r.columns.begin(), r.columns.end()));
  CHECK(r.columns == subset_preset("random-half", 10, 7).columns);
  CHECK_THROWS_AS((void)subset_preset("weekends", 10), ValidationError);
}

TEST_CASE("error_report examples") {
  const Index n = 3, m = 4;
  const Matrix truth = testutil::random_matrix(n, m, 1).values();
  const std::array<Matrix, 2> a{truth, truth};
  std::vector<NamedSubset> subsets{subset_preset("all", m), subset_preset("even-indices", m)};
  const auto zero = error_report(truth, truth, a, a, subsets);
  CHECK(zero.effect.two_infty_raw == 0.0);
  CHECK(zero.effect.operator_norm == 0.0);
  CHECK(zero.avg_errors[0].max == 0.0);

  Matrix bumped = truth;
  bumped(0, 0) += 3;
  bumped(0, 1) += 4;
  const auto rep = error_report(bumped, truth, a, a, subsets);
  CHECK(rep.effect.two_infty_raw == doctest::Approx(5.0));
  CHECK(rep.effect.two_infty_normalized == doctest::Approx(2.5));
  CHECK(rep.row_errors(0) == doctest::Approx(5.0));
  CHECK(rep.row_errors(1) == 0.0);
  CHECK(rep.avg_errors[0].per_unit(0) == doctest::Approx(7.0 / 4.0));
  CHECK(rep.avg_errors[1].per_unit(0) == doctest::Approx(3.0 / 2.0));

  std::vector<NamedSubset> empty{{"none", {}}};
  CHECK_THROWS_AS((void)error_report(bumped, truth, a, a, empty), ValidationError);
  std::vector<NamedSubset> outside{{"bad", {9}}};
  CHECK_THROWS_AS((void)error_report(bumped, truth, a, a, outside), ValidationError);

  const auto flat = rep.flatten();
  CHECK(flat.get("m_two_infty_raw").value() == doctest::Approx(5.0));
  CHECK(flat.get("avg_err_max_all").has_value());
  CHECK_FALSE(flat.get("nope").has_value());
}

TEST_CASE("Cauchy-Schwarz and norm bridges on random reports") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Index n = 3 + seed % 5, m = 4 + seed % 9;
    const Matrix truth = testutil::random_matrix(n, m, 10 + seed).values();
    const Matrix hat = truth + testutil::random_matrix(n, m, 100 + seed, 0.1 * (1 + seed % 4)).values();
    const std::array<Matrix, 2> a{truth, hat};
    std::vector<NamedSubset> subsets;
    for (const char* name : {"all", "first-half", "even-indices", "random-half"})
      subsets.push_back(subset_preset(name, m, seed));
    const auto rep = error_report(hat, truth, a, a, subsets);
    for (const auto& s : rep.avg_errors) {
      const double cap = std::sqrt(1.0 / double(s.size)) * rep.effect.two_infty_raw;
      for (Index i = 0; i < n; ++i) {
        CHECK(s.per_unit(i) <= cap + 1e-12);
        CHECK(s.per_unit(i) <= std::sqrt(1.0 / double(s.size)) * rep.row_errors(i) + 1e-12);
      }
    }
    CHECK(rep.effect.frobenius_normalized <= rep.effect.two_infty_normalized + 1e-15);
  }
}

TEST_CASE("bound evaluator arithmetic") {
  const double l = std::log(200.0);
  const double main = std::sqrt(200.0) * std::pow(l, 4) * std::sqrt(2.0 / 100.0);
  CHECK(bound_theorem_main(1, 1, 1, 1, 1, 0, 100, 100) == doctest::Approx(main).epsilon(1e-12));
  CHECK(bound_theorem_main(1, 1, 1, 1, 1, 0, 100, 100) == doctest::Approx(1576.0).epsilon(1e-4));
  CHECK(bound_theorem_main(2, 1, 1, 1, 1, 0, 100, 100) == doctest::Approx(2 * main));
  CHECK(bound_theorem_main(1, 1, 1, 1, 1, 0, 50, 200) == doctest::Approx(bound_theorem_main(1, 1, 1, 1, 1, 0, 200, 50)));

  CHECK(bound_lemma_er(1, 1, 0.5, 100, 100) == doctest::Approx(12.0 * std::sqrt(l) * 20.0).epsilon(1e-12));
  CHECK(bound_lemma_er(1, 1, 0.5, 100, 100) == doctest::Approx(552.43).epsilon(1e-4));
  CHECK(bound_lemma_er(1, 1, 0.25, 100, 100) == doctest::Approx(std::sqrt(2.0) * bound_lemma_er(1, 1, 0.5, 100, 100)));
  CHECK(bound_lemma_er(0, 1, 0.5, 100, 100) == 0.0);

  const double perturb = (l * l + std::pow(l, 4) / std::sqrt(200.0)) * 0.2 * std::sqrt(200.0);
  CHECK(bound_theorem_perturb(1, 1, 1, 0, 1, 1, 1, 100, 100) == doctest::Approx(perturb).epsilon(1e-12));
  CHECK(bound_theorem_perturb(1, 1, 1, 0, 1, 1, 1, 100, 100) == doctest::Approx(236.8).epsilon(1e-3));
  CHECK(bound_theorem_perturb(1, 1, 3, 0, 2, 2, 1, 100, 100) == doctest::Approx(3 * perturb));
  CHECK_THROWS_AS((void)bound_theorem_perturb(1, 1, 1, 0, 1, 0, 1, 100, 100), ValidationError);
  CHECK_THROWS_AS((void)bound_theorem_perturb(1, 1, 1, 0, 1, -1, 1, 100, 100), ValidationError);

  // The refined bracket coincides with the plain one when X0 = E0 = 0.
  CHECK(bound_theorem_perturb_refined(2, 1, 0.7, 0, 0, 3, 1.5, 1.3, 80, 120) ==
        doctest::Approx(bound_theorem_perturb(2, 1, 0.7, 0, 3, 1.5, 1.3, 80, 120)));
  CHECK(perturb_gap_condition(6.0, 0.5, 0.5));
  CHECK_FALSE(perturb_gap_condition(5.9, 0.5, 0.5));
}

TEST_CASE("bound evaluators are monotone in each argument") {
  const double h = 1.1;
  const double base_main = bound_theorem_main(2, 2, 1.5, 1.2, 0.4, 3, 100, 200);
  CHECK(bound_theorem_main(2 * h, 2, 1.5, 1.2, 0.4, 3, 100, 200) > base_main);
  CHECK(bound_theorem_main(2, 2 * h, 1.5, 1.2, 0.4, 3, 100, 200) > base_main);
  CHECK(bound_theorem_main(2, 2, 1.5 * h, 1.2, 0.4, 3, 100, 200) > base_main);
  CHECK(bound_theorem_main(2, 2, 1.5, 1.2 * h, 0.4, 3, 100, 200) > base_main);
  CHECK(bound_theorem_main(2, 2, 1.5, 1.2, 0.4 * h, 3, 100, 200) < base_main);
  CHECK(bound_theorem_main(2, 2, 1.5, 1.2, 0.4, 3 * h, 100, 200) > base_main);

  const double base_er = bound_lemma_er(2, 1.2, 0.4, 100, 200);
  CHECK(bound_lemma_er(2 * h, 1.2, 0.4, 100, 200) > base_er);
  CHECK(bound_lemma_er(2, 1.2 * h, 0.4, 100, 200) > base_er);
  CHECK(bound_lemma_er(2, 1.2, 0.4 * h, 100, 200) < base_er);

  const double bp = bound_theorem_perturb(2, 1, 0.5, 0.2, 10, 4, 1.5, 100, 200);
  CHECK(bound_theorem_perturb(2 * h, 1, 0.5, 0.2, 10, 4, 1.5, 100, 200) > bp);
  CHECK(bound_theorem_perturb(2, 1 * h, 0.5, 0.2, 10, 4, 1.5, 100, 200) > bp);
  CHECK(bound_theorem_perturb(2, 1, 0.5 * h, 0.2, 10, 4, 1.5, 100, 200) > bp);
  CHECK(bound_theorem_perturb(2, 1, 0.5, 0.2 * h, 10, 4, 1.5, 100, 200) > bp);
  CHECK(bound_theorem_perturb(2, 1, 0.5, 0.2, 10, 4 * h, 1.5, 100, 200) < bp);
  CHECK(bound_theorem_perturb(2, 1, 0.5, 0.2, 10, 4, 1.5 * h, 100, 200) > bp);
}

TEST_CASE("e_decomposition structure") {
  DesignSpec rh;
  rh.family = DesignFamily::row_homogeneous;
  const auto inst = small_instance(rh, 20, 30, 0.5, 1);
  const auto obs = ObservedPanel::from_instance(inst);
  for (Action a : kActions) {
    const auto dec = e_decomposition(obs, inst, a);
    CHECK(dec.e0.values().isZero(0.0));
  }

  DesignSpec nu;
  nu.family = DesignFamily::nonuniform;
  nu.nu = 0.5;
  nu.law = PerturbationLaw::two_point;
  nu.epsilon = 0.02;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto w = small_instance(nu, 40, 80, 0.5, 10 + seed);
    const auto o = ObservedPanel::from_instance(w);
    const auto params = design_params(w.design);
    for (Action a : kActions) {
      const auto dec = e_decomposition(o, w, a);
      const double k_a = norm(w.signal.of(a), NormKind::entry_max);
      CHECK(norm(dec.e0, NormKind::operator_norm) <= k_a * params.p_op_norm[index_of(a)] + 1e-9);
      Matrix scaled = action_mask(o.assignments(), a).cwiseProduct(o.y_obs().values());
      const Vector pbar = row_mean_propensity(w.design.propensity(), a);
      for (Index i = 0; i < scaled.rows(); ++i) scaled.row(i) /= pbar(i);
      CHECK((w.signal.of(a).values() + dec.e0.values() + dec.e_r.values() - scaled).cwiseAbs().maxCoeff() <= 1e-12);
      const auto np = er_noise_parameters(w, a);
      CHECK(dec.e_r.values().cwiseAbs().maxCoeff() <= np.k + 1e-12);
    }
  }
}

TEST_CASE("e_r is mean zero over assignment redraws") {
  DesignSpec nu;
  nu.family = DesignFamily::nonuniform;
  nu.nu = 0.5;
  nu.law = PerturbationLaw::two_point;
  nu.epsilon = 0.02;
  const auto base = small_instance(nu, 6, 10, 0.0, 3);
  const int draws = 4000;
  Matrix sum = Matrix::Zero(6, 10), sq = Matrix::Zero(6, 10);
  for (int t = 0; t < draws; ++t) {
    PanelInstance inst = base;
    inst.assignments = draw_assignments(base.design, 1000 + t);
    const auto dec = e_decomposition(ObservedPanel::from_instance(inst), inst, Action::treated);
    sum += dec.e_r.values();
    sq += dec.e_r.values().cwiseAbs2();
  }
  const Matrix mean = sum / draws;
  const Matrix se = ((sq / draws - mean.cwiseAbs2()) / draws).cwiseSqrt();
  int outside = 0;
  for (Index i = 0; i < mean.size(); ++i)
    if (std::abs(mean.data()[i]) > 4.0 * se.data()[i]) ++outside;
  CHECK(outside <= 1);
}

TEST_CASE("propensity estimation gap") {
  const PanelDesign d(constant_design_matrix(2, 4, 0.5), DesignFamily::constant);
  CHECK(propensity_estimation_gap(DenseMatrix::from_rows({{1, 0, 1, 0}, {1, 1, 1, 1}}), d) == doctest::Approx(0.5));
}

TEST_CASE("flat record rejects duplicates and keeps order") {
  FlatRecord r;
  r.add("b", 1);
  r.add("a", 2);
  CHECK(r.keys() == std::vector<std::string>{"b", "a"});
  CHECK_THROWS((void)r.add("a", 3));
  FlatRecord outer;
  outer.append("x_", r);
  CHECK(outer.keys() == std::vector<std::string>{"x_b", "x_a"});
}
