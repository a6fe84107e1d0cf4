#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "conjugation_oracle.hpp"
#include "kam/diophantine.hpp"
#include "kam/errors.hpp"
#include "kam/kam_step.hpp"
#include "kam/poisson.hpp"
#include "random_series.hpp"

namespace {

using namespace kam;

const int k10[] = {1, 0};
const int k00[] = {0, 0};

NormalForm golden_form(int K) {
  NormalForm N;
  N.omega = extend_certificate(
      FrequencyVector{quadratic_irrational_frequency(2), 0.25, 1.2, 0, {}, 0.0}, K);
  return N;
}

// Practical parameters: the K formula, h at its upper limit.
StepParams params_for(const NormalForm& N, const Series& P, double eta, double r, double s) {
  StepParams p;
  p.eta = eta;
  p.sigma = s / 20.0;
  p.r = r;
  p.s = s;
  p.K = static_cast<long long>(std::ceil(std::log(2.0 / (eta * eta)) / p.sigma));
  p.h = N.omega.alpha / (2.0 * std::pow(static_cast<double>(p.K), N.omega.nu()));
  p.epsilon = weighted_norm(P, r, s);
  return p;
}

double norm1(const Series& f) { return weighted_norm(f, 1.0, 1.0); }

// ------------------------------------------------------------- truncation

TEST(RussmannTruncate, AdmissibleInputUnchanged) {
  const Series P = Series::cosine(2, k10, 1e-6) + 1e-6 * Series::action(2, 1);
  StepParams p;
  p.eta = 0.1;
  p.sigma = 0.05;
  p.r = 0.1;
  p.s = 1.0;
  p.epsilon = weighted_norm(P, p.r, p.s);
  const Approximation a = russmann_truncate(P, p);
  EXPECT_EQ(a.error, 0.0);
  EXPECT_EQ(weighted_distance(a.approximation, P, {1, 1}), 0.0);
  EXPECT_EQ(a.K_used, a.K_formula);
  EXPECT_TRUE(a.formula_sufficed);
}

TEST(RussmannTruncate, QuadraticActionIsTaylorTail) {
  const double eps = 1e-6, r = 0.2, eta = 0.1;
  const int m20[] = {2, 0};
  const Series P = Series::monomial(2, k00, m20, eps / (r * r));
  StepParams p;
  p.eta = eta;
  p.sigma = 0.05;
  p.r = r;
  p.s = 1.0;
  p.epsilon = eps;
  const Approximation a = russmann_truncate(P, p);
  EXPECT_TRUE(a.approximation.empty());
  EXPECT_NEAR(a.error, 4 * eta * eta * eps, 1e-20);
  EXPECT_LE(a.error, 8 * eta * eta * eps);
  EXPECT_NEAR(a.taylor_error, a.error, 1e-22);
}

TEST(RussmannTruncate, ModeJustAboveFormulaCutoff) {
  const double eta = 0.1, sigma = 0.05, s = 1.0;
  const long long K = static_cast<long long>(std::ceil(std::log(2.0 / (eta * eta)) / sigma));
  const int k[] = {static_cast<int>(K), 1};
  const double eps = 1e-6;
  const Series P = Series::cosine(2, k, eps * std::exp(-(K + 1) * s));
  StepParams p;
  p.eta = eta;
  p.sigma = sigma;
  p.r = 1.0;
  p.s = s;
  p.epsilon = weighted_norm(P, 1.0, s);
  ASSERT_NEAR(p.epsilon, eps, 1e-20);
  const Approximation a = russmann_truncate(P, p);
  EXPECT_EQ(a.K_formula, K);
  EXPECT_TRUE(a.formula_sufficed);
  EXPECT_TRUE(a.approximation.empty());
  EXPECT_NEAR(a.error / eps, std::exp(-(K + 1) * sigma), 1e-15);
  EXPECT_LE(a.error, 8 * eta * eta * eps);
}

TEST(RussmannTruncate, AdaptiveDoublingMeetsBudget) {
  std::mt19937_64 rng(30);
  for (int t = 0; t < 20; ++t) {
    const Series P = test::random_series(rng, 2, 400, 1, 30, 4, 1e-6);
    StepParams p;
    p.eta = 0.1;
    p.sigma = 0.01;
    p.r = 0.1;
    p.s = 0.2;
    p.epsilon = weighted_norm(P, p.r, p.s);
    const Approximation a = russmann_truncate(P, p);
    EXPECT_LE(a.error, a.budget);
    EXPECT_EQ(a.formula_sufficed, a.K_used == a.K_formula);
  }
}

// ------------------------------------------------------------- homological

TEST(SolveHomological, AverageGivesZero) {
  const Series R = Series::constant(2, 2.0) + Series::action(2, 0);
  EXPECT_TRUE(solve_homological(R, golden_form(10)).empty());
}

TEST(SolveHomological, CosineToSine) {
  const Series F = solve_homological(Series::cosine(2, k10, 1.0), golden_form(10));
  EXPECT_LE(norm1(F - Series::sine(2, k10, 1.0)), 1e-16);
}

TEST(SolveHomological, ActionFactorCarried) {
  const int m01[] = {0, 1};
  const Series F =
      solve_homological(Series::cosine(2, k10, 1.0, m01), golden_form(10));
  EXPECT_LE(norm1(F - Series::sine(2, k10, 1.0, m01)), 1e-16);
}

TEST(SolveHomological, ResidualOnRandomInputs) {
  std::mt19937_64 rng(31);
  const NormalForm N = golden_form(30);
  for (int t = 0; t < 50; ++t) {
    const Series R = test::random_series(rng, 2, 30, 1, 8);
    const Series F = solve_homological(R, N);
    const Series res = poisson_bracket(F, N.as_series()) - (R - angle_average(R));
    EXPECT_LE(weighted_norm(res, 0.5, 0.3), 1e-12 * weighted_norm(R, 0.5, 0.3));
  }
}

TEST(SolveHomological, OutsideCertificateRejected) {
  const int k[] = {20, -12};
  EXPECT_THROW(solve_homological(Series::cosine(2, k, 1.0), golden_form(10)),
               CertificationError);
}

// ------------------------------------------------------- frequency correction

Series average_with(const Jet& e, const std::vector<Jet>& v) {
  std::vector<Series::Term> t{{MultiIndex{}, e}};
  for (std::size_t j = 0; j < v.size(); ++j) {
    MultiIndex key;
    key.m[j] = 1;
    t.emplace_back(key, v[j]);
  }
  return Series::from_terms(2, std::move(t));
}

TEST(FrequencyCorrection, ZeroDriftShiftsEnergyOnly) {
  const NormalForm N = golden_form(10);
  const FrequencyCorrection fc = frequency_correction(Series::constant(2, 0.5), N, 1e-3);
  EXPECT_EQ(fc.shift.displacement(), 0.0);
  EXPECT_EQ(fc.shift.jacobian_defect(), 0.0);
  EXPECT_EQ(fc.next.energy.value, Complex(0.5));
  EXPECT_EQ(fc.next.omega.omega, N.omega.omega);
}

TEST(FrequencyCorrection, ConstantDriftIsNegated) {
  const std::vector<Jet> v{Jet(1e-5), Jet(-2e-5)};
  const FrequencyCorrection fc = frequency_correction(average_with(Jet(), v), golden_form(10), 1e-3);
  EXPECT_DOUBLE_EQ(fc.shift.delta[0], -1e-5);
  EXPECT_DOUBLE_EQ(fc.shift.delta[1], 2e-5);
}

TEST(FrequencyCorrection, AffineDriftClosedForm) {
  Eigen::Matrix2d A;
  A << 0.02, -0.01, 0.03, 0.015;
  const Eigen::Vector2d b(3e-5, -1e-5);
  std::vector<Jet> v(2);
  for (int j = 0; j < 2; ++j) {
    v[j] = Jet(b(j));
    for (int l = 0; l < 2; ++l) v[j].d[l] = A(j, l);
  }
  const FrequencyCorrection fc = frequency_correction(average_with(Jet(), v), golden_form(10), 1e-3);
  const Eigen::Matrix2d inv = (Eigen::Matrix2d::Identity() + A).inverse();
  const Eigen::Vector2d delta = -inv * b;
  for (int j = 0; j < 2; ++j) {
    EXPECT_NEAR(fc.shift.delta[j], delta(j), 1e-12 * delta.norm());
    for (int l = 0; l < 2; ++l) EXPECT_NEAR(fc.shift.jacobian[j * 2 + l], inv(j, l), 1e-12);
  }
}

TEST(FrequencyCorrection, DriftBeyondDomainIsThreshold) {
  const std::vector<Jet> v{Jet(1e-2), Jet(0.0)};
  EXPECT_THROW(frequency_correction(average_with(Jet(), v), golden_form(10), 1e-3), ThresholdError);
}

// ----------------------------------------------------------------- kam_step

TEST(KamStep, ZeroPerturbation) {
  const NormalForm N = golden_form(200);
  const Series P(2);
  const StepParams p = params_for(N, Series::cosine(2, k10, 1e-9), 0.1, 1e-3, 1.0);
  const StepResult r = kam_step(N, P, p);
  EXPECT_TRUE(r.P_next.empty());
  EXPECT_TRUE(r.transform.F.empty());
  EXPECT_EQ(r.transform.shift.displacement(), 0.0);
  EXPECT_EQ(r.report.eps_out, 0.0);
}

TEST(KamStep, CosineIsRemovedExactly) {
  const double eps = 1e-8;
  const Series P = Series::cosine(2, k10, eps);
  const double eta = 0.1 * std::pow(4.0, -2.2);
  NormalForm N = golden_form(10);
  StepParams p = params_for(N, P, eta, 1e-3, 1.0);
  N.omega = extend_certificate(N.omega, static_cast<int>(p.K));
  const StepResult r = kam_step(N, P, p);
  EXPECT_LE(weighted_norm(r.P_next, 1.0, 1.0), 1e-14 * eps);
  EXPECT_LE(norm1(r.transform.F - Series::sine(2, k10, eps)), 1e-22);
  EXPECT_EQ(r.transform.shift.displacement(), 0.0);
  EXPECT_EQ(r.next.omega.omega, N.omega.omega);
  EXPECT_EQ(r.next.energy.value, Complex(0.0));
}

TEST(KamStep, ContractionWhenCompliant) {
  const double eps = 1e-14;
  const int m10[] = {1, 0};
  const Series P = Series::cosine(2, k10, eps, m10) + Series::cosine(2, std::vector<int>{1, 1}, eps);
  NormalForm N = golden_form(10);
  StepParams p = params_for(N, P, 0.1, 1e-3, 1.0);
  N.omega = extend_certificate(N.omega, static_cast<int>(p.K));
  const StepResult r = kam_step(N, P, p);
  ASSERT_TRUE(r.report.compliant);
  EXPECT_LE(r.report.eps_out, 0.09 * r.report.eps_in);
}

TEST(KamStep, MatchesNumericalComposition) {
  const double eps = 1e-6, r = 1e-2, eta = 0.1;
  const int m10[] = {1, 0};
  const Series P = Series::cosine(2, k10, eps / (r * std::exp(1.0)), m10);
  NormalForm N = golden_form(10);
  StepParams p = params_for(N, P, eta, r, 1.0);
  N.omega = extend_certificate(N.omega, static_cast<int>(p.K));
  StepOptions opt;
  opt.lie_tol_rel = 1e-20;
  const StepResult step = kam_step(N, P, p, opt);
  const double I0[] = {eta * r / 2, -eta * r / 4};
  const auto chk = test::conjugation_defect(N, P, std::nullopt, step.next, step.P_next,
                                            step.transform.shift, I0, 16);
  EXPECT_LE(chk.defect, 1e-8 * eps) << "scale " << chk.scale;
}

TEST(KamStep, GaussLegendreAgreesWithSeriesIntegral) {
  std::mt19937_64 rng(32);
  NormalForm N = golden_form(10);
  const Series P = test::random_series(rng, 2, 6, 1, 6, 4, 1e-7);
  StepParams p = params_for(N, P, 0.1, 1e-2, 1.0);
  N.omega = extend_certificate(N.omega, static_cast<int>(p.K));
  const Weights w{p.eta * p.r, p.s - 5 * p.sigma};
  StepOptions series_opt, gl_opt;
  gl_opt.integral = IntegralMethod::gauss_legendre;
  {
    // Default pruning: the two routes differ by at most their recorded tails.
    const StepResult a = kam_step(N, P, p, series_opt);
    const StepResult b = kam_step(N, P, p, gl_opt);
    EXPECT_LE(weighted_distance(a.P_next, b.P_next, w),
              a.P_next.tail_estimate() + b.P_next.tail_estimate());
  }
  series_opt.prune_rel = gl_opt.prune_rel = 0.0;
  series_opt.lie_tol_rel = gl_opt.lie_tol_rel = 1e-22;
  const StepResult a = kam_step(N, P, p, series_opt);
  const StepResult b = kam_step(N, P, p, gl_opt);
  EXPECT_LE(weighted_distance(a.P_next, b.P_next, w), 1e-12 * weighted_norm(a.P_next, w));
}

TEST(KamStep, RejectsEtaAboveOneEighth) {
  const NormalForm N = golden_form(10);
  const Series P = Series::cosine(2, k10, 1e-9);
  StepParams p = params_for(N, P, 0.1, 1e-3, 1.0);
  p.eta = 0.2;
  EXPECT_THROW(kam_step(N, P, p), DomainError);
}

TEST(KamStep, StrictModeNamesViolatedCondition) {
  NormalForm N = golden_form(10);
  const Series P = Series::cosine(2, k10, 1e-2);
  StepParams p = params_for(N, P, 0.1, 1e-3, 1.0);
  N.omega = extend_certificate(N.omega, static_cast<int>(p.K));
  StepOptions opt;
  opt.strict = true;
  try {
    kam_step(N, P, p, opt);
    FAIL() << "expected ThresholdError";
  } catch (const ThresholdError& e) {
    EXPECT_EQ(e.inequality(), "eps <. alpha eta^2 r sigma^nu");
  }
}

// ---------------------------------------------------------------- kam_step_q

TEST(KamStepQ, QuadraticQBracket) {
  const double eps = 1e-9, r = 1e-3;
  const int m20[] = {2, 0};
  const Series Q = Series::monomial(2, k00, m20, 0.5);
  const Series P = Series::cosine(2, k10, eps);
  NormalForm N = golden_form(10);
  StepParams p = params_for(N, P, 0.1, r, 1.0);
  N.omega = extend_certificate(N.omega, static_cast<int>(p.K));
  const StepResultQ out = kam_step_q(N, P, Q, 1.0, p);
  EXPECT_LE(norm1(out.transform.F - Series::sine(2, k10, eps)), 1e-22);
  // {Q, F} = -I1 eps cos theta1, whose norm at (r, s) is r eps e^s.
  ASSERT_TRUE(out.report.bracket_q_norm.has_value());
  EXPECT_NEAR(*out.report.bracket_q_norm, r * eps * std::exp(1.0), 1e-12 * r * eps);
  EXPECT_LE(*out.report.bracket_q_norm, *out.report.bracket_q_bound);
}

TEST(KamStepQ, ZeroQMatchesPlainStep) {
  std::mt19937_64 rng(33);
  NormalForm N = golden_form(10);
  const Series P = test::random_series(rng, 2, 6, 1, 6, 4, 1e-9);
  StepParams p = params_for(N, P, 0.1, 1e-2, 1.0);
  N.omega = extend_certificate(N.omega, static_cast<int>(p.K));
  const StepResult a = kam_step(N, P, p);
  const StepResultQ b = kam_step_q(N, P, Series(2), 1.0, p);
  EXPECT_EQ(weighted_distance(a.P_next, b.P_next, {1, 1}), 0.0);
  EXPECT_EQ(a.report.eps_out, b.report.eps_out);
  EXPECT_TRUE(b.Q.empty());
}

TEST(KamStepQ, IdentityOnGridAndQUntouched) {
  std::mt19937_64 rng(34);
  const double r = 1e-2, eta = 0.1;
  const int m20[] = {2, 0}, m11[] = {1, 1}, m02[] = {0, 2};
  const Series Q = Series::monomial(2, k00, m20, 0.5) + Series::monomial(2, k00, m11, 0.25) +
                   Series::monomial(2, k00, m02, 1.0);
  for (int t = 0; t < 3; ++t) {
    Series P = test::random_angle_series(rng, 2, 4, 4, 1e-8);
    NormalForm N = golden_form(10);
    StepParams p = params_for(N, P, eta, r, 1.0);
    N.omega = extend_certificate(N.omega, static_cast<int>(p.K));
    StepOptions opt;
    opt.lie_tol_rel = 1e-20;
    const StepResultQ out = kam_step_q(N, P, Q, 2.0, p, opt);
    ASSERT_EQ(out.Q.size(), Q.size());
    for (std::size_t i = 0; i < Q.size(); ++i) {
      EXPECT_EQ(out.Q.terms()[i].first, Q.terms()[i].first);
      EXPECT_EQ(out.Q.terms()[i].second.value, Q.terms()[i].second.value);
    }
    const double I0[] = {eta * r / 2, eta * r / 3};
    const auto chk = test::conjugation_defect(N, P, Q, out.next, out.P_next,
                                              out.transform.shift, I0, 16);
    EXPECT_LE(chk.defect, 1e-8 * p.epsilon) << "instance " << t;
  }
}

TEST(GaussLegendre, IntegratesPolynomialsExactly) {
  const auto [x, w] = gauss_legendre_unit(8);
  for (int d = 0; d <= 15; ++d) {
    double sum = 0.0;
    for (std::size_t q = 0; q < x.size(); ++q) sum += w[q] * std::pow(x[q], d);
    EXPECT_NEAR(sum, 1.0 / (d + 1), 1e-15);
  }
}

}  // namespace
