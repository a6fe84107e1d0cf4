#include <gtest/gtest.h>

#include <cmath>
#include <variant>

#include "kam/diophantine.hpp"
#include "kam/errors.hpp"

namespace {

using namespace kam;

const double kGolden = (1 + std::sqrt(5.0)) / 2;

TEST(SmallDivisor, UnitVector) {
  const int k[] = {1, 0};
  const double w[] = {1.0, kGolden};
  EXPECT_DOUBLE_EQ(small_divisor(k, w), 1.0);
}

TEST(SmallDivisor, Difference) {
  const int k[] = {1, -1};
  const double w[] = {1.0, kGolden};
  EXPECT_NEAR(small_divisor(k, w), 0.6180339887498949, 1e-15);
}

TEST(SmallDivisor, ZeroVectorRejected) {
  const int k[] = {0, 0};
  const double w[] = {1.0, kGolden};
  EXPECT_THROW(small_divisor(k, w), DomainError);
}

TEST(Certify, ResonanceFoundOnShellFive) {
  const std::vector<double> w{1.0, 1.5};
  for (int K = 1; K <= 8; ++K) {
    const CertifyResult r = certify(w, 1e-6, 1.0, K);
    if (K < 5) {
      EXPECT_TRUE(std::holds_alternative<FrequencyVector>(r)) << "K = " << K;
    } else {
      const auto* ce = std::get_if<Counterexample>(&r);
      ASSERT_NE(ce, nullptr) << "K = " << K;
      EXPECT_EQ(ce->k, (std::vector<int>{3, -2}));
      EXPECT_EQ(ce->divisor, 0.0);
    }
  }
}

TEST(Certify, GoldenRatioToTwoHundred) {
  const CertifyResult r = certify(std::vector<double>{1.0, kGolden}, 0.25, 1.2, 200);
  const auto* f = std::get_if<FrequencyVector>(&r);
  ASSERT_NE(f, nullptr);
  EXPECT_EQ(f->K_verified, 200);
  EXPECT_GE(f->worst_margin, 1.0);
  EXPECT_DOUBLE_EQ(f->nu(), 2.2);
}

TEST(Certify, OneDimensionalIntegerFrequency) {
  const CertifyResult r = certify(std::vector<double>{1.0}, 1.0, 0.0, 10);
  const auto* f = std::get_if<FrequencyVector>(&r);
  ASSERT_NE(f, nullptr);
  EXPECT_DOUBLE_EQ(f->worst_margin, 1.0);
}

TEST(MaxAlpha, ExactResonanceGivesZero) {
  EXPECT_EQ(max_alpha(std::vector<double>{1.0, 2.0}, 1.0, 10), 0.0);
  EXPECT_EQ(max_alpha(std::vector<double>{1.0, 2.0}, 2.5, 10), 0.0);
}

TEST(MaxAlpha, GoldenPositiveAndMonotone) {
  const std::vector<double> w{1.0, kGolden};
  const double a100 = max_alpha(w, 1.0, 100);
  const double a200 = max_alpha(w, 1.0, 200);
  EXPECT_GT(a100, 0.0);
  EXPECT_LE(a200, a100);
}

TEST(MaxAlpha, BruteForceAgreement) {
  const std::vector<double> w{1.0, std::sqrt(2.0), std::sqrt(3.0)};
  const int K = 12;
  double brute = INFINITY;
  for (int a = -K; a <= K; ++a)
    for (int b = -K; b <= K; ++b)
      for (int c = -K; c <= K; ++c) {
        const int l1 = std::abs(a) + std::abs(b) + std::abs(c);
        if (l1 == 0 || l1 > K) continue;
        const double d = std::abs(a * w[0] + b * w[1] + c * w[2]);
        brute = std::min(brute, d * std::pow(l1, 1.5));
      }
  EXPECT_NEAR(max_alpha(w, 1.5, K), brute, 1e-14 * brute);
}

TEST(Fixture, Dimensions) {
  EXPECT_EQ(quadratic_irrational_frequency(1), std::vector<double>{1.0});
  EXPECT_EQ(quadratic_irrational_frequency(2), (std::vector<double>{1.0, kGolden}));
  EXPECT_EQ(quadratic_irrational_frequency(3),
            (std::vector<double>{1.0, std::sqrt(2.0), std::sqrt(3.0)}));
}

TEST(Fixture, CertifiesBelowMaxAlpha) {
  for (int n = 2; n <= 3; ++n) {
    const auto w = quadratic_irrational_frequency(n);
    const int K = n == 2 ? 200 : 60;
    const double a = max_alpha(w, 1.2, K);
    EXPECT_TRUE(std::holds_alternative<FrequencyVector>(certify(w, 0.99 * a, 1.2, K)));
  }
}

TEST(ExtendCertificate, IncrementalMatchesFullScan) {
  const auto w = quadratic_irrational_frequency(2);
  FrequencyVector f = std::get<FrequencyVector>(certify(w, 0.25, 1.2, 10));
  f = extend_certificate(f, 40);
  f = extend_certificate(f, 120);
  const FrequencyVector full = std::get<FrequencyVector>(certify(w, 0.25, 1.2, 120));
  EXPECT_EQ(f.K_verified, 120);
  EXPECT_EQ(f.worst_k, full.worst_k);
  EXPECT_DOUBLE_EQ(f.worst_margin, full.worst_margin);
}

TEST(ExtendCertificate, ThrowsOnViolation) {
  FrequencyVector f = std::get<FrequencyVector>(certify(std::vector<double>{1.0, 1.5}, 0.1, 1.0, 4));
  EXPECT_THROW(extend_certificate(f, 6), CertificationError);
}

TEST(ShellRepresentatives, HalfSpaceCount) {
  // |k|_1 = d in two dimensions has 4d points, half of them representatives.
  for (int d = 1; d <= 6; ++d) EXPECT_EQ(shell_representatives(2, d).size(), 2u * d);
}

TEST(CertificateJson, RoundTrip) {
  const FrequencyVector f =
      std::get<FrequencyVector>(certify(quadratic_irrational_frequency(2), 0.25, 1.2, 30));
  const FrequencyVector g = certificate_from_json(certificate_to_json(f));
  EXPECT_EQ(g.omega, f.omega);
  EXPECT_EQ(g.K_verified, f.K_verified);
  EXPECT_EQ(g.worst_k, f.worst_k);
  EXPECT_EQ(g.worst_margin, f.worst_margin);
}

}  // namespace
