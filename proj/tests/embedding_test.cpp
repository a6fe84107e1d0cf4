#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "kam/embedding.hpp"
#include "kam/schedule.hpp"
#include "random_series.hpp"

namespace {

using namespace kam;

const int k10[] = {1, 0};

FrequencyVector golden_certified() {
  return extend_certificate(
      FrequencyVector{quadratic_irrational_frequency(2), 0.25, 1.2, 0, {}, 0.0}, 10);
}

KamTransform transform_of(Series F) {
  KamTransform t;
  t.F = std::move(F);
  t.shift = ParameterShift::identity(2);
  t.sigma = 0.05;
  t.eta = 0.1;
  t.r = 1e-3;
  t.s = 1.0;
  return t;
}

TEST(ComposeEmbedding, NoTransformsIsTrivialTorus) {
  const std::vector<KamTransform> none;
  const auto w = golden_certified();
  const Embedding e = compose_embedding(none, w.omega, 8);
  ASSERT_EQ(e.u.size(), 2u);
  for (int j = 0; j < 2; ++j) {
    EXPECT_TRUE(e.u[j].empty());
    EXPECT_TRUE(e.v[j].empty());
  }
}

TEST(ComposeEmbedding, SingleSineGenerator) {
  const double eps = 1e-7;
  const std::vector<KamTransform> ts{transform_of(Series::sine(2, k10, eps))};
  const auto w = golden_certified();
  const Embedding e = compose_embedding(ts, w.omega, 16);
  const Weights flat{1.0, 1e-9};
  EXPECT_LE(weighted_distance(e.v[0], Series::cosine(2, k10, -eps), flat), 1e-12 * eps);
  EXPECT_LE(weighted_norm(e.v[1], flat), 1e-12 * eps);
  for (const auto& u : e.u) EXPECT_LE(weighted_norm(u, flat), 1e-12 * eps);
}

TEST(ComposeEmbedding, GridAgreesWithLieSeries) {
  std::mt19937_64 rng(40);
  std::vector<KamTransform> ts;
  ts.push_back(transform_of(test::random_angle_series(rng, 2, 3, 3, 1e-6) +
                            1e-6 * multiply(Series::action(2, 0), Series::cosine(2, k10, 1.0))));
  ts.push_back(transform_of(test::random_angle_series(rng, 2, 5, 3, 1e-9)));
  const auto w = golden_certified();
  const Embedding grid = compose_embedding(ts, w.omega, 32);
  const Embedding series = compose_embedding_series(ts, w.omega);
  double scale = 0.0;
  for (int j = 0; j < 2; ++j) {
    scale = std::max({scale, weighted_norm(series.u[j], {1, 0.5}), weighted_norm(series.v[j], {1, 0.5})});
  }
  ASSERT_GT(scale, 0.0);
  EXPECT_LE(embedding_distance(grid, series, 0.5), 1e-8 * scale);
}

TEST(ComposeEmbedding, GridBelowFourTimesDegreeRejected) {
  const int k3[] = {3, 0};
  const std::vector<KamTransform> ts{transform_of(Series::sine(2, k3, 1e-3))};
  EXPECT_THROW(compose_embedding(ts, golden_certified().omega, 8), DomainError);
  EXPECT_NO_THROW(compose_embedding(ts, golden_certified().omega, 16));
}

TEST(DefaultGrid, PowerOfTwoAtLeastFourTimesDegree) {
  const int k5[] = {5, 2};
  const std::vector<Series> gens{Series::sine(2, k5, 1.0)};
  EXPECT_EQ(default_grid_size(gens), 32);
  EXPECT_EQ(default_grid_size(std::vector<Series>{}), 8);
}

TEST(ParameterChain, IdentityShiftsKeepAnchor) {
  const std::vector<KamTransform> ts{transform_of(Series(2)), transform_of(Series(2))};
  const auto w = golden_certified();
  const ParameterChain c = parameter_chain(ts, w.omega);
  ASSERT_EQ(c.values.size(), 3u);
  for (const auto& v : c.values) EXPECT_EQ(v, w.omega);
  EXPECT_EQ(c.phi_jacobian(), (std::vector<double>{1, 0, 0, 1}));
}

TEST(ParameterChain, ComposesAffineShifts) {
  KamTransform a = transform_of(Series(2)), b = transform_of(Series(2));
  a.shift.delta = {1e-3, 0.0};
  b.shift.delta = {0.0, 2e-3};
  b.shift.jacobian = {2.0, 0.0, 0.0, 1.0};
  const std::vector<KamTransform> ts{a, b};
  const std::vector<double> anchor{1.0, 1.5};
  const ParameterChain c = parameter_chain(ts, anchor);
  // values[1] = anchor + delta_b; values[0] = values[1] + delta_a.
  EXPECT_DOUBLE_EQ(c.values[1][1], 1.5 + 2e-3);
  EXPECT_DOUBLE_EQ(c.values[0][0], 1.0 + 1e-3);
  EXPECT_DOUBLE_EQ(c.values[0][1], 1.5 + 2e-3);
  EXPECT_DOUBLE_EQ(c.phi_jacobian()[0], 2.0);
}

TEST(VerifyInvariance, TrivialTorus) {
  const auto w = golden_certified();
  NormalForm N;
  N.omega = w;
  const std::vector<KamTransform> none;
  const Embedding e = compose_embedding(none, w.omega, 8);
  EXPECT_LE(verify_invariance(e, N.as_series(), w.omega, w.omega, w.omega, 32), 1e-14);
}

TEST(VerifyInvariance, OneStepExactTorus) {
  const double eps = 1e-7;
  const auto w = golden_certified();
  NormalForm N;
  N.omega = w;
  const Series H = N.as_series() + Series::cosine(2, k10, eps);
  const std::vector<KamTransform> ts{transform_of(Series::sine(2, k10, eps))};
  const Embedding e = compose_embedding(ts, w.omega, 16);
  EXPECT_LE(verify_invariance(e, H, w.omega, w.omega, w.omega, 32), 1e-12 * eps);
}

TEST(WorkerCount, BoundedByTasksAndEnvironment) {
  EXPECT_EQ(worker_count(1), 1);
  EXPECT_GE(worker_count(100), 1);
}

}  // namespace
