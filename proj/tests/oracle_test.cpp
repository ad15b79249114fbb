#include <gtest/gtest.h>

#include <numeric>

#include "fedtan/diag/oracle.hpp"
#include "fedtan/diag/verify.hpp"
#include "support/oracles.hpp"

using namespace fedtan;
using namespace fedtan::diag;

TEST(CentralizedStep, ZeroLearningRateKeepsWeights) {
  const auto c = random_case(3);
  const auto next = centralized_step(c.spec, c.params, c.batch, 0.0);
  EXPECT_EQ(next.flatten(nn::kGradientParams), c.params.flatten(nn::kGradientParams));
}

TEST(CentralizedStep, SmallStepsDecreaseTheLoss) {
  const auto s = disjoint_setup(2);
  const auto batch = full_batch(s.data);
  auto p = nn::ModelParams::init(s.spec, 2);
  double prev = evaluate_union(s.spec, p, s.data).loss;
  for (int t = 0; t < 20; ++t) {
    p = centralized_step(s.spec, p, batch, 1e-3);
    const double now = evaluate_union(s.spec, p, s.data).loss;
    EXPECT_LT(now, prev) << "step " << t;
    prev = now;
  }
}

TEST(Deviation, IdenticalShardsHaveNoStatisticalDeviation) {
  const auto s = disjoint_setup(3);
  data::PartitionSpec same;
  std::vector<Index> all(static_cast<std::size_t>(s.data.size()));
  std::iota(all.begin(), all.end(), Index{0});
  same.client_indices.assign(3, all);
  same.assign_weights();
  const auto w = nn::ModelParams::init(s.spec, 5);
  const auto rep = estimate_deviation(s.spec, w, same, s.data);
  for (double b : rep.b) EXPECT_LT(b, 1e-20);
  for (double v : rep.v) EXPECT_LT(v, 1e-20);
}

TEST(Deviation, DisjointShardsDeviate) {
  const auto s = disjoint_setup(3);
  const auto w = nn::ModelParams::init(s.spec, 5);
  const auto rep = estimate_deviation(s.spec, w, s.partition, s.data);
  for (double b : rep.b) EXPECT_GT(b, 1e-8);
  for (double v : rep.v) EXPECT_GT(v, 1e-8);
}

TEST(Deviation, NoBatchNormMeansNoStatisticalDeviation) {
  const auto s = disjoint_setup(3, false);
  const auto w = nn::ModelParams::init(s.spec, 5);
  for (double b : estimate_deviation(s.spec, w, s.partition, s.data).b) EXPECT_EQ(b, 0.0);
}

TEST(Deviation, LocalGradientsAverageAwayFromTheCentralOne) {
  const auto s = disjoint_setup(2);
  const auto w = nn::ModelParams::init(s.spec, 6);
  const auto shards = s.partition.materialize(s.data);
  Vector avg = Vector::Zero(w.scalar_count(nn::kGradientParams));
  for (std::size_t i = 0; i < shards.size(); ++i) avg += s.partition.weights[i] * local_gradient(s.spec, w, shards[i]);
  const Vector central = evaluate_union(s.spec, w, s.data).gradient;
  EXPECT_GT((avg - central).norm(), 1e-3);
  // With the union's statistics and statistical gradients injected the average is exact.
  const auto whole = evaluate_union(s.spec, w, s.data);
  Vector injected = Vector::Zero(avg.size());
  for (std::size_t i = 0; i < shards.size(); ++i)
    injected += s.partition.weights[i] * injected_gradient(s.spec, w, shards[i], whole.stats, whole.stat_grads);
  EXPECT_LT((injected - central).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Equivalence, SchemeAgainstItselfIsExact) {
  const auto s = disjoint_setup(2);
  const auto c = full_batch_config(fl::Scheme::FedAvgBN, 2);
  for (double d : check_equivalence(s.spec, c, c, s.partition, s.data, 5)) EXPECT_EQ(d, 0.0);
}

TEST(Equivalence, FedTanTracksCentralized) {
  const auto s = disjoint_setup(2);
  const auto diff = check_equivalence(s.spec, full_batch_config(fl::Scheme::FedTAN),
                                      full_batch_config(fl::Scheme::Centralized), s.partition, s.data, 20);
  for (double d : diff) EXPECT_LT(d, 1e-10);
  const auto avg = check_equivalence(s.spec, full_batch_config(fl::Scheme::FedAvgBN),
                                     full_batch_config(fl::Scheme::Centralized), s.partition, s.data, 5);
  EXPECT_GT(*std::max_element(avg.begin(), avg.end()), 1e-3);
}

TEST(Equivalence, RejectsMismatchedSeeds) {
  const auto s = disjoint_setup(2);
  auto a = full_batch_config(fl::Scheme::FedTAN);
  auto b = a;
  b.seed = a.seed + 1;
  EXPECT_THROW(check_equivalence(s.spec, a, b, s.partition, s.data, 1), std::invalid_argument);
}

TEST(FiniteDifference, LinearQuadraticIsExact) {
  const auto s = nn::NetworkSpec::mlp(3, {}, 2, false);
  const auto p = nn::ModelParams::init(s, 1);
  const fl::Batch b{oracle::random_matrix(5, 3, 2), {0, 1, 1, 0, 1}};
  EXPECT_LT(finite_difference_check(s, p, b, 1e-4, FdTarget::Weights, FdLoss::Quadratic).max_error, 1e-9);
}

TEST(FiniteDifference, RandomNetworks) {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const auto c = random_case(seed);
    EXPECT_LT(finite_difference_check(c.spec, c.params, c.batch, 1e-5, FdTarget::Weights).max_error, 1e-4);
  }
}

TEST(FiniteDifference, OversizedStepIsDetected) {
  const auto c = random_case(4);
  EXPECT_GT(finite_difference_check(c.spec, c.params, c.batch, 1.0, FdTarget::Stats).max_error, 1e-3);
}

// Frozen statistics make the loss smooth enough that every gap falls under the absolute
// floor at the default step; a coarse step shows the comparison is live.
TEST(FiniteDifference, FrozenTargetIsNotVacuous) {
  const auto c = random_case(6);
  const auto fine = finite_difference_check(c.spec, c.params, c.batch, 1e-5, FdTarget::FrozenStats);
  EXPECT_EQ(fine.checked, c.params.scalar_count(nn::kGradientParams));
  EXPECT_LT(fine.max_error, 1e-4);
  EXPECT_GT(finite_difference_check(c.spec, c.params, c.batch, 1.0, FdTarget::FrozenStats).max_error, 1e-3);
}

TEST(FiniteDifference, RejectsNonPositiveStep) {
  const auto c = random_case(4);
  EXPECT_THROW(finite_difference_check(c.spec, c.params, c.batch, 0.0, FdTarget::Weights), std::invalid_argument);
}

TEST(Checks, OfflineCriteriaPass) {
  EXPECT_TRUE(check_gradients(10).passed);
  EXPECT_TRUE(check_aggregation(10).passed);
  EXPECT_TRUE(check_necessity().passed);
  EXPECT_TRUE(check_accounting().passed);
  EXPECT_TRUE(check_moving_average().passed);
}
