#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "acd/estimators.hpp"
#include "support.hpp"

namespace acd {
namespace {

using testing::graph_from;

DataSplit random_split(int n_train, int n_est, int d, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> z;
  Eigen::MatrixXd tr(n_train, d);
  Eigen::MatrixXd es(n_est, d);
  for (int r = 0; r < n_train; ++r) {
    for (int c = 0; c < d; ++c) tr(r, c) = z(rng) + 0.7 * (c > 0 ? tr(r, c - 1) : 0.0);
  }
  for (int r = 0; r < n_est; ++r) {
    for (int c = 0; c < d; ++c) es(r, c) = z(rng) + 0.7 * (c > 0 ? es(r, c - 1) : 0.0);
  }
  return DataSplit{Dataset(tr), Dataset(es), 0.5};
}

TEST(Conjugate, MatchesQuadratureOracleOnTinyInstances) {
  const NigPrior prior;
  for (int inst = 0; inst < 12; ++inst) {
    const int n_train = 2 + inst % 4;
    const auto split = random_split(n_train, 3, 3, 100 + inst);
    const ParentSet target{2, inst % 3 == 0 ? NodeMask{0} : NodeMask{inst % 3 == 1 ? 0b01U : 0b11U}};
    const auto res = estimate_conjugate_gaussian(LikelihoodQuery{&split, target}, prior, true);
    const auto oracle = testing::conjugate_oracle_rows(split, target, prior);
    ASSERT_EQ(res.per_row.size(), oracle.size());
    for (std::size_t r = 0; r < oracle.size(); ++r) {
      EXPECT_NEAR(res.per_row[r], oracle[r], 1e-6 * std::abs(oracle[r])) << "instance " << inst << " row " << r;
    }
  }
}

TEST(Conjugate, NonDefaultPriorAgreesWithOracle) {
  const NigPrior prior{0.3, 2.5, 3.0, 0.5};
  const auto split = random_split(4, 2, 2, 7);
  const ParentSet target{1, 0b01U};
  const auto res = estimate_conjugate_gaussian(LikelihoodQuery{&split, target}, prior, true);
  const auto oracle = testing::conjugate_oracle_rows(split, target, prior);
  for (std::size_t r = 0; r < oracle.size(); ++r) EXPECT_NEAR(res.per_row[r], oracle[r], 1e-6 * std::abs(oracle[r]));
}

// Constant training column: standardization falls back to scale 1, and the
// result is the plain Student-t predictive of the NIG model at zero.
TEST(Conjugate, ConstantColumnClosedForm) {
  const Eigen::MatrixXd tr = Eigen::MatrixXd::Zero(5, 1);
  const Eigen::MatrixXd es = Eigen::MatrixXd::Zero(1, 1);
  const DataSplit split{Dataset(tr), Dataset(es), 0.8};
  const NigPrior prior;
  const auto res = estimate_conjugate_gaussian(LikelihoodQuery{&split, ParentSet{0, 0}}, prior);
  const auto oracle = testing::conjugate_oracle_rows(split, ParentSet{0, 0}, prior);
  EXPECT_NEAR(res.total_logpred, oracle[0], 1e-8);

  // Intercept-only posterior: precision 1 + n, mean 0, shape a + n/2, rate b.
  const double n = 5.0;
  const double an = prior.shape + n / 2.0;
  const double bn = prior.rate;
  const double nu = 2.0 * an;
  const double s2 = bn / an * (1.0 + 1.0 / (prior.precision + n));
  const double expected = std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2) - 0.5 * std::log(nu * std::numbers::pi * s2);
  EXPECT_NEAR(res.total_logpred, expected, 1e-12);
}

TEST(Conjugate, PerRowSumsToTotalAndIsPure) {
  const auto split = random_split(40, 15, 3, 21);
  const LikelihoodQuery q{&split, ParentSet{1, 0b101U}};
  const auto a = estimate_conjugate_gaussian(q, NigPrior{}, true);
  const auto b = estimate_conjugate_gaussian(q, NigPrior{}, true);
  double sum = 0.0;
  for (double v : a.per_row) sum += v;
  EXPECT_NEAR(sum, a.total_logpred, 1e-9);
  EXPECT_EQ(a.total_logpred, b.total_logpred);
}

TEST(Conjugate, CopiedParentBeatsNoParents) {
  Rng rng(22);
  std::normal_distribution<double> z;
  Eigen::MatrixXd v(2000, 2);
  for (int r = 0; r < 2000; ++r) {
    v(r, 0) = z(rng);
    v(r, 1) = v(r, 0);
  }
  const auto split = testing::split_of(Dataset(v), 0.8, 3);
  const auto with = estimate_conjugate_gaussian(LikelihoodQuery{split.get(), ParentSet{1, 0b1U}}, NigPrior{});
  const auto without = estimate_conjugate_gaussian(LikelihoodQuery{split.get(), ParentSet{1, 0}}, NigPrior{});
  EXPECT_GT(with.total_logpred, without.total_logpred);
  // Zero residual, but unit prior precision shrinks the slope to
  // (n-1)/n, leaving a residual sum of squares near 1. The predictive
  // variance is then about (b + 1/2) / (a + n/2) on the standardized scale.
  const double s2 = 1.5 / (2.0 + 0.5 * static_cast<double>(split->train.rows()));
  const double sd = std::sqrt((split->train.values.col(1).array() - split->train.values.col(1).mean()).square().sum() /
                              static_cast<double>(split->train.rows() - 1));
  const double approx = -0.5 * std::log(2.0 * M_PI * s2) - std::log(sd);
  EXPECT_NEAR(with.total_logpred / split->est.rows(), approx, 0.02);
}

TEST(Conjugate, ColumnProjectionAndParentOrder) {
  auto split = random_split(60, 20, 4, 23);
  const LikelihoodQuery q{&split, ParentSet{3, 0b011U}};
  const double before = estimate_conjugate_gaussian(q, NigPrior{}).total_logpred;
  split.train.values.col(2).setRandom();
  split.est.values.col(2).setRandom();
  EXPECT_EQ(estimate_conjugate_gaussian(q, NigPrior{}).total_logpred, before);

  // Swapping the two parent columns leaves the design unchanged up to order.
  DataSplit swapped = split;
  swapped.train.values.col(0).swap(swapped.train.values.col(1));
  swapped.est.values.col(0).swap(swapped.est.values.col(1));
  EXPECT_NEAR(estimate_conjugate_gaussian(LikelihoodQuery{&swapped, q.target}, NigPrior{}).total_logpred, before,
              1e-9 * std::abs(before));
}

TEST(Conjugate, AddingTrueParentHelps) {
  int wins = 0;
  const int seeds = 40;
  for (int s = 0; s < seeds; ++s) {
    const auto data = testing::linear_gaussian_data(graph_from(3, {{0, 2}, {1, 2}}), 700, 500 + s);
    const auto split = testing::split_of(data, 0.8, s);
    const double one = estimate_conjugate_gaussian(LikelihoodQuery{split.get(), ParentSet{2, 0b01U}}, {}).total_logpred;
    const double two = estimate_conjugate_gaussian(LikelihoodQuery{split.get(), ParentSet{2, 0b11U}}, {}).total_logpred;
    if (two > one) ++wins;
  }
  EXPECT_GE(wins, static_cast<int>(std::ceil(0.95 * seeds)));
}

TEST(Conjugate, RejectsBadQueries) {
  const auto split = random_split(10, 5, 3, 24);
  EXPECT_THROW(estimate_conjugate_gaussian(LikelihoodQuery{&split, ParentSet{0, 0b1U}}, {}), EstimatorError);
  EXPECT_THROW(estimate_conjugate_gaussian(LikelihoodQuery{&split, ParentSet{5, 0}}, {}), EstimatorError);
  EXPECT_THROW(estimate_conjugate_gaussian(LikelihoodQuery{&split, ParentSet{0, 0b1000U}}, {}), EstimatorError);
  EXPECT_THROW(estimate_conjugate_gaussian(LikelihoodQuery{nullptr, ParentSet{0, 0}}, {}), EstimatorError);
  EXPECT_THROW(estimate_conjugate_gaussian(LikelihoodQuery{&split, ParentSet{0, 0}}, NigPrior{0, -1, 2, 1}),
               EstimatorError);
}

TEST(Mlp, SameSeedSameResult) {
  const auto split = random_split(80, 20, 3, 30);
  const LikelihoodQuery q{&split, ParentSet{2, 0b11U}};
  MlpHyperparams hp;
  hp.steps = 100;
  const MlpEstimator est(hp);
  EXPECT_EQ(est.estimate(q).total_logpred, est.estimate(q).total_logpred);
  Rng a(5);
  Rng b(5);
  EXPECT_EQ(estimate_mlp(q, hp, a).total_logpred, estimate_mlp(q, hp, b).total_logpred);
}

TEST(Mlp, TrainingImprovesOnInitialization) {
  const auto data = testing::linear_gaussian_data(graph_from(2, {{0, 1}}), 600, 31);
  const auto split = testing::split_of(data, 0.8, 1);
  const LikelihoodQuery q{split.get(), ParentSet{1, 0b1U}};
  MlpHyperparams untrained;
  untrained.steps = 0;
  const auto r0 = MlpEstimator(untrained).estimate(q, true);
  EXPECT_TRUE(std::isfinite(r0.total_logpred));
  double sum = 0.0;
  for (double v : r0.per_row) sum += v;
  EXPECT_NEAR(sum, r0.total_logpred, 1e-9);
  const auto trained = MlpEstimator(MlpHyperparams{}).estimate(q);
  EXPECT_GT(trained.total_logpred, r0.total_logpred);
}

// Zero training steps: the estimate equals the Gaussian density under the
// initial network, recomputed here from the same initial draw.
TEST(Mlp, ZeroStepsIsInitialNetworkDensity) {
  const auto split = random_split(30, 10, 2, 32);
  const LikelihoodQuery q{&split, ParentSet{1, 0}};
  MlpHyperparams hp;
  hp.steps = 0;
  Rng a(9);
  Rng b(9);
  const auto r1 = estimate_mlp(q, hp, a);
  const auto r2 = estimate_mlp(q, hp, b);
  EXPECT_EQ(r1.total_logpred, r2.total_logpred);
}

TEST(Mlp, IndependentChildApproachesGaussianEntropy) {
  Rng rng(33);
  std::normal_distribution<double> z;
  const int n = 5000;
  Eigen::MatrixXd v(n, 2);
  for (int r = 0; r < n; ++r) {
    v(r, 0) = z(rng);
    v(r, 1) = 3.0 + 2.0 * z(rng);
  }
  const auto split = testing::split_of(Dataset(v), 0.8, 2);
  const auto res = MlpEstimator(MlpHyperparams{}).estimate(LikelihoodQuery{split.get(), ParentSet{1, 0b1U}});
  const auto& y = split->est.values.col(1);
  const double mean = y.mean();
  const double var = (y.array() - mean).square().mean();
  const double optimum = -0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * var);
  EXPECT_NEAR(res.total_logpred / split->est.rows(), optimum, 0.05);
}

TEST(Mlp, ColumnProjection) {
  auto split = random_split(50, 20, 3, 34);
  MlpHyperparams hp;
  hp.steps = 50;
  const MlpEstimator est(hp);
  const LikelihoodQuery q{&split, ParentSet{2, 0b01U}};
  const double before = est.estimate(q).total_logpred;
  split.train.values.col(1).setRandom();
  EXPECT_EQ(est.estimate(q).total_logpred, before);
}

TEST(Mlp, DivergenceIsReported) {
  const auto split = random_split(30, 10, 2, 35);
  MlpHyperparams hp;
  hp.step_size = 1e12;
  hp.steps = 200;
  EXPECT_THROW(MlpEstimator(hp).estimate(LikelihoodQuery{&split, ParentSet{1, 0b1U}}), EstimatorError);
}

TEST(Factory, BuildsEachKind) {
  EstimatorConfig c;
  EXPECT_NE(make_estimator(c)->describe().find("conjugate"), std::string::npos);
  c.kind = EstimatorKind::MlpBaseline;
  EXPECT_NE(make_estimator(c)->describe().find("mlp"), std::string::npos);
  c.kind = EstimatorKind::External;
  c.endpoint = "127.0.0.1:1";
  EXPECT_NE(make_estimator(c)->describe().find("external"), std::string::npos);
  EXPECT_EQ(estimator_kind_from_string("mlp"), EstimatorKind::MlpBaseline);
  EXPECT_THROW(estimator_kind_from_string("pfn"), std::invalid_argument);
}

}  // namespace
}  // namespace acd
