#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "acd/scorer.hpp"
#include "support.hpp"

namespace acd {
namespace {

using testing::graph_from;

// Counts calls so cache behaviour can be checked independently of the
// scorer's own counters.
class CountingEstimator final : public Estimator {
 public:
  LikelihoodResult estimate(const LikelihoodQuery& q, bool) const override {
    ++calls;
    return LikelihoodResult{-1.0 * (q.target.child + 1) - 0.1 * popcount(q.target.parents), {}};
  }
  std::string describe() const override { return "counting"; }
  mutable std::atomic<int> calls{0};
};

std::shared_ptr<DataSplit> chain_split(int n = 2000, std::uint64_t seed = 1) {
  const auto data = testing::linear_gaussian_data(graph_from(3, {{0, 1}, {1, 2}}), n, seed);
  return testing::split_of(data, 0.8, seed);
}

TEST(ScoreConfig, DefaultLambda) {
  ScoreConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.resolve_lambda(400), 0.5 * std::log(400.0));
  cfg.lambda = 0.3;
  EXPECT_EQ(cfg.resolve_lambda(400), 0.3);
  cfg.lambda = -1.0;
  EXPECT_THROW(cfg.resolve_lambda(400), std::invalid_argument);
}

TEST(Scorer, CacheHitsAndKeys) {
  auto split = chain_split();
  auto est = std::make_shared<CountingEstimator>();
  Scorer scorer(split, ScoreConfig{}, est);
  const double a = scorer.variable_loglik(ParentSet{2, 0b10U});
  const auto hits = scorer.cache().hits();
  const double b = scorer.variable_loglik(ParentSet{2, 0b10U});
  EXPECT_EQ(a, b);
  EXPECT_EQ(scorer.cache().hits(), hits + 1);
  EXPECT_EQ(est->calls, 1);
  scorer.variable_loglik(ParentSet{0, 0b10U});
  EXPECT_EQ(scorer.cache().size(), 2U);
  EXPECT_EQ(est->calls, 2);
}

TEST(Scorer, CachedValueEqualsFreshCall) {
  auto split = chain_split();
  Scorer scorer(split, ScoreConfig{});
  scorer.score_all_dags();
  for (const auto& [key, value] : scorer.cache().entries()) {
    const auto fresh = estimate_conjugate_gaussian(LikelihoodQuery{split.get(), key}, NigPrior{});
    EXPECT_EQ(fresh.total_logpred, value);
  }
}

TEST(Scorer, PenaltyArithmetic) {
  auto split = chain_split(200);
  ScoreConfig zero;
  zero.lambda = 0.0;
  ScoreConfig tenth;
  tenth.lambda = 0.1;
  Scorer s0(split, zero);
  Scorer s1(split, tenth);
  const auto g = graph_from(3, {{0, 1}, {1, 2}, {0, 2}});
  EXPECT_NEAR(s0.graph_score(g) - s1.graph_score(g), 0.3, 1e-9);

  const auto data = testing::linear_gaussian_data(graph_from(4, {{0, 1}}), 300, 5);
  auto split4 = testing::split_of(data, 0.8, 5);
  Scorer a(split4, zero);
  Scorer b(split4, tenth);
  const auto five = graph_from(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}});
  EXPECT_NEAR(a.graph_score(five) - b.graph_score(five), 0.5, 1e-9);

  double marginal = 0.0;
  for (int i = 0; i < 4; ++i) {
    marginal += estimate_conjugate_gaussian(LikelihoodQuery{split4.get(), ParentSet{i, 0}}, NigPrior{}).total_logpred;
  }
  EXPECT_NEAR(a.graph_score(DirectedGraph(4)), marginal, 1e-9 * std::abs(marginal));
}

TEST(Scorer, RejectsCyclesAndSizeMismatch) {
  Scorer scorer(chain_split(100), ScoreConfig{});
  EXPECT_THROW(scorer.graph_score(graph_from(3, {{0, 1}, {1, 0}})), GraphError);
  EXPECT_THROW(scorer.graph_score(DirectedGraph(4)), std::invalid_argument);
}

TEST(Scorer, EnumerationCallCounts) {
  auto est3 = std::make_shared<CountingEstimator>();
  Scorer s3(chain_split(100), ScoreConfig{}, est3);
  EXPECT_EQ(s3.score_all_dags().size(), 25U);
  EXPECT_LE(est3->calls, 12);
  EXPECT_EQ(s3.estimator_calls(), est3->calls);

  const auto data = testing::linear_gaussian_data(graph_from(5, {{0, 1}}), 60, 3);
  auto est5 = std::make_shared<CountingEstimator>();
  Scorer s5(testing::split_of(data, 0.8, 3), ScoreConfig{}, est5, nullptr, 3);
  EXPECT_EQ(s5.score_all_dags().size(), 29281U);
  EXPECT_EQ(est5->calls, 80);
  EXPECT_EQ(s5.cache().size(), 80U);
  std::set<std::uint64_t> keys;
  for (const auto& g : enumerate_all_dags(5)) {
    for (int i = 0; i < 5; ++i) keys.insert(ScoreCache::key(ParentSet{i, g.parents(i)}));
  }
  EXPECT_EQ(keys.size(), 80U);
}

TEST(Scorer, ScoreDecomposes) {
  auto split = chain_split(300);
  auto est = std::make_shared<CountingEstimator>();
  ScoreConfig cfg;
  cfg.lambda = 0.25;
  Scorer scorer(split, cfg, est);
  const auto g = graph_from(3, {{0, 2}, {1, 2}});
  const double expected = -1.0 + -2.0 + (-3.0 - 0.2) - 0.25 * 2;
  EXPECT_NEAR(scorer.graph_score(g), expected, 1e-12);
  const auto sg = scorer.score_graph(g);
  EXPECT_EQ(sg.n_edges, 2);
  EXPECT_NEAR(sg.loglik_sum, expected + 0.5, 1e-12);
}

TEST(Scorer, TrueClassBeatsEmptyOnChain) {
  Scorer scorer(chain_split(), ScoreConfig{});
  const double empty = scorer.graph_score(DirectedGraph(3));
  for (const auto& g : mec_of(graph_from(3, {{0, 1}, {1, 2}}), enumerate_all_dags(3))) {
    EXPECT_GT(scorer.graph_score(g), empty);
  }
}

TEST(Scorer, EquivalentGraphsScoreClose) {
  Scorer scorer(chain_split(), ScoreConfig{});
  const double fwd = scorer.graph_score(graph_from(3, {{0, 1}, {1, 2}}));
  const double bwd = scorer.graph_score(graph_from(3, {{2, 1}, {1, 0}}));
  const double fork = scorer.graph_score(graph_from(3, {{1, 0}, {1, 2}}));
  // Not exactly equal: the estimator is not score-equivalent. The gap is
  // small relative to the total.
  EXPECT_LT(std::abs(fwd - bwd), 1e-2 * std::abs(fwd));
  EXPECT_LT(std::abs(fwd - fork), 1e-2 * std::abs(fwd));
}

TEST(Scorer, HugeLambdaPicksEmptyGraph) {
  ScoreConfig cfg;
  cfg.lambda = 1e6;
  Scorer scorer(chain_split(), cfg);
  const auto scores = scorer.score_all_dags();
  const auto best = std::max_element(scores.begin(), scores.end(),
                                     [](const auto& a, const auto& b) { return a.score < b.score; });
  EXPECT_EQ(best->graph.edge_count(), 0);
}

TEST(Scorer, FingerprintInvalidatesSharedCache) {
  auto cache = std::make_shared<ScoreCache>();
  auto split_a = chain_split(200, 1);
  auto split_b = chain_split(200, 2);
  Scorer a(split_a, ScoreConfig{}, std::make_shared<ConjugateGaussianEstimator>(), cache);
  a.variable_loglik(ParentSet{0, 0});
  EXPECT_EQ(cache->size(), 1U);
  Scorer again(split_a, ScoreConfig{}, std::make_shared<ConjugateGaussianEstimator>(), cache);
  EXPECT_EQ(cache->size(), 1U);
  Scorer b(split_b, ScoreConfig{}, std::make_shared<ConjugateGaussianEstimator>(), cache);
  EXPECT_EQ(cache->size(), 0U);
}

TEST(Scorer, ParallelMatchesSerial) {
  auto split = chain_split(500);
  Scorer serial(split, ScoreConfig{}, 1);
  Scorer parallel(split, ScoreConfig{}, 4);
  const auto a = serial.score_all_dags();
  const auto b = parallel.score_all_dags();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k].score, b[k].score);
  EXPECT_EQ(serial.cache().misses(), parallel.cache().misses());
  EXPECT_EQ(serial.cache().hits(), parallel.cache().hits());
}

TEST(Scorer, BatchCountsAreDeterministic) {
  auto split = chain_split(300);
  Scorer scorer(split, ScoreConfig{}, 4);
  const std::vector<DirectedGraph> batch = {graph_from(3, {{0, 1}}), graph_from(3, {{0, 1}}),
                                            graph_from(3, {{0, 1}, {1, 2}})};
  scorer.score_graphs(batch);
  // Distinct keys: (0,{}), (1,{0}), (2,{}), (2,{1}) -> 4 fits; 9 lookups total.
  EXPECT_EQ(scorer.cache().misses(), 4);
  EXPECT_EQ(scorer.cache().hits(), 5);
}

TEST(Scorer, EstimatorErrorsNameTheTarget) {
  class Failing final : public Estimator {
   public:
    LikelihoodResult estimate(const LikelihoodQuery&, bool) const override { throw EstimatorError("boom"); }
    std::string describe() const override { return "failing"; }
  };
  Scorer scorer(chain_split(50), ScoreConfig{}, std::make_shared<Failing>());
  try {
    scorer.variable_loglik(ParentSet{2, 0b11U});
    FAIL();
  } catch (const EstimatorError& e) {
    EXPECT_NE(std::string(e.what()).find("child 2 with parents {0,1}"), std::string::npos) << e.what();
  }
}

TEST(ScoreDump, Format) {
  Scorer scorer(chain_split(100), ScoreConfig{});
  const auto scores = scorer.score_all_dags();
  const auto text = format_score_dump(scores);
  EXPECT_EQ(text.substr(0, text.find('\n')), "graph,loglik_sum,n_edges,penalized_score");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 26);
}

}  // namespace
}  // namespace acd
