#include "varshap/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"

namespace varshap::metrics {
namespace {

MetricConfig black_config() {
  MetricConfig cfg;
  cfg.perturb_baseline = Baseline::black;
  cfg.subset_size = 2;
  return cfg;
}

TEST(Stats, PearsonMatchesTwoPassOracle) {
  const std::vector<double> a{1.0, 4.0, 2.0, 8.0, 5.0};
  const std::vector<double> b{0.5, 3.0, 3.0, 6.0, -1.0};
  const auto s = pearson(a, b);
  EXPECT_FALSE(s.flagged);
  EXPECT_NEAR(s.value, oracle::pearson(a, b), 1e-14);
  const std::vector<double> flat{2.0, 2.0, 2.0, 2.0, 2.0};
  EXPECT_TRUE(pearson(a, flat).flagged);
}

TEST(Stats, AverageRanksResolveTies) {
  const std::vector<double> v{10.0, 20.0, 10.0, 5.0};
  EXPECT_EQ(average_ranks(v), (Vector{2.5, 4.0, 2.5, 1.0}));
}

TEST(Stats, LowerMedian) {
  EXPECT_EQ(lower_median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(lower_median({4.0, 1.0, 3.0, 2.0}), 2.0);
  EXPECT_THROW(lower_median({}), InvalidArgument);
}

TEST(FaithfulnessCorrelation, ExactLinearContributions) {
  const auto model = linear_model({1.0, -2.0, 0.5, 3.0});
  const std::vector<double> x{1.0, 2.0, -1.0, 0.5};
  // Black baseline is 0, so the contribution of feature i is w_i x_i.
  const std::vector<double> phi{1.0, -4.0, -0.5, 1.5};
  const auto range = FeatureRange::symmetric(4, 3.0);
  auto rng = rng_stream(1, 0);
  const auto s = faithfulness_correlation(model, x, phi, range, black_config(), rng);
  EXPECT_FALSE(s.flagged);
  EXPECT_NEAR(s.value, 1.0, 1e-6);

  std::vector<double> neg(phi);
  for (auto& v : neg) {
    v = -v;
  }
  auto rng2 = rng_stream(1, 0);
  EXPECT_NEAR(faithfulness_correlation(model, x, neg, range, black_config(), rng2).value, -1.0,
              1e-6);
}

TEST(FaithfulnessCorrelation, ConstantModelIsFlagged) {
  const std::vector<double> x{1.0, 2.0, 3.0};
  const std::vector<double> phi{1.0, 0.5, 0.2};
  auto rng = rng_stream(2, 0);
  const auto s = faithfulness_correlation(constant_model(3, 5.0), x, phi,
                                          FeatureRange::symmetric(3, 1.0), black_config(), rng);
  EXPECT_TRUE(s.flagged);
  EXPECT_EQ(s.value, 0.0);
}

TEST(FaithfulnessCorrelation, RejectsSubsetLargerThanD) {
  auto cfg = black_config();
  cfg.subset_size = 5;
  auto rng = rng_stream(2, 0);
  const std::vector<double> x{1.0, 2.0};
  EXPECT_THROW(faithfulness_correlation(linear_model({1.0, 1.0}), x, x,
                                        FeatureRange::symmetric(2, 1.0), cfg, rng),
               InvalidArgument);
}

TEST(FaithfulnessEstimate, PermutedAttributionMatchesOracle) {
  const auto model = linear_model({1.0, 2.0, 3.0});
  const std::vector<double> x{1.0, 1.0, 1.0};
  const auto range = FeatureRange::symmetric(3, 1.0);
  auto rng = rng_stream(0, 0);
  const std::vector<double> exact{1.0, 2.0, 3.0};
  EXPECT_NEAR(faithfulness_estimate(model, x, exact, range, black_config(), rng).value, 1.0,
              1e-12);

  const std::vector<double> permuted{2.0, 3.0, 1.0};
  const auto s = faithfulness_estimate(model, x, permuted, range, black_config(), rng);
  EXPECT_NEAR(s.value, oracle::pearson(permuted, exact), 1e-12);
  EXPECT_LT(s.value, 1.0);

  const std::vector<double> same{1.0, 1.0, 1.0};
  EXPECT_TRUE(
      faithfulness_estimate(linear_model({1.0, 1.0, 1.0}), x, same, range, black_config(), rng)
          .flagged);
}

TEST(Monotonicity, OrderedReversedAndTied) {
  const auto model = linear_model({1.0, 2.0, 3.0, 4.0});
  const std::vector<double> x{1.0, 1.0, 1.0, 1.0};
  const auto range = FeatureRange::symmetric(4, 1.0);
  auto rng = rng_stream(0, 0);
  const std::vector<double> exact{1.0, -2.0, 3.0, 4.0};
  EXPECT_NEAR(monotonicity_correlation(model, x, exact, range, black_config(), rng).value, 1.0,
              1e-12);
  const std::vector<double> reversed{4.0, 3.0, 2.0, 1.0};
  EXPECT_NEAR(monotonicity_correlation(model, x, reversed, range, black_config(), rng).value,
              -1.0, 1e-12);

  const std::vector<double> x2{1.0, 1.0};
  const std::vector<double> phi2{0.3, 0.7};
  EXPECT_TRUE(monotonicity_correlation(linear_model({2.0, 2.0}), x2, phi2,
                                       FeatureRange::symmetric(2, 1.0), black_config(), rng)
                  .flagged);
}

TEST(Robustness, ConstantExplainerScoresZero) {
  const std::vector<double> x{0.5, -1.0, 2.0};
  const Vector phi{1.0, 2.0, 3.0};
  const Explainer constant = [&](std::span<const double>) { return phi; };
  const MetricConfig cfg;
  auto rng = rng_stream(3, 0);
  EXPECT_EQ(local_lipschitz_estimate(constant, x, phi, cfg, rng).value, 0.0);
  EXPECT_EQ(max_sensitivity(constant, x, phi, cfg, rng).value, 0.0);
  EXPECT_EQ(relative_input_stability(constant, x, phi, cfg, rng).value, 0.0);
}

TEST(Robustness, LipschitzOfLinearExplainers) {
  const std::vector<double> x{0.5, -1.0, 2.0};
  const Explainer identity = [](std::span<const double> z) { return Vector(z.begin(), z.end()); };
  const Explainer triple = [](std::span<const double> z) {
    Vector out(z.begin(), z.end());
    for (auto& v : out) {
      v *= 3.0;
    }
    return out;
  };
  const MetricConfig cfg;
  auto rng = rng_stream(4, 0);
  EXPECT_NEAR(local_lipschitz_estimate(identity, x, identity(x), cfg, rng).value, 1.0, 1e-9);
  EXPECT_NEAR(local_lipschitz_estimate(triple, x, triple(x), cfg, rng).value, 3.0, 1e-9);
}

TEST(Robustness, MaxSensitivityOfIdentityIsBoundedByTheBall) {
  const std::size_t d = 5;
  const std::vector<double> x(d, 1.0);
  const Explainer identity = [](std::span<const double> z) { return Vector(z.begin(), z.end()); };
  MetricConfig cfg;
  auto rng = rng_stream(5, 0);
  const auto s = max_sensitivity(identity, x, identity(x), cfg, rng);
  EXPECT_GT(s.value, 0.0);
  EXPECT_LE(s.value, 0.02 * std::sqrt(static_cast<double>(d)));
  cfg.lower_bound = 0.0;
  EXPECT_EQ(max_sensitivity(identity, x, identity(x), cfg, rng).value, 0.0);
}

TEST(Robustness, RelativeStabilityRatioByHand) {
  // d = 1: phi doubles (relative change 1) while x moves 10%: 1 / 0.1 = 10.
  const std::vector<double> x{1.0};
  const std::vector<double> xp{1.1};
  const std::vector<double> phi{0.4};
  const std::vector<double> phi_p{0.8};
  EXPECT_NEAR(relative_stability_ratio(x, xp, phi, phi_p, 1e-6), 10.0, 1e-9);

  const std::vector<double> xz{0.0, 1.0};
  const std::vector<double> xzp{0.1, 1.0};
  const std::vector<double> p2{1.0, 1.0};
  const std::vector<double> p2p{1.5, 1.0};
  // The zero coordinate divides by eps: ||(0.1 / 1e-6, 0)|| = 1e5.
  EXPECT_NEAR(relative_stability_ratio(xz, xzp, p2, p2p, 1e-6), 0.5 / 1e5, 1e-15);
}

TEST(Robustness, RelativeStabilityFlagsZeroAttribution) {
  const std::vector<double> x{1.0, 2.0};
  const Vector zero{0.0, 0.0};
  const Explainer ex = [&](std::span<const double>) { return zero; };
  auto rng = rng_stream(0, 0);
  EXPECT_TRUE(relative_input_stability(ex, x, zero, MetricConfig{}, rng).flagged);
}

TEST(Complexity, Sparseness) {
  EXPECT_NEAR(sparseness(std::vector<double>{0.0, 0.0, 1.0}).value, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(sparseness(std::vector<double>{0.7, 0.7, 0.7}).value, 0.0, 1e-15);
  for (std::size_t d : {2u, 10u, 100u}) {
    std::vector<double> one_hot(d, 0.0);
    one_hot[d / 2] = -4.0;
    EXPECT_NEAR(sparseness(one_hot).value, 1.0 - 1.0 / static_cast<double>(d), 1e-12);
  }
  EXPECT_TRUE(sparseness(std::vector<double>{0.0, 0.0}).flagged);
}

TEST(Complexity, Entropy) {
  EXPECT_EQ(complexity(std::vector<double>{0.0, 3.0, 0.0}).value, 0.0);
  EXPECT_NEAR(complexity(std::vector<double>{1.0, -1.0, 1.0, -1.0}).value, std::log(4.0), 1e-15);
  EXPECT_NEAR(complexity(std::vector<double>{1.0, 1.0, 0.0, 0.0}).value, std::log(2.0), 1e-15);
  EXPECT_TRUE(complexity(std::vector<double>{0.0}).flagged);
}

TEST(Complexity, EffectiveComplexityIsStrict) {
  const MetricConfig cfg;
  EXPECT_EQ(effective_complexity(std::vector<double>{0.5, 0.01, 0.2}, cfg).value, 2.0);
  EXPECT_EQ(effective_complexity(std::vector<double>{0.0, 0.0}, cfg).value, 0.0);
  EXPECT_EQ(effective_complexity(std::vector<double>{0.05, -0.05}, cfg).value, 0.0);
}

TEST(Invariants, ScaleFreeMetricsIgnorePositiveScaling) {
  const auto model = linear_model({1.0, -2.0, 0.5, 3.0});
  const std::vector<double> x{1.0, 2.0, -1.0, 0.5};
  const std::vector<double> phi{0.9, -3.0, 0.1, 2.0};
  std::vector<double> scaled(phi);
  for (auto& v : scaled) {
    v *= 7.5;
  }
  const auto range = FeatureRange::symmetric(4, 3.0);
  MetricConfig cfg;
  cfg.subset_size = 2;
  const auto run = [&](const MetricInfo& info, const std::vector<double>& p) {
    return compute_metric(info, model, x, p, Explainer{}, range, cfg, 12).value;
  };
  for (auto id : {MetricId::faithfulness_correlation, MetricId::faithfulness_estimate,
                  MetricId::sparseness, MetricId::complexity}) {
    const auto& info = kMetrics[static_cast<std::size_t>(id)];
    EXPECT_NEAR(run(info, phi), run(info, scaled), 1e-12) << info.name;
  }
  const auto& eff = kMetrics[static_cast<std::size_t>(MetricId::effective_complexity)];
  std::vector<double> small{0.01, 0.02, 0.04, 0.03};
  std::vector<double> big(small);
  for (auto& v : big) {
    v *= 10.0;
  }
  EXPECT_NE(run(eff, small), run(eff, big));
}

TEST(Suite, NamesDeterminismAndFlags) {
  const auto model = linear_model({1.0, -2.0, 0.5});
  const std::vector<double> x{1.0, 2.0, -1.0};
  const Vector phi{1.0, -4.0, -0.5};
  const Explainer ex = [&](std::span<const double> z) {
    return Vector{z[0], -2.0 * z[1], 0.5 * z[2]};
  };
  auto cfg = black_config();
  const auto range = FeatureRange::symmetric(3, 2.0);
  const auto a = evaluate_all(model, x, phi, ex, range, cfg, 99);
  const auto b = evaluate_all(model, x, phi, ex, range, cfg, 99);
  ASSERT_EQ(a.size(), 9u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].metric, b[i].metric);
    EXPECT_EQ(a[i].score.value, b[i].score.value);
  }
  EXPECT_EQ(a[0].metric, "faithfulness_correlation_black");
  EXPECT_EQ(a[6].metric, "sparseness");
  EXPECT_EQ(&metric_info("monotonicity_correlation_black"), &kMetrics[2]);
  EXPECT_THROW(metric_info("sparseness_black"), InvalidArgument);

  cfg.subset_size = 10;
  const auto c = evaluate_all(model, x, phi, ex, range, cfg, 99);
  EXPECT_TRUE(c[0].score.flagged);
  EXPECT_TRUE(std::isnan(c[0].score.value));
  EXPECT_FALSE(c[1].score.flagged);
}

TEST(Report, FlaggedScoresAreCountedButExcluded) {
  const std::vector<Score> scores{{0.2, false}, {9.0, true}, {0.5, false}, {0.1, false}};
  const auto r = make_report("sparseness", scores, Direction::higher_better);
  EXPECT_EQ(r.flagged_count, 1u);
  EXPECT_EQ(r.median, 0.2);
  EXPECT_EQ(r.per_instance.size(), 4u);
}

}  // namespace
}  // namespace varshap::metrics
