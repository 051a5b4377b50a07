#include "varshap/varshap.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "varshap/perturb.hpp"
#include "varshap/synth.hpp"

namespace varshap {
namespace {

VarianceGameConfig config(std::size_t m, std::size_t batches = 0) {
  VarianceGameConfig c;
  c.samples_per_coalition = m;
  c.error_batches = batches;
  return c;
}

Model bumpy_model() {
  return Model(3, [](std::span<const double> x) {
    return std::sin(x[0]) * x[1] + 0.5 * x[2] * x[2] + std::abs(x[0] - x[2]);
  });
}

TEST(Perturbation, FixedColumnsStayAtInstance) {
  const PerturbationSpec spec{{1.0, 2.0, 0.5}, 0.6};
  const Instance x{1.0, -1.0, 3.0};
  const auto fixed = Coalition::from_mask(0b010, 3);
  const auto z = sample_perturbed(x, fixed, spec, 50000, rng_stream(3, 0));
  std::vector<double> c0;
  std::vector<double> c2;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    ASSERT_EQ(z(r, 1), -1.0);
    c0.push_back(z(r, 0));
    c2.push_back(z(r, 2));
  }
  EXPECT_NEAR(std::sqrt(oracle::sample_variance(c0)), 0.6 * 1.0, 0.01);
  EXPECT_NEAR(std::sqrt(oracle::sample_variance(c2)), 0.6 * 0.5, 0.005);
}

TEST(Perturbation, AlphaIsSigmaSquared) {
  const PerturbationSpec spec{{1.0}, 0.3};
  EXPECT_DOUBLE_EQ(spec.alpha(), 0.09);
  EXPECT_THROW((PerturbationSpec{{1.0}, -1.0}).validate(), InvalidArgument);
  EXPECT_THROW((PerturbationSpec{{-1.0}, 1.0}).validate(), InvalidArgument);
}

TEST(Perturbation, FeatureStatsUseUnbiasedVariance) {
  Dataset ds;
  ds.rows = Matrix(4, 1);
  const std::vector<double> col{1.0, 2.0, 4.0, 7.0};
  for (std::size_t r = 0; r < 4; ++r) {
    ds.rows(r, 0) = col[r];
  }
  EXPECT_NEAR(estimate_feature_stats(ds)[0], oracle::sample_variance(col), 1e-14);
}

TEST(VarianceEstimate, MatchesTwoPassOracleOnSameDraws) {
  const auto model = bumpy_model();
  const PerturbationSpec spec{{1.0, 0.7, 1.3}, 0.8};
  const Instance x{0.2, -0.4, 1.1};
  const auto fixed = Coalition::from_mask(0b001, 3);
  const auto stream = rng_stream(8, 0);
  const double got = variance_given_coalition(model, x, fixed, spec, config(4000), stream);
  const auto z = sample_perturbed(x, fixed, spec, 4000, stream);
  std::vector<double> y;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    y.push_back(model(z.row(r)));
  }
  EXPECT_NEAR(got, oracle::sample_variance(y), 1e-12 * oracle::sample_variance(y));
}

TEST(Varshap, LinearClosedForm) {
  // Phi_i = w_i^2 sigma^2 sd_i^2 under independent Gaussian perturbation.
  const auto model = linear_model({1.0, 0.2, -0.5});
  const PerturbationSpec spec{{1.0, 2.0, 0.5}, 0.7};
  const auto r =
      varshap_exact_detailed(model, Instance{0.3, 0.1, -2.0}, spec, config(100000, 20), 42);
  const std::vector<double> want{0.49 * 1.0, 0.49 * 0.04 * 4.0, 0.49 * 0.25 * 0.25};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(r.attribution.phi[i], want[i], 3.0 * r.std_error[i] + 1e-12) << "i=" << i;
  }
}

TEST(Varshap, EfficiencyHoldsOnTheEstimatedGame) {
  const auto model = bumpy_model();
  VarianceGame game(model, Instance{0.1, 0.5, -0.3}, PerturbationSpec{{1.0, 1.0, 1.0}, 0.6},
                    config(5000), 3);
  const auto r = varshap_exact_detailed(game);
  double sum = 0.0;
  for (double p : r.attribution.phi) {
    sum += p;
  }
  EXPECT_NEAR(sum, r.attribution.base_variance, 1e-12);
  EXPECT_EQ(game.value(Coalition::full(3)), 0.0);
}

TEST(Varshap, SignConventions) {
  const auto model = bumpy_model();
  const Instance x{0.1, 0.5, -0.3};
  const PerturbationSpec spec{{1.0, 1.0, 1.0}, 0.6};
  auto c = config(3000);
  const auto pos = varshap_exact(model, x, spec, c, 9);
  c.sign_convention = SignConvention::eq1_literal;
  const auto lit = varshap_exact(model, x, spec, c, 9);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(pos.phi[i], -lit.phi[i]);
  }
  EXPECT_EQ(parse_sign_convention("eq1_literal"), SignConvention::eq1_literal);
  EXPECT_THROW(parse_sign_convention("other"), InvalidArgument);
}

TEST(Varshap, NullPlayerIsExactlyZeroWithPairedSampling) {
  const auto model = synth::gtm("dataset3");
  const auto r =
      varshap_exact(model, Instance{0.3, -0.2, 0.9}, PerturbationSpec{{1.0, 1.0, 1.0}, 1.0},
                    config(20000), 1);
  EXPECT_EQ(r.phi[2], 0.0);
  EXPECT_GT(r.phi[0], 0.0);
}

TEST(Varshap, ShiftSignAndScale) {
  const auto model = bumpy_model();
  const Instance x{0.4, -0.1, 0.2};
  const PerturbationSpec spec{{1.0, 0.5, 2.0}, 0.6};
  const auto c = config(5000);
  const auto base = varshap_exact(model, x, spec, c, 77);
  const auto shifted = varshap_exact(model.affine(1.0, 12.5), x, spec, c, 77);
  const auto negated = varshap_exact(model.affine(-1.0, 0.0), x, spec, c, 77);
  const auto scaled = varshap_exact(model.affine(3.0, 0.0), x, spec, c, 77);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(shifted.phi[i], base.phi[i], 1e-9);
    EXPECT_NEAR(negated.phi[i], base.phi[i], 1e-9);
    EXPECT_NEAR(scaled.phi[i], 9.0 * base.phi[i], 1e-9 * std::abs(9.0 * base.phi[i]));
  }
}

TEST(Varshap, DeterministicAcrossWorkerCounts) {
  const auto model = bumpy_model();
  const Instance x{0.4, -0.1, 0.2};
  const PerturbationSpec spec{{1.0, 0.5, 2.0}, 0.6};
  for (bool paired : {true, false}) {
    auto c = config(2000);
    c.paired_sampling = paired;
    c.workers = 1;
    const auto a = varshap_exact(model, x, spec, c, 5);
    c.workers = 4;
    const auto b = varshap_exact(model, x, spec, c, 5);
    EXPECT_EQ(a, b) << "paired=" << paired;
  }
}

TEST(Varshap, SampledOverAllCoalitionsMatchesExact) {
  const auto model = bumpy_model();
  VarianceGame game(model, Instance{0.4, -0.1, 0.2}, PerturbationSpec{{1.0, 0.5, 2.0}, 0.6},
                    config(3000), 21);
  const auto exact = varshap_exact_detailed(game).attribution;
  const auto sampled = varshap_sampled_detailed(game, 8).attribution;
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(sampled.phi[i], exact.phi[i], 1e-9);
  }
  EXPECT_EQ(exact.param_string("estimator", ""), "exact");
  EXPECT_EQ(sampled.param_string("estimator", ""), "sampled");
}

TEST(Varshap, ExactRefusesLargeDimension) {
  const auto model = constant_model(21, 1.0);
  EXPECT_THROW(varshap_exact(model, Instance(21, 0.0), PerturbationSpec{Vector(21, 1.0), 1.0},
                             config(10), 0),
               InvalidArgument);
}

TEST(Varshap, NonFiniteModelOutputIsAComputeError) {
  const Model bad(2, [](std::span<const double> x) { return x[0] > 0.0 ? NAN : 1.0; });
  EXPECT_THROW(varshap_exact(bad, Instance{0.0, 0.0}, PerturbationSpec{{1.0, 1.0}, 1.0},
                             config(100), 0),
               ComputeError);
}

TEST(Axioms, ReportPassesForVarshap) {
  const VarianceEstimator est = [](const Model& m, const Instance& x, std::uint64_t seed) {
    return varshap_exact(m, x, PerturbationSpec{Vector(x.size(), 1.0), 0.6}, config(500), seed);
  };
  const auto report = verify_attribution_axioms(est, 10, 4);
  for (const auto& c : report.checks) {
    EXPECT_TRUE(c.passed) << c.name << ": " << c.detail;
  }
  EXPECT_TRUE(report.ok());
}

}  // namespace
}  // namespace varshap
