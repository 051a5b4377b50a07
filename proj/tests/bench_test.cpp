#include "varshap/bench.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace varshap::bench {
namespace {

BenchmarkConfig small_config() {
  BenchmarkConfig cfg;
  cfg.methods = {"varshap_sigma_0.6", "lime_sparsity_0.5"};
  cfg.models = {"gtm:dataset1"};
  cfg.datasets = {"dataset1"};
  cfg.n_instances = 3;
  cfg.varshap_samples = 200;
  cfg.lime_samples = 200;
  cfg.metric_cfg.runs = 20;
  cfg.master_seed = 7;
  return cfg;
}

std::vector<ScoreRow> rows_for(const std::string& metric,
                               const std::vector<std::pair<std::string, double>>& medians) {
  std::vector<ScoreRow> out;
  for (const auto& [method, v] : medians) {
    out.push_back({method, "m", "d", 0, metric, v, false});
  }
  return out;
}

std::size_t count(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos;
       pos = haystack.find(needle, pos + 1)) {
    ++n;
  }
  return n;
}

TEST(Presets, DefaultIdsParse) {
  const auto& ids = default_method_ids();
  ASSERT_EQ(ids.size(), 8u);
  EXPECT_EQ(parse_method("varshap_sigma_0.3").sigma, 0.3);
  EXPECT_EQ(parse_method("lime_sparsity_5.0").sparsity, 5.0);
  EXPECT_EQ(parse_method("kernelshap_zero").background, BackgroundMode::zero_baseline);
  EXPECT_THROW(parse_method("varshap_sigma_x"), InvalidArgument);
  EXPECT_THROW(parse_method("deeplift"), InvalidArgument);
}

TEST(Config, JsonRoundTripAndUnknownFields) {
  auto cfg = small_config();
  cfg.metric_cfg.perturb_baseline = metrics::Baseline::black;
  const auto back = config_from_json(config_to_json(cfg));
  EXPECT_EQ(config_to_json(back), config_to_json(cfg));
  auto j = config_to_json(cfg);
  j["n_instance"] = 4;
  EXPECT_THROW(config_from_json(j), ParseError);
  cfg.methods = {"lime_sparsity_0.5", "lime_sparsity_0.5"};
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.methods = {"lime_sparsity_0.5"};
  cfg.n_instances = 0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(Instances, StrideOverTestSplit) {
  LoadedDataset ds;
  ds.rows = Matrix(100, 2);
  ds.train_rows = 80;
  EXPECT_EQ(select_instances(ds, 4), (std::vector<std::size_t>{80, 85, 90, 95}));
  EXPECT_THROW(select_instances(ds, 21), InvalidArgument);
}

TEST(RunBenchmark, CardinalityOrderAndDeterminism) {
  const auto cfg = small_config();
  const auto a = run_benchmark(cfg);
  EXPECT_EQ(a.scores.size(), 2u * 1u * 1u * 3u * 9u);
  for (std::size_t i = 1; i < a.scores.size(); ++i) {
    EXPECT_LT(a.scores[i - 1].key(), a.scores[i].key());
  }
  std::size_t flagged = 0;
  for (const auto& r : a.scores) {
    flagged += r.flagged;
  }
  EXPECT_EQ(flagged, 0u);
  EXPECT_EQ(a.examples.size(), 2u);

  const auto csv = scores_to_csv(a.scores);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "method,model,dataset,instance_index,metric,score,flagged");
  auto multi = cfg;
  multi.workers = 3;
  EXPECT_EQ(scores_to_csv(run_benchmark(multi).scores), csv);
}

TEST(RunBenchmark, FailedExplanationIsFlaggedNotFatal) {
  const auto cfg = small_config();
  std::vector<NamedMethod> methods{preset_method("varshap_sigma_0.6")};
  std::size_t first_row = 0;
  {
    auto ds = load_bench_dataset("dataset1", cfg.master_seed);
    first_row = select_instances(ds, cfg.n_instances)[1];
  }
  const auto reference = load_bench_dataset("dataset1", cfg.master_seed).rows;
  methods.push_back({"fragile", [&](const Model& model, const Instance& x,
                                    const ExplainContext& ctx, std::uint64_t seed) {
                       const auto target = reference.row(first_row);
                       if (std::equal(x.begin(), x.end(), target.begin())) {
                         throw ComputeError("surrogate failed");
                       }
                       return preset_method("lime_sparsity_0.5").explain(model, x, ctx, seed);
                     }});
  const auto result = run_benchmark(cfg, methods);
  ASSERT_EQ(result.scores.size(), 54u);
  std::size_t flagged = 0;
  for (const auto& r : result.scores) {
    if (r.flagged) {
      ++flagged;
      EXPECT_EQ(r.method, "fragile");
      EXPECT_EQ(r.instance_index, first_row);
      EXPECT_TRUE(std::isnan(r.score));
    } else {
      EXPECT_TRUE(std::isfinite(r.score));
    }
  }
  EXPECT_EQ(flagged, 9u);
}

TEST(RunBenchmark, ModelMustMatchADataset) {
  auto cfg = small_config();
  cfg.models = {"gtm:dataset3"};
  EXPECT_THROW(run_benchmark(cfg), InvalidArgument);
}

TEST(Ranking, DominantMethod) {
  std::vector<ScoreRow> rows;
  for (const auto& info : metrics::kMetrics) {
    const bool higher = info.direction == metrics::Direction::higher_better;
    const auto r = rows_for(std::string(info.name), {{"A", higher ? 0.9 : 0.1},
                                                     {"B", higher ? 0.2 : 0.8}});
    rows.insert(rows.end(), r.begin(), r.end());
  }
  const auto t = rank_methods(rows);
  EXPECT_EQ(t.metrics.size(), 9u);
  EXPECT_EQ(t.aggregate.at("A"), 1.0);
  EXPECT_EQ(t.aggregate.at("B"), 2.0);
}

TEST(Ranking, TiesAndHandSortedMedians) {
  auto rows = rows_for("sparseness", {{"A", 0.4}, {"B", 0.4}});
  auto t = rank_methods(rows);
  EXPECT_EQ(t.per_metric_ranks.at("A").at("sparseness"), 1.5);
  EXPECT_EQ(t.per_metric_ranks.at("B").at("sparseness"), 1.5);

  rows = rows_for("faithfulness_estimate", {{"m1", 0.9}, {"m2", 0.5}, {"m3", 0.7}});
  t = rank_methods(rows);
  EXPECT_EQ(t.per_metric_ranks.at("m1").at("faithfulness_estimate"), 1.0);
  EXPECT_EQ(t.per_metric_ranks.at("m2").at("faithfulness_estimate"), 3.0);
  EXPECT_EQ(t.per_metric_ranks.at("m3").at("faithfulness_estimate"), 2.0);
}

TEST(Ranking, MediansSkipFlaggedAndAllFlaggedMetricIsExcluded) {
  std::vector<ScoreRow> rows{
      {"A", "m", "d", 0, "complexity", 0.3, false}, {"A", "m", "d", 1, "complexity", 0.1, false},
      {"A", "m", "d", 2, "complexity", NAN, true},   {"B", "m", "d", 0, "complexity", 0.2, false},
      {"A", "m", "d", 0, "sparseness", NAN, true},   {"B", "m", "d", 0, "sparseness", NAN, true},
  };
  std::vector<std::string> warnings;
  const auto t = rank_methods(rows, metric_direction,
                              [&](const std::string& w) { warnings.push_back(w); });
  EXPECT_EQ(t.medians.at("A").at("complexity"), 0.1);
  EXPECT_EQ(t.metrics, (std::vector<std::string>{"complexity"}));
  EXPECT_EQ(t.excluded_metrics, (std::vector<std::string>{"sparseness"}));
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("sparseness"), std::string::npos);
}

TEST(Ranking, MethodWithoutValidScoresRanksLast) {
  std::vector<ScoreRow> rows{{"A", "m", "d", 0, "complexity", NAN, true},
                             {"B", "m", "d", 0, "complexity", 5.0, false},
                             {"C", "m", "d", 0, "complexity", 1.0, false}};
  const auto t = rank_methods(rows);
  EXPECT_EQ(t.per_metric_ranks.at("A").at("complexity"), 3.0);
  EXPECT_EQ(t.per_metric_ranks.at("C").at("complexity"), 1.0);
}

TEST(Ranking, PermutationSumAndMonotoneInvariance) {
  auto rng = rng_stream(12, 0);
  std::vector<ScoreRow> rows;
  const std::vector<std::string> methods{"a", "b", "c", "d", "e"};
  for (const auto& info : metrics::kMetrics) {
    for (const auto& m : methods) {
      for (std::size_t k = 0; k < 5; ++k) {
        // Quantised scores make ties likely.
        rows.push_back({m, "m", "d", k, std::string(info.name),
                        std::round(4.0 * rng.uniform()) / 4.0, false});
      }
    }
  }
  const auto t = rank_methods(rows);
  for (const auto& metric : t.metrics) {
    double sum = 0.0;
    for (const auto& m : methods) {
      sum += t.per_metric_ranks.at(m).at(metric);
    }
    EXPECT_EQ(sum, 15.0) << metric;
  }
  auto transformed = rows;
  for (auto& r : transformed) {
    if (r.metric == "complexity") {
      r.score = std::exp(3.0 * r.score) - 7.0;
    }
  }
  EXPECT_EQ(rank_methods(transformed).aggregate, t.aggregate);
}

TEST(Reports, CsvJsonAndSvg) {
  std::vector<ScoreRow> rows;
  std::vector<std::string> ids = default_method_ids();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (const auto& info : metrics::kMetrics) {
      rows.push_back({ids[i], "m", "d", 0, std::string(info.name),
                      0.1 * static_cast<double>((i * 7 + info.name.size()) % 8), false});
    }
  }
  rows.push_back({ids[0], "m", "d", 1, "complexity", NAN, true});
  const auto t = rank_methods(rows);

  const auto csv = ranking_to_csv(t);
  EXPECT_EQ(count(csv, "\n"), 9u);
  EXPECT_EQ(csv.substr(0, 7), "method,");

  EXPECT_EQ(ranking_from_json(ranking_to_json(t)), t);
  EXPECT_EQ(ranking_from_json(json::parse(ranking_to_json(t).dump())), t);

  const auto svg = ranking_to_svg(t);
  EXPECT_EQ(count(svg, "class=\"bar\""), 8u);
  EXPECT_EQ(svg.rfind("<?xml", 0), 0u);

  const auto dir = std::filesystem::temp_directory_path() / "varshap_bench_test";
  std::filesystem::create_directories(dir);
  emit_report(t, ReportFormat::json, dir / "r.json");
  EXPECT_EQ(load_ranking(dir / "r.json"), t);
  EXPECT_THROW(emit_report(t, ReportFormat::csv, dir / "missing" / "x" / "r.csv"), Error);
  std::filesystem::remove_all(dir);
}

TEST(Reports, FamilyRank) {
  std::vector<ScoreRow> rows;
  for (const auto& info : metrics::kMetrics) {
    const bool complexity = info.family == "complexity";
    const bool higher = info.direction == metrics::Direction::higher_better;
    const double good = higher ? 1.0 : 0.0;
    const double bad = higher ? 0.0 : 1.0;
    const auto r = rows_for(std::string(info.name),
                            {{"A", complexity ? good : bad}, {"B", complexity ? bad : good}});
    rows.insert(rows.end(), r.begin(), r.end());
  }
  const auto t = rank_methods(rows);
  EXPECT_EQ(family_rank(t, "A", "complexity"), 1.0);
  EXPECT_EQ(family_rank(t, "A", "faithfulness"), 2.0);
  EXPECT_TRUE(std::isnan(family_rank(t, "A", "nonexistent")));
}

}  // namespace
}  // namespace varshap::bench
