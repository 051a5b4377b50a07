#pragma once

// Benchmark grid: (method x model x dataset x instance x metric) scores,
// per-metric median ranking of methods and report emission.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "varshap/baselines.hpp"
#include "varshap/core.hpp"
#include "varshap/io.hpp"
#include "varshap/metrics.hpp"
#include "varshap/parallel.hpp"
#include "varshap/perturb.hpp"
#include "varshap/svg.hpp"
#include "varshap/synth.hpp"
#include "varshap/varshap.hpp"

namespace varshap::bench {

// ---------------------------------------------------------------------------
// Method presets

enum class MethodKind { varshap, kernelshap, lime };

struct MethodPreset {
  std::string id;
  MethodKind kind = MethodKind::varshap;
  double sigma = 0.6;
  BackgroundMode background = BackgroundMode::data_sampling;
  double sparsity = 0.0;
};

inline const std::vector<std::string>& default_method_ids() {
  static const std::vector<std::string> ids{
      "varshap_sigma_0.3",   "varshap_sigma_0.6",   "varshap_sigma_1.0", "kernelshap_data",
      "kernelshap_zero",     "lime_sparsity_0.5",   "lime_sparsity_1.5", "lime_sparsity_5.0",
  };
  return ids;
}

namespace detail {

inline double parse_suffix_number(const std::string& id, std::size_t prefix_len) {
  const auto text = id.substr(prefix_len);
  const auto v = varshap::detail::parse_number(text);
  if (!v) {
    throw InvalidArgument("method preset '" + id + "' has a malformed numeric suffix");
  }
  return *v;
}

}  // namespace detail

/// Parses "varshap_sigma_<s>", "kernelshap_{data,zero}" or
/// "lime_sparsity_<l>".
inline MethodPreset parse_method(const std::string& id) {
  MethodPreset p;
  p.id = id;
  const std::string vs = "varshap_sigma_";
  const std::string ls = "lime_sparsity_";
  if (id.starts_with(vs)) {
    p.kind = MethodKind::varshap;
    p.sigma = detail::parse_suffix_number(id, vs.size());
    if (!(p.sigma > 0.0)) {
      throw InvalidArgument("method preset '" + id + "' needs sigma > 0");
    }
  } else if (id == "kernelshap_data") {
    p.kind = MethodKind::kernelshap;
    p.background = BackgroundMode::data_sampling;
  } else if (id == "kernelshap_zero") {
    p.kind = MethodKind::kernelshap;
    p.background = BackgroundMode::zero_baseline;
  } else if (id.starts_with(ls)) {
    p.kind = MethodKind::lime;
    p.sparsity = detail::parse_suffix_number(id, ls.size());
    if (!(p.sparsity >= 0.0)) {
      throw InvalidArgument("method preset '" + id + "' needs sparsity >= 0");
    }
  } else {
    throw InvalidArgument("unknown method preset '" + id + "'");
  }
  return p;
}

// ---------------------------------------------------------------------------
// Configuration

struct BenchmarkConfig {
  std::vector<std::string> methods = default_method_ids();
  std::vector<std::string> models{"gtm:dataset1", "gtm:dataset2", "gtm:dataset3"};
  std::vector<std::string> datasets{"dataset1", "dataset2", "dataset3"};
  std::size_t n_instances = 50;
  std::uint64_t master_seed = 0;
  metrics::MetricConfig metric_cfg;

  std::size_t varshap_samples = 2000;
  /// Coalition budget when d is too large for exact enumeration.
  std::size_t varshap_coalitions = 256;
  std::size_t exact_max_d = 10;
  std::size_t kernelshap_coalitions = 64;
  std::size_t kernelshap_background = 100;
  std::size_t lime_samples = 1000;
  std::size_t workers = 0;

  void validate() const {
    if (n_instances < 1) {
      throw InvalidArgument("n_instances must be >= 1");
    }
    if (methods.empty() || models.empty() || datasets.empty()) {
      throw InvalidArgument("methods, models and datasets must be non-empty");
    }
    std::set<std::string> seen;
    for (const auto& m : methods) {
      parse_method(m);
      if (!seen.insert(m).second) {
        throw InvalidArgument("duplicate method preset '" + m + "'");
      }
    }
    if (varshap_samples < 2) {
      throw InvalidArgument("varshap_samples must be >= 2");
    }
  }
};

inline json metric_config_to_json(const metrics::MetricConfig& c) {
  return json{{"runs", c.runs},
              {"subset_size", c.subset_size},
              {"perturb_baseline", metrics::to_string(c.perturb_baseline)},
              {"n_metric_samples", c.n_metric_samples},
              {"noise_std", c.noise_std},
              {"lower_bound", c.lower_bound},
              {"epsilon", c.epsilon}};
}

inline json config_to_json(const BenchmarkConfig& c) {
  return json{{"methods", c.methods},
              {"models", c.models},
              {"datasets", c.datasets},
              {"n_instances", c.n_instances},
              {"master_seed", c.master_seed},
              {"metric_cfg", metric_config_to_json(c.metric_cfg)},
              {"varshap_samples", c.varshap_samples},
              {"varshap_coalitions", c.varshap_coalitions},
              {"exact_max_d", c.exact_max_d},
              {"kernelshap_coalitions", c.kernelshap_coalitions},
              {"kernelshap_background", c.kernelshap_background},
              {"lime_samples", c.lime_samples},
              {"workers", c.workers}};
}

namespace detail {

template <class T>
void read_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    out = j.at(key).get<T>();
  }
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> known,
                           const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ParseError(where + ": unknown field '" + key + "'");
    }
  }
}

}  // namespace detail

/// Parses a benchmark config; absent fields keep their defaults.
inline BenchmarkConfig config_from_json(const json& j) {
  if (!j.is_object()) {
    throw ParseError("benchmark config must be a JSON object");
  }
  BenchmarkConfig c;
  try {
    detail::reject_unknown(j,
                           {"methods", "models", "datasets", "n_instances", "master_seed",
                            "metric_cfg", "varshap_samples", "varshap_coalitions", "exact_max_d",
                            "kernelshap_coalitions", "kernelshap_background", "lime_samples",
                            "workers"},
                           "benchmark config");
    detail::read_field(j, "methods", c.methods);
    detail::read_field(j, "models", c.models);
    detail::read_field(j, "datasets", c.datasets);
    detail::read_field(j, "n_instances", c.n_instances);
    detail::read_field(j, "master_seed", c.master_seed);
    detail::read_field(j, "varshap_samples", c.varshap_samples);
    detail::read_field(j, "varshap_coalitions", c.varshap_coalitions);
    detail::read_field(j, "exact_max_d", c.exact_max_d);
    detail::read_field(j, "kernelshap_coalitions", c.kernelshap_coalitions);
    detail::read_field(j, "kernelshap_background", c.kernelshap_background);
    detail::read_field(j, "lime_samples", c.lime_samples);
    detail::read_field(j, "workers", c.workers);
    if (j.contains("metric_cfg")) {
      const auto& m = j.at("metric_cfg");
      detail::reject_unknown(m,
                             {"runs", "subset_size", "perturb_baseline", "n_metric_samples",
                              "noise_std", "lower_bound", "epsilon"},
                             "metric_cfg");
      auto& mc = c.metric_cfg;
      detail::read_field(m, "runs", mc.runs);
      detail::read_field(m, "subset_size", mc.subset_size);
      detail::read_field(m, "n_metric_samples", mc.n_metric_samples);
      detail::read_field(m, "noise_std", mc.noise_std);
      detail::read_field(m, "lower_bound", mc.lower_bound);
      detail::read_field(m, "epsilon", mc.epsilon);
      if (m.contains("perturb_baseline")) {
        mc.perturb_baseline = metrics::parse_baseline(m.at("perturb_baseline").get<std::string>());
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("benchmark config: ") + e.what());
  }
  c.validate();
  return c;
}

inline BenchmarkConfig load_config(const std::filesystem::path& path) {
  const auto text = read_file(path);
  try {
    return config_from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": invalid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Explanation context

/// Everything an explainer may use besides the model and the instance.
struct ExplainContext {
  /// Training rows: feature statistics and the data background.
  const Matrix* train = nullptr;
  /// Per-feature standard deviation of the training rows.
  Vector feature_std;
  const BenchmarkConfig* cfg = nullptr;
};

using MethodFn = std::function<Attribution(const Model&, const Instance&, const ExplainContext&,
                                           std::uint64_t seed)>;

struct NamedMethod {
  std::string id;
  MethodFn explain;
};

inline NamedMethod preset_method(const std::string& id) {
  const auto preset = parse_method(id);
  MethodFn fn;
  switch (preset.kind) {
    case MethodKind::varshap:
      fn = [preset](const Model& model, const Instance& x, const ExplainContext& ctx,
                    std::uint64_t seed) {
        VarianceGameConfig vc;
        vc.samples_per_coalition = ctx.cfg->varshap_samples;
        vc.workers = 1;
        const PerturbationSpec spec{ctx.feature_std, preset.sigma};
        if (x.size() <= ctx.cfg->exact_max_d) {
          return varshap_exact(model, x, spec, vc, seed);
        }
        return varshap_sampled(model, x, spec, vc, ctx.cfg->varshap_coalitions, seed);
      };
      break;
    case MethodKind::kernelshap:
      fn = [preset](const Model& model, const Instance& x, const ExplainContext& ctx,
                    std::uint64_t seed) {
        const auto bg = preset.background == BackgroundMode::zero_baseline
                            ? BackgroundSpec::zero()
                            : BackgroundSpec::data(*ctx.train, ctx.cfg->kernelshap_background);
        const std::size_t budget = std::max(ctx.cfg->kernelshap_coalitions, x.size() + 2);
        return kernelshap(model, x, bg, budget, seed, 1);
      };
      break;
    case MethodKind::lime:
      fn = [preset](const Model& model, const Instance& x, const ExplainContext& ctx,
                    std::uint64_t seed) {
        LimeConfig lc;
        lc.sparsity = preset.sparsity;
        lc.n_samples = std::max(ctx.cfg->lime_samples, x.size() + 2);
        return lime(model, x, PerturbationSpec{ctx.feature_std, 1.0}, lc, seed);
      };
      break;
  }
  return {id, std::move(fn)};
}

// ---------------------------------------------------------------------------
// Models and datasets

struct LoadedDataset {
  std::string name;
  Matrix rows;
  std::size_t train_rows = 0;
  /// Set for generated datasets; ground-truth models use it.
  std::optional<synth::Normalization> normalization;
};

inline LoadedDataset load_bench_dataset(const std::string& spec, std::uint64_t seed) {
  LoadedDataset out;
  out.name = spec;
  if (synth::is_dataset_name(spec)) {
    auto ds = synth::generate(spec, seed);
    out.rows = std::move(ds.data.rows);
    out.normalization = ds.normalization;
  } else {
    out.rows = load_dataset_if_target(spec, "Y").rows;
  }
  out.train_rows = synth::train_rows(out.rows.rows());
  if (out.train_rows < 2 || out.train_rows >= out.rows.rows()) {
    throw InvalidArgument("dataset '" + spec + "' is too small for an 80/20 split");
  }
  return out;
}

struct ModelEntry {
  std::string name;
  /// Ground-truth target dataset for "gtm:<dataset>" models.
  std::optional<std::string> gtm_dataset;
  std::optional<Model> model;
};

inline ModelEntry load_bench_model(const std::string& spec) {
  ModelEntry e;
  e.name = spec;
  const std::string prefix = "gtm:";
  if (spec.starts_with(prefix)) {
    const auto ds = spec.substr(prefix.size());
    if (!synth::is_dataset_name(ds)) {
      throw InvalidArgument("unknown ground-truth model '" + spec + "'");
    }
    e.gtm_dataset = ds;
  } else {
    e.model = load_model(spec);
  }
  return e;
}

/// Model as seen on a dataset's feature space, or nullopt if the pair is
/// not part of the grid.
inline std::optional<Model> bind_model(const ModelEntry& m, const LoadedDataset& ds) {
  if (m.gtm_dataset) {
    if (*m.gtm_dataset != ds.name || !ds.normalization) {
      return std::nullopt;
    }
    return synth::gtm(*m.gtm_dataset, *ds.normalization);
  }
  if (m.model->arity() != ds.rows.cols()) {
    return std::nullopt;
  }
  return *m.model;
}

/// Test-split row indices, evenly strided.
inline std::vector<std::size_t> select_instances(const LoadedDataset& ds, std::size_t n) {
  const std::size_t test = ds.rows.rows() - ds.train_rows;
  if (n > test) {
    throw InvalidArgument("n_instances=" + std::to_string(n) + " exceeds the " +
                          std::to_string(test) + " test rows of '" + ds.name + "'");
  }
  const std::size_t stride = test / n;
  std::vector<std::size_t> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = ds.train_rows + k * stride;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Running the grid

struct ScoreRow {
  std::string method;
  std::string model;
  std::string dataset;
  std::size_t instance_index = 0;
  std::string metric;
  double score = 0.0;
  bool flagged = false;

  auto key() const { return std::tie(method, model, dataset, instance_index, metric); }
};

/// First explained instance of each (method, model, dataset) cell, kept for
/// the attribution chart.
struct ExampleAttribution {
  std::string method;
  std::string model;
  std::string dataset;
  std::size_t instance_index = 0;
  Vector phi;
};

struct BenchmarkResult {
  std::vector<ScoreRow> scores;
  std::vector<ExampleAttribution> examples;
};

inline std::uint64_t cell_seed(std::uint64_t master, const std::string& model,
                               const std::string& dataset, std::size_t instance) {
  return derive_seed(derive_seed(derive_seed(master, model), dataset), instance);
}

inline BenchmarkResult run_benchmark(const BenchmarkConfig& cfg,
                                     const std::vector<NamedMethod>& methods) {
  if (cfg.n_instances < 1) {
    throw InvalidArgument("n_instances must be >= 1");
  }
  std::vector<LoadedDataset> datasets;
  for (const auto& d : cfg.datasets) {
    datasets.push_back(load_bench_dataset(d, cfg.master_seed));
  }
  std::vector<ModelEntry> models;
  for (const auto& m : cfg.models) {
    models.push_back(load_bench_model(m));
  }

  struct Pair {
    const ModelEntry* model;
    const LoadedDataset* dataset;
    Model bound;
    Matrix train;
    Vector feature_std;
    metrics::FeatureRange range;
    std::vector<std::size_t> instances;
  };
  std::vector<Pair> pairs;
  for (const auto& m : models) {
    bool any = false;
    for (const auto& ds : datasets) {
      auto bound = bind_model(m, ds);
      if (!bound) {
        continue;
      }
      any = true;
      Matrix train(0, ds.rows.cols());
      for (std::size_t r = 0; r < ds.train_rows; ++r) {
        train.append_row(ds.rows.row(r));
      }
      Dataset train_ds;
      train_ds.rows = train;
      const auto stats = estimate_feature_stats(train_ds);
      Vector sd(stats.size());
      for (std::size_t i = 0; i < sd.size(); ++i) {
        sd[i] = std::sqrt(stats[i]);
      }
      auto range = metrics::FeatureRange::of(train);
      pairs.push_back({&m, &ds, std::move(*bound), std::move(train), std::move(sd),
                       std::move(range), select_instances(ds, cfg.n_instances)});
    }
    if (!any) {
      throw InvalidArgument("model '" + m.name + "' matches none of the configured datasets");
    }
  }

  struct Cell {
    std::size_t method;
    std::size_t pair;
    std::size_t instance;
  };
  std::vector<Cell> cells;
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
      for (std::size_t k = 0; k < pairs[pi].instances.size(); ++k) {
        cells.push_back({mi, pi, k});
      }
    }
  }

  std::vector<std::vector<ScoreRow>> out(cells.size());
  std::vector<std::optional<Vector>> phis(cells.size());
  parallel_for(cells.size(), cfg.workers, [&](std::size_t c) {
    const auto& cell = cells[c];
    const auto& method = methods[cell.method];
    const auto& pair = pairs[cell.pair];
    const std::size_t row = pair.instances[cell.instance];
    const auto xs = pair.dataset->rows.row(row);
    const Instance x(xs.begin(), xs.end());
    const ExplainContext ctx{&pair.train, pair.feature_std, &cfg};
    const auto base_seed = cell_seed(cfg.master_seed, pair.model->name, pair.dataset->name, row);
    const auto explain_seed = derive_seed(base_seed, method.id);
    const auto metric_seed = derive_seed(base_seed, "metrics");

    metrics::MetricConfig mc = cfg.metric_cfg;
    if (x.size() >= 2) {
      mc.subset_size = std::min(mc.subset_size, x.size() - 1);
    }
    std::vector<metrics::NamedScore> scores;
    try {
      const auto phi = method.explain(pair.bound, x, ctx, explain_seed).phi;
      phis[c] = phi;
      const metrics::Explainer explainer = [&](std::span<const double> xp) {
        return method.explain(pair.bound, Instance(xp.begin(), xp.end()), ctx, explain_seed).phi;
      };
      scores = metrics::evaluate_all(pair.bound, x, phi, explainer, pair.range, mc, metric_seed);
    } catch (const Error&) {
      for (const auto& info : metrics::kMetrics) {
        scores.push_back({metrics::metric_name(info, mc), {std::nan(""), true}});
      }
    }
    for (const auto& s : scores) {
      out[c].push_back({method.id, pair.model->name, pair.dataset->name, row, s.metric,
                        s.score.flagged ? std::nan("") : s.score.value, s.score.flagged});
    }
  });

  BenchmarkResult result;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (auto& r : out[c]) {
      result.scores.push_back(std::move(r));
    }
    if (cells[c].instance == 0 && phis[c]) {
      const auto& pair = pairs[cells[c].pair];
      result.examples.push_back({methods[cells[c].method].id, pair.model->name,
                                 pair.dataset->name, pair.instances[0], *phis[c]});
    }
  }
  std::sort(result.scores.begin(), result.scores.end(),
            [](const ScoreRow& a, const ScoreRow& b) { return a.key() < b.key(); });
  return result;
}

inline BenchmarkResult run_benchmark(const BenchmarkConfig& cfg) {
  cfg.validate();
  std::vector<NamedMethod> methods;
  for (const auto& id : cfg.methods) {
    methods.push_back(preset_method(id));
  }
  return run_benchmark(cfg, methods);
}

inline std::string scores_to_csv(const std::vector<ScoreRow>& rows) {
  std::string out = "method,model,dataset,instance_index,metric,score,flagged\n";
  for (const auto& r : rows) {
    out += r.method + ',' + r.model + ',' + r.dataset + ',' + std::to_string(r.instance_index) +
           ',' + r.metric + ',' + (r.flagged ? std::string("nan") : format_double(r.score)) + ',' +
           (r.flagged ? "1" : "0") + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ranking

struct RankingTable {
  std::vector<std::string> methods;
  std::vector<std::string> metrics;
  std::map<std::string, metrics::Direction> directions;
  /// method -> metric -> median of the method's valid scores (NaN if none).
  std::map<std::string, std::map<std::string, double>> medians;
  std::map<std::string, std::map<std::string, double>> per_metric_ranks;
  std::map<std::string, double> aggregate;
  std::vector<std::string> excluded_metrics;

  friend bool operator==(const RankingTable& a, const RankingTable& b) {
    const auto same = [](double x, double y) {
      return x == y || (std::isnan(x) && std::isnan(y));
    };
    if (a.methods != b.methods || a.metrics != b.metrics || a.directions != b.directions ||
        a.per_metric_ranks != b.per_metric_ranks || a.aggregate != b.aggregate ||
        a.excluded_metrics != b.excluded_metrics || a.medians.size() != b.medians.size()) {
      return false;
    }
    for (const auto& [method, row] : a.medians) {
      const auto it = b.medians.find(method);
      if (it == b.medians.end() || it->second.size() != row.size()) {
        return false;
      }
      for (const auto& [metric, v] : row) {
        const auto jt = it->second.find(metric);
        if (jt == it->second.end() || !same(v, jt->second)) {
          return false;
        }
      }
    }
    return true;
  }
};

/// Direction of a metric by name, including "_black" variants.
inline metrics::Direction metric_direction(const std::string& name) {
  return metrics::metric_info(name).direction;
}

/// Ranks methods per metric by their median valid score, ties sharing the
/// average rank and methods without valid scores ranked last; the aggregate
/// is the mean rank over the metrics kept. A metric whose scores are all
/// flagged is excluded and reported through `warn`.
inline RankingTable rank_methods(
    const std::vector<ScoreRow>& scores,
    const std::function<metrics::Direction(const std::string&)>& direction = metric_direction,
    const std::function<void(const std::string&)>& warn = {}) {
  RankingTable t;
  std::map<std::string, std::map<std::string, std::vector<double>>> valid;
  std::set<std::string> all_metrics;
  for (const auto& r : scores) {
    if (std::find(t.methods.begin(), t.methods.end(), r.method) == t.methods.end()) {
      t.methods.push_back(r.method);
    }
    all_metrics.insert(r.metric);
    auto& bucket = valid[r.method][r.metric];
    if (!r.flagged) {
      bucket.push_back(r.score);
    }
  }
  if (t.methods.size() < 2) {
    throw InvalidArgument("ranking needs at least two methods");
  }
  std::sort(t.methods.begin(), t.methods.end());

  // Catalogue order for known metrics, then any others alphabetically.
  std::vector<std::string> ordered;
  for (const auto& info : metrics::kMetrics) {
    for (const auto& name : {std::string(info.name), std::string(info.name) + "_black"}) {
      if (all_metrics.erase(name) > 0) {
        ordered.push_back(name);
      }
    }
  }
  ordered.insert(ordered.end(), all_metrics.begin(), all_metrics.end());

  for (const auto& metric : ordered) {
    for (const auto& method : t.methods) {
      const auto it = valid[method].find(metric);
      if (it == valid[method].end()) {
        throw InvalidArgument("method '" + method + "' has no scores for metric '" + metric + "'");
      }
    }
    Vector key(t.methods.size());
    bool any_valid = false;
    const auto dir = direction(metric);
    for (std::size_t i = 0; i < t.methods.size(); ++i) {
      const auto& v = valid[t.methods[i]][metric];
      const double med = v.empty() ? std::nan("") : metrics::lower_median(v);
      t.medians[t.methods[i]][metric] = med;
      if (v.empty()) {
        key[i] = std::numeric_limits<double>::infinity();
      } else {
        any_valid = true;
        key[i] = dir == metrics::Direction::higher_better ? -med : med;
      }
    }
    if (!any_valid) {
      t.excluded_metrics.push_back(metric);
      for (const auto& method : t.methods) {
        t.medians[method].erase(metric);
      }
      if (warn) {
        warn("metric '" + metric + "' has only flagged scores and is excluded from the ranking");
      }
      continue;
    }
    t.metrics.push_back(metric);
    t.directions[metric] = dir;
    const auto ranks = metrics::average_ranks(key);
    for (std::size_t i = 0; i < t.methods.size(); ++i) {
      t.per_metric_ranks[t.methods[i]][metric] = ranks[i];
    }
  }
  for (const auto& method : t.methods) {
    double sum = 0.0;
    for (const auto& metric : t.metrics) {
      sum += t.per_metric_ranks[method][metric];
    }
    t.aggregate[method] =
        t.metrics.empty() ? std::nan("") : sum / static_cast<double>(t.metrics.size());
  }
  return t;
}

/// Mean of a method's ranks over the metrics of one family.
inline double family_rank(const RankingTable& t, const std::string& method,
                          std::string_view family) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& metric : t.metrics) {
    if (metrics::metric_info(metric).family == family) {
      sum += t.per_metric_ranks.at(method).at(metric);
      ++n;
    }
  }
  return n == 0 ? std::nan("") : sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Reports

/// One row per method: rank per metric, then the average rank.
inline std::string ranking_to_csv(const RankingTable& t) {
  std::string out = "method";
  for (const auto& m : t.metrics) {
    out += ',' + m;
  }
  out += ",average_rank\n";
  for (const auto& method : t.methods) {
    out += method;
    for (const auto& m : t.metrics) {
      out += ',' + format_double(t.per_metric_ranks.at(method).at(m));
    }
    out += ',' + format_double(t.aggregate.at(method)) + '\n';
  }
  return out;
}

inline json ranking_to_json(const RankingTable& t) {
  json j;
  j["methods"] = t.methods;
  j["metrics"] = t.metrics;
  j["excluded_metrics"] = t.excluded_metrics;
  json dirs = json::object();
  for (const auto& [m, d] : t.directions) {
    dirs[m] = metrics::to_string(d);
  }
  j["directions"] = dirs;
  json medians = json::object();
  for (const auto& [method, row] : t.medians) {
    json r = json::object();
    for (const auto& [metric, v] : row) {
      r[metric] = std::isnan(v) ? json(nullptr) : json(v);
    }
    medians[method] = r;
  }
  j["medians"] = medians;
  j["ranks"] = t.per_metric_ranks;
  j["aggregate"] = t.aggregate;
  return j;
}

inline RankingTable ranking_from_json(const json& j) {
  RankingTable t;
  try {
    t.methods = j.at("methods").get<std::vector<std::string>>();
    t.metrics = j.at("metrics").get<std::vector<std::string>>();
    t.excluded_metrics = j.at("excluded_metrics").get<std::vector<std::string>>();
    for (const auto& [m, d] : j.at("directions").items()) {
      const auto s = d.get<std::string>();
      if (s != "higher_better" && s != "lower_better") {
        throw ParseError("ranking: unknown direction '" + s + "'");
      }
      t.directions[m] =
          s == "higher_better" ? metrics::Direction::higher_better
                               : metrics::Direction::lower_better;
    }
    for (const auto& [method, row] : j.at("medians").items()) {
      for (const auto& [metric, v] : row.items()) {
        t.medians[method][metric] = v.is_null() ? std::nan("") : v.get<double>();
      }
    }
    t.per_metric_ranks =
        j.at("ranks").get<std::map<std::string, std::map<std::string, double>>>();
    t.aggregate = j.at("aggregate").get<std::map<std::string, double>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("ranking: ") + e.what());
  }
  return t;
}

inline RankingTable load_ranking(const std::filesystem::path& path) {
  const auto text = read_file(path);
  try {
    return ranking_from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": invalid JSON: " + e.what());
  }
}

/// Horizontal bars of the average rank, one per method.
inline std::string ranking_to_svg(const RankingTable& t) {
  if (t.methods.empty()) {
    throw InvalidArgument("cannot render an empty ranking");
  }
  svg::Panel panel{"Average rank (lower is better)", {}};
  for (const auto& method : t.methods) {
    panel.bars.push_back({method, t.aggregate.at(method)});
  }
  return svg::bar_chart("Method ranking", {panel});
}

inline std::string examples_to_svg(const std::vector<ExampleAttribution>& examples) {
  std::vector<svg::Panel> panels;
  for (const auto& e : examples) {
    panels.push_back(svg::attribution_panel(
        e.method + " | " + e.model + " | " + e.dataset + " | row " +
            std::to_string(e.instance_index),
        e.phi, {}));
  }
  return svg::bar_chart("Attributions of the first explained instance", panels);
}

enum class ReportFormat { csv, json, svg };

inline void emit_report(const RankingTable& t, ReportFormat format,
                        const std::filesystem::path& path) {
  if (t.methods.empty()) {
    throw InvalidArgument("cannot emit an empty ranking");
  }
  switch (format) {
    case ReportFormat::csv:
      write_file_atomic(path, ranking_to_csv(t));
      break;
    case ReportFormat::json:
      write_file_atomic(path, ranking_to_json(t).dump(2) + "\n");
      break;
    case ReportFormat::svg:
      write_file_atomic(path, ranking_to_svg(t));
      break;
  }
}

}  // namespace varshap::bench
