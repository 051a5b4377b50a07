// Command-line front end.
//
//   varshap explain    attribution for one instance
//   varshap metrics    metric report for a saved attribution
//   varshap benchmark  method grid, scores and ranking
//   varshap casestudy  case-study attributions as CSV + SVG
//   varshap gen        synthetic dataset CSV
//
// Exit codes: 0 success, 2 usage or input error, 3 computation failure.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "varshap/all.hpp"

namespace fs = std::filesystem;
using namespace varshap;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitCompute = 3;

struct UsageError : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

std::uint64_t default_seed() {
  const char* env = std::getenv("VARSHAP_SEED");
  if (env == nullptr || *env == '\0') {
    return 0;
  }
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(env, &pos, 10);
    if (pos != std::string(env).size()) {
      throw std::invalid_argument("trailing characters");
    }
    return v;
  } catch (const std::exception&) {
    throw UsageError("VARSHAP_SEED must be an unsigned integer, got '" + std::string(env) + "'");
  }
}

Vector parse_vector(const std::string& text, const std::string& flag) {
  Vector out;
  for (const auto cell : varshap::detail::split_csv_line(text)) {
    const auto v = varshap::detail::parse_number(cell);
    if (!v) {
      throw UsageError(flag + ": '" + std::string(cell) + "' is not a finite number");
    }
    out.push_back(*v);
  }
  return out;
}

std::string join_vector(std::span<const double> v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out += (i ? "," : "") + format_double(v[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared model / data / method options

struct Inputs {
  std::string model_path;
  std::string gtm;
  std::string gtm_normalization;
  std::string data_path;
  std::string target = "Y";

  void add(CLI::App& app) {
    auto* m = app.add_option("--model", model_path, "Model JSON file");
    auto* g = app.add_option("--gtm", gtm, "Ground-truth model: dataset1, dataset2 or dataset3");
    m->excludes(g);
    app.add_option("--gtm-normalization", gtm_normalization,
                   "Normalization JSON; the ground-truth model then takes normalized inputs");
    app.add_option("--data", data_path, "CSV dataset (feature statistics, background rows)")
        ->required();
    app.add_option("--target", target, "Target column to drop from the features if present");
  }

  Model model() const {
    if (!model_path.empty()) {
      return load_model(model_path);
    }
    if (gtm.empty()) {
      throw UsageError("one of --model or --gtm is required");
    }
    if (!synth::is_dataset_name(gtm)) {
      throw UsageError("--gtm must be dataset1, dataset2 or dataset3 (got '" + gtm + "')");
    }
    if (!gtm_normalization.empty()) {
      try {
        return synth::gtm(gtm, normalization_from_json(json::parse(read_file(gtm_normalization))));
      } catch (const json::exception& e) {
        throw ParseError(gtm_normalization + ": " + e.what());
      }
    }
    return synth::gtm(gtm);
  }

  std::string model_label() const { return model_path.empty() ? "gtm:" + gtm : model_path; }

  Dataset data() const { return load_dataset_if_target(data_path, target); }
};

struct MethodOptions {
  std::string method;
  std::optional<double> sigma;
  std::size_t samples = 10000;
  std::size_t coalitions = 0;
  bool unpaired = false;
  std::string sign = "reduction_positive";
  std::size_t error_batches = 0;
  std::string baseline = "data";
  std::size_t n_background = 100;
  double sparsity = 0.0;
  double kernel_width = 0.0;
  std::size_t lime_samples = 1000;
  std::size_t workers = 0;

  void add(CLI::App& app) {
    app.add_option("--method", method, "varshap, kernelshap or lime")
        ->required()
        ->check(CLI::IsMember({"varshap", "kernelshap", "lime"}));
    app.add_option("--sigma", sigma,
                   "Perturbation scale in feature standard deviations (varshap 0.6, lime 1.0)");
    app.add_option("--samples", samples, "VARSHAP Monte-Carlo samples per coalition");
    app.add_option("--coalitions", coalitions,
                   "Coalition budget; 0 enumerates all coalitions when d <= 10");
    app.add_flag("--unpaired", unpaired, "Independent samples per coalition");
    app.add_option("--sign-convention", sign, "reduction_positive or eq1_literal")
        ->check(CLI::IsMember({"reduction_positive", "eq1_literal"}));
    app.add_option("--error-batches", error_batches, "Batches for VARSHAP standard errors");
    app.add_option("--baseline", baseline, "KernelSHAP background: data or zero")
        ->check(CLI::IsMember({"data", "zero"}));
    app.add_option("--n-background", n_background, "KernelSHAP background rows; 0 uses all");
    app.add_option("--sparsity", sparsity, "LIME L1 coefficient");
    app.add_option("--kernel-width", kernel_width, "LIME kernel width; 0 uses 0.75 sqrt(d)");
    app.add_option("--lime-samples", lime_samples, "LIME neighbourhood size");
    app.add_option("--workers", workers, "Worker threads; 0 uses every hardware thread");
  }

  void validate() const {
    if (sigma && !(*sigma > 0.0 && std::isfinite(*sigma))) {
      throw UsageError("--sigma must be a finite number > 0");
    }
    if (samples < 2) {
      throw UsageError("--samples must be >= 2");
    }
    if (!(sparsity >= 0.0) || !std::isfinite(sparsity)) {
      throw UsageError("--sparsity must be >= 0");
    }
    if (!(kernel_width >= 0.0) || !std::isfinite(kernel_width)) {
      throw UsageError("--kernel-width must be >= 0");
    }
  }

  double sigma_or_default() const { return sigma.value_or(method == "lime" ? 1.0 : 0.6); }

  /// Restores the options recorded in an attribution's parameters.
  static MethodOptions from_attribution(const Attribution& a) {
    MethodOptions o;
    o.method = a.method;
    const auto count = [&](const char* key, std::size_t fallback) {
      return static_cast<std::size_t>(a.param_number(key, static_cast<double>(fallback)));
    };
    if (a.params.contains("sigma")) {
      o.sigma = a.param_number("sigma", 0.0);
    }
    if (a.method == "varshap") {
      o.samples = count("samples", o.samples);
      o.coalitions = count("coalition_budget", 0);
      o.unpaired = a.param_number("paired_sampling", 1.0) == 0.0;
      o.sign = a.param_string("sign_convention", o.sign);
    } else if (a.method == "kernelshap") {
      o.coalitions = count("coalition_budget", 0);
      o.baseline = a.param_string("baseline", o.baseline);
      o.n_background = count("n_background_requested", o.n_background);
    } else if (a.method == "lime") {
      o.sparsity = a.param_number("sparsity", o.sparsity);
      o.kernel_width = a.param_number("kernel_width", o.kernel_width);
      o.lime_samples = count("samples", o.lime_samples);
    } else {
      throw ParseError("attribution has unknown method '" + a.method + "'");
    }
    return o;
  }

  Attribution explain(const Model& model, const Instance& x, const Dataset& data,
                      std::uint64_t seed) const {
    const std::size_t d = x.size();
    if (data.d() != d) {
      throw UsageError("--data has " + std::to_string(data.d()) + " features, instance has " +
                       std::to_string(d));
    }
    const auto variances = estimate_feature_stats(data);
    Attribution a;
    if (method == "varshap") {
      VarianceGameConfig vc;
      vc.samples_per_coalition = samples;
      vc.paired_sampling = !unpaired;
      vc.sign_convention = parse_sign_convention(sign);
      vc.workers = workers;
      vc.error_batches = error_batches;
      const auto spec = PerturbationSpec::from_variances(variances, sigma_or_default());
      if (coalitions == 0) {
        if (d > 10) {
          throw UsageError("--coalitions is required when d > 10");
        }
        a = varshap_exact(model, x, spec, vc, seed);
      } else {
        a = varshap_sampled(model, x, spec, vc, coalitions, seed);
      }
    } else if (method == "kernelshap") {
      const auto bg = baseline == "zero" ? BackgroundSpec::zero()
                                         : BackgroundSpec::data(data.rows, n_background);
      std::size_t budget = coalitions;
      if (budget == 0) {
        if (d > 10) {
          throw UsageError("--coalitions is required when d > 10");
        }
        budget = std::size_t{1} << d;
      }
      a = kernelshap(model, x, bg, budget, seed, workers);
      a.params["n_background_requested"] = static_cast<double>(n_background);
    } else {
      LimeConfig lc;
      lc.sparsity = sparsity;
      lc.kernel_width = kernel_width;
      lc.n_samples = lime_samples;
      a = lime(model, x, PerturbationSpec::from_variances(variances, sigma_or_default()), lc, seed);
    }
    return a;
  }
};

Instance resolve_instance(const std::optional<std::string>& inline_text,
                          const std::optional<std::size_t>& index, const Dataset& data) {
  if (inline_text.has_value() == index.has_value()) {
    throw UsageError("exactly one of --instance or --instance-index is required");
  }
  if (inline_text) {
    return parse_vector(*inline_text, "--instance");
  }
  if (*index >= data.n()) {
    throw UsageError("--instance-index " + std::to_string(*index) + " is out of range (" +
                     std::to_string(data.n()) + " rows)");
  }
  const auto row = data.rows.row(*index);
  return Instance(row.begin(), row.end());
}

// ---------------------------------------------------------------------------
// Verbs

int cmd_explain(Inputs& in, MethodOptions& mo, const std::optional<std::string>& instance,
                const std::optional<std::size_t>& index, std::uint64_t seed,
                const std::string& output, const std::string& svg_path) {
  mo.validate();
  const auto model = in.model();
  const auto data = in.data();
  const auto x = resolve_instance(instance, index, data);
  if (x.size() != model.arity()) {
    throw UsageError("instance has " + std::to_string(x.size()) + " values, model expects " +
                     std::to_string(model.arity()));
  }
  auto a = mo.explain(model, x, data, seed);
  a.params["coalition_budget"] = static_cast<double>(mo.coalitions);
  a.params["instance"] = join_vector(x);
  if (index) {
    a.params["instance_index"] = static_cast<double>(*index);
  }
  save_attribution(output, a);
  if (!svg_path.empty()) {
    write_file_atomic(svg_path,
                      svg::bar_chart(a.method + " attribution for " + in.model_label(),
                                     {svg::attribution_panel("instance [" + join_vector(x) + "]",
                                                             a.phi, data.feature_names)}));
  }
  return 0;
}

int cmd_metrics(Inputs& in, const std::string& attribution_path, const std::string& output,
                const std::string& baseline, std::optional<std::uint64_t> seed_override) {
  const auto model = in.model();
  const auto data = in.data();
  const auto a = load_attribution(attribution_path);
  if (!a.params.contains("instance")) {
    throw UsageError(attribution_path + " does not record its instance; re-run explain");
  }
  const auto x = parse_vector(a.param_string("instance", ""), "instance");
  if (x.size() != model.arity() || a.phi.size() != x.size()) {
    throw UsageError("attribution, model and instance disagree on the number of features");
  }
  const auto opts = MethodOptions::from_attribution(a);
  const std::uint64_t seed = a.seed;
  metrics::MetricConfig mc;
  mc.perturb_baseline = metrics::parse_baseline(baseline);
  if (x.size() >= 2) {
    mc.subset_size = std::min(mc.subset_size, x.size() - 1);
  }
  const metrics::Explainer explainer = [&](std::span<const double> xp) {
    return opts.explain(model, Instance(xp.begin(), xp.end()), data, seed).phi;
  };
  const auto range = metrics::FeatureRange::of(data.rows);
  const auto scores = metrics::evaluate_all(model, x, a.phi, explainer, range, mc,
                                            seed_override.value_or(derive_seed(seed, "metrics")));
  std::string index;
  if (a.params.contains("instance_index")) {
    index = std::to_string(static_cast<std::size_t>(a.param_number("instance_index", 0.0)));
  }
  std::string csv = "metric_name,method,model,dataset,instance_index,score,flagged\n";
  for (const auto& s : scores) {
    csv += s.metric + ',' + a.method + ',' + in.model_label() + ',' + in.data_path + ',' + index +
           ',' + (s.score.flagged ? std::string("nan") : format_double(s.score.value)) + ',' +
           (s.score.flagged ? "1" : "0") + '\n';
  }
  write_file_atomic(output, csv);
  return 0;
}

int cmd_benchmark(const std::string& config_path, const std::string& out_dir,
                  std::optional<std::size_t> n_instances, std::optional<std::uint64_t> seed,
                  std::optional<std::size_t> workers) {
  auto cfg = bench::load_config(config_path);
  if (n_instances) {
    cfg.n_instances = *n_instances;
  }
  if (seed) {
    cfg.master_seed = *seed;
  }
  if (workers) {
    cfg.workers = *workers;
  }
  cfg.validate();
  fs::create_directories(out_dir);
  const auto result = bench::run_benchmark(cfg);
  const auto warn = [](const std::string& w) { std::cerr << "warning: " << w << '\n'; };
  const auto table = bench::rank_methods(result.scores, bench::metric_direction, warn);
  const fs::path dir(out_dir);
  write_file_atomic(dir / "scores.csv", bench::scores_to_csv(result.scores));
  bench::emit_report(table, bench::ReportFormat::csv, dir / "ranking.csv");
  bench::emit_report(table, bench::ReportFormat::json, dir / "ranking.json");
  bench::emit_report(table, bench::ReportFormat::svg, dir / "ranking.svg");
  write_file_atomic(dir / "attributions.svg", bench::examples_to_svg(result.examples));
  return 0;
}

int cmd_casestudy(casestudy::CaseConfig cfg, const std::string& out_dir) {
  if (cfg.case_id != 1 && cfg.case_id != 2) {
    throw UsageError("--case must be 1 or 2 (got " + std::to_string(cfg.case_id) + ")");
  }
  if (!(cfg.varshap_sigma > 0.0)) {
    throw UsageError("--sigma must be > 0");
  }
  fs::create_directories(out_dir);
  const auto result = casestudy::run_case(cfg);
  const fs::path dir(out_dir);
  const auto stem = "casestudy" + std::to_string(cfg.case_id);
  write_file_atomic(dir / (stem + ".csv"), casestudy::to_csv(result));
  write_file_atomic(dir / (stem + ".svg"), casestudy::to_svg(result, cfg.case_id));
  return 0;
}

int cmd_gen(const std::string& dataset, std::uint64_t seed, const std::string& output,
            bool normalized) {
  std::string name = dataset;
  if (name == "1" || name == "2" || name == "3") {
    name = "dataset" + name;
  }
  if (!synth::is_dataset_name(name)) {
    throw UsageError("--dataset must be 1, 2, 3 or datasetK (got '" + dataset + "')");
  }
  auto ds = synth::generate(name, seed);
  if (!normalized) {
    ds.data.rows = ds.raw;
  }
  save_dataset(output, ds.data);
  write_file_atomic(output + ".normalization.json",
                    normalization_to_json(ds.normalization).dump(2) + "\n");
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Variance-based Shapley feature attribution"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Help for every verb");

  std::optional<std::uint64_t> seed_flag;

  // explain
  auto* explain = app.add_subcommand("explain", "Attribution for one instance");
  Inputs ex_in;
  MethodOptions ex_mo;
  std::optional<std::string> ex_instance;
  std::optional<std::size_t> ex_index;
  std::string ex_out;
  std::string ex_svg;
  ex_in.add(*explain);
  ex_mo.add(*explain);
  explain->add_option("--instance", ex_instance, "Comma-separated feature values");
  explain->add_option("--instance-index", ex_index, "Row of --data to explain (0-based)");
  explain->add_option("--seed", seed_flag, "Master seed (default: VARSHAP_SEED or 0)");
  explain->add_option("-o,--output", ex_out, "Attribution JSON")->required();
  explain->add_option("--svg", ex_svg, "Optional attribution bar chart");

  // metrics
  auto* metrics_cmd = app.add_subcommand("metrics", "Metric report for a saved attribution");
  Inputs me_in;
  std::string me_attr;
  std::string me_out;
  std::string me_baseline = "uniform";
  me_in.add(*metrics_cmd);
  metrics_cmd->add_option("--attribution", me_attr, "Attribution JSON from explain")->required();
  metrics_cmd->add_option("-o,--output", me_out, "Report CSV")->required();
  metrics_cmd->add_option("--perturb-baseline", me_baseline, "uniform or black")
      ->check(CLI::IsMember({"uniform", "black"}));
  metrics_cmd->add_option("--seed", seed_flag,
                          "Metric seed (default: derived from the attribution)");

  // benchmark
  auto* benchmark = app.add_subcommand("benchmark", "Method grid, scores and ranking");
  std::string be_config;
  std::string be_out;
  std::optional<std::size_t> be_instances;
  std::optional<std::size_t> be_workers;
  benchmark->add_option("-c,--config", be_config, "Benchmark config JSON")->required();
  benchmark->add_option("-o,--output", be_out, "Output directory")->required();
  benchmark->add_option("--n-instances", be_instances, "Override n_instances");
  benchmark->add_option("--seed", seed_flag, "Override master_seed");
  benchmark->add_option("--workers", be_workers, "Override workers");

  // casestudy
  auto* cs = app.add_subcommand("casestudy", "Case-study attributions as CSV + SVG");
  casestudy::CaseConfig cs_cfg;
  std::string cs_out;
  std::optional<std::uint64_t> cs_data_seed;
  cs->add_option("--case", cs_cfg.case_id, "1 or 2")->required();
  cs->add_option("-o,--output", cs_out, "Output directory")->required();
  cs->add_option("--seed", seed_flag, "Master seed (default: VARSHAP_SEED or 0)");
  cs->add_option("--data-seed", cs_data_seed, "Dataset seed (default: the master seed)");
  cs->add_option("--sigma", cs_cfg.varshap_sigma, "VARSHAP perturbation scale");
  cs->add_option("--samples", cs_cfg.varshap_samples, "VARSHAP samples per coalition");
  cs->add_option("--workers", cs_cfg.workers, "Worker threads; 0 uses every hardware thread");

  // gen
  auto* gen = app.add_subcommand("gen", "Synthetic dataset CSV");
  std::string gen_dataset;
  std::string gen_out;
  bool gen_normalized = false;
  gen->add_option("--dataset", gen_dataset, "1, 2 or 3")->required();
  gen->add_option("--seed", seed_flag, "Seed (default: VARSHAP_SEED or 0)");
  gen->add_option("--write,-o,--output", gen_out, "CSV path")->required();
  gen->add_flag("--normalized", gen_normalized, "Write z-scored features instead of raw ones");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*explain) {
      return cmd_explain(ex_in, ex_mo, ex_instance, ex_index, seed_flag.value_or(default_seed()),
                         ex_out, ex_svg);
    }
    if (*metrics_cmd) {
      return cmd_metrics(me_in, me_attr, me_out, me_baseline, seed_flag);
    }
    if (*benchmark) {
      return cmd_benchmark(be_config, be_out, be_instances, seed_flag, be_workers);
    }
    if (*cs) {
      cs_cfg.master_seed = seed_flag.value_or(default_seed());
      cs_cfg.data_seed = cs_data_seed.value_or(cs_cfg.master_seed);
      return cmd_casestudy(cs_cfg, cs_out);
    }
    if (*gen) {
      return cmd_gen(gen_dataset, seed_flag.value_or(default_seed()), gen_out, gen_normalized);
    }
  } catch (const ComputeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCompute;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCompute;
  }
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
