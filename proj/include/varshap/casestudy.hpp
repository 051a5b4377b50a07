#pragma once

// Case studies on the synthetic datasets: attributions of the ground-truth
// models at a fixed raw-space point, for every explainer.
//
//   case 1: point (0, 0), the centre of cluster A, on datasets 1 and 2
//   case 2: point (0.3, -0.2, 0), next to the |x1 + x2| kink, on dataset 3

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "varshap/baselines.hpp"
#include "varshap/core.hpp"
#include "varshap/io.hpp"
#include "varshap/perturb.hpp"
#include "varshap/svg.hpp"
#include "varshap/synth.hpp"
#include "varshap/varshap.hpp"

namespace varshap::casestudy {

struct CaseConfig {
  int case_id = 1;
  std::uint64_t data_seed = 0;
  std::uint64_t master_seed = 0;
  double varshap_sigma = 0.3;
  std::size_t varshap_samples = 100000;
  std::size_t lime_samples = 1000;
  std::size_t workers = 0;
};

struct CaseRow {
  std::string dataset;
  std::string method;
  Attribution attribution;
};

struct CaseResult {
  Vector raw_point;
  std::vector<std::string> feature_names;
  std::vector<CaseRow> rows;
};

inline Vector case_point(int case_id) {
  if (case_id == 1) {
    return {0.0, 0.0};
  }
  if (case_id == 2) {
    return {0.3, -0.2, 0.0};
  }
  throw InvalidArgument("--case must be 1 or 2 (got " + std::to_string(case_id) + ")");
}

inline std::vector<std::string> case_datasets(int case_id) {
  if (case_id == 1) {
    return {"dataset1", "dataset2"};
  }
  if (case_id == 2) {
    return {"dataset3"};
  }
  throw InvalidArgument("--case must be 1 or 2 (got " + std::to_string(case_id) + ")");
}

/// Explains the case point in normalized space with VARSHAP, KernelSHAP over
/// the full dataset as background, and LIME.
inline CaseResult run_case(const CaseConfig& cfg) {
  CaseResult out;
  out.raw_point = case_point(cfg.case_id);
  for (const auto& name : case_datasets(cfg.case_id)) {
    const auto ds = synth::generate(name, cfg.data_seed);
    out.feature_names = ds.data.feature_names;
    const auto model = synth::gtm(name, ds.normalization);
    const auto x = ds.normalization.normalize(out.raw_point);
    const auto variances = estimate_feature_stats(ds.data);

    VarianceGameConfig vc;
    vc.samples_per_coalition = cfg.varshap_samples;
    vc.workers = cfg.workers;
    out.rows.push_back({name, "varshap",
                        varshap_exact(model, x, PerturbationSpec::from_variances(variances,
                                                                                 cfg.varshap_sigma),
                                      vc, cfg.master_seed)});
    out.rows.push_back({name, "kernelshap",
                        kernelshap(model, x, BackgroundSpec::data(ds.data.rows, 0),
                                   std::size_t{1} << x.size(), cfg.master_seed, cfg.workers)});
    LimeConfig lc;
    lc.n_samples = cfg.lime_samples;
    out.rows.push_back({name, "lime",
                        lime(model, x, PerturbationSpec::from_variances(variances, 1.0), lc,
                             cfg.master_seed)});
  }
  return out;
}

inline std::string to_csv(const CaseResult& r) {
  std::string out = "dataset,method,feature,phi\n";
  for (const auto& row : r.rows) {
    for (std::size_t i = 0; i < row.attribution.phi.size(); ++i) {
      out += row.dataset + ',' + row.method + ',' + r.feature_names[i] + ',' +
             format_double(row.attribution.phi[i]) + '\n';
    }
  }
  return out;
}

inline std::string to_svg(const CaseResult& r, int case_id) {
  std::vector<svg::Panel> panels;
  for (const auto& row : r.rows) {
    panels.push_back(svg::attribution_panel(row.method + " | gtm:" + row.dataset,
                                            row.attribution.phi, r.feature_names));
  }
  std::string point;
  for (std::size_t i = 0; i < r.raw_point.size(); ++i) {
    point += (i ? ", " : "") + format_double(r.raw_point[i]);
  }
  return svg::bar_chart("Case study " + std::to_string(case_id) + ": attributions at [" + point +
                            "]",
                        panels);
}

}  // namespace varshap::casestudy
