#pragma once

// Attribution-quality metrics.
//
//   faithfulness: faithfulness_correlation, faithfulness_estimate,
//                 monotonicity_correlation            (higher is better)
//   robustness:   local_lipschitz_estimate, max_sensitivity,
//                 relative_input_stability            (lower is better)
//   complexity:   sparseness (higher is better), complexity and
//                 effective_complexity                (lower is better)
//
// Scores that are undefined for an input (constant series, all-zero
// attributions) come back flagged and must not be averaged in.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "varshap/core.hpp"
#include "varshap/rng.hpp"

namespace varshap::metrics {

enum class Baseline { black, uniform };
enum class Direction { higher_better, lower_better };

inline std::string to_string(Baseline b) { return b == Baseline::black ? "black" : "uniform"; }

inline Baseline parse_baseline(const std::string& s) {
  if (s == "black") {
    return Baseline::black;
  }
  if (s == "uniform") {
    return Baseline::uniform;
  }
  throw InvalidArgument("unknown perturbation baseline '" + s + "'");
}

inline std::string to_string(Direction d) {
  return d == Direction::higher_better ? "higher_better" : "lower_better";
}

struct MetricConfig {
  std::size_t runs = 100;
  std::size_t subset_size = 6;
  Baseline perturb_baseline = Baseline::uniform;
  std::size_t n_metric_samples = 10;
  double noise_std = 0.2;
  double lower_bound = 0.02;
  double epsilon = 0.05;
  /// Replaces zero denominators in relative_input_stability.
  double stability_eps = 1e-6;
};

/// Observed per-feature range, used by the "uniform" baseline. The "black"
/// baseline is the all-zeros vector (the mean in standardized units).
struct FeatureRange {
  Vector min;
  Vector max;

  std::size_t d() const { return min.size(); }

  static FeatureRange of(const Matrix& rows) {
    if (rows.rows() == 0) {
      throw InvalidArgument("feature range needs at least one row");
    }
    FeatureRange fr{Vector(rows.cols(), 0.0), Vector(rows.cols(), 0.0)};
    for (std::size_t c = 0; c < rows.cols(); ++c) {
      double lo = rows(0, c);
      double hi = rows(0, c);
      for (std::size_t r = 0; r < rows.rows(); ++r) {
        lo = std::min(lo, rows(r, c));
        hi = std::max(hi, rows(r, c));
      }
      fr.min[c] = lo;
      fr.max[c] = hi;
    }
    return fr;
  }

  static FeatureRange symmetric(std::size_t d, double half_width) {
    return {Vector(d, -half_width), Vector(d, half_width)};
  }
};

struct Score {
  double value = 0.0;
  bool flagged = false;
};

/// Re-invocable explainer: attribution at an arbitrary point.
using Explainer = std::function<Vector(std::span<const double>)>;

// ---------------------------------------------------------------------------
// Statistics helpers

inline Score pearson(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  if (n != b.size() || n < 2) {
    return {0.0, true};
  }
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  // Relative threshold: series that are constant up to rounding are degenerate.
  const auto scale = [n](std::span<const double> v, double m) {
    double s = 0.0;
    for (double x : v) {
      s = std::max(s, std::abs(x));
    }
    return std::max(s, std::abs(m)) * std::max(s, std::abs(m)) * static_cast<double>(n) * 1e-24;
  };
  if (saa <= scale(a, ma) || sbb <= scale(b, mb)) {
    return {0.0, true};
  }
  const double r = sab / std::sqrt(saa * sbb);
  return {std::clamp(r, -1.0, 1.0), false};
}

/// Ranks starting at 1, ties sharing their average rank.
inline Vector average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return v[i] < v[j]; });
  Vector ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) {
      ++j;
    }
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      ranks[order[k]] = r;
    }
    i = j + 1;
  }
  return ranks;
}

inline Score spearman(std::span<const double> a, std::span<const double> b) {
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

/// Median of the values; the lower middle element for even counts.
inline double lower_median(std::vector<double> v) {
  if (v.empty()) {
    throw InvalidArgument("median of an empty set");
  }
  const std::size_t k = (v.size() - 1) / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

namespace detail {

inline double baseline_value(const FeatureRange& range, Baseline baseline, std::size_t i,
                             RandomStream& rng) {
  if (baseline == Baseline::black) {
    return 0.0;
  }
  return rng.uniform(range.min[i], range.max[i]);
}

inline void check_dims(const Model& model, std::span<const double> x, std::span<const double> phi,
                       const FeatureRange& range) {
  if (model.arity() != x.size() || phi.size() != x.size() || range.d() != x.size()) {
    throw InvalidArgument("metric inputs disagree on the number of features");
  }
}

inline double l2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += (a[i] - b[i]) * (a[i] - b[i]);
  }
  return std::sqrt(s);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Faithfulness

/// Pearson correlation, over random feature subsets, between the summed
/// attribution of the subset and the output drop when the subset is replaced
/// by the baseline.
inline Score faithfulness_correlation(const Model& model, std::span<const double> x,
                                      std::span<const double> phi, const FeatureRange& range,
                                      const MetricConfig& cfg, RandomStream& rng) {
  detail::check_dims(model, x, phi, range);
  const std::size_t d = x.size();
  if (cfg.subset_size == 0 || cfg.subset_size > d) {
    throw InvalidArgument("subset_size must be in [1, d]; got " + std::to_string(cfg.subset_size) +
                          " for d=" + std::to_string(d));
  }
  const double fx = model(x);
  Vector attributed(cfg.runs);
  Vector drop(cfg.runs);
  std::vector<std::size_t> idx(d);
  Vector xp(x.begin(), x.end());
  for (std::size_t run = 0; run < cfg.runs; ++run) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::copy(x.begin(), x.end(), xp.begin());
    double sum = 0.0;
    for (std::size_t k = 0; k < cfg.subset_size; ++k) {
      std::swap(idx[k], idx[k + rng.below(d - k)]);
      const std::size_t i = idx[k];
      xp[i] = detail::baseline_value(range, cfg.perturb_baseline, i, rng);
      sum += phi[i];
    }
    attributed[run] = sum;
    drop[run] = fx - model(xp);
  }
  return pearson(attributed, drop);
}

/// Pearson correlation between phi_i and the output drop when feature i alone
/// is replaced by the baseline.
inline Score faithfulness_estimate(const Model& model, std::span<const double> x,
                                   std::span<const double> phi, const FeatureRange& range,
                                   const MetricConfig& cfg, RandomStream& rng) {
  detail::check_dims(model, x, phi, range);
  const std::size_t d = x.size();
  if (d < 2) {
    throw InvalidArgument("faithfulness_estimate needs at least 2 features");
  }
  const double fx = model(x);
  Vector drop(d);
  Vector xp(x.begin(), x.end());
  for (std::size_t i = 0; i < d; ++i) {
    xp[i] = detail::baseline_value(range, cfg.perturb_baseline, i, rng);
    drop[i] = fx - model(xp);
    xp[i] = x[i];
  }
  return pearson(phi, drop);
}

/// Spearman correlation between |phi_i| and the mean squared output change
/// when feature i alone is replaced by n_metric_samples baseline draws.
inline Score monotonicity_correlation(const Model& model, std::span<const double> x,
                                      std::span<const double> phi, const FeatureRange& range,
                                      const MetricConfig& cfg, RandomStream& rng) {
  detail::check_dims(model, x, phi, range);
  const std::size_t d = x.size();
  if (d < 2) {
    throw InvalidArgument("monotonicity_correlation needs at least 2 features");
  }
  const std::size_t samples = std::max<std::size_t>(1, cfg.n_metric_samples);
  const double fx = model(x);
  Vector magnitude(d);
  Vector effect(d);
  Vector xp(x.begin(), x.end());
  for (std::size_t i = 0; i < d; ++i) {
    double acc = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
      xp[i] = detail::baseline_value(range, cfg.perturb_baseline, i, rng);
      const double delta = fx - model(xp);
      acc += delta * delta;
    }
    xp[i] = x[i];
    effect[i] = acc / static_cast<double>(samples);
    magnitude[i] = std::abs(phi[i]);
  }
  return spearman(magnitude, effect);
}

// ---------------------------------------------------------------------------
// Robustness

/// Largest ||phi(x') - phi(x)|| / ||x' - x|| over x' = x + N(0, noise_std^2 I).
inline Score local_lipschitz_estimate(const Explainer& explain, std::span<const double> x,
                                      std::span<const double> phi, const MetricConfig& cfg,
                                      RandomStream& rng) {
  Vector xp(x.size());
  double worst = 0.0;
  for (std::size_t s = 0; s < cfg.n_metric_samples; ++s) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      xp[i] = x[i] + cfg.noise_std * rng.normal();
    }
    const double dx = detail::l2(xp, x);
    if (dx == 0.0) {
      continue;
    }
    const auto phi_p = explain(xp);
    worst = std::max(worst, detail::l2(phi_p, phi) / dx);
  }
  return {worst, false};
}

/// Largest ||phi(x') - phi(x)|| over x' uniform in the l-infinity ball of
/// radius lower_bound around x.
inline Score max_sensitivity(const Explainer& explain, std::span<const double> x,
                             std::span<const double> phi, const MetricConfig& cfg,
                             RandomStream& rng) {
  Vector xp(x.size());
  double worst = 0.0;
  for (std::size_t s = 0; s < cfg.n_metric_samples; ++s) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      xp[i] = x[i] + rng.uniform(-cfg.lower_bound, cfg.lower_bound);
    }
    const auto phi_p = explain(xp);
    worst = std::max(worst, detail::l2(phi_p, phi));
  }
  return {worst, false};
}

/// ||(phi' - phi) / phi||_2 / max(||(x' - x) / x||_2, eps), elementwise
/// division with zero denominators replaced by eps.
inline double relative_stability_ratio(std::span<const double> x, std::span<const double> xp,
                                       std::span<const double> phi,
                                       std::span<const double> phi_p, double eps) {
  const auto rel_norm = [eps](std::span<const double> base, std::span<const double> moved) {
    double s = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
      const double denom = base[i] != 0.0 ? base[i] : eps;
      const double r = (moved[i] - base[i]) / denom;
      s += r * r;
    }
    return std::sqrt(s);
  };
  return rel_norm(phi, phi_p) / std::max(rel_norm(x, xp), eps);
}

inline Score relative_input_stability(const Explainer& explain, std::span<const double> x,
                                      std::span<const double> phi, const MetricConfig& cfg,
                                      RandomStream& rng) {
  if (std::all_of(phi.begin(), phi.end(), [](double v) { return v == 0.0; })) {
    return {0.0, true};
  }
  Vector xp(x.size());
  double worst = 0.0;
  for (std::size_t s = 0; s < cfg.n_metric_samples; ++s) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      xp[i] = x[i] + cfg.noise_std * rng.normal();
    }
    const auto phi_p = explain(xp);
    worst = std::max(worst, relative_stability_ratio(x, xp, phi, phi_p, cfg.stability_eps));
  }
  return {worst, false};
}

// ---------------------------------------------------------------------------
// Complexity

/// Gini index of |phi|: sum_i (2i - d - 1) |phi|_(i) / (d sum |phi|) over the
/// ascending order statistics.
inline Score sparseness(std::span<const double> phi) {
  Vector mag(phi.size());
  std::transform(phi.begin(), phi.end(), mag.begin(), [](double v) { return std::abs(v); });
  const double total = std::accumulate(mag.begin(), mag.end(), 0.0);
  if (!(total > 0.0)) {
    return {0.0, true};
  }
  std::sort(mag.begin(), mag.end());
  const double d = static_cast<double>(mag.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < mag.size(); ++i) {
    acc += (2.0 * static_cast<double>(i + 1) - d - 1.0) * mag[i];
  }
  return {acc / (d * total), false};
}

/// Shannon entropy (nats) of |phi| normalised to a distribution.
inline Score complexity(std::span<const double> phi) {
  const double total =
      std::accumulate(phi.begin(), phi.end(), 0.0,
                      [](double s, double v) { return s + std::abs(v); });
  if (!(total > 0.0)) {
    return {0.0, true};
  }
  double h = 0.0;
  for (double v : phi) {
    const double p = std::abs(v) / total;
    if (p > 0.0) {
      h -= p * std::log(p);
    }
  }
  return {h, false};
}

/// Number of features with |phi_i| > epsilon.
inline Score effective_complexity(std::span<const double> phi, const MetricConfig& cfg) {
  const auto count = std::count_if(phi.begin(), phi.end(),
                                   [&](double v) { return std::abs(v) > cfg.epsilon; });
  return {static_cast<double>(count), false};
}

// ---------------------------------------------------------------------------
// Suite

enum class MetricId {
  faithfulness_correlation,
  faithfulness_estimate,
  monotonicity_correlation,
  local_lipschitz_estimate,
  max_sensitivity,
  relative_input_stability,
  sparseness,
  complexity,
  effective_complexity,
};

struct MetricInfo {
  MetricId id;
  std::string_view name;
  std::string_view family;
  Direction direction;
  bool uses_baseline;
};

inline constexpr std::array<MetricInfo, 9> kMetrics{{
    {MetricId::faithfulness_correlation, "faithfulness_correlation", "faithfulness",
     Direction::higher_better, true},
    {MetricId::faithfulness_estimate, "faithfulness_estimate", "faithfulness",
     Direction::higher_better, true},
    {MetricId::monotonicity_correlation, "monotonicity_correlation", "faithfulness",
     Direction::higher_better, true},
    {MetricId::local_lipschitz_estimate, "local_lipschitz_estimate", "robustness",
     Direction::lower_better, false},
    {MetricId::max_sensitivity, "max_sensitivity", "robustness", Direction::lower_better, false},
    {MetricId::relative_input_stability, "relative_input_stability", "robustness",
     Direction::lower_better, false},
    {MetricId::sparseness, "sparseness", "complexity", Direction::higher_better, false},
    {MetricId::complexity, "complexity", "complexity", Direction::lower_better, false},
    {MetricId::effective_complexity, "effective_complexity", "complexity",
     Direction::lower_better, false},
}};

/// Reported metric name; baseline-dependent metrics run against the black
/// baseline carry a "_black" suffix.
inline std::string metric_name(const MetricInfo& info, const MetricConfig& cfg) {
  std::string name(info.name);
  if (info.uses_baseline && cfg.perturb_baseline == Baseline::black) {
    name += "_black";
  }
  return name;
}

inline const MetricInfo& metric_info(std::string_view name) {
  for (const auto& m : kMetrics) {
    if (name == m.name || (m.uses_baseline && name == std::string(m.name) + "_black")) {
      return m;
    }
  }
  throw InvalidArgument("unknown metric '" + std::string(name) + "'");
}

struct NamedScore {
  std::string metric;
  Score score;
};

/// Computes one metric. Each metric draws from its own stream derived from
/// `seed`, so results do not depend on which other metrics run.
inline Score compute_metric(const MetricInfo& info, const Model& model, std::span<const double> x,
                            std::span<const double> phi, const Explainer& explain,
                            const FeatureRange& range, const MetricConfig& cfg,
                            std::uint64_t seed) {
  auto rng = rng_stream(derive_seed(seed, info.name), 0);
  switch (info.id) {
    case MetricId::faithfulness_correlation:
      return faithfulness_correlation(model, x, phi, range, cfg, rng);
    case MetricId::faithfulness_estimate:
      return faithfulness_estimate(model, x, phi, range, cfg, rng);
    case MetricId::monotonicity_correlation:
      return monotonicity_correlation(model, x, phi, range, cfg, rng);
    case MetricId::local_lipschitz_estimate:
      return local_lipschitz_estimate(explain, x, phi, cfg, rng);
    case MetricId::max_sensitivity:
      return max_sensitivity(explain, x, phi, cfg, rng);
    case MetricId::relative_input_stability:
      return relative_input_stability(explain, x, phi, cfg, rng);
    case MetricId::sparseness:
      return sparseness(phi);
    case MetricId::complexity:
      return complexity(phi);
    case MetricId::effective_complexity:
      return effective_complexity(phi, cfg);
  }
  throw InvalidArgument("unhandled metric");
}

/// All nine metrics for one explained instance, in catalogue order. A metric
/// that throws is reported as flagged.
inline std::vector<NamedScore> evaluate_all(const Model& model, std::span<const double> x,
                                            std::span<const double> phi, const Explainer& explain,
                                            const FeatureRange& range, const MetricConfig& cfg,
                                            std::uint64_t seed) {
  std::vector<NamedScore> out;
  for (const auto& info : kMetrics) {
    Score s;
    try {
      s = compute_metric(info, model, x, phi, explain, range, cfg, seed);
    } catch (const Error&) {
      s = {std::nan(""), true};
    }
    out.push_back({metric_name(info, cfg), s});
  }
  return out;
}

struct MetricReport {
  std::string metric_name;
  Vector per_instance;
  std::vector<bool> flagged;
  double median = std::nan("");
  Direction direction = Direction::higher_better;
  std::size_t flagged_count = 0;
};

/// Aggregates per-instance scores; flagged entries are counted but excluded
/// from the median.
inline MetricReport make_report(std::string name, std::span<const Score> scores,
                                Direction direction) {
  MetricReport report;
  report.metric_name = std::move(name);
  report.direction = direction;
  Vector valid;
  for (const auto& s : scores) {
    report.per_instance.push_back(s.value);
    report.flagged.push_back(s.flagged);
    if (s.flagged) {
      ++report.flagged_count;
    } else {
      valid.push_back(s.value);
    }
  }
  if (!valid.empty()) {
    report.median = lower_median(valid);
  }
  return report;
}

}  // namespace varshap::metrics
