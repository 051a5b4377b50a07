#pragma once

// VARSHAP: Shapley values of the local variance game
//   v(S) = Var[ f(x_S, X_-S) ],  X_-S ~ N(x_-S, alpha * diag(var_-S)).
// A feature's attribution is its kernel-weighted average reduction in local
// output variance when it joins a coalition of known features.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "varshap/core.hpp"
#include "varshap/mlp.hpp"
#include "varshap/parallel.hpp"
#include "varshap/perturb.hpp"
#include "varshap/rng.hpp"
#include "varshap/shapley.hpp"

namespace varshap {

enum class SignConvention {
  reduction_positive,  // phi_j = sum omega (v(S) - v(S+j)), sums to v(empty)
  eq1_literal,         // phi_j = sum omega (v(S+j) - v(S)), sums to -v(empty)
};

inline std::string to_string(SignConvention s) {
  return s == SignConvention::reduction_positive ? "reduction_positive" : "eq1_literal";
}

inline SignConvention parse_sign_convention(const std::string& s) {
  if (s == "reduction_positive") {
    return SignConvention::reduction_positive;
  }
  if (s == "eq1_literal") {
    return SignConvention::eq1_literal;
  }
  throw InvalidArgument("unknown sign convention '" + s + "'");
}

struct VarianceGameConfig {
  std::size_t samples_per_coalition = 10000;
  bool paired_sampling = true;
  SignConvention sign_convention = SignConvention::reduction_positive;
  /// Worker threads for coalition evaluation; 0 = hardware concurrency.
  std::size_t workers = 0;
  /// Forces sequential model evaluation.
  bool sequential = false;
  /// Contiguous sample batches used for standard errors (< 2 disables them).
  std::size_t error_batches = 0;

  void validate() const {
    if (samples_per_coalition < 2) {
      throw InvalidArgument("samples_per_coalition must be at least 2");
    }
    if (error_batches >= 2 && samples_per_coalition < 2 * error_batches) {
      throw InvalidArgument("need at least 2 samples per error batch");
    }
  }
};

/// Estimated value of one coalition plus per-batch estimates.
struct CoalitionEstimate {
  double value = 0.0;
  Vector batch_values;
};

namespace detail {

struct Welford {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double y) {
    count += 1.0;
    const double delta = y - mean;
    mean += delta / count;
    m2 += delta * (y - mean);
  }

  void merge(const Welford& o) {
    if (o.count == 0.0) {
      return;
    }
    if (count == 0.0) {
      *this = o;
      return;
    }
    const double n = count + o.count;
    const double delta = o.mean - mean;
    mean += delta * (o.count / n);
    m2 += o.m2 + delta * delta * (count * o.count / n);
    count = n;
  }

  double variance() const { return count > 1.0 ? m2 / (count - 1.0) : 0.0; }
};

inline double checked_eval(const Model& model, std::span<const double> row, std::size_t index) {
  double y = 0.0;
  try {
    y = model(row);
  } catch (const std::exception& e) {
    throw ComputeError("model evaluation failed at sample row " + std::to_string(index) + ": " +
                       e.what());
  }
  if (!std::isfinite(y)) {
    throw ComputeError("model returned a non-finite value at sample row " +
                       std::to_string(index));
  }
  return y;
}

inline CoalitionEstimate estimate_variance(const Model& model, std::span<const double> x,
                                           const Coalition& fixed, const PerturbationSpec& spec,
                                           std::size_t m, const RandomStream& stream,
                                           bool draw_fixed, std::size_t batches) {
  const std::size_t d = x.size();
  CoalitionEstimate out;
  const std::size_t n_batches = batches >= 2 ? batches : 1;
  if (fixed.size() == d) {
    if (batches >= 2) {
      out.batch_values.assign(n_batches, 0.0);
    }
    return out;
  }
  PerturbationSampler sampler(x, fixed, spec, stream, draw_fixed);
  Vector row(d);
  Welford total;
  std::size_t r = 0;
  for (std::size_t b = 0; b < n_batches; ++b) {
    const std::size_t end = (b + 1) * m / n_batches;
    Welford acc;
    for (; r < end; ++r) {
      sampler.next(row);
      acc.add(checked_eval(model, row, r));
    }
    if (batches >= 2) {
      out.batch_values.push_back(acc.variance());
    }
    total.merge(acc);
  }
  out.value = total.variance();
  return out;
}

}  // namespace detail

/// Unbiased sample variance of model outputs over m perturbed copies of x
/// with the features in S fixed; exactly 0 when S holds every feature.
inline double variance_given_coalition(const Model& model, std::span<const double> x,
                                       const Coalition& S, const PerturbationSpec& spec,
                                       const VarianceGameConfig& cfg, const RandomStream& stream) {
  cfg.validate();
  return detail::estimate_variance(model, x, S, spec, cfg.samples_per_coalition, stream, true, 0)
      .value;
}

/// The variance game for one explanation. Each coalition is estimated once
/// and cached; the random stream of a coalition depends only on the master
/// seed and the coalition, never on evaluation order or worker count.
class VarianceGame {
 public:
  VarianceGame(Model model, Instance x, PerturbationSpec spec, VarianceGameConfig cfg,
               std::uint64_t master_seed)
      : model_(std::move(model)),
        x_(std::move(x)),
        spec_(std::move(spec)),
        cfg_(cfg),
        seed_(master_seed) {
    validate_instance(x_);
    spec_.validate(x_.size());
    cfg_.validate();
    if (model_.arity() != x_.size()) {
      throw InvalidArgument("model expects " + std::to_string(model_.arity()) +
                            " features, instance has " + std::to_string(x_.size()));
    }
  }

  std::size_t d() const { return x_.size(); }
  const Instance& instance() const { return x_; }
  const PerturbationSpec& spec() const { return spec_; }
  const VarianceGameConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t cached() const { return cache_.size(); }

  /// Estimates every coalition not yet cached, in parallel.
  void evaluate(std::span<const Coalition> coalitions) {
    std::vector<Coalition> todo;
    for (const auto& c : coalitions) {
      if (!cache_.contains(c)) {
        todo.push_back(c);
      }
    }
    std::sort(todo.begin(), todo.end());
    todo.erase(std::unique(todo.begin(), todo.end()), todo.end());
    std::vector<CoalitionEstimate> results(todo.size());
    const std::size_t workers = (cfg_.sequential || !model_.reentrant()) ? 1 : cfg_.workers;
    parallel_for(todo.size(), workers, [&](std::size_t i) {
      results[i] = detail::estimate_variance(model_, x_, todo[i], spec_,
                                             cfg_.samples_per_coalition, stream_for(todo[i]),
                                             cfg_.paired_sampling, cfg_.error_batches);
    });
    for (std::size_t i = 0; i < todo.size(); ++i) {
      cache_.emplace(std::move(todo[i]), std::move(results[i]));
    }
  }

  const CoalitionEstimate& estimate(const Coalition& c) {
    auto it = cache_.find(c);
    if (it == cache_.end()) {
      evaluate(std::span<const Coalition>(&c, 1));
      it = cache_.find(c);
    }
    return it->second;
  }

  double value(const Coalition& c) { return estimate(c).value; }

  /// Value table indexed by coalition mask, evaluating all 2^d coalitions.
  std::vector<CoalitionEstimate> full_table() {
    const std::size_t d = this->d();
    if (d > 20) {
      throw InvalidArgument("full enumeration is limited to 20 features");
    }
    const std::uint64_t n = std::uint64_t{1} << d;
    std::vector<Coalition> all;
    all.reserve(n);
    for (std::uint64_t mask = 0; mask < n; ++mask) {
      all.push_back(Coalition::from_mask(mask, d));
    }
    evaluate(all);
    std::vector<CoalitionEstimate> table;
    table.reserve(n);
    for (const auto& c : all) {
      table.push_back(cache_.at(c));
    }
    return table;
  }

  RandomStream stream_for(const Coalition& c) const {
    if (cfg_.paired_sampling) {
      return rng_stream(derive_seed(seed_, "varshap/paired"), 0);
    }
    return rng_stream(derive_seed(seed_, "varshap/coalition"), c.stream_key());
  }

 private:
  Model model_;
  Instance x_;
  PerturbationSpec spec_;
  VarianceGameConfig cfg_;
  std::uint64_t seed_;
  std::map<Coalition, CoalitionEstimate> cache_;
};

/// Attribution plus Monte-Carlo standard errors from batch replication
/// (empty when the game was configured without error batches).
struct VarshapResult {
  Attribution attribution;
  Vector std_error;
};

namespace detail {

inline Vector apply_sign(Vector psi, SignConvention sign) {
  if (sign == SignConvention::reduction_positive) {
    for (auto& v : psi) {
      v = 0.0 - v;  // keeps an exact zero positive
    }
  }
  return psi;
}

/// Standard error of a linear estimator from its per-batch evaluations.
inline Vector batch_std_error(const std::vector<Vector>& per_batch) {
  if (per_batch.size() < 2) {
    return {};
  }
  const std::size_t d = per_batch.front().size();
  const double b = static_cast<double>(per_batch.size());
  Vector se(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (const auto& v : per_batch) {
      mean += v[j];
    }
    mean /= b;
    double ss = 0.0;
    for (const auto& v : per_batch) {
      ss += (v[j] - mean) * (v[j] - mean);
    }
    se[j] = std::sqrt(ss / (b - 1.0) / b);
  }
  return se;
}

inline std::map<std::string, ParamValue> game_params(const VarianceGame& game,
                                                     std::size_t coalitions) {
  const auto& cfg = game.config();
  return {
      {"sigma", game.spec().sigma},
      {"samples", static_cast<double>(cfg.samples_per_coalition)},
      {"coalitions", static_cast<double>(coalitions)},
      {"paired_sampling", cfg.paired_sampling ? 1.0 : 0.0},
      {"sign_convention", to_string(cfg.sign_convention)},
  };
}

}  // namespace detail

/// Exact VARSHAP by enumerating all 2^d coalitions of the game.
inline VarshapResult varshap_exact_detailed(VarianceGame& game) {
  const std::size_t d = game.d();
  if (d > 20) {
    throw InvalidArgument("varshap_exact enumerates 2^d coalitions and is limited to d <= 20 (d=" +
                          std::to_string(d) + "); use varshap_sampled");
  }
  const auto table = game.full_table();
  Vector values(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    values[i] = table[i].value;
  }
  const auto sign = game.config().sign_convention;

  VarshapResult result;
  result.attribution.phi = detail::apply_sign(exact_shapley_from_table(values, d), sign);
  result.attribution.method = "varshap";
  result.attribution.params = detail::game_params(game, table.size());
  result.attribution.params["estimator"] = std::string("exact");
  result.attribution.seed = game.seed();
  result.attribution.base_variance = values[0];

  const std::size_t batches = table[0].batch_values.size();
  if (batches >= 2) {
    std::vector<Vector> per_batch;
    for (std::size_t b = 0; b < batches; ++b) {
      for (std::size_t i = 0; i < table.size(); ++i) {
        values[i] = table[i].batch_values[b];
      }
      per_batch.push_back(detail::apply_sign(exact_shapley_from_table(values, d), sign));
    }
    result.std_error = detail::batch_std_error(per_batch);
  }
  return result;
}

inline VarshapResult varshap_exact_detailed(const Model& model, const Instance& x,
                                            const PerturbationSpec& spec,
                                            const VarianceGameConfig& cfg,
                                            std::uint64_t master_seed) {
  if (x.size() > 20) {
    throw InvalidArgument("varshap_exact enumerates 2^d coalitions and is limited to d <= 20 (d=" +
                          std::to_string(x.size()) + "); use varshap_sampled");
  }
  VarianceGame game(model, x, spec, cfg, master_seed);
  return varshap_exact_detailed(game);
}

inline Attribution varshap_exact(const Model& model, const Instance& x,
                                 const PerturbationSpec& spec, const VarianceGameConfig& cfg,
                                 std::uint64_t master_seed) {
  return varshap_exact_detailed(model, x, spec, cfg, master_seed).attribution;
}

/// VARSHAP from a sampled subset of coalitions by constrained weighted
/// regression. The empty and full coalitions are always included.
inline VarshapResult varshap_sampled_detailed(VarianceGame& game, std::size_t n_coalitions) {
  const std::size_t d = game.d();
  if (n_coalitions < d + 2) {
    throw InvalidArgument("n_coalitions must be at least d + 2 = " + std::to_string(d + 2));
  }
  auto coalition_stream = rng_stream(derive_seed(game.seed(), "varshap/coalitions"), 0);
  const auto rows = sample_coalitions(d, n_coalitions, coalition_stream);

  std::vector<Coalition> needed{Coalition::empty(d), Coalition::full(d)};
  for (const auto& r : rows) {
    needed.push_back(r.coalition);
  }
  game.evaluate(needed);

  const auto solve = [&](auto&& value_of) {
    Vector values;
    values.reserve(rows.size());
    for (const auto& r : rows) {
      values.push_back(value_of(game.estimate(r.coalition)));
    }
    return solve_constrained_shapley(rows, values, value_of(game.estimate(needed[0])),
                                      value_of(game.estimate(needed[1])), d);
  };
  const auto sign = game.config().sign_convention;

  VarshapResult result;
  result.attribution.phi =
      detail::apply_sign(solve([](const CoalitionEstimate& e) { return e.value; }), sign);
  result.attribution.method = "varshap";
  result.attribution.params = detail::game_params(game, rows.size() + 2);
  result.attribution.params["estimator"] = std::string("sampled");
  result.attribution.seed = game.seed();
  result.attribution.base_variance = game.value(needed[0]);

  const std::size_t batches = game.estimate(needed[0]).batch_values.size();
  if (batches >= 2) {
    std::vector<Vector> per_batch;
    for (std::size_t b = 0; b < batches; ++b) {
      per_batch.push_back(detail::apply_sign(
          solve([b](const CoalitionEstimate& e) { return e.batch_values[b]; }), sign));
    }
    result.std_error = detail::batch_std_error(per_batch);
  }
  return result;
}

inline Attribution varshap_sampled(const Model& model, const Instance& x,
                                   const PerturbationSpec& spec, const VarianceGameConfig& cfg,
                                   std::size_t n_coalitions, std::uint64_t master_seed) {
  VarianceGame game(model, x, spec, cfg, master_seed);
  return varshap_sampled_detailed(game, n_coalitions).attribution;
}

struct AxiomCheck {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct AxiomReport {
  std::vector<AxiomCheck> checks;

  bool ok() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
  std::size_t failures() const {
    return static_cast<std::size_t>(
        std::count_if(checks.begin(), checks.end(), [](const auto& c) { return !c.passed; }));
  }
};

/// An estimator under test: (model, instance, seed) -> attribution.
using VarianceEstimator =
    std::function<Attribution(const Model&, const Instance&, std::uint64_t)>;

namespace detail {

inline Model random_mlp(std::size_t d, std::size_t hidden, RandomStream& rng) {
  DenseLayer first{Matrix(hidden, d), Vector(hidden), Activation::relu};
  DenseLayer second{Matrix(1, hidden), Vector(1), Activation::identity};
  for (std::size_t o = 0; o < hidden; ++o) {
    for (std::size_t i = 0; i < d; ++i) {
      first.weights(o, i) = rng.normal() / std::sqrt(static_cast<double>(d));
    }
    first.bias[o] = 0.5 * rng.normal();
    second.weights(0, o) = rng.normal() / std::sqrt(static_cast<double>(hidden));
  }
  second.bias[0] = rng.normal();
  return mlp_model(Mlp({std::move(first), std::move(second)}));
}

}  // namespace detail

/// Checks the properties the squared-deviation variance game relies on:
/// (a) a constant model gets exactly zero attribution, (b) negating the
/// model leaves the attribution unchanged, (c) the sample variance of a sum
/// of independent streams is additive within sampling error, and (d) the
/// square satisfies (d(s+t) + d(s-t)) / 2 = d(s) + d(t) exactly on a grid.
inline AxiomReport verify_attribution_axioms(const VarianceEstimator& estimate,
                                             std::size_t n_models, std::uint64_t seed,
                                             double tolerance = 1e-9) {
  AxiomReport report;
  auto rng = rng_stream(derive_seed(seed, "axioms/models"), 0);

  AxiomCheck zero{"zero_property"};
  AxiomCheck sign{"sign_independence"};
  for (std::size_t k = 0; k < n_models; ++k) {
    const std::size_t d = 2 + static_cast<std::size_t>(rng.below(4));
    Instance x(d);
    for (auto& v : x) {
      v = rng.normal();
    }
    const std::uint64_t run_seed = derive_seed(seed, k);

    const auto flat = estimate(constant_model(d, 5.0 + rng.normal()), x, run_seed);
    for (std::size_t j = 0; j < d; ++j) {
      if (flat.phi[j] != 0.0) {
        zero.passed = false;
        zero.detail += "model " + std::to_string(k) + " feature " + std::to_string(j) +
                       ": phi=" + std::to_string(flat.phi[j]) + "; ";
      }
    }

    const Model model = detail::random_mlp(d, 8, rng);
    const auto pos = estimate(model, x, run_seed);
    const auto neg = estimate(model.affine(-1.0, 0.0), x, run_seed);
    for (std::size_t j = 0; j < d; ++j) {
      if (std::abs(pos.phi[j] - neg.phi[j]) > tolerance) {
        sign.passed = false;
        sign.detail += "model " + std::to_string(k) + " feature " + std::to_string(j) +
                       ": |diff|=" + std::to_string(std::abs(pos.phi[j] - neg.phi[j])) + "; ";
      }
    }
  }

  AxiomCheck additivity{"variance_additivity"};
  {
    auto a = rng_stream(derive_seed(seed, "axioms/additivity"), 1);
    auto b = rng_stream(derive_seed(seed, "axioms/additivity"), 2);
    constexpr std::size_t m = 20000;
    const double sd_a = 1.5;
    const double sd_b = 0.5;
    detail::Welford wa;
    detail::Welford wb;
    detail::Welford wsum;
    for (std::size_t i = 0; i < m; ++i) {
      const double ya = sd_a * a.normal();
      const double yb = sd_b * b.normal();
      wa.add(ya);
      wb.add(yb);
      wsum.add(ya + yb);
    }
    // Var(A + B) - Var(A) - Var(B) estimates 2 Cov(A, B) = 0.
    const double gap = wsum.variance() - wa.variance() - wb.variance();
    const double se = 2.0 * std::sqrt(wa.variance() * wb.variance() / static_cast<double>(m));
    if (std::abs(gap) > 4.0 * se) {
      additivity.passed = false;
      additivity.detail = "gap " + std::to_string(gap) + " exceeds 4 SE " + std::to_string(se);
    }
  }

  AxiomCheck functional{"functional_equation"};
  const auto square = [](double v) { return v * v; };
  for (int i = -12; i <= 12; ++i) {
    for (int j = -12; j <= 12; ++j) {
      const double s = 0.25 * i;
      const double t = 0.25 * j;
      if ((square(s + t) + square(s - t)) / 2.0 != square(s) + square(t)) {
        functional.passed = false;
        functional.detail += "(" + std::to_string(s) + "," + std::to_string(t) + ") ";
      }
    }
  }

  report.checks = {zero, sign, additivity, functional};
  return report;
}

}  // namespace varshap
