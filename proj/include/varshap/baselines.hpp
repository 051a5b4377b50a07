#pragma once

// Comparison explainers: KernelSHAP with a zero or data-sampled background,
// and LIME as an L1-penalised weighted linear surrogate on Gaussian
// neighbourhood samples.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "varshap/core.hpp"
#include "varshap/parallel.hpp"
#include "varshap/perturb.hpp"
#include "varshap/rng.hpp"
#include "varshap/shapley.hpp"

namespace varshap {

// ---------------------------------------------------------------------------
// KernelSHAP

enum class BackgroundMode { zero_baseline, data_sampling };

inline std::string to_string(BackgroundMode m) {
  return m == BackgroundMode::zero_baseline ? "zero" : "data";
}

struct BackgroundSpec {
  BackgroundMode mode = BackgroundMode::zero_baseline;
  Matrix background_rows;  // required for data_sampling
  /// Rows drawn per explanation; 0 uses every background row.
  std::size_t n_background = 100;

  static BackgroundSpec zero() { return {}; }

  static BackgroundSpec data(Matrix rows, std::size_t n_background = 100) {
    return {BackgroundMode::data_sampling, std::move(rows), n_background};
  }
};

namespace detail {

inline Matrix select_background(const BackgroundSpec& bg, std::size_t d, std::uint64_t seed) {
  if (bg.mode == BackgroundMode::zero_baseline) {
    return Matrix(1, d, 0.0);
  }
  if (bg.background_rows.rows() == 0) {
    throw InvalidArgument("data_sampling background needs at least one row");
  }
  if (bg.background_rows.cols() != d) {
    throw InvalidArgument("background rows have " + std::to_string(bg.background_rows.cols()) +
                          " features, instance has " + std::to_string(d));
  }
  const std::size_t n = bg.background_rows.rows();
  if (bg.n_background == 0 || bg.n_background >= n) {
    return bg.background_rows;
  }
  // Partial Fisher-Yates: the first n_background indices of a shuffle.
  auto rng = rng_stream(derive_seed(seed, "kernelshap/background"), 0);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Matrix out(bg.n_background, d);
  for (std::size_t i = 0; i < bg.n_background; ++i) {
    std::swap(idx[i], idx[i + rng.below(n - i)]);
    const auto src = bg.background_rows.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace detail

/// Expected model output with the coalition fixed at x and the remaining
/// features taken from each background row.
inline double background_value(const Model& model, std::span<const double> x,
                               const Coalition& S, const Matrix& background) {
  Vector z(x.size());
  double sum = 0.0;
  for (std::size_t r = 0; r < background.rows(); ++r) {
    const auto b = background.row(r);
    for (std::size_t i = 0; i < x.size(); ++i) {
      z[i] = S.contains(i) ? x[i] : b[i];
    }
    sum += model(z);
  }
  return sum / static_cast<double>(background.rows());
}

inline Attribution kernelshap(const Model& model, const Instance& x, const BackgroundSpec& bg,
                              std::size_t n_coalitions, std::uint64_t master_seed,
                              std::size_t workers = 0) {
  validate_instance(x);
  const std::size_t d = x.size();
  if (model.arity() != d) {
    throw InvalidArgument("model arity does not match instance");
  }
  if (n_coalitions < d + 2) {
    throw InvalidArgument("n_coalitions must be at least d + 2 = " + std::to_string(d + 2));
  }
  const Matrix background = detail::select_background(bg, d, master_seed);
  auto coalition_stream = rng_stream(derive_seed(master_seed, "kernelshap/coalitions"), 0);
  const auto rows = sample_coalitions(d, n_coalitions, coalition_stream);

  Vector values(rows.size());
  parallel_for(rows.size(), model.reentrant() ? workers : 1, [&](std::size_t i) {
    values[i] = background_value(model, x, rows[i].coalition, background);
  });
  const double v_empty = background_value(model, x, Coalition::empty(d), background);
  const double v_full = model(x);

  Attribution out;
  out.phi = solve_constrained_shapley(rows, values, v_empty, v_full, d);
  out.method = "kernelshap";
  out.params = {
      {"baseline", to_string(bg.mode)},
      {"coalitions", static_cast<double>(rows.size() + 2)},
      {"n_background", static_cast<double>(background.rows())},
  };
  out.seed = master_seed;
  out.base_variance = v_empty;
  return out;
}

// ---------------------------------------------------------------------------
// LIME

struct LimeConfig {
  double sparsity = 0.0;      // L1 coefficient
  double kernel_width = 0.0;  // standardized units; 0 selects 0.75 * sqrt(d)
  std::size_t n_samples = 1000;

  double width_for(std::size_t d) const {
    return kernel_width > 0.0 ? kernel_width : 0.75 * std::sqrt(static_cast<double>(d));
  }

  void validate(std::size_t d) const {
    if (!(sparsity >= 0.0) || !std::isfinite(sparsity)) {
      throw InvalidArgument("sparsity must be finite and >= 0");
    }
    if (kernel_width < 0.0 || !std::isfinite(kernel_width)) {
      throw InvalidArgument("kernel_width must be > 0");
    }
    if (n_samples < d + 2) {
      throw InvalidArgument("n_samples must be at least d + 2 = " + std::to_string(d + 2));
    }
  }
};

struct LassoFit {
  Vector coef;
  double intercept = 0.0;
  /// Objective after each completed sweep.
  Vector objective_trace;
  std::size_t sweeps = 0;
  bool converged = false;
};

namespace detail {

inline double soft_threshold(double v, double t) {
  if (v > t) {
    return v - t;
  }
  if (v < -t) {
    return v + t;
  }
  return 0.0;
}

}  // namespace detail

/// Minimises 1/2 sum_r w_r (y_r - b - u_r . beta)^2 + lambda |beta|_1 by
/// cyclic coordinate descent, the intercept b unpenalised. Stops when the
/// largest coefficient change in a sweep falls below `tol`.
inline LassoFit weighted_lasso(const Matrix& u, std::span<const double> y,
                               std::span<const double> w, double lambda, double tol = 1e-8,
                               std::size_t max_sweeps = 100000) {
  const std::size_t n = u.rows();
  const std::size_t p = u.cols();
  if (y.size() != n || w.size() != n) {
    throw InvalidArgument("lasso inputs have inconsistent lengths");
  }
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(wsum > 0.0)) {
    throw ComputeError("all surrogate sample weights are zero; increase kernel_width");
  }
  // Weighted centring removes the intercept from the coordinate updates.
  Vector u_mean(p, 0.0);
  double y_mean = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < p; ++j) {
      u_mean[j] += w[r] * u(r, j);
    }
    y_mean += w[r] * y[r];
  }
  for (auto& m : u_mean) {
    m /= wsum;
  }
  y_mean /= wsum;

  Matrix uc(n, p);
  Vector resid(n);
  Vector col_norm(p, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < p; ++j) {
      uc(r, j) = u(r, j) - u_mean[j];
      col_norm[j] += w[r] * uc(r, j) * uc(r, j);
    }
    resid[r] = y[r] - y_mean;
  }

  const auto objective = [&](const Vector& beta) {
    double loss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      loss += w[r] * resid[r] * resid[r];
    }
    double l1 = 0.0;
    for (double b : beta) {
      l1 += std::abs(b);
    }
    return 0.5 * loss + lambda * l1;
  };

  LassoFit fit;
  fit.coef.assign(p, 0.0);
  for (fit.sweeps = 0; fit.sweeps < max_sweeps;) {
    double max_change = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      if (col_norm[j] <= 0.0) {
        continue;
      }
      double rho = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        rho += w[r] * uc(r, j) * (resid[r] + uc(r, j) * fit.coef[j]);
      }
      const double updated = detail::soft_threshold(rho, lambda) / col_norm[j];
      const double delta = updated - fit.coef[j];
      if (delta != 0.0) {
        for (std::size_t r = 0; r < n; ++r) {
          resid[r] -= uc(r, j) * delta;
        }
        fit.coef[j] = updated;
      }
      max_change = std::max(max_change, std::abs(delta));
    }
    ++fit.sweeps;
    fit.objective_trace.push_back(objective(fit.coef));
    if (max_change < tol) {
      fit.converged = true;
      break;
    }
  }
  fit.intercept = y_mean;
  for (std::size_t j = 0; j < p; ++j) {
    fit.intercept -= fit.coef[j] * u_mean[j];
  }
  return fit;
}

/// LIME with Gaussian neighbourhood sampling around x. The surrogate is fitted
/// on standardized offsets (z - x) / feature_std; coefficients are returned in
/// feature units.
inline Attribution lime(const Model& model, const Instance& x, const PerturbationSpec& spec,
                        const LimeConfig& cfg, std::uint64_t master_seed) {
  validate_instance(x);
  const std::size_t d = x.size();
  spec.validate(d);
  cfg.validate(d);
  if (model.arity() != d) {
    throw InvalidArgument("model arity does not match instance");
  }
  const double width = cfg.width_for(d);
  const Matrix z = sample_perturbed(x, Coalition::empty(d), spec, cfg.n_samples,
                                    rng_stream(derive_seed(master_seed, "lime/neighbourhood"), 0));
  Matrix u(cfg.n_samples, d);
  Vector y(cfg.n_samples);
  Vector w(cfg.n_samples);
  for (std::size_t r = 0; r < cfg.n_samples; ++r) {
    double dist2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double sd = spec.feature_std[i];
      u(r, i) = sd > 0.0 ? (z(r, i) - x[i]) / sd : 0.0;
      dist2 += u(r, i) * u(r, i);
    }
    w[r] = std::exp(-dist2 / (width * width));
    y[r] = model(z.row(r));
  }
  const auto fit = weighted_lasso(u, y, w, cfg.sparsity);

  Attribution out;
  out.phi.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double sd = spec.feature_std[i];
    out.phi[i] = sd > 0.0 ? fit.coef[i] / sd : 0.0;
  }
  out.method = "lime";
  out.params = {
      {"sigma", spec.sigma},
      {"sparsity", cfg.sparsity},
      {"kernel_width", width},
      {"samples", static_cast<double>(cfg.n_samples)},
  };
  out.seed = master_seed;
  out.base_variance = fit.intercept;
  return out;
}

}  // namespace varshap
