#pragma once

// Instance-centred Gaussian perturbation: each perturbed feature i is drawn
// from N(x_i, alpha * var_i) independently, with alpha = sigma^2 and var_i
// the training variance of feature i.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "varshap/core.hpp"
#include "varshap/rng.hpp"

namespace varshap {

struct PerturbationSpec {
  Vector feature_std;  // training standard deviation per feature
  double sigma = 1.0;  // multiplier on the standard deviations

  double alpha() const { return sigma * sigma; }
  std::size_t d() const { return feature_std.size(); }

  /// Standard deviation of the perturbation applied to feature i.
  double scale(std::size_t i) const { return sigma * feature_std[i]; }

  static PerturbationSpec from_variances(std::span<const double> variances, double sigma) {
    PerturbationSpec spec;
    spec.sigma = sigma;
    spec.feature_std.reserve(variances.size());
    for (double v : variances) {
      spec.feature_std.push_back(std::sqrt(v));
    }
    spec.validate();
    return spec;
  }

  void validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
      throw InvalidArgument("sigma must be a finite positive number");
    }
    for (std::size_t i = 0; i < feature_std.size(); ++i) {
      if (!std::isfinite(feature_std[i]) || feature_std[i] < 0.0) {
        throw InvalidArgument("feature_std[" + std::to_string(i) + "] must be finite and >= 0");
      }
    }
  }

  void validate(std::size_t d_expected) const {
    validate();
    if (d() != d_expected) {
      throw InvalidArgument("perturbation spec has " + std::to_string(d()) +
                            " features, instance has " + std::to_string(d_expected));
    }
  }
};

/// Unbiased per-column sample variance (divisor n - 1).
inline Vector estimate_feature_stats(const Dataset& data) {
  if (data.n() < 2) {
    throw InvalidArgument("variance estimation needs at least 2 rows");
  }
  const std::size_t n = data.n();
  Vector var(data.d(), 0.0);
  for (std::size_t c = 0; c < data.d(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      mean += data.rows(r, c);
    }
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double dev = data.rows(r, c) - mean;
      ss += dev * dev;
    }
    var[c] = ss / static_cast<double>(n - 1);
  }
  return var;
}

/// Draws perturbed copies of x one row at a time.
///
/// With `draw_fixed` set, a normal is consumed for every column including the
/// fixed ones, so two samplers on the same stream with different coalitions
/// see identical draws in every column they both perturb.
class PerturbationSampler {
 public:
  PerturbationSampler(std::span<const double> x, const Coalition& fixed,
                      const PerturbationSpec& spec, RandomStream stream, bool draw_fixed = true)
      : x_(x), spec_(spec), stream_(stream), draw_fixed_(draw_fixed) {
    validate_instance(x);
    spec.validate(x.size());
    if (fixed.dimension() != x.size()) {
      throw InvalidArgument("coalition dimension does not match instance");
    }
    perturbed_.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      perturbed_[i] = !fixed.contains(i);
    }
  }

  void next(std::span<double> row) {
    for (std::size_t i = 0; i < x_.size(); ++i) {
      if (perturbed_[i]) {
        row[i] = x_[i] + spec_.scale(i) * stream_.normal();
      } else {
        if (draw_fixed_) {
          (void)stream_.normal();
        }
        row[i] = x_[i];
      }
    }
  }

 private:
  std::span<const double> x_;
  PerturbationSpec spec_;
  RandomStream stream_;
  bool draw_fixed_;
  std::vector<char> perturbed_;
};

/// m perturbed copies of x with the features in `fixed` held at x.
inline Matrix sample_perturbed(std::span<const double> x, const Coalition& fixed,
                               const PerturbationSpec& spec, std::size_t m,
                               const RandomStream& stream) {
  if (m < 1) {
    throw InvalidArgument("sample count must be at least 1");
  }
  PerturbationSampler sampler(x, fixed, spec, stream);
  Matrix out(m, x.size());
  for (std::size_t r = 0; r < m; ++r) {
    sampler.next(out.row(r));
  }
  return out;
}

}  // namespace varshap
