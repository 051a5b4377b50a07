#pragma once

// Synthetic case-study data and their ground-truth models.
//
// Datasets 1 and 2 share a feature draw of three isotropic Gaussian clusters
// (A at (0,0), B at (4,0), C at (0,4)); they differ only in the target formula
// used for cluster C. Dataset 3 has three i.i.d. standard normal features and
// a target that ignores the third.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "varshap/core.hpp"
#include "varshap/rng.hpp"

namespace varshap::synth {

struct ClusterSpec {
  std::string label;
  std::array<double, 2> center;
  double std;
  std::size_t n;
};

inline const std::vector<ClusterSpec>& case_study_clusters() {
  static const std::vector<ClusterSpec> clusters{
      {"A", {0.0, 0.0}, 0.7, 1000},
      {"B", {4.0, 0.0}, 0.7, 5000},
      {"C", {0.0, 4.0}, 0.7, 5000},
  };
  return clusters;
}

inline constexpr std::size_t kDataset3Rows = 10000;

/// Leading fraction of rows treated as the training split.
inline constexpr double kTrainFraction = 0.8;

inline std::size_t train_rows(std::size_t n) {
  return static_cast<std::size_t>(std::floor(kTrainFraction * static_cast<double>(n)));
}

/// Per-feature z-score parameters.
struct Normalization {
  Vector mean;
  Vector std;

  std::size_t d() const { return mean.size(); }

  static Normalization identity(std::size_t d) { return {Vector(d, 0.0), Vector(d, 1.0)}; }

  /// Mean and sample standard deviation of the first `rows` rows.
  static Normalization fit(const Matrix& data, std::size_t rows) {
    if (rows < 2 || rows > data.rows()) {
      throw InvalidArgument("normalization needs at least 2 fitting rows");
    }
    Normalization norm{Vector(data.cols(), 0.0), Vector(data.cols(), 0.0)};
    for (std::size_t c = 0; c < data.cols(); ++c) {
      double mean = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        mean += data(r, c);
      }
      mean /= static_cast<double>(rows);
      double ss = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        ss += (data(r, c) - mean) * (data(r, c) - mean);
      }
      const double sd = std::sqrt(ss / static_cast<double>(rows - 1));
      norm.mean[c] = mean;
      norm.std[c] = sd > 0.0 ? sd : 1.0;
    }
    return norm;
  }

  Vector normalize(std::span<const double> raw) const {
    Vector z(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      z[i] = (raw[i] - mean[i]) / std[i];
    }
    return z;
  }

  Vector denormalize(std::span<const double> z) const {
    Vector raw(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      raw[i] = z[i] * std[i] + mean[i];
    }
    return raw;
  }

  Matrix normalize(const Matrix& raw) const {
    Matrix out(raw.rows(), raw.cols());
    for (std::size_t r = 0; r < raw.rows(); ++r) {
      const auto z = normalize(raw.row(r));
      std::copy(z.begin(), z.end(), out.row(r).begin());
    }
    return out;
  }

  friend bool operator==(const Normalization&, const Normalization&) = default;
};

/// A generated dataset: normalized features in `data`, the raw draw in `raw`.
struct SyntheticDataset {
  std::string name;
  Dataset data;
  Matrix raw;
  Normalization normalization;
};

inline double dataset1_formula(double x1, double x2) { return x1 + 0.2 * x2; }
inline double dataset2_group_c_formula(double x1, double x2) { return x1 - 0.05 * x1 * x2; }
inline double dataset3_formula(double x1, double x2) { return std::abs(x1 + x2); }

/// Label of the cluster whose centre is nearest to (x1, x2) in raw space.
inline const std::string& nearest_group(double x1, double x2) {
  const auto& clusters = case_study_clusters();
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    const double d1 = x1 - clusters[k].center[0];
    const double d2 = x2 - clusters[k].center[1];
    const double dist = d1 * d1 + d2 * d2;
    if (dist < best_dist) {
      best_dist = dist;
      best = k;
    }
  }
  return clusters[best].label;
}

inline double dataset2_formula(double x1, double x2) {
  return nearest_group(x1, x2) == "C" ? dataset2_group_c_formula(x1, x2)
                                      : dataset1_formula(x1, x2);
}

namespace detail {

struct ClusterDraw {
  Matrix raw;
  std::vector<std::string> labels;
};

/// Cluster draw shared by datasets 1 and 2, shuffled so that any leading
/// fraction of rows mixes all groups.
inline ClusterDraw draw_clusters(std::uint64_t seed) {
  auto rng = rng_stream(derive_seed(seed, "synth/clusters"), 0);
  ClusterDraw draw;
  for (const auto& cluster : case_study_clusters()) {
    for (std::size_t i = 0; i < cluster.n; ++i) {
      const double row[2] = {cluster.center[0] + cluster.std * rng.normal(),
                             cluster.center[1] + cluster.std * rng.normal()};
      draw.raw.append_row(row);
      draw.labels.push_back(cluster.label);
    }
  }
  auto shuffle = rng_stream(derive_seed(seed, "synth/shuffle"), 0);
  const std::size_t n = draw.labels.size();
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(shuffle.below(i + 1));
    if (i != j) {
      std::swap(draw.labels[i], draw.labels[j]);
      for (std::size_t c = 0; c < 2; ++c) {
        std::swap(draw.raw(i, c), draw.raw(j, c));
      }
    }
  }
  return draw;
}

inline SyntheticDataset finish(std::string name, Matrix raw, Vector target,
                               std::optional<std::vector<std::string>> groups) {
  SyntheticDataset out;
  out.name = std::move(name);
  out.normalization = Normalization::fit(raw, train_rows(raw.rows()));
  out.data.rows = out.normalization.normalize(raw);
  for (std::size_t i = 0; i < raw.cols(); ++i) {
    out.data.feature_names.push_back("X" + std::to_string(i + 1));
  }
  out.data.target = std::move(target);
  out.data.group_labels = std::move(groups);
  out.raw = std::move(raw);
  return out;
}

}  // namespace detail

inline SyntheticDataset gen_dataset1(std::uint64_t seed) {
  auto draw = detail::draw_clusters(seed);
  Vector y(draw.raw.rows());
  for (std::size_t r = 0; r < y.size(); ++r) {
    y[r] = dataset1_formula(draw.raw(r, 0), draw.raw(r, 1));
  }
  return detail::finish("dataset1", std::move(draw.raw), std::move(y), std::move(draw.labels));
}

inline SyntheticDataset gen_dataset2(std::uint64_t seed) {
  auto draw = detail::draw_clusters(seed);
  Vector y(draw.raw.rows());
  for (std::size_t r = 0; r < y.size(); ++r) {
    const double x1 = draw.raw(r, 0);
    const double x2 = draw.raw(r, 1);
    y[r] = draw.labels[r] == "C" ? dataset2_group_c_formula(x1, x2) : dataset1_formula(x1, x2);
  }
  return detail::finish("dataset2", std::move(draw.raw), std::move(y), std::move(draw.labels));
}

inline SyntheticDataset gen_dataset3(std::uint64_t seed) {
  auto rng = rng_stream(derive_seed(seed, "synth/dataset3"), 0);
  Matrix raw(kDataset3Rows, 3);
  Vector y(kDataset3Rows);
  for (std::size_t r = 0; r < kDataset3Rows; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      raw(r, c) = rng.normal();
    }
    y[r] = dataset3_formula(raw(r, 0), raw(r, 1));
  }
  return detail::finish("dataset3", std::move(raw), std::move(y), std::nullopt);
}

inline bool is_dataset_name(std::string_view name) {
  return name == "dataset1" || name == "dataset2" || name == "dataset3";
}

inline SyntheticDataset generate(std::string_view name, std::uint64_t seed) {
  if (name == "dataset1") {
    return gen_dataset1(seed);
  }
  if (name == "dataset2") {
    return gen_dataset2(seed);
  }
  if (name == "dataset3") {
    return gen_dataset3(seed);
  }
  throw InvalidArgument("unknown synthetic dataset '" + std::string(name) + "'");
}

/// Ground-truth model over raw features.
inline Model gtm(std::string_view name) {
  if (name == "dataset1") {
    return Model(2, [](std::span<const double> x) { return dataset1_formula(x[0], x[1]); },
                 "gtm:dataset1");
  }
  if (name == "dataset2") {
    return Model(2, [](std::span<const double> x) { return dataset2_formula(x[0], x[1]); },
                 "gtm:dataset2");
  }
  if (name == "dataset3") {
    return Model(3, [](std::span<const double> x) { return dataset3_formula(x[0], x[1]); },
                 "gtm:dataset3");
  }
  throw InvalidArgument("unknown ground-truth model '" + std::string(name) + "'");
}

/// Ground-truth model over normalized features: inputs are mapped back to
/// raw units before the generating formula is applied.
inline Model gtm(std::string_view name, const Normalization& norm) {
  const Model raw = gtm(name);
  if (norm.d() != raw.arity()) {
    throw InvalidArgument("normalization dimension does not match model");
  }
  return Model(
      raw.arity(),
      [raw, norm](std::span<const double> z) {
        thread_local Vector x;
        x.resize(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) {
          x[i] = z[i] * norm.std[i] + norm.mean[i];
        }
        return raw(x);
      },
      raw.name());
}

}  // namespace varshap::synth
