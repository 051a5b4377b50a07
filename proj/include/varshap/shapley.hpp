#pragma once

// Shapley-value machinery shared by the variance game and KernelSHAP:
// kernel weights, exact evaluation over a full value table, coalition
// sampling and the efficiency-constrained weighted regression.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "varshap/core.hpp"
#include "varshap/rng.hpp"

namespace varshap {

/// Binomial coefficient as a double; exact for n <= 62 via integer
/// recurrence, log-gamma beyond.
inline double binomial(std::size_t n, std::size_t k) {
  if (k > n) {
    return 0.0;
  }
  k = std::min(k, n - k);
  if (n <= 62) {
    std::uint64_t c = 1;
    for (std::size_t i = 1; i <= k; ++i) {
      c = c / i * (n - k + i) + c % i * (n - k + i) / i;
    }
    return static_cast<double>(c);
  }
  return std::round(std::exp(std::lgamma(static_cast<double>(n) + 1.0) -
                             std::lgamma(static_cast<double>(k) + 1.0) -
                             std::lgamma(static_cast<double>(n - k) + 1.0)));
}

/// Shapley kernel omega(s) = s! (k - s - 1)! / k!, the weight of a coalition
/// of size s that excludes the feature being scored.
inline double shapley_kernel_weight(std::size_t s, std::size_t k) {
  if (k == 0 || s >= k) {
    throw InvalidArgument("shapley_kernel_weight requires 0 <= s < k (s=" + std::to_string(s) +
                          ", k=" + std::to_string(k) + ")");
  }
  if (k <= 20) {
    // omega = 1 / (k * C(k-1, s))
    return 1.0 / (static_cast<double>(k) * binomial(k - 1, s));
  }
  const double log_w = std::lgamma(static_cast<double>(s) + 1.0) +
                       std::lgamma(static_cast<double>(k - s)) -
                       std::lgamma(static_cast<double>(k) + 1.0);
  return std::exp(log_w);
}

/// Regression weight of a coalition of size s among k features,
/// (k - 1) / (C(k, s) s (k - s)). Infinite at s = 0 and s = k, which the
/// solver handles as constraints.
inline double kernelshap_regression_weight(std::size_t s, std::size_t k) {
  if (s == 0 || s >= k) {
    throw InvalidArgument("regression weight is defined for 0 < s < k only");
  }
  return static_cast<double>(k - 1) /
         (binomial(k, s) * static_cast<double>(s) * static_cast<double>(k - s));
}

/// Shapley values of a game given as a table indexed by coalition mask.
/// Returns phi_j = sum_{S not containing j} omega(|S|) (v(S + j) - v(S)).
inline Vector exact_shapley_from_table(std::span<const double> values, std::size_t d) {
  if (d == 0 || d > 30 || values.size() != (std::size_t{1} << d)) {
    throw InvalidArgument("value table must have 2^d entries");
  }
  Vector omega(d);
  for (std::size_t s = 0; s < d; ++s) {
    omega[s] = shapley_kernel_weight(s, d);
  }
  Vector phi(d, 0.0);
  const std::uint64_t n = std::uint64_t{1} << d;
  for (std::uint64_t mask = 0; mask < n; ++mask) {
    const auto size = static_cast<std::size_t>(std::popcount(mask));
    if (size == d) {
      continue;
    }
    const double w = omega[size];
    for (std::size_t j = 0; j < d; ++j) {
      const std::uint64_t bit = std::uint64_t{1} << j;
      if ((mask & bit) == 0) {
        phi[j] += w * (values[mask | bit] - values[mask]);
      }
    }
  }
  return phi;
}

struct WeightedCoalition {
  Coalition coalition;
  double weight;
};

namespace detail {

/// Calls fn for each k-subset of {0..d-1}, as a sorted index vector.
template <class Fn>
void for_each_subset(std::size_t d, std::size_t k, Fn&& fn) {
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (;;) {
    fn(std::span<const std::size_t>(idx));
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == d - k + i - 1) {
      --i;
    }
    if (i == 0) {
      return;
    }
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) {
      idx[j] = idx[j - 1] + 1;
    }
  }
}

inline Coalition complement(const Coalition& c) {
  const std::size_t d = c.dimension();
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < d; ++i) {
    if (!c.contains(i)) {
      rest.push_back(i);
    }
  }
  return Coalition::from_indices(rest, d);
}

}  // namespace detail

/// Chooses the interior coalitions (neither empty nor full) for a regression
/// budget of `n_coalitions` total coalitions, the empty and full coalitions
/// being counted in the budget and handled as constraints.
///
/// Whole size classes are enumerated, smallest and largest first, while the
/// remaining budget covers them; the rest is sampled by size in proportion to
/// the kernel mass, deduplicated, with weights proportional to draw counts.
inline std::vector<WeightedCoalition> sample_coalitions(std::size_t d, std::size_t n_coalitions,
                                                        RandomStream& stream) {
  if (d < 1) {
    throw InvalidArgument("need at least one feature");
  }
  if (n_coalitions < 2) {
    throw InvalidArgument("coalition budget must include the empty and full coalitions");
  }
  std::vector<WeightedCoalition> out;
  if (d == 1) {
    return out;
  }
  const std::size_t budget = n_coalitions - 2;
  const std::size_t n_sizes = d / 2;            // sizes 1..n_sizes, paired with d - s
  const std::size_t n_paired = (d - 1) / 2;     // sizes whose complement size differs

  Vector size_mass(n_sizes + 1, 0.0);
  double total_mass = 0.0;
  for (std::size_t s = 1; s <= n_sizes; ++s) {
    size_mass[s] =
        static_cast<double>(d - 1) / (static_cast<double>(s) * static_cast<double>(d - s));
    if (s <= n_paired) {
      size_mass[s] *= 2.0;
    }
    total_mass += size_mass[s];
  }
  for (auto& m : size_mass) {
    m /= total_mass;
  }

  std::size_t remaining = budget;
  double remaining_mass = 1.0;
  std::size_t full_sizes = 0;
  for (std::size_t s = 1; s <= n_sizes; ++s) {
    const double count = binomial(d, s) * (s <= n_paired ? 2.0 : 1.0);
    if (remaining_mass <= 0.0 ||
        static_cast<double>(remaining) * size_mass[s] / remaining_mass < count - 1e-8) {
      break;
    }
    const double w = size_mass[s] / count;
    detail::for_each_subset(d, s, [&](std::span<const std::size_t> idx) {
      auto c = Coalition::from_indices(idx, d);
      if (s <= n_paired) {
        out.push_back({detail::complement(c), w});
      }
      out.push_back({std::move(c), w});
    });
    remaining -= static_cast<std::size_t>(count);
    remaining_mass -= size_mass[s];
    ++full_sizes;
  }

  if (full_sizes < n_sizes && remaining > 0) {
    Vector cdf;
    for (std::size_t s = full_sizes + 1; s <= n_sizes; ++s) {
      cdf.push_back((cdf.empty() ? 0.0 : cdf.back()) + size_mass[s]);
    }
    std::map<Coalition, double> draws;
    double total_draws = 0.0;
    const std::size_t max_attempts = 100 * remaining + 1000;
    std::vector<std::size_t> perm(d);
    for (std::size_t attempt = 0; attempt < max_attempts && draws.size() < remaining; ++attempt) {
      const double u = stream.uniform() * cdf.back();
      std::size_t pick = 0;
      while (pick + 1 < cdf.size() && u >= cdf[pick]) {
        ++pick;
      }
      const std::size_t s = full_sizes + 1 + pick;
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (std::size_t i = 0; i < s; ++i) {
        std::swap(perm[i], perm[i + stream.below(d - i)]);
      }
      auto c = Coalition::from_indices(std::span<const std::size_t>(perm.data(), s), d);
      if (s <= n_paired) {
        if (draws.size() + 2 > remaining && !draws.contains(c)) {
          continue;
        }
        draws[detail::complement(c)] += 1.0;
        total_draws += 1.0;
      }
      draws[c] += 1.0;
      total_draws += 1.0;
    }
    for (auto& [c, count] : draws) {
      out.push_back({c, count * remaining_mass / total_draws});
    }
  }
  return out;
}

/// Solves for Shapley values of a game from sampled coalitions:
/// v(S) ~ v(empty) + sum_{i in S} phi_i, weighted, subject to
/// sum_i phi_i = v(full) - v(empty).
inline Vector solve_constrained_shapley(std::span<const WeightedCoalition> rows,
                                        std::span<const double> values, double v_empty,
                                        double v_full, std::size_t d) {
  if (rows.size() != values.size()) {
    throw InvalidArgument("coalition/value count mismatch");
  }
  const double total = v_full - v_empty;
  if (d == 1) {
    return Vector{total};
  }
  if (rows.size() + 2 < d + 1) {
    throw ComputeError("singular design: " + std::to_string(rows.size() + 2) +
                       " distinct coalitions, need at least " + std::to_string(d + 1));
  }
  const std::size_t p = d - 1;
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd design(n, static_cast<Eigen::Index>(p));
  Eigen::VectorXd rhs(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    const double sw = std::sqrt(row.weight);
    const double z_last = row.coalition.contains(p) ? 1.0 : 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      const double z = row.coalition.contains(i) ? 1.0 : 0.0;
      design(r, static_cast<Eigen::Index>(i)) = sw * (z - z_last);
    }
    rhs(r) = sw * (values[static_cast<std::size_t>(r)] - v_empty - z_last * total);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < static_cast<Eigen::Index>(p)) {
    throw ComputeError("singular design: coalition indicators have rank " +
                       std::to_string(qr.rank()) + ", need " + std::to_string(p) +
                       "; add coalitions");
  }
  const Eigen::VectorXd beta = qr.solve(rhs);
  Vector phi(d);
  double partial = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    phi[i] = beta(static_cast<Eigen::Index>(i));
    partial += phi[i];
  }
  phi[p] = total - partial;
  return phi;
}

}  // namespace varshap
