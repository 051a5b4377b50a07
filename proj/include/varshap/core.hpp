#pragma once

// Domain types shared by every estimator: instances, datasets, coalitions,
// attributions and the black-box model wrapper.

#include <algorithm>
#include <bit>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace varshap {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller-side contract violation (bad dimension, bad parameter).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A malformed model, dataset or attribution file.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A numerical failure during estimation (singular design, degenerate weights).
class ComputeError : public Error {
 public:
  using Error::Error;
};

using Vector = std::vector<double>;

/// Dense row-major matrix. Rows are contiguous so they can be handed to a
/// model as a span.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  Vector column(std::size_t c) const {
    Vector out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
      out[r] = (*this)(r, c);
    }
    return out;
  }

  void append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) {
      cols_ = values.size();
    }
    if (values.size() != cols_) {
      throw InvalidArgument("row has " + std::to_string(values.size()) + " entries, expected " +
                            std::to_string(cols_));
    }
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  std::span<const double> data() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// The explained point.
using Instance = Vector;

inline void validate_instance(std::span<const double> x) {
  if (x.empty()) {
    throw InvalidArgument("instance must have at least one feature");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) {
      throw InvalidArgument("instance entry " + std::to_string(i) + " is not finite");
    }
  }
}

struct Dataset {
  Matrix rows;
  std::vector<std::string> feature_names;
  std::optional<Vector> target;
  std::optional<std::vector<std::string>> group_labels;

  std::size_t n() const { return rows.rows(); }
  std::size_t d() const { return rows.cols(); }

  void validate() const {
    if (n() < 2) {
      throw InvalidArgument("dataset needs at least 2 rows, has " + std::to_string(n()));
    }
    if (feature_names.size() != d()) {
      throw InvalidArgument("dataset has " + std::to_string(d()) + " columns but " +
                            std::to_string(feature_names.size()) + " feature names");
    }
    std::set<std::string> seen;
    for (const auto& name : feature_names) {
      if (!seen.insert(name).second) {
        throw InvalidArgument("duplicate feature name '" + name + "'");
      }
    }
    for (double v : rows.data()) {
      if (!std::isfinite(v)) {
        throw InvalidArgument("dataset contains a non-finite value");
      }
    }
    if (target && target->size() != n()) {
      throw InvalidArgument("target length does not match row count");
    }
    if (group_labels && group_labels->size() != n()) {
      throw InvalidArgument("group label count does not match row count");
    }
  }

  /// Rows [begin, end) as a new dataset with the same schema.
  Dataset slice(std::size_t begin, std::size_t end) const {
    Dataset out;
    out.feature_names = feature_names;
    for (std::size_t r = begin; r < end; ++r) {
      out.rows.append_row(rows.row(r));
    }
    if (out.rows.empty()) {
      out.rows = Matrix(0, d());
    }
    if (target) {
      out.target = Vector(target->begin() + static_cast<std::ptrdiff_t>(begin),
                          target->begin() + static_cast<std::ptrdiff_t>(end));
    }
    if (group_labels) {
      out.group_labels = std::vector<std::string>(
          group_labels->begin() + static_cast<std::ptrdiff_t>(begin),
          group_labels->begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
  }
};

/// Features up to this count are stored as a bit mask.
inline constexpr std::size_t kMaskFeatureLimit = 64;

/// A set of feature indices held fixed at the explained instance's values.
class Coalition {
 public:
  explicit Coalition(std::size_t d) : d_(d) {
    if (d > kMaskFeatureLimit) {
      members_ = std::vector<std::size_t>{};
    }
  }

  static Coalition empty(std::size_t d) { return Coalition(d); }

  static Coalition full(std::size_t d) {
    Coalition c(d);
    if (c.uses_mask()) {
      c.members_ = d == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << d) - 1;
    } else {
      std::vector<std::size_t> all(d);
      for (std::size_t i = 0; i < d; ++i) {
        all[i] = i;
      }
      c.members_ = std::move(all);
    }
    return c;
  }

  static Coalition from_mask(std::uint64_t mask, std::size_t d) {
    if (d > kMaskFeatureLimit) {
      throw InvalidArgument("mask form is limited to 64 features");
    }
    if (d < 64 && (mask >> d) != 0) {
      throw InvalidArgument("mask has bits beyond feature count " + std::to_string(d));
    }
    Coalition c(d);
    c.members_ = mask;
    return c;
  }

  static Coalition from_indices(std::span<const std::size_t> indices, std::size_t d) {
    Coalition c(d);
    std::vector<std::size_t> sorted(indices.begin(), indices.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw InvalidArgument("coalition has duplicate feature indices");
    }
    if (!sorted.empty() && sorted.back() >= d) {
      throw InvalidArgument("feature index " + std::to_string(sorted.back()) +
                            " out of range for d=" + std::to_string(d));
    }
    if (c.uses_mask()) {
      std::uint64_t mask = 0;
      for (auto i : sorted) {
        mask |= std::uint64_t{1} << i;
      }
      c.members_ = mask;
    } else {
      c.members_ = std::move(sorted);
    }
    return c;
  }

  std::size_t dimension() const { return d_; }
  bool uses_mask() const { return std::holds_alternative<std::uint64_t>(members_); }

  std::uint64_t mask() const {
    if (!uses_mask()) {
      throw InvalidArgument("coalition over more than 64 features has no mask form");
    }
    return std::get<std::uint64_t>(members_);
  }

  bool contains(std::size_t i) const {
    if (uses_mask()) {
      return i < d_ && ((std::get<std::uint64_t>(members_) >> i) & 1u) != 0;
    }
    const auto& list = std::get<std::vector<std::size_t>>(members_);
    return std::binary_search(list.begin(), list.end(), i);
  }

  std::size_t size() const {
    if (uses_mask()) {
      return static_cast<std::size_t>(std::popcount(std::get<std::uint64_t>(members_)));
    }
    return std::get<std::vector<std::size_t>>(members_).size();
  }

  /// Members in increasing order.
  std::vector<std::size_t> indices() const {
    if (!uses_mask()) {
      return std::get<std::vector<std::size_t>>(members_);
    }
    std::vector<std::size_t> out;
    std::uint64_t m = std::get<std::uint64_t>(members_);
    while (m != 0) {
      out.push_back(static_cast<std::size_t>(std::countr_zero(m)));
      m &= m - 1;
    }
    return out;
  }

  Coalition with(std::size_t i) const {
    if (i >= d_) {
      throw InvalidArgument("feature index out of range");
    }
    if (uses_mask()) {
      return from_mask(mask() | (std::uint64_t{1} << i), d_);
    }
    auto list = indices();
    list.push_back(i);
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    Coalition c(d_);
    c.members_ = std::move(list);
    return c;
  }

  /// 64-bit key used to address this coalition's random stream.
  std::uint64_t stream_key() const {
    if (uses_mask()) {
      return mask();
    }
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (auto i : std::get<std::vector<std::size_t>>(members_)) {
      h ^= static_cast<std::uint64_t>(i) + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
      h *= 0x100000001B3ull;
    }
    return h;
  }

  friend bool operator==(const Coalition&, const Coalition&) = default;
  friend auto operator<=>(const Coalition& a, const Coalition& b) {
    if (auto c = a.d_ <=> b.d_; c != 0) {
      return c;
    }
    if (a.uses_mask()) {
      return std::get<std::uint64_t>(a.members_) <=> std::get<std::uint64_t>(b.members_);
    }
    return std::get<std::vector<std::size_t>>(a.members_) <=>
           std::get<std::vector<std::size_t>>(b.members_);
  }

 private:
  std::size_t d_;
  std::variant<std::uint64_t, std::vector<std::size_t>> members_ = std::uint64_t{0};
};

using ParamValue = std::variant<double, std::string>;

/// A per-feature importance vector plus what is needed to reproduce it.
struct Attribution {
  Vector phi;
  std::string method;
  std::map<std::string, ParamValue> params;
  std::uint64_t seed = 0;
  /// Var(empty coalition) for variance-game methods, the surrogate intercept
  /// or empty-coalition value for LIME and KernelSHAP.
  double base_variance = 0.0;

  std::size_t d() const { return phi.size(); }

  double param_number(const std::string& key, double fallback) const {
    auto it = params.find(key);
    if (it == params.end()) {
      return fallback;
    }
    if (const auto* v = std::get_if<double>(&it->second)) {
      return *v;
    }
    throw ParseError("attribution parameter '" + key + "' is not a number");
  }

  std::string param_string(const std::string& key, const std::string& fallback) const {
    auto it = params.find(key);
    if (it == params.end()) {
      return fallback;
    }
    if (const auto* v = std::get_if<std::string>(&it->second)) {
      return *v;
    }
    throw ParseError("attribution parameter '" + key + "' is not a string");
  }

  friend bool operator==(const Attribution&, const Attribution&) = default;
};

/// Black-box scalar predictor over d real inputs.
///
/// The wrapped callable must be pure. Models that are not safe to call from
/// several threads at once are constructed with `reentrant = false`, which
/// makes the estimators evaluate them sequentially.
class Model {
 public:
  using Evaluator = std::function<double(std::span<const double>)>;

  Model() = default;
  Model(std::size_t arity, Evaluator fn, std::string name = "model", bool reentrant = true)
      : arity_(arity), fn_(std::move(fn)), name_(std::move(name)), reentrant_(reentrant) {
    if (arity_ == 0) {
      throw InvalidArgument("model arity must be at least 1");
    }
    if (!fn_) {
      throw InvalidArgument("model evaluator is empty");
    }
  }

  double operator()(std::span<const double> x) const { return fn_(x); }

  double evaluate(std::span<const double> x) const {
    if (x.size() != arity_) {
      throw InvalidArgument("model '" + name_ + "' expects " + std::to_string(arity_) +
                            " inputs, got " + std::to_string(x.size()));
    }
    return fn_(x);
  }

  std::size_t arity() const { return arity_; }
  const std::string& name() const { return name_; }
  bool reentrant() const { return reentrant_; }

  /// x -> scale * f(x) + shift, sharing the evaluator.
  Model affine(double scale, double shift) const {
    auto fn = fn_;
    return Model(
        arity_, [fn, scale, shift](std::span<const double> x) { return scale * fn(x) + shift; },
        name_, reentrant_);
  }

 private:
  std::size_t arity_ = 0;
  Evaluator fn_;
  std::string name_;
  bool reentrant_ = true;
};

inline Model constant_model(std::size_t arity, double value) {
  return Model(arity, [value](std::span<const double>) { return value; }, "constant");
}

inline Model linear_model(Vector weights, double bias = 0.0) {
  const std::size_t d = weights.size();
  return Model(
      d,
      [w = std::move(weights), bias](std::span<const double> x) {
        double acc = bias;
        for (std::size_t i = 0; i < w.size(); ++i) {
          acc += w[i] * x[i];
        }
        return acc;
      },
      "linear");
}

}  // namespace varshap
