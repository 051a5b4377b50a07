#pragma once

// Dense feed-forward network inference from stored weights.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "varshap/core.hpp"

namespace varshap {

enum class Activation { identity, relu };

inline Activation parse_activation(const std::string& name) {
  if (name == "relu") {
    return Activation::relu;
  }
  if (name == "identity" || name == "linear") {
    return Activation::identity;
  }
  throw ParseError("unknown activation '" + name + "'");
}

struct DenseLayer {
  Matrix weights;  // outputs x inputs
  Vector bias;
  Activation activation = Activation::identity;

  std::size_t inputs() const { return weights.cols(); }
  std::size_t outputs() const { return weights.rows(); }
};

class Mlp {
 public:
  Mlp(std::vector<DenseLayer> layers, std::size_t output_index = 0)
      : layers_(std::move(layers)), output_index_(output_index) {
    if (layers_.empty()) {
      throw InvalidArgument("network has no layers");
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      if (layer.outputs() == 0 || layer.inputs() == 0) {
        throw InvalidArgument("layer " + std::to_string(l) + " has an empty weight matrix");
      }
      if (layer.bias.size() != layer.outputs()) {
        throw InvalidArgument("layer " + std::to_string(l) + ": bias has " +
                              std::to_string(layer.bias.size()) + " entries, weights have " +
                              std::to_string(layer.outputs()) + " rows");
      }
      if (l > 0 && layer.inputs() != layers_[l - 1].outputs()) {
        throw InvalidArgument("layer " + std::to_string(l) + " expects " +
                              std::to_string(layer.inputs()) + " inputs but layer " +
                              std::to_string(l - 1) + " produces " +
                              std::to_string(layers_[l - 1].outputs()));
      }
    }
    if (output_index_ >= layers_.back().outputs()) {
      throw InvalidArgument("output_index " + std::to_string(output_index_) +
                            " out of range for " + std::to_string(layers_.back().outputs()) +
                            " outputs");
    }
  }

  std::size_t input_dim() const { return layers_.front().inputs(); }
  std::size_t output_dim() const { return layers_.back().outputs(); }
  std::size_t output_index() const { return output_index_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  /// All outputs of the final layer.
  Vector forward(std::span<const double> x) const {
    Vector current(x.begin(), x.end());
    Vector next;
    for (const auto& layer : layers_) {
      apply(layer, current, next);
      std::swap(current, next);
    }
    return current;
  }

  double operator()(std::span<const double> x) const {
    thread_local Vector current;
    thread_local Vector next;
    current.assign(x.begin(), x.end());
    for (const auto& layer : layers_) {
      apply(layer, current, next);
      std::swap(current, next);
    }
    return current[output_index_];
  }

 private:
  static void apply(const DenseLayer& layer, const Vector& in, Vector& out) {
    out.resize(layer.outputs());
    for (std::size_t o = 0; o < layer.outputs(); ++o) {
      const auto w = layer.weights.row(o);
      double acc = layer.bias[o];
      for (std::size_t i = 0; i < w.size(); ++i) {
        acc += w[i] * in[i];
      }
      if (layer.activation == Activation::relu && acc < 0.0) {
        acc = 0.0;
      }
      out[o] = acc;
    }
  }

  std::vector<DenseLayer> layers_;
  std::size_t output_index_;
};

inline Model mlp_model(Mlp net) {
  const std::size_t d = net.input_dim();
  return Model(d, [net = std::move(net)](std::span<const double> x) { return net(x); }, "mlp");
}

}  // namespace varshap
