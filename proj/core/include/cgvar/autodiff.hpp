#pragma once

// Reverse-mode differentiation over fixed-topology vector expressions.
//
// An ExprGraph is built once per network shape. Each node holds a vector
// value; parameters live outside the graph in a flat ParamVector and are
// referenced by slice. A graph instance is a single-threaded workspace: copy
// it to evaluate concurrently over the same read-only parameters.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cgvar/numeric.hpp"

namespace cgvar::ad {

enum class ActivationKind { Identity, Tanh, SeLu, LogSigmoid };

/// Elementwise nonlinearity with a closed-form derivative.
///
/// SeLu is lambda * x for x >= 0 and lambda * alpha * (exp(x) - 1) below.
struct Activation {
  ActivationKind kind = ActivationKind::Identity;
  double selu_alpha = 1.6733;
  double selu_lambda = 1.0507;

  double value(double x) const;
  double derivative(double x) const;

  std::string name() const;
  /// Accepts "identity", "none", "tanh", "selu", "logsigmoid" (case-insensitive).
  static Activation parse(std::string_view name);

  friend bool operator==(const Activation&, const Activation&) = default;
};

struct ParamSlice {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 1;

  std::size_t size() const { return rows * cols; }
  friend bool operator==(const ParamSlice&, const ParamSlice&) = default;
};

/// Ordered, non-overlapping named slices of a flat parameter array.
class ParamLayout {
 public:
  const ParamSlice& add(std::string name, std::size_t rows, std::size_t cols = 1);

  const ParamSlice& at(std::string_view name) const;
  const ParamSlice* find(std::string_view name) const;
  std::span<const ParamSlice> slices() const { return slices_; }
  std::size_t size() const { return size_; }

  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;

 private:
  std::vector<ParamSlice> slices_;
  std::size_t size_ = 0;
};

/// Flat trainable scalars together with the layout that names them.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(ParamLayout layout);
  ParamVector(ParamLayout layout, std::vector<double> values);

  const ParamLayout& layout() const { return layout_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  std::span<double> view(const ParamSlice& slice);
  std::span<const double> view(const ParamSlice& slice) const;
  std::span<double> view(std::string_view name) { return view(layout_.at(name)); }
  std::span<const double> view(std::string_view name) const { return view(layout_.at(name)); }

  /// One block per slice, in layout order.
  std::vector<std::vector<double>> unflatten() const;
  static ParamVector flatten(ParamLayout layout, const std::vector<std::vector<double>>& blocks);

 private:
  ParamLayout layout_;
  std::vector<double> values_;
};

/// y = W x + b with W stored row-major (d_out x d_in).
struct LinearLayer {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  ParamSlice weight;
  ParamSlice bias;
};

/// Uniform weights in [-1/sqrt(d_in), 1/sqrt(d_in)], zero bias.
void initialize_layer(const LinearLayer& layer, ParamVector& params, Rng& rng);

using NodeId = std::size_t;

struct Gradients {
  std::vector<double> params;
  std::vector<double> input;
};

class ExprGraph {
 public:
  explicit ExprGraph(std::size_t input_dim);

  NodeId input() const { return 0; }
  NodeId linear(NodeId x, const LinearLayer& layer);
  NodeId activate(NodeId x, Activation activation);
  NodeId add(NodeId a, NodeId b);
  /// Elementwise product.
  NodeId mul(NodeId a, NodeId b);

  /// Outputs are concatenated in the given order.
  void set_outputs(std::vector<NodeId> outputs);

  std::size_t input_dim() const { return nodes_.front().dim; }
  std::size_t output_dim() const { return output_.size(); }
  std::size_t node_count() const { return nodes_.size(); }
  /// Smallest parameter-array length this graph can read from.
  std::size_t required_params() const { return required_params_; }

  /// `params` must stay alive and unchanged until the matching backward.
  std::span<const double> forward(std::span<const double> params, std::span<const double> input);

  Gradients backward(std::span<const double> seed);

  /// Adds d(seed . output)/d(params) into param_grad and writes
  /// d(seed . output)/d(input) into input_grad (skipped when empty).
  void backward_accumulate(std::span<const double> seed, std::span<double> param_grad,
                           std::span<double> input_grad);

  std::span<const double> value(NodeId id) const { return nodes_.at(id).value; }

 private:
  enum class Op { Input, Linear, Activate, Add, Mul };

  struct Node {
    Op op = Op::Input;
    NodeId a = 0;
    NodeId b = 0;
    std::size_t dim = 0;
    Activation activation{};
    LinearLayer layer{};
    std::vector<double> value;
    std::vector<double> grad;
  };

  NodeId push(Node node);
  void check_operand(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<NodeId> outputs_;
  std::vector<double> output_;
  std::size_t required_params_ = 0;
  std::span<const double> params_;
  bool forward_done_ = false;
};

struct LayerSpec {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation{};

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Throws ConfigError unless layers[0].in == input_dim and every layer's
/// output width equals the next layer's input width.
void validate_chain(std::size_t input_dim, std::span<const LayerSpec> layers, std::string_view what);

/// Registers `prefix.W<i>` / `prefix.b<i>` slices and appends the dense
/// layers to the graph. Returns the last node and the created layers.
struct MlpHandle {
  NodeId output = 0;
  std::vector<LinearLayer> layers;
};
MlpHandle append_mlp(ExprGraph& graph, ParamLayout& layout, NodeId input,
                     std::span<const LayerSpec> layers, const std::string& prefix);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h.
std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> point, double h);

}  // namespace cgvar::ad
