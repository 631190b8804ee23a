#include "cgvar/autodiff.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <utility>

#include "cgvar/error.hpp"

namespace cgvar::ad {

namespace {

double softplus(double x) {
  // log(1 + e^x) without overflow
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

double Activation::value(double x) const {
  switch (kind) {
    case ActivationKind::Identity:
      return x;
    case ActivationKind::Tanh:
      return std::tanh(x);
    case ActivationKind::SeLu:
      return x >= 0.0 ? selu_lambda * x : selu_lambda * selu_alpha * std::expm1(x);
    case ActivationKind::LogSigmoid:
      return -softplus(-x);
  }
  return x;
}

double Activation::derivative(double x) const {
  switch (kind) {
    case ActivationKind::Identity:
      return 1.0;
    case ActivationKind::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case ActivationKind::SeLu:
      return x >= 0.0 ? selu_lambda : selu_lambda * selu_alpha * std::exp(x);
    case ActivationKind::LogSigmoid:
      return sigmoid(-x);
  }
  return 1.0;
}

std::string Activation::name() const {
  switch (kind) {
    case ActivationKind::Identity:
      return "identity";
    case ActivationKind::Tanh:
      return "tanh";
    case ActivationKind::SeLu:
      return "selu";
    case ActivationKind::LogSigmoid:
      return "logsigmoid";
  }
  return "identity";
}

Activation Activation::parse(std::string_view name) {
  const std::string key = lower(name);
  Activation a;
  if (key == "identity" || key == "none" || key.empty()) {
    a.kind = ActivationKind::Identity;
  } else if (key == "tanh") {
    a.kind = ActivationKind::Tanh;
  } else if (key == "selu") {
    a.kind = ActivationKind::SeLu;
  } else if (key == "logsigmoid" || key == "log_sigmoid") {
    a.kind = ActivationKind::LogSigmoid;
  } else {
    throw ConfigError("unknown activation '" + std::string(name) + "'");
  }
  return a;
}

// ---------------------------------------------------------------------------

const ParamSlice& ParamLayout::add(std::string name, std::size_t rows, std::size_t cols) {
  if (find(name) != nullptr) {
    throw ArgumentError("duplicate parameter slice '" + name + "'");
  }
  slices_.push_back(ParamSlice{std::move(name), size_, rows, cols});
  size_ += rows * cols;
  return slices_.back();
}

const ParamSlice& ParamLayout::at(std::string_view name) const {
  if (const ParamSlice* s = find(name)) {
    return *s;
  }
  throw ArgumentError("no parameter slice named '" + std::string(name) + "'");
}

const ParamSlice* ParamLayout::find(std::string_view name) const {
  const auto it = std::find_if(slices_.begin(), slices_.end(),
                               [&](const ParamSlice& s) { return s.name == name; });
  return it == slices_.end() ? nullptr : &*it;
}

ParamVector::ParamVector(ParamLayout layout)
    : layout_(std::move(layout)), values_(layout_.size(), 0.0) {}

ParamVector::ParamVector(ParamLayout layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  require_shape(values_.size(), layout_.size(), "ParamVector values");
}

std::span<double> ParamVector::view(const ParamSlice& slice) {
  return std::span<double>(values_).subspan(slice.offset, slice.size());
}

std::span<const double> ParamVector::view(const ParamSlice& slice) const {
  return std::span<const double>(values_).subspan(slice.offset, slice.size());
}

std::vector<std::vector<double>> ParamVector::unflatten() const {
  std::vector<std::vector<double>> blocks;
  blocks.reserve(layout_.slices().size());
  for (const ParamSlice& s : layout_.slices()) {
    const auto v = view(s);
    blocks.emplace_back(v.begin(), v.end());
  }
  return blocks;
}

ParamVector ParamVector::flatten(ParamLayout layout,
                                 const std::vector<std::vector<double>>& blocks) {
  require_shape(blocks.size(), layout.slices().size(), "ParamVector::flatten block count");
  std::vector<double> values;
  values.reserve(layout.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    require_shape(blocks[i].size(), layout.slices()[i].size(), "ParamVector::flatten block");
    values.insert(values.end(), blocks[i].begin(), blocks[i].end());
  }
  return ParamVector(std::move(layout), std::move(values));
}

void initialize_layer(const LinearLayer& layer, ParamVector& params, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(layer.d_in));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  for (double& w : params.view(layer.weight)) {
    w = uniform(rng);
  }
  for (double& b : params.view(layer.bias)) {
    b = 0.0;
  }
}

// ---------------------------------------------------------------------------

ExprGraph::ExprGraph(std::size_t input_dim) {
  if (input_dim == 0) {
    throw ArgumentError("ExprGraph input dimension must be positive");
  }
  Node in;
  in.op = Op::Input;
  in.dim = input_dim;
  push(std::move(in));
}

NodeId ExprGraph::push(Node node) {
  node.value.assign(node.dim, 0.0);
  node.grad.assign(node.dim, 0.0);
  nodes_.push_back(std::move(node));
  forward_done_ = false;
  return nodes_.size() - 1;
}

void ExprGraph::check_operand(NodeId id) const {
  if (id >= nodes_.size()) {
    throw ArgumentError("operand node " + std::to_string(id) + " does not exist yet");
  }
}

NodeId ExprGraph::linear(NodeId x, const LinearLayer& layer) {
  check_operand(x);
  require_shape(nodes_[x].dim, layer.d_in, "linear layer input");
  require_shape(layer.weight.size(), layer.d_in * layer.d_out, "linear layer weight");
  require_shape(layer.bias.size(), layer.d_out, "linear layer bias");
  required_params_ = std::max({required_params_, layer.weight.offset + layer.weight.size(),
                               layer.bias.offset + layer.bias.size()});
  Node n;
  n.op = Op::Linear;
  n.a = x;
  n.dim = layer.d_out;
  n.layer = layer;
  return push(std::move(n));
}

NodeId ExprGraph::activate(NodeId x, Activation activation) {
  check_operand(x);
  Node n;
  n.op = Op::Activate;
  n.a = x;
  n.dim = nodes_[x].dim;
  n.activation = activation;
  return push(std::move(n));
}

NodeId ExprGraph::add(NodeId a, NodeId b) {
  check_operand(a);
  check_operand(b);
  require_shape(nodes_[b].dim, nodes_[a].dim, "add operand");
  Node n;
  n.op = Op::Add;
  n.a = a;
  n.b = b;
  n.dim = nodes_[a].dim;
  return push(std::move(n));
}

NodeId ExprGraph::mul(NodeId a, NodeId b) {
  check_operand(a);
  check_operand(b);
  require_shape(nodes_[b].dim, nodes_[a].dim, "mul operand");
  Node n;
  n.op = Op::Mul;
  n.a = a;
  n.b = b;
  n.dim = nodes_[a].dim;
  return push(std::move(n));
}

void ExprGraph::set_outputs(std::vector<NodeId> outputs) {
  std::size_t total = 0;
  for (NodeId id : outputs) {
    check_operand(id);
    total += nodes_[id].dim;
  }
  outputs_ = std::move(outputs);
  output_.assign(total, 0.0);
  forward_done_ = false;
}

std::span<const double> ExprGraph::forward(std::span<const double> params,
                                           std::span<const double> input) {
  require_shape(input.size(), input_dim(), "graph input");
  if (params.size() < required_params_) {
    throw ShapeError("parameter array too short for graph: need " +
                     std::to_string(required_params_) + ", got " + std::to_string(params.size()));
  }
  if (outputs_.empty()) {
    throw StateError("graph has no outputs");
  }
  params_ = params;
  std::copy(input.begin(), input.end(), nodes_.front().value.begin());

  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    const std::vector<double>& a = nodes_[n.a].value;
    switch (n.op) {
      case Op::Input:
        break;
      case Op::Linear: {
        const double* w = params.data() + n.layer.weight.offset;
        const double* b = params.data() + n.layer.bias.offset;
        const std::size_t d_in = n.layer.d_in;
        for (std::size_t r = 0; r < n.dim; ++r) {
          const double* row = w + r * d_in;
          double acc = b[r];
          for (std::size_t c = 0; c < d_in; ++c) {
            acc += row[c] * a[c];
          }
          n.value[r] = acc;
        }
        break;
      }
      case Op::Activate:
        for (std::size_t k = 0; k < n.dim; ++k) {
          n.value[k] = n.activation.value(a[k]);
        }
        break;
      case Op::Add: {
        const std::vector<double>& b = nodes_[n.b].value;
        for (std::size_t k = 0; k < n.dim; ++k) {
          n.value[k] = a[k] + b[k];
        }
        break;
      }
      case Op::Mul: {
        const std::vector<double>& b = nodes_[n.b].value;
        for (std::size_t k = 0; k < n.dim; ++k) {
          n.value[k] = a[k] * b[k];
        }
        break;
      }
    }
  }

  std::size_t pos = 0;
  for (NodeId id : outputs_) {
    const std::vector<double>& v = nodes_[id].value;
    std::copy(v.begin(), v.end(), output_.begin() + static_cast<std::ptrdiff_t>(pos));
    pos += v.size();
  }
  forward_done_ = true;
  return output_;
}

Gradients ExprGraph::backward(std::span<const double> seed) {
  if (!forward_done_) {
    throw StateError("backward called before forward");
  }
  Gradients g;
  g.params.assign(params_.size(), 0.0);
  g.input.assign(input_dim(), 0.0);
  backward_accumulate(seed, g.params, g.input);
  return g;
}

void ExprGraph::backward_accumulate(std::span<const double> seed, std::span<double> param_grad,
                                    std::span<double> input_grad) {
  if (!forward_done_) {
    throw StateError("backward called before forward");
  }
  require_shape(seed.size(), output_dim(), "backward seed");
  if (param_grad.size() < required_params_) {
    throw ShapeError("parameter gradient array too short for graph");
  }
  if (!input_grad.empty()) {
    require_shape(input_grad.size(), input_dim(), "input gradient");
  }

  for (Node& n : nodes_) {
    std::fill(n.grad.begin(), n.grad.end(), 0.0);
  }
  std::size_t pos = 0;
  for (NodeId id : outputs_) {
    std::vector<double>& g = nodes_[id].grad;
    for (std::size_t k = 0; k < g.size(); ++k) {
      g[k] += seed[pos + k];
    }
    pos += g.size();
  }

  for (std::size_t i = nodes_.size(); i-- > 1;) {
    Node& n = nodes_[i];
    const std::vector<double>& gout = n.grad;
    Node& an = nodes_[n.a];
    switch (n.op) {
      case Op::Input:
        break;
      case Op::Linear: {
        const std::size_t d_in = n.layer.d_in;
        const double* w = params_.data() + n.layer.weight.offset;
        double* gw = param_grad.data() + n.layer.weight.offset;
        double* gb = param_grad.data() + n.layer.bias.offset;
        const std::vector<double>& x = an.value;
        std::vector<double>& gx = an.grad;
        for (std::size_t r = 0; r < n.dim; ++r) {
          const double s = gout[r];
          if (s == 0.0) {
            continue;
          }
          gb[r] += s;
          const double* row = w + r * d_in;
          double* grow = gw + r * d_in;
          for (std::size_t c = 0; c < d_in; ++c) {
            grow[c] += s * x[c];
            gx[c] += s * row[c];
          }
        }
        break;
      }
      case Op::Activate:
        for (std::size_t k = 0; k < n.dim; ++k) {
          an.grad[k] += gout[k] * n.activation.derivative(an.value[k]);
        }
        break;
      case Op::Add: {
        Node& bn = nodes_[n.b];
        for (std::size_t k = 0; k < n.dim; ++k) {
          an.grad[k] += gout[k];
          bn.grad[k] += gout[k];
        }
        break;
      }
      case Op::Mul: {
        Node& bn = nodes_[n.b];
        for (std::size_t k = 0; k < n.dim; ++k) {
          const double av = an.value[k];
          const double bv = bn.value[k];
          an.grad[k] += gout[k] * bv;
          bn.grad[k] += gout[k] * av;
        }
        break;
      }
    }
  }

  if (!input_grad.empty()) {
    const std::vector<double>& gin = nodes_.front().grad;
    std::copy(gin.begin(), gin.end(), input_grad.begin());
  }
}

// ---------------------------------------------------------------------------

void validate_chain(std::size_t input_dim, std::span<const LayerSpec> layers,
                    std::string_view what) {
  if (layers.empty()) {
    throw ConfigError(std::string(what) + ": at least one layer is required");
  }
  std::size_t expected = input_dim;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].in != expected) {
      throw ConfigError(std::string(what) + ": layer " + std::to_string(i + 1) + " expects input " +
                        std::to_string(layers[i].in) + " but receives " + std::to_string(expected));
    }
    if (layers[i].out == 0) {
      throw ConfigError(std::string(what) + ": layer " + std::to_string(i + 1) +
                        " has zero output width");
    }
    expected = layers[i].out;
  }
}

MlpHandle append_mlp(ExprGraph& graph, ParamLayout& layout, NodeId input,
                     std::span<const LayerSpec> layers, const std::string& prefix) {
  MlpHandle handle;
  handle.output = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& spec = layers[i];
    LinearLayer layer;
    layer.d_in = spec.in;
    layer.d_out = spec.out;
    layer.weight = layout.add(prefix + ".W" + std::to_string(i + 1), spec.out, spec.in);
    layer.bias = layout.add(prefix + ".b" + std::to_string(i + 1), spec.out);
    handle.output = graph.linear(handle.output, layer);
    if (spec.activation.kind != ActivationKind::Identity) {
      handle.output = graph.activate(handle.output, spec.activation);
    }
    handle.layers.push_back(layer);
  }
  return handle;
}

std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> point, double h) {
  if (!(h > 0.0)) {
    throw ArgumentError("fd_gradient step must be positive");
  }
  std::vector<double> x(point.begin(), point.end());
  std::vector<double> grad(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw EvaluationError("fd_gradient: non-finite function value at coordinate " +
                            std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace cgvar::ad
