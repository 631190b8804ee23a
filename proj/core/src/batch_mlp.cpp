#include "cgvar/batch_mlp.hpp"

#include <Eigen/Core>
#include <cmath>
#include <utility>

#include "cgvar/error.hpp"

namespace cgvar::ad {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
using MapMat = Eigen::Map<Mat>;
using ConstMapMat = Eigen::Map<const Mat>;
using RowMajorMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMapWeight = Eigen::Map<const RowMajorMat>;
using MapWeight = Eigen::Map<RowMajorMat>;

// Activation derivative from the pre-activation z and the output h = act(z).
double derivative_at(const Activation& a, double z, double h) {
  switch (a.kind) {
    case ActivationKind::Identity:
      return 1.0;
    case ActivationKind::Tanh:
      return 1.0 - h * h;
    case ActivationKind::SeLu:
      return z >= 0.0 ? a.selu_lambda : h + a.selu_lambda * a.selu_alpha;
    case ActivationKind::LogSigmoid:
      return a.derivative(z);
  }
  return 1.0;
}

}  // namespace

BatchMlp::BatchMlp(std::vector<LinearLayer> layers, std::vector<Activation> activations)
    : layers_(std::move(layers)), activations_(std::move(activations)) {
  if (layers_.empty() || layers_.size() != activations_.size()) {
    throw ArgumentError("BatchMlp needs one activation per layer and at least one layer");
  }
  for (std::size_t l = 1; l < layers_.size(); ++l) {
    if (layers_[l].d_in != layers_[l - 1].d_out) {
      throw ShapeError("BatchMlp layer " + std::to_string(l) + " input width mismatch");
    }
  }
  pre_.resize(layers_.size());
  post_.resize(layers_.size());
  delta_.resize(layers_.size());
}

std::size_t BatchMlp::input_dim() const { return layers_.front().d_in; }
std::size_t BatchMlp::output_dim() const { return layers_.back().d_out; }

std::span<const double> BatchMlp::forward(std::span<const double> params,
                                          std::span<const double> input, std::size_t batch) {
  require_shape(input.size(), input_dim() * batch, "batch input");
  params_ = params;
  input_ = input;
  batch_ = batch;
  const double* a = input.data();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LinearLayer& L = layers_[l];
    pre_[l].resize(L.d_out * batch);
    post_[l].resize(L.d_out * batch);
    ConstMapWeight w(params.data() + L.weight.offset, static_cast<Eigen::Index>(L.d_out),
                     static_cast<Eigen::Index>(L.d_in));
    Eigen::Map<const Eigen::VectorXd> b(params.data() + L.bias.offset,
                                        static_cast<Eigen::Index>(L.d_out));
    ConstMapMat in(a, static_cast<Eigen::Index>(L.d_in), static_cast<Eigen::Index>(batch));
    MapMat z(pre_[l].data(), static_cast<Eigen::Index>(L.d_out), static_cast<Eigen::Index>(batch));
    z.noalias() = w * in;
    z.colwise() += b;
    const Activation& act = activations_[l];
    if (act.kind == ActivationKind::Identity) {
      post_[l] = pre_[l];
    } else {
      for (std::size_t k = 0; k < pre_[l].size(); ++k) {
        post_[l][k] = act.value(pre_[l][k]);
      }
    }
    a = post_[l].data();
  }
  forward_done_ = true;
  backward_done_ = false;
  return post_.back();
}

void BatchMlp::backward(std::span<const double> seed, std::span<double> input_grad) {
  if (!forward_done_) {
    throw StateError("BatchMlp::backward called before forward");
  }
  require_shape(seed.size(), output_dim() * batch_, "batch seed");
  if (!input_grad.empty()) {
    require_shape(input_grad.size(), input_dim() * batch_, "batch input gradient");
  }
  const auto cols = static_cast<Eigen::Index>(batch_);
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const LinearLayer& L = layers_[l];
    std::vector<double>& d = delta_[l];
    d.resize(L.d_out * batch_);
    if (l + 1 == layers_.size()) {
      std::copy(seed.begin(), seed.end(), d.begin());
    } else {
      const LinearLayer& next = layers_[l + 1];
      ConstMapWeight w(params_.data() + next.weight.offset, static_cast<Eigen::Index>(next.d_out),
                       static_cast<Eigen::Index>(next.d_in));
      ConstMapMat dn(delta_[l + 1].data(), static_cast<Eigen::Index>(next.d_out), cols);
      MapMat(d.data(), static_cast<Eigen::Index>(L.d_out), cols).noalias() = w.transpose() * dn;
    }
    const Activation& act = activations_[l];
    if (act.kind != ActivationKind::Identity) {
      for (std::size_t k = 0; k < d.size(); ++k) {
        d[k] *= derivative_at(act, pre_[l][k], post_[l][k]);
      }
    }
  }
  if (!input_grad.empty()) {
    const LinearLayer& first = layers_.front();
    ConstMapWeight w(params_.data() + first.weight.offset, static_cast<Eigen::Index>(first.d_out),
                     static_cast<Eigen::Index>(first.d_in));
    ConstMapMat d0(delta_.front().data(), static_cast<Eigen::Index>(first.d_out), cols);
    MapMat(input_grad.data(), static_cast<Eigen::Index>(first.d_in), cols).noalias() =
        w.transpose() * d0;
  }
  backward_done_ = true;
}

void BatchMlp::add_sample_sq_norms(std::span<double> out) const {
  if (!backward_done_) {
    throw StateError("BatchMlp norms requested before backward");
  }
  require_shape(out.size(), batch_, "batch norms");
  const auto cols = static_cast<Eigen::Index>(batch_);
  Eigen::Map<Eigen::RowVectorXd> acc(out.data(), cols);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LinearLayer& L = layers_[l];
    const double* a = l == 0 ? input_.data() : post_[l - 1].data();
    ConstMapMat in(a, static_cast<Eigen::Index>(L.d_in), cols);
    ConstMapMat d(delta_[l].data(), static_cast<Eigen::Index>(L.d_out), cols);
    // |delta|^2 |a|^2 for W plus |delta|^2 for b
    acc.array() +=
        d.colwise().squaredNorm().array() * (in.colwise().squaredNorm().array() + 1.0);
  }
}

void BatchMlp::accumulate_weighted(std::span<const double> weights,
                                   std::span<double> param_grad) const {
  if (!backward_done_) {
    throw StateError("BatchMlp accumulation requested before backward");
  }
  require_shape(weights.size(), batch_, "batch weights");
  const auto cols = static_cast<Eigen::Index>(batch_);
  Eigen::Map<const Eigen::VectorXd> s(weights.data(), cols);
  Mat scaled;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LinearLayer& L = layers_[l];
    const double* a = l == 0 ? input_.data() : post_[l - 1].data();
    ConstMapMat in(a, static_cast<Eigen::Index>(L.d_in), cols);
    ConstMapMat d(delta_[l].data(), static_cast<Eigen::Index>(L.d_out), cols);
    scaled.noalias() = d * s.asDiagonal();
    MapWeight gw(param_grad.data() + L.weight.offset, static_cast<Eigen::Index>(L.d_out),
                 static_cast<Eigen::Index>(L.d_in));
    gw.noalias() += scaled * in.transpose();
    Eigen::Map<Eigen::VectorXd> gb(param_grad.data() + L.bias.offset,
                                   static_cast<Eigen::Index>(L.d_out));
    gb += scaled.rowwise().sum();
  }
}

}  // namespace cgvar::ad
