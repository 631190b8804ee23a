#pragma once

// Dense chain evaluated over a whole batch at once. Batch matrices are
// column-major d x B with one column per sample, so every layer is a single
// matrix product. Per-sample parameter-gradient norms come out of the stored
// activations and deltas without materializing the per-sample gradients:
// a layer's weight gradient for sample i is delta_i a_i^T, whose squared
// norm is |delta_i|^2 |a_i|^2.

#include <cstddef>
#include <span>
#include <vector>

#include "cgvar/autodiff.hpp"

namespace cgvar::ad {

class BatchMlp {
 public:
  BatchMlp() = default;
  BatchMlp(std::vector<LinearLayer> layers, std::vector<Activation> activations);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t depth() const { return layers_.size(); }

  /// `params` and `input` (input_dim x batch) must stay alive until the
  /// matching backward and accumulate calls.
  std::span<const double> forward(std::span<const double> params, std::span<const double> input,
                                  std::size_t batch);

  /// Seeds d(loss)/d(output) (output_dim x batch). Writes d(loss)/d(input)
  /// into input_grad unless it is empty.
  void backward(std::span<const double> seed, std::span<double> input_grad);

  /// Adds each sample's squared parameter-gradient norm into out[i].
  void add_sample_sq_norms(std::span<double> out) const;

  /// Adds sum_i weights[i] * g_i into param_grad.
  void accumulate_weighted(std::span<const double> weights, std::span<double> param_grad) const;

 private:
  std::vector<LinearLayer> layers_;
  std::vector<Activation> activations_;
  std::span<const double> params_;
  std::span<const double> input_;
  std::size_t batch_ = 0;
  std::vector<std::vector<double>> pre_;    // z_l = W a + b
  std::vector<std::vector<double>> post_;   // act(z_l)
  std::vector<std::vector<double>> delta_;  // d loss / d z_l
  bool forward_done_ = false;
  bool backward_done_ = false;
};

}  // namespace cgvar::ad
