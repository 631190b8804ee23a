#pragma once

// Generative coarse-grained model
//
//   q(z)      = N(0, I)                          latent prior, dim n_c
//   q(x | z)  = N(mu_theta(z), diag(sigma^2))    decoder, sigma free and z-independent
//   r(z | x)  = N(mu_phi(x), diag(s_phi^2(x)))   encoder, two heads on a shared trunk
//
// All trainable scalars sit in one ParamVector: theta slices first (prefix
// "theta."), then phi slices (prefix "phi.").

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cgvar/autodiff.hpp"
#include "cgvar/batch_mlp.hpp"
#include "cgvar/numeric.hpp"

namespace cgvar {

using LatentCV = std::vector<double>;

inline constexpr double kDecoderLogVarMin = -20.0;
inline constexpr double kDecoderLogVarMax = 20.0;
inline constexpr double kEncoderLogVarMin = -10.0;
inline constexpr double kEncoderLogVarMax = 10.0;

struct Architecture {
  std::size_t n_f = 2;
  std::size_t n_c = 1;
  /// x -> trunk output. May be empty, in which case the heads read x directly.
  std::vector<ad::LayerSpec> encoder_trunk;
  /// z -> ... -> n_f. The last layer is normally linear.
  std::vector<ad::LayerSpec> decoder;

  std::size_t trunk_width() const { return encoder_trunk.empty() ? n_f : encoder_trunk.back().out; }
  void validate() const;

  /// Encoder 2-100-100-100 (SeLu, SeLu, Tanh) with linear heads; decoder
  /// 1-100-100-2 (Tanh, Tanh, linear).
  static Architecture double_well(std::size_t width = 100);
  /// Linear decoder and linear-head encoder without hidden layers.
  static Architecture linear(std::size_t n_f, std::size_t n_c);

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct LatentPrior {
  std::size_t n_c = 1;

  double log_density(std::span<const double> z) const;
  double entropy() const;
};

std::vector<LatentCV> sample_prior(const LatentPrior& prior, std::size_t n, Rng& rng);
double log_q_z(const LatentPrior& prior, std::span<const double> z);

struct JointSample {
  LatentCV z;
  std::vector<double> eps;
  std::vector<double> x;
};

struct EncoderOutput {
  std::vector<double> mean;
  /// Clamped to [kEncoderLogVarMin, kEncoderLogVarMax].
  std::vector<double> log_var;
  /// Raw head output before clamping.
  std::vector<double> raw_log_var;
};

class CgModel;

/// Per-thread evaluation state: private copies of the network graphs.
class ModelWorkspace {
 public:
  explicit ModelWorkspace(const CgModel& model);

  std::span<const double> decoder_mean(std::span<const double> z);
  const EncoderOutput& encode(std::span<const double> x);

  ad::ExprGraph& decoder_graph() { return decoder_; }
  ad::ExprGraph& encoder_graph() { return encoder_; }
  const CgModel& model() const { return *model_; }

 private:
  const CgModel* model_;
  ad::ExprGraph decoder_;
  ad::ExprGraph encoder_;
  EncoderOutput enc_out_;
};

class CgModel {
 public:
  /// Fresh model: uniform weight init, zero biases, decoder log-variance 0.
  CgModel(Architecture arch, Rng& rng);
  /// Model over existing parameter values (e.g. from a checkpoint).
  CgModel(Architecture arch, std::vector<double> values);

  const Architecture& architecture() const { return arch_; }
  std::size_t n_f() const { return arch_.n_f; }
  std::size_t n_c() const { return arch_.n_c; }
  LatentPrior prior() const { return LatentPrior{arch_.n_c}; }

  const ad::ParamVector& params() const { return params_; }
  ad::ParamVector& params() { return params_; }
  std::size_t param_count() const { return params_.size(); }

  std::vector<ad::ParamSlice> theta_slices() const;
  std::vector<ad::ParamSlice> phi_slices() const;
  const ad::ParamSlice& decoder_log_var_slice() const { return log_var_slice_; }

  /// Decoder log sigma^2, clamped to [kDecoderLogVarMin, kDecoderLogVarMax].
  std::vector<double> decoder_log_variance() const;
  std::vector<double> decoder_sigma() const;
  /// Number of decoder log-variance entries currently outside the clamp range.
  std::size_t clamped_log_variances() const;

  ModelWorkspace workspace() const { return ModelWorkspace(*this); }

  ad::BatchMlp decoder_batch() const;
  /// Empty trunk yields a default-constructed (depth 0) chain.
  ad::BatchMlp encoder_trunk_batch() const;
  ad::BatchMlp encoder_mean_head_batch() const;
  ad::BatchMlp encoder_log_var_head_batch() const;

 private:
  friend class ModelWorkspace;

  void build();

  Architecture arch_;
  ad::ParamLayout layout_;
  ad::ParamVector params_;
  ad::ExprGraph decoder_graph_{1};
  ad::ExprGraph encoder_graph_{1};
  std::vector<ad::LinearLayer> decoder_layers_;
  std::vector<ad::LinearLayer> encoder_layers_;
  ad::ParamSlice log_var_slice_;
};

/// Decoder and encoder evaluated over B samples at once. Every batch array
/// is column-major (dim x B), the same layout as NoiseBatch.
class ModelBatch {
 public:
  explicit ModelBatch(const CgModel& model);

  const CgModel& model() const { return *model_; }
  std::size_t size() const { return batch_; }

  /// x_i = mu(z_i) + sigma * eps_i.
  std::span<const double> decode(std::span<const double> z, std::span<const double> eps,
                                 std::size_t batch);
  std::span<const double> x() const { return x_; }

  /// Encoder heads at columns of x, which must outlive the backward pass.
  void encode(std::span<const double> x, std::size_t batch);
  std::span<const double> enc_mean() const { return mean_; }
  std::span<const double> enc_log_var() const { return log_var_; }
  std::span<const double> enc_raw_log_var() const { return raw_log_var_; }

  /// log r(z_i | x_i) for the last encode call.
  void log_r(std::span<const double> z, std::span<double> out) const;

  /// Backpropagates seeds on the encoder mean and raw log-variance heads and
  /// writes d/dx (n_f x B) into x_grad.
  void encoder_backward(std::span<const double> seed_mean, std::span<const double> seed_log_var,
                        std::span<double> x_grad);
  /// Backpropagates a seed on the decoder mean (n_f x B).
  void decoder_backward(std::span<const double> seed);

  /// Squared per-sample gradient norms over all network weights (not the
  /// decoder log-variances), added into out.
  void add_sample_sq_norms(std::span<double> out) const;
  /// Adds sum_i w_i g_i over all network weights into grad.
  void accumulate_weighted(std::span<const double> weights, std::span<double> grad) const;

 private:
  const CgModel* model_;
  ad::BatchMlp decoder_;
  ad::BatchMlp trunk_;
  ad::BatchMlp mean_head_;
  ad::BatchMlp log_var_head_;
  std::size_t batch_ = 0;
  std::vector<double> x_;
  std::vector<double> mean_;
  std::vector<double> log_var_;
  std::vector<double> raw_log_var_;
  std::vector<double> trunk_grad_;
  std::vector<double> head_grad_;
};

/// mu_theta(z) + sigma_theta * eps.
std::vector<double> reparametrize(ModelWorkspace& ws, std::span<const double> z,
                                  std::span<const double> eps);

double log_q_x_given_z(ModelWorkspace& ws, std::span<const double> x, std::span<const double> z);
double log_r_z_given_x(ModelWorkspace& ws, std::span<const double> z, std::span<const double> x);

/// Diagonal-Gaussian log density given a log-variance vector.
double log_normal_diag(std::span<const double> x, std::span<const double> mean,
                       std::span<const double> log_var);

/// H(q(z)) + H(q(x|z)), closed form.
double joint_entropy(const CgModel& model);

std::vector<JointSample> ancestral_sample(const CgModel& model, std::size_t n, Rng& rng);

}  // namespace cgvar
