#pragma once

// Reverse-KL training objective
//
//   L(phi, theta) = -beta <U(x)>_q  +  <log r_phi(z|x)>_q  +  H(q_theta(x, z))
//
// estimated over J joint samples x = mu_theta(z) + sigma_theta * eps. The
// entropy term is closed form; the other two are Monte Carlo averages. The
// gradient is the reparametrized estimate: forces enter through dx/dtheta.

#include <cstddef>
#include <span>
#include <vector>

#include "cgvar/model.hpp"
#include "cgvar/numeric.hpp"
#include "cgvar/potentials.hpp"

namespace cgvar {

/// Reduced energies above this (or non-finite) are capped and contribute no force.
inline constexpr double kEnergyCap = 1e12;

/// Frozen draws (z, eps) for J samples. Reusing a batch gives common random
/// numbers across evaluations.
struct NoiseBatch {
  std::size_t n_c = 0;
  std::size_t n_f = 0;
  std::size_t count = 0;
  std::vector<double> z;
  std::vector<double> eps;

  static NoiseBatch draw(std::size_t n_c, std::size_t n_f, std::size_t count, Rng& rng);

  std::span<const double> z_at(std::size_t i) const { return {z.data() + i * n_c, n_c}; }
  std::span<const double> eps_at(std::size_t i) const { return {eps.data() + i * n_f, n_f}; }
};

struct ObjectiveEstimate {
  double total = 0.0;
  double term_energy = 0.0;   // -beta <U>
  double term_recon = 0.0;    // <log r(z|x)>
  double term_entropy = 0.0;  // H(q(x, z))
  std::size_t samples = 0;
  double std_err = 0.0;
  std::size_t capped_samples = 0;
  /// Mean of the reduced energy beta * U over the batch.
  double mean_reduced_energy = 0.0;
};

ObjectiveEstimate estimate_objective(const CgModel& model, const Potential& potential, double beta,
                                     const NoiseBatch& noise);
ObjectiveEstimate estimate_objective(const CgModel& model, const Potential& potential, double beta,
                                     std::size_t samples, Rng& rng);

struct GradientOptions {
  double kappa = 3.0;
  bool normalize = true;
};

struct GradientTelemetry {
  double grad_norm = 0.0;
  double mean_sample_norm = 0.0;
  double l_max = 0.0;
  std::size_t rescaled_samples = 0;
  std::size_t capped_samples = 0;
};

struct GradientEstimate {
  /// dL/d(params), full parameter length (ascent direction).
  std::vector<double> gradient;
  ObjectiveEstimate objective;
  GradientTelemetry telemetry;
};

GradientEstimate estimate_gradient(const CgModel& model, const Potential& potential, double beta,
                                   const NoiseBatch& noise, const GradientOptions& options = {});
GradientEstimate estimate_gradient(const CgModel& model, const Potential& potential, double beta,
                                   std::size_t samples, Rng& rng,
                                   const GradientOptions& options = {});

/// Materialized per-sample gradients g^i of the objective; their mean is the
/// batch gradient. Each g^i includes the closed-form entropy derivative.
struct GradBatch {
  std::vector<std::vector<double>> grads;
  std::vector<double> norms;
  double mean_norm = 0.0;
  double l_max = 0.0;
  std::size_t rescaled = 0;
};

GradBatch per_sample_gradients(const CgModel& model, const Potential& potential, double beta,
                               const NoiseBatch& noise);

/// Rescales every g^i with |g^i| > kappa * mean|g| to norm kappa * mean|g|.
GradBatch normalize_gradients(GradBatch batch, double kappa);

std::vector<double> batch_mean(const GradBatch& batch);

struct AdamState {
  std::size_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  double alpha = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1.0e-8;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// Bias-corrected ADAM descent step: params -= alpha * m_hat / (sqrt(v_hat) + eps).
/// Throws NonFiniteGradientError (state and params untouched) on a bad component.
void adam_step(AdamState& state, std::span<const double> grad, std::span<double> params);

}  // namespace cgvar
