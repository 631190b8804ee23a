#pragma once

// Tempered optimization driver. The model is trained at beta_0 until the
// bound settles, log Z(beta_0) is estimated, and from then on every
// converged stage is followed by a beta proposal until beta_K is reached
// and trained to convergence.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string_view>

#include "cgvar/checkpoint.hpp"
#include "cgvar/model.hpp"
#include "cgvar/objective.hpp"
#include "cgvar/potentials.hpp"
#include "cgvar/tempering.hpp"

namespace cgvar {

/// A stage has converged once the means of the last two windows of the bound
/// differ by less than rel_tol * max(|previous mean|, 1), or after max_iters.
struct ConvergenceSettings {
  std::size_t window = 100;
  double rel_tol = 1e-3;
  std::size_t min_iters = 200;
  std::size_t max_iters = 5000;

  void validate() const;
};

bool window_converged(std::span<const double> history, const ConvergenceSettings& settings);

struct TrainSettings {
  /// J, samples per gradient estimate.
  std::size_t samples = 1000;
  /// When nonzero, J ramps linearly in beta from `samples` at beta_0 to this
  /// value at beta_K.
  std::size_t samples_final = 0;
  GradientOptions gradient;
  double adam_alpha = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  TemperingSettings tempering;
  ConvergenceSettings inner;
  /// Convergence at beta_K.
  ConvergenceSettings final_stage;
  std::size_t checkpoint_every = 500;
  /// Wrap the target in AuxiliaryBounded for training and log Z(beta_0).
  bool bound_domain = true;
  double half_width = 10.0;
  double slope = 1000.0;
  /// Samples for log Z(beta_0); 0 means J.
  std::size_t log_z0_samples = 0;

  void validate() const;
  std::size_t samples_at(double beta) const;
};

struct TraceRecord {
  std::size_t iter = 0;
  double beta = 0.0;
  double bound = 0.0;  // L
  double term_energy = 0.0;
  double term_recon = 0.0;
  double term_entropy = 0.0;
  double grad_norm = 0.0;
  std::size_t capped_samples = 0;
  std::size_t rescaled_samples = 0;
};

struct TrainObserver {
  std::function<void(const TraceRecord&)> on_iteration;
  std::function<void(const StageRecord&)> on_stage;
  /// reason is "periodic", "stage", "final" or "abort".
  std::function<void(const Checkpoint&, std::string_view reason)> on_checkpoint;
  std::function<void(std::string_view)> on_warning;
  /// The model has converged at the current beta (before any proposal).
  std::function<void(const CgModel&, const TemperState&)> on_converged;
};

struct TrainResult {
  TemperState temper;
  std::size_t iterations = 0;
  bool finished = false;
};

class Trainer {
 public:
  Trainer(CgModel& model, PotentialSpec target, TrainSettings settings, std::uint64_t seed);

  /// Continues from a saved run state instead of starting at beta_0.
  void resume(const RunState& state);

  /// Trains until beta_K has converged or max_iterations inner steps were
  /// taken in this call. Throws StallError / NonFiniteGradientError after
  /// reporting an "abort" checkpoint.
  TrainResult run(const TrainObserver& observer = {},
                  std::size_t max_iterations = std::numeric_limits<std::size_t>::max());

  const RunState& state() const { return state_; }
  Checkpoint checkpoint() const;
  /// The potential the model is trained on (bounded unless disabled).
  const Potential& training_potential() const { return *potential_; }
  const PotentialSpec& training_spec() const { return spec_; }
  const TrainSettings& settings() const { return settings_; }

 private:
  void step(const TrainObserver& observer);
  void on_stage_converged(const TrainObserver& observer);
  void advance_beta(const TrainObserver& observer);

  CgModel& model_;
  PotentialSpec spec_;
  std::shared_ptr<const Potential> potential_;
  TrainSettings settings_;
  std::uint64_t seed_;
  Rng rng_;
  RunState state_;
};

}  // namespace cgvar
