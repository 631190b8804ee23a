#pragma once

// Model checkpoints as JSON documents:
//
//   arch          {n_f, n_c, encoder_trunk: [{in, out, activation}], decoder: [...]}
//                 where activation is {kind, alpha, lambda}
//   theta_layout  [{name, offset, rows, cols}] for every "theta." slice
//   phi_layout    same for the "phi." slices
//   values        flat parameter array
//   n_c, n_f, seed
//   potential     (optional) the target's PotentialSpec
//   run_state     (optional) optimizer, tempering and RNG state for resuming

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cgvar/model.hpp"
#include "cgvar/objective.hpp"
#include "cgvar/potentials.hpp"
#include "cgvar/tempering.hpp"

namespace cgvar {

struct RunState {
  /// Global inner-iteration counter.
  std::size_t iteration = 0;
  /// Inner iterations spent at the current beta.
  std::size_t stage_iteration = 0;
  /// Training has converged at beta and the next step is a beta proposal.
  bool stage_converged = false;
  bool finished = false;
  AdamState adam;
  TemperState temper;
  /// Bound values seen at the current stage (convergence window).
  std::vector<double> stage_history;
  /// Textual engine state (operator<< of Rng).
  std::string rng_state;
};

struct Checkpoint {
  Architecture arch;
  std::vector<double> values;
  std::uint64_t seed = 0;
  std::optional<PotentialSpec> potential;
  std::optional<RunState> run_state;

  static Checkpoint of(const CgModel& model, std::uint64_t seed);
  CgModel model() const;
};

std::string to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const std::string& text);

/// Writes atomically (temporary file, then rename).
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::string potential_to_json(const PotentialSpec& spec);
PotentialSpec potential_from_json(const std::string& text);

std::string rng_to_string(const Rng& rng);
Rng rng_from_string(const std::string& state);

}  // namespace cgvar
