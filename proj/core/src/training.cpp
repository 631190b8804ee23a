#include "cgvar/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cgvar/error.hpp"

namespace cgvar {

void ConvergenceSettings::validate() const {
  if (window == 0) {
    throw ConfigError("convergence window must be positive");
  }
  if (!(rel_tol > 0.0)) {
    throw ConfigError("convergence tolerance must be positive");
  }
  if (max_iters == 0 || min_iters > max_iters) {
    throw ConfigError("convergence needs 0 < max_iters and min_iters <= max_iters");
  }
}

bool window_converged(std::span<const double> history, const ConvergenceSettings& s) {
  if (history.size() < 2 * s.window) {
    return false;
  }
  const auto last = history.last(s.window);
  const auto prev = history.subspan(history.size() - 2 * s.window, s.window);
  const double w = static_cast<double>(s.window);
  const double m1 = std::accumulate(last.begin(), last.end(), 0.0) / w;
  const double m0 = std::accumulate(prev.begin(), prev.end(), 0.0) / w;
  return std::abs(m1 - m0) < s.rel_tol * std::max(std::abs(m0), 1.0);
}

void TrainSettings::validate() const {
  if (samples < 2) {
    throw ConfigError("J must be at least 2");
  }
  if (samples_final != 0 && samples_final < 2) {
    throw ConfigError("final J must be at least 2");
  }
  if (!(gradient.kappa > 0.0)) {
    throw ConfigError("gradient normalization kappa must be positive");
  }
  if (!(adam_alpha > 0.0) || !(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_epsilon > 0.0)) {
    throw ConfigError("ADAM needs alpha > 0, beta1 and beta2 in [0, 1), epsilon > 0");
  }
  tempering.validate();
  inner.validate();
  final_stage.validate();
  if (checkpoint_every == 0) {
    throw ConfigError("checkpoint cadence must be positive");
  }
  if (bound_domain && (!(half_width > 0.0) || !(slope > 0.0))) {
    throw ConfigError("auxiliary bounds need b > 0 and u > 0");
  }
}

std::size_t TrainSettings::samples_at(double beta) const {
  if (samples_final == 0) {
    return samples;
  }
  const double t = std::clamp((beta - tempering.beta_0) / (tempering.beta_K - tempering.beta_0),
                              0.0, 1.0);
  const double j = static_cast<double>(samples) +
                   t * (static_cast<double>(samples_final) - static_cast<double>(samples));
  return static_cast<std::size_t>(std::llround(j));
}

// ---------------------------------------------------------------------------

Trainer::Trainer(CgModel& model, PotentialSpec target, TrainSettings settings, std::uint64_t seed)
    : model_(model), settings_(std::move(settings)), seed_(seed), rng_(seed) {
  settings_.validate();
  spec_ = settings_.bound_domain ? bounded(std::move(target), settings_.half_width, settings_.slope)
                                 : std::move(target);
  potential_ = make_potential(spec_);
  require_shape(potential_->dimension(), model_.n_f(), "target potential dimension");
  state_.adam = AdamState(model_.param_count());
  state_.adam.alpha = settings_.adam_alpha;
  state_.adam.beta1 = settings_.adam_beta1;
  state_.adam.beta2 = settings_.adam_beta2;
  state_.adam.epsilon = settings_.adam_epsilon;
  state_.temper.beta = settings_.tempering.beta_0;
}

void Trainer::resume(const RunState& state) {
  require_shape(state.adam.m.size(), model_.param_count(), "resumed optimizer state");
  state_ = state;
  rng_ = rng_from_string(state.rng_state);
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c = Checkpoint::of(model_, seed_);
  c.potential = spec_;
  c.run_state = state_;
  c.run_state->rng_state = rng_to_string(rng_);
  return c;
}

TrainResult Trainer::run(const TrainObserver& observer, std::size_t max_iterations) {
  auto report = [&](std::string_view reason) {
    if (observer.on_checkpoint) {
      observer.on_checkpoint(checkpoint(), reason);
    }
  };
  std::size_t taken = 0;
  try {
    while (!state_.finished && taken < max_iterations) {
      if (state_.stage_converged) {
        advance_beta(observer);
        report("stage");
        continue;
      }
      step(observer);
      ++taken;
      if (state_.iteration % settings_.checkpoint_every == 0) {
        report("periodic");
      }
      const bool final = state_.temper.terminal(settings_.tempering);
      const ConvergenceSettings& conv = final ? settings_.final_stage : settings_.inner;
      const bool settled = state_.stage_iteration >= conv.min_iters &&
                           window_converged(state_.stage_history, conv);
      if (settled || state_.stage_iteration >= conv.max_iters) {
        if (!settled && observer.on_warning) {
          observer.on_warning("stage at beta = " + std::to_string(state_.temper.beta) +
                              " hit the inner iteration cap before the bound settled");
        }
        on_stage_converged(observer);
        report(state_.finished ? "final" : "stage");
      }
    }
  } catch (const Error&) {
    report("abort");
    throw;
  }
  return TrainResult{state_.temper, state_.iteration, state_.finished};
}

void Trainer::step(const TrainObserver& observer) {
  const double beta = state_.temper.beta;
  const GradientEstimate g =
      estimate_gradient(model_, *potential_, beta, settings_.samples_at(beta), rng_,
                        settings_.gradient);
  // ascent on L is descent on -L
  std::vector<double> descent(g.gradient.size());
  std::transform(g.gradient.begin(), g.gradient.end(), descent.begin(),
                 [](double v) { return -v; });
  adam_step(state_.adam, descent, model_.params().values());

  ++state_.iteration;
  ++state_.stage_iteration;
  state_.stage_history.push_back(g.objective.total);
  const std::size_t keep = 2 * std::max(settings_.inner.window, settings_.final_stage.window);
  if (state_.stage_history.size() > keep) {
    state_.stage_history.erase(state_.stage_history.begin(),
                               state_.stage_history.end() - static_cast<std::ptrdiff_t>(keep));
  }
  if (observer.on_iteration) {
    observer.on_iteration(TraceRecord{state_.iteration, beta, g.objective.total,
                                      g.objective.term_energy, g.objective.term_recon,
                                      g.objective.term_entropy, g.telemetry.grad_norm,
                                      g.telemetry.capped_samples, g.telemetry.rescaled_samples});
  }
}

void Trainer::on_stage_converged(const TrainObserver& observer) {
  if (state_.temper.stages.empty()) {
    const std::size_t n = settings_.log_z0_samples != 0 ? settings_.log_z0_samples
                                                        : settings_.samples_at(state_.temper.beta);
    const LogZEstimate z0 = log_z0(model_, *potential_, state_.temper.beta, n, rng_,
                                   settings_.tempering.ess_min_fraction);
    if (observer.on_warning) {
      for (const std::string& w : z0.warnings) {
        observer.on_warning("log Z(beta_0): " + w);
      }
    }
    state_.temper = TemperState::start(state_.temper.beta, z0.value, z0.ess);
    if (observer.on_stage) {
      observer.on_stage(state_.temper.stages.back());
    }
  }
  if (observer.on_converged) {
    observer.on_converged(model_, state_.temper);
  }
  state_.stage_converged = true;
  if (state_.temper.terminal(settings_.tempering)) {
    state_.finished = true;
  }
}

void Trainer::advance_beta(const TrainObserver& observer) {
  const double beta = state_.temper.beta;
  const std::size_t n = settings_.tempering.samples != 0 ? settings_.tempering.samples
                                                         : settings_.samples_at(beta);
  const BetaProposal p =
      propose_next_beta(state_.temper, settings_.tempering, model_, *potential_, n, rng_);
  accept(state_.temper, p);
  state_.stage_converged = false;
  state_.stage_iteration = 0;
  state_.stage_history.clear();
  if (observer.on_stage) {
    observer.on_stage(state_.temper.stages.back());
  }
}

}  // namespace cgvar
