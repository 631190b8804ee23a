#pragma once

// Adaptive inverse-temperature schedule.
//
// After the model has converged at beta_k, the next inverse temperature is the
// largest beta_k + f * dbeta_max (f = 1, 0.6, 0.36, ...) whose relative
// KL increase c_k stays at or below c_max. log Z(beta) is tracked by
// multistage accumulation of importance-sampled ratios on top of an
// importance-sampled log Z(beta_0).

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cgvar/model.hpp"
#include "cgvar/numeric.hpp"
#include "cgvar/potentials.hpp"

namespace cgvar {

struct ImportanceWeights {
  std::vector<double> log_w;
  double shift = 0.0;  // max log_w
  std::vector<double> normalized;

  static ImportanceWeights from_log_weights(std::vector<double> log_w);
  double effective_sample_size() const;
};

/// Joint samples (x, z) ~ q(x, z) with the log-densities every estimator
/// needs. Reduced energies are evaluated per beta on demand.
struct ModelSampleSet {
  std::vector<std::vector<double>> x;
  std::vector<std::vector<double>> z;
  std::vector<double> log_r;    // log r(z|x)
  std::vector<double> log_qxz;  // log q(x|z) + log q(z)

  std::size_t size() const { return x.size(); }
  std::vector<double> reduced_energies(const Potential& potential, double beta) const;
};

ModelSampleSet draw_model_samples(const CgModel& model, std::size_t n, Rng& rng);

struct LogZEstimate {
  double value = 0.0;
  double ess = 0.0;
  bool reliable = true;
  std::vector<std::string> warnings;
};

/// Fraction of N below which an importance estimate is flagged unreliable.
inline constexpr double kDefaultEssMinFraction = 0.02;

/// log Z(beta_k + dbeta) - log Z(beta_k) by self-normalized importance
/// sampling over joint samples from the model.
LogZEstimate log_z_ratio(const ModelSampleSet& samples, const Potential& potential, double beta_k,
                         double delta_beta, double ess_min_fraction = kDefaultEssMinFraction);
LogZEstimate log_z_ratio(const CgModel& model, const Potential& potential, double beta_k,
                         double delta_beta, std::size_t n, Rng& rng,
                         double ess_min_fraction = kDefaultEssMinFraction);

/// log Z(beta_0) by importance sampling with weights
/// exp(-beta_0 U) r(z|x) / q(x, z). Warns unless the potential is an
/// AuxiliaryBounded wrapper, since Z(beta_0) diverges on an unbounded domain
/// as beta_0 -> 0.
LogZEstimate log_z0(const ModelSampleSet& samples, const Potential& potential, double beta_0,
                    double ess_min_fraction = kDefaultEssMinFraction);
LogZEstimate log_z0(const CgModel& model, const Potential& potential, double beta_0, std::size_t n,
                    Rng& rng, double ess_min_fraction = kDefaultEssMinFraction);

struct KlIncrease {
  double c = 0.0;
  double numerator = 0.0;
  double denominator = 0.0;
  double log_ratio = 0.0;
  double ess = 0.0;
  bool reliable = true;
};

/// c_k = [log Z_{k+1} - log Z_k + <beta_{k+1} U - beta_k U>]
///       / [log Z_k + <beta_k U> - <log r> - H(q(x, z))]
/// on a single shared sample set. Throws DegenerateError when the
/// denominator is within 1e-8 of zero.
KlIncrease relative_kl_increase(const CgModel& model, const ModelSampleSet& samples,
                                const Potential& potential, double beta_k, double beta_next,
                                double log_z_k, double ess_min_fraction = kDefaultEssMinFraction);
KlIncrease relative_kl_increase(const CgModel& model, const Potential& potential, double beta_k,
                                double beta_next, double log_z_k, std::size_t n, Rng& rng,
                                double ess_min_fraction = kDefaultEssMinFraction);

struct TemperingSettings {
  double beta_0 = 1e-10;
  double beta_K = 1.0;
  double delta_beta_max = 1e-3;
  double c_max = 1.0;
  double decay = 0.6;
  double ess_min_fraction = kDefaultEssMinFraction;
  /// Samples per c estimate; 0 means "use the training J".
  std::size_t samples = 0;

  void validate() const;
};

struct StageRecord {
  std::size_t k = 0;
  double beta = 0.0;
  double c = 0.0;
  double f_final = 1.0;
  double log_z = 0.0;
  double ess = 0.0;
};

struct TemperState {
  std::size_t k = 0;
  double beta = 0.0;
  double log_z = 0.0;
  std::vector<double> log_z_history;
  std::vector<StageRecord> stages;

  static TemperState start(double beta_0, double log_z_0, double ess = 0.0);
  bool terminal(const TemperingSettings& settings) const { return beta >= settings.beta_K; }
};

struct BetaProposal {
  double beta = 0.0;
  double c = 0.0;
  double f = 1.0;
  double log_ratio = 0.0;
  double ess = 0.0;
  std::size_t attempts = 0;
};

/// Estimates c for a proposed beta_next (given the current state).
using KlIncreaseFn = std::function<KlIncrease(double beta_next)>;

/// Do-while reading of the schedule: propose with f, estimate c, accept if
/// c <= c_max, else f <- decay * f. Proposals never exceed beta_K. Throws
/// StallError once f < 1e-12 * dbeta_max.
BetaProposal propose_next_beta(const TemperState& state, const TemperingSettings& settings,
                               const KlIncreaseFn& estimate);

/// Same, estimating c from fresh model samples. An estimate whose ESS falls
/// below the floor is retried once with 4x samples; if it is still
/// unreliable the proposal counts as rejected.
BetaProposal propose_next_beta(const TemperState& state, const TemperingSettings& settings,
                               const CgModel& model, const Potential& potential,
                               std::size_t samples, Rng& rng);

/// Moves the state to the proposal and folds its log Z ratio into log Z.
void accept(TemperState& state, const BetaProposal& proposal);

}  // namespace cgvar
