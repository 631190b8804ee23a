#include "cgvar/tempering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cgvar/error.hpp"
#include "cgvar/objective.hpp"
#include "cgvar/parallel.hpp"

namespace cgvar {

namespace {

constexpr std::size_t kBlockSize = 256;
constexpr double kDegenerateDenominator = 1e-8;
constexpr double kStallFraction = 1e-12;

void flag_ess(LogZEstimate& est, std::size_t n, double ess_min_fraction) {
  if (est.ess < ess_min_fraction * static_cast<double>(n)) {
    est.reliable = false;
    est.warnings.push_back("effective sample size " + std::to_string(est.ess) + " below " +
                           std::to_string(ess_min_fraction * static_cast<double>(n)));
  }
}

}  // namespace

ImportanceWeights ImportanceWeights::from_log_weights(std::vector<double> log_w) {
  if (log_w.empty()) {
    throw ArgumentError("importance weights need at least one sample");
  }
  ImportanceWeights w;
  w.log_w = std::move(log_w);
  w.shift = *std::max_element(w.log_w.begin(), w.log_w.end());
  if (!std::isfinite(w.shift)) {
    throw EvaluationError("importance log-weights have no finite maximum");
  }
  const double norm = log_sum_exp(w.log_w);
  w.normalized.resize(w.log_w.size());
  for (std::size_t i = 0; i < w.log_w.size(); ++i) {
    w.normalized[i] = std::exp(w.log_w[i] - norm);
  }
  return w;
}

double ImportanceWeights::effective_sample_size() const {
  return 1.0 / squared_norm(normalized);
}

std::vector<double> ModelSampleSet::reduced_energies(const Potential& potential,
                                                     double beta) const {
  std::vector<double> e(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = potential.reduced_energy(beta, x[i]);
    e[i] = std::isfinite(v) ? std::min(v, kEnergyCap) : kEnergyCap;
  }
  return e;
}

ModelSampleSet draw_model_samples(const CgModel& model, std::size_t n, Rng& rng) {
  if (n < 2) {
    throw ArgumentError("model sample sets need at least two samples");
  }
  const NoiseBatch noise = NoiseBatch::draw(model.n_c(), model.n_f(), n, rng);
  const LatentPrior prior = model.prior();
  ModelSampleSet s;
  s.x.resize(n);
  s.z.resize(n);
  s.log_r.resize(n);
  s.log_qxz.resize(n);
  const std::size_t n_f = model.n_f();
  const std::size_t n_c = model.n_c();
  const auto log_var = model.decoder_log_variance();
  const std::size_t n_blocks = (n + kBlockSize - 1) / kBlockSize;
  parallel_blocks(n_blocks, [&](std::size_t b) {
    ModelBatch batch(model);
    const std::size_t begin = b * kBlockSize;
    const std::size_t count = std::min(n, begin + kBlockSize) - begin;
    const auto z = std::span(noise.z).subspan(begin * n_c, count * n_c);
    const auto eps = std::span(noise.eps).subspan(begin * n_f, count * n_f);
    const auto x = batch.decode(z, eps, count);
    batch.encode(x, count);
    batch.log_r(z, std::span(s.log_r).subspan(begin, count));
    for (std::size_t i = 0; i < count; ++i) {
      const auto zi = z.subspan(i * n_c, n_c);
      const auto ei = eps.subspan(i * n_f, n_f);
      const auto xi = x.subspan(i * n_f, n_f);
      s.z[begin + i].assign(zi.begin(), zi.end());
      s.x[begin + i].assign(xi.begin(), xi.end());
      // x - mu = sigma * eps, so log q(x|z) follows from eps directly
      double log_qx = 0.0;
      for (std::size_t j = 0; j < n_f; ++j) {
        log_qx -= 0.5 * (kLog2Pi + log_var[j] + ei[j] * ei[j]);
      }
      s.log_qxz[begin + i] = log_qx + prior.log_density(zi);
    }
  });
  return s;
}

LogZEstimate log_z_ratio(const ModelSampleSet& samples, const Potential& potential, double beta_k,
                         double delta_beta, double ess_min_fraction) {
  if (!(delta_beta >= 0.0)) {
    throw ArgumentError("log_z_ratio needs delta_beta >= 0");
  }
  if (samples.size() < 100) {
    throw ArgumentError("log_z_ratio needs N >= 100 samples");
  }
  const auto e_k = samples.reduced_energies(potential, beta_k);
  const auto e_next = samples.reduced_energies(potential, beta_k + delta_beta);
  std::vector<double> log_w(samples.size());
  std::vector<double> shifted(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    log_w[i] = -e_k[i] + samples.log_r[i] - samples.log_qxz[i];
    shifted[i] = log_w[i] - (e_next[i] - e_k[i]);
  }
  const auto weights = ImportanceWeights::from_log_weights(log_w);
  LogZEstimate est;
  // log sum_i exp(-dbeta U_i) W_i, with W_i = w_i / sum w
  est.value = log_sum_exp(shifted) - log_sum_exp(log_w);
  est.ess = weights.effective_sample_size();
  flag_ess(est, samples.size(), ess_min_fraction);
  return est;
}

LogZEstimate log_z_ratio(const CgModel& model, const Potential& potential, double beta_k,
                         double delta_beta, std::size_t n, Rng& rng, double ess_min_fraction) {
  if (n < 100) {
    throw ArgumentError("log_z_ratio needs N >= 100 samples");
  }
  return log_z_ratio(draw_model_samples(model, n, rng), potential, beta_k, delta_beta,
                     ess_min_fraction);
}

LogZEstimate log_z0(const ModelSampleSet& samples, const Potential& potential, double beta_0,
                    double ess_min_fraction) {
  if (!(beta_0 >= 0.0)) {
    throw ArgumentError("log_z0 needs beta_0 >= 0");
  }
  const auto e = samples.reduced_energies(potential, beta_0);
  std::vector<double> log_w(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    log_w[i] = -e[i] + samples.log_r[i] - samples.log_qxz[i];
  }
  LogZEstimate est;
  est.value = log_mean_exp(log_w);
  est.ess = ImportanceWeights::from_log_weights(log_w).effective_sample_size();
  if (dynamic_cast<const AuxiliaryBounded*>(&potential) == nullptr) {
    est.warnings.push_back(
        "potential is not wrapped in AuxiliaryBounded: Z(beta_0) may diverge as beta_0 -> 0");
  }
  flag_ess(est, samples.size(), ess_min_fraction);
  return est;
}

LogZEstimate log_z0(const CgModel& model, const Potential& potential, double beta_0, std::size_t n,
                    Rng& rng, double ess_min_fraction) {
  return log_z0(draw_model_samples(model, n, rng), potential, beta_0, ess_min_fraction);
}

KlIncrease relative_kl_increase(const CgModel& model, const ModelSampleSet& samples,
                                const Potential& potential, double beta_k, double beta_next,
                                double log_z_k, double ess_min_fraction) {
  if (!(beta_next >= beta_k)) {
    throw ArgumentError("relative_kl_increase needs beta_next >= beta_k");
  }
  const LogZEstimate ratio =
      log_z_ratio(samples, potential, beta_k, beta_next - beta_k, ess_min_fraction);
  const auto e_k = samples.reduced_energies(potential, beta_k);
  const auto e_next = samples.reduced_energies(potential, beta_next);
  const double n = static_cast<double>(samples.size());
  double mean_e = 0.0;
  double mean_de = 0.0;
  double mean_r = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    mean_e += e_k[i];
    mean_de += e_next[i] - e_k[i];
    mean_r += samples.log_r[i];
  }
  mean_e /= n;
  mean_de /= n;
  mean_r /= n;

  KlIncrease out;
  out.log_ratio = ratio.value;
  out.ess = ratio.ess;
  out.reliable = ratio.reliable;
  out.numerator = beta_next == beta_k ? 0.0 : ratio.value + mean_de;
  out.denominator = log_z_k + mean_e - mean_r - joint_entropy(model);
  if (std::abs(out.denominator) < kDegenerateDenominator) {
    throw DegenerateError("relative KL increase: bound estimate is ~0 (denominator " +
                          std::to_string(out.denominator) + ")");
  }
  out.c = out.numerator / out.denominator;
  return out;
}

KlIncrease relative_kl_increase(const CgModel& model, const Potential& potential, double beta_k,
                                double beta_next, double log_z_k, std::size_t n, Rng& rng,
                                double ess_min_fraction) {
  return relative_kl_increase(model, draw_model_samples(model, n, rng), potential, beta_k,
                              beta_next, log_z_k, ess_min_fraction);
}

// ---------------------------------------------------------------------------

void TemperingSettings::validate() const {
  if (!(beta_0 >= 0.0) || !(beta_K > beta_0)) {
    throw ConfigError("tempering needs 0 <= beta_0 < beta_K");
  }
  if (!(delta_beta_max > 0.0)) {
    throw ConfigError("tempering needs delta_beta_max > 0");
  }
  if (!(c_max > 0.0)) {
    throw ConfigError("tempering needs c_max > 0");
  }
  if (!(decay > 0.0 && decay < 1.0)) {
    throw ConfigError("tempering decay factor must lie in (0, 1)");
  }
  if (!(ess_min_fraction >= 0.0 && ess_min_fraction < 1.0)) {
    throw ConfigError("ess_min_fraction must lie in [0, 1)");
  }
}

TemperState TemperState::start(double beta_0, double log_z_0, double ess) {
  TemperState s;
  s.k = 0;
  s.beta = beta_0;
  s.log_z = log_z_0;
  s.log_z_history = {log_z_0};
  s.stages.push_back(StageRecord{0, beta_0, 0.0, 1.0, log_z_0, ess});
  return s;
}

BetaProposal propose_next_beta(const TemperState& state, const TemperingSettings& settings,
                               const KlIncreaseFn& estimate) {
  BetaProposal p;
  if (state.terminal(settings)) {
    p.beta = settings.beta_K;
    p.f = 0.0;
    return p;
  }
  double f = 1.0;
  while (true) {
    if (f < kStallFraction) {
      throw StallError("tempering stalled at beta = " + std::to_string(state.beta) +
                       ": no increment down to " + std::to_string(f * settings.delta_beta_max) +
                       " keeps c <= c_max; train longer at this stage");
    }
    const double beta_next = std::min(state.beta + f * settings.delta_beta_max, settings.beta_K);
    const KlIncrease c = estimate(beta_next);
    ++p.attempts;
    if (c.reliable && c.c <= settings.c_max) {
      p.beta = beta_next;
      p.c = c.c;
      p.f = f;
      p.log_ratio = c.log_ratio;
      p.ess = c.ess;
      return p;
    }
    f *= settings.decay;
  }
}

BetaProposal propose_next_beta(const TemperState& state, const TemperingSettings& settings,
                               const CgModel& model, const Potential& potential,
                               std::size_t samples, Rng& rng) {
  const KlIncreaseFn estimate = [&](double beta_next) {
    KlIncrease c = relative_kl_increase(model, potential, state.beta, beta_next, state.log_z,
                                        samples, rng, settings.ess_min_fraction);
    if (!c.reliable) {
      c = relative_kl_increase(model, potential, state.beta, beta_next, state.log_z, 4 * samples,
                               rng, settings.ess_min_fraction);
    }
    return c;
  };
  return propose_next_beta(state, settings, estimate);
}

void accept(TemperState& state, const BetaProposal& proposal) {
  if (proposal.beta < state.beta) {
    throw ArgumentError("tempering proposals must not decrease beta");
  }
  if (proposal.attempts == 0) {
    return;  // terminal: nothing was proposed
  }
  ++state.k;
  state.beta = proposal.beta;
  state.log_z += proposal.log_ratio;
  state.log_z_history.push_back(state.log_z);
  state.stages.push_back(
      StageRecord{state.k, state.beta, proposal.c, proposal.f, state.log_z, proposal.ess});
}

}  // namespace cgvar
