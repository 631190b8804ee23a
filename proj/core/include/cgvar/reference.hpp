#pragma once

// Ground truth that never feeds training: a Metropolis-adjusted Langevin
// sampler of exp(-beta U) and a dense-grid quadrature oracle for potentials
// in one or two dimensions.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cgvar/numeric.hpp"
#include "cgvar/potentials.hpp"

namespace cgvar {

struct MalaConfig {
  double tau = 0.15;
  std::size_t steps = 200000;
  std::size_t burn_in = 20000;
  std::size_t thin = 10;
  double beta = 1.0;
  /// Empty means the origin.
  std::vector<double> initial;

  void validate() const;
};

struct MalaResult {
  /// Post-burn-in samples, every `thin`-th step; (steps - burn_in) / thin rows.
  std::vector<std::vector<double>> samples;
  /// Acceptance rate over the post-burn-in steps.
  double acceptance_rate = 0.0;
  std::size_t accepted = 0;
  std::size_t proposed = 0;
  std::vector<std::string> warnings;
};

/// Proposal x' = x + tau * beta * F(x) + sqrt(2 tau) xi with the
/// Metropolis-Hastings correction for the asymmetric Gaussian proposal.
MalaResult mala_chain(const Potential& potential, const MalaConfig& config, Rng& rng);

/// Independent chains with per-chain generators seeded from `seed`.
std::vector<MalaResult> mala_chains(const Potential& potential, const MalaConfig& config,
                                    std::size_t chains, std::uint64_t seed);

/// One chain per starting point; `config.initial` is ignored.
std::vector<MalaResult> mala_chains(const Potential& potential, const MalaConfig& config,
                                    const std::vector<std::vector<double>>& starts,
                                    std::uint64_t seed);

struct GridAxis {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t points = 0;

  double spacing() const { return (hi - lo) / static_cast<double>(points - 1); }
  double at(std::size_t i) const { return lo + static_cast<double>(i) * spacing(); }
};

struct QuadratureGrid {
  std::vector<GridAxis> axes;

  std::size_t size() const;
  double cell_volume() const;
  void validate(std::size_t dimension) const;

  /// Same bounds, (points - 1) * 2 + 1 points per axis.
  QuadratureGrid refined() const;

  /// x1 in [-5, 5], x2 in [-8, 8] at spacing 0.01.
  static QuadratureGrid double_well();
};

struct ModePredicate {
  std::string name;
  std::function<bool(std::span<const double>)> contains;
};

struct QuadratureResult {
  double log_z = 0.0;
  std::vector<double> mean;
  std::vector<double> variance;
  /// Normalized mass per predicate, in predicate order.
  std::vector<double> mode_masses;
  std::vector<std::string> mode_names;
  double mean_energy = 0.0;
  /// H(p) = log Z + beta <U>.
  double entropy = 0.0;
  /// Largest boundary density relative to the peak density.
  double boundary_ratio = 0.0;
};

/// Tail check threshold: every boundary node must carry density below this
/// fraction of the peak.
inline constexpr double kTailTolerance = 1e-12;

/// Riemann sum over grid nodes. Throws GridError naming the offending
/// boundary when the tail check fails.
QuadratureResult grid_quadrature(const Potential& potential, double beta,
                                 const QuadratureGrid& grid,
                                 const std::vector<ModePredicate>& modes = {});

/// Independent draws from the grid density exp(-beta U): a node is chosen by
/// its weight, then jittered uniformly within its cell.
std::vector<std::vector<double>> quadrature_draws(const Potential& potential, double beta,
                                                  const QuadratureGrid& grid, std::size_t n,
                                                  Rng& rng);

/// {x1 < 0, x1 > 0}.
std::vector<ModePredicate> sign_of_first_coordinate();

/// Kolmogorov-Smirnov distance of samples to the standard normal.
double ks_distance_standard_normal(std::vector<double> samples);

/// Counts i -> j transitions of a 1-d trajectory over the states cut by
/// `edges` and returns max over pairs of |N_ij - N_ji| / mean(N_ij, N_ji).
/// Pairs seen fewer than `min_count` times in total are skipped: their
/// counts are shot noise, not evidence about detailed balance.
double transition_asymmetry(std::span<const double> trajectory, std::span<const double> edges,
                            std::size_t min_count = 1000);

}  // namespace cgvar
