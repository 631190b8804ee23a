#pragma once

// Post-hoc evaluation of a trained model: marginal densities, the predicted
// potential along a slice, KL estimates in both directions, entropy bounds,
// CV assignment, moments, histograms and observables.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cgvar/model.hpp"
#include "cgvar/numeric.hpp"
#include "cgvar/potentials.hpp"
#include "cgvar/reference.hpp"

namespace cgvar {

struct Estimate {
  double value = 0.0;
  double std_err = 0.0;
};

/// log q(x) = log mean_i q(x | z_i), z_i ~ q(z), for each point. One set of
/// N latent draws (and their decoder means) is shared by all points.
std::vector<Estimate> log_marginal(const CgModel& model,
                                   const std::vector<std::vector<double>>& xs, std::size_t n,
                                   Rng& rng);
Estimate log_marginal(const CgModel& model, std::span<const double> x, std::size_t n, Rng& rng);

/// Extension: importance sampling with the encoder as proposal,
/// log mean_i q(x | z_i) q(z_i) / r(z_i | x), z_i ~ r(z | x).
Estimate log_marginal_importance(const CgModel& model, std::span<const double> x, std::size_t n,
                                 Rng& rng);

struct SlicePoint {
  std::vector<double> x;
  double log_q = 0.0;
  /// -log q(x) + c with c chosen so that the slice minimum equals the slice
  /// minimum of beta U.
  double reduced_predicted = 0.0;
  double reduced_target = 0.0;
};

/// Straight slice from `from` to `to` with `points` nodes.
std::vector<SlicePoint> predicted_potential_slice(const CgModel& model, const Potential& potential,
                                                  double beta, std::span<const double> from,
                                                  std::span<const double> to, std::size_t points,
                                                  std::size_t n, Rng& rng);

/// -L + log Z(beta) when log_z is given, else -L.
Estimate reverse_kl_bound(const CgModel& model, const Potential& potential, double beta,
                          std::size_t samples, Rng& rng, std::optional<double> log_z = {});

/// -<log q(x)>_p - H(p) over reference samples, with H(p) from quadrature.
Estimate forward_kl_estimate(const CgModel& model,
                             const std::vector<std::vector<double>>& reference_samples,
                             double target_entropy, std::size_t n_marginal, Rng& rng);

/// H(q(x, z)) + <log r(z | x)>_q, a lower bound on H(q(x)).
Estimate entropy_lower_bound(const CgModel& model, std::size_t samples, Rng& rng);
/// E_q(x) E_r(z|x) [-log q(x | z) - log q(z) + log r(z | x)], an upper bound on H(q(x)).
Estimate entropy_upper_bound(const CgModel& model, std::size_t samples, Rng& rng);

struct CvAssignment {
  std::vector<double> x;
  std::vector<double> z_mean;
  std::vector<double> z_sigma;
};

std::vector<CvAssignment> assign_cvs(const CgModel& model,
                                     const std::vector<std::vector<double>>& xs);

/// Configurations of `n` ancestral samples (z discarded).
std::vector<std::vector<double>> sample_configurations(const CgModel& model, std::size_t n,
                                                       Rng& rng);

struct Moments {
  std::vector<double> mean;
  std::vector<double> std;
};

Moments moments(const std::vector<std::vector<double>>& samples);

/// At most n rows taken at an even stride, so pooled multi-chain output is
/// not reduced to its first few chains.
std::vector<std::vector<double>> subsample_evenly(const std::vector<std::vector<double>>& rows,
                                                  std::size_t n);

/// Fraction of samples inside each predicate.
std::vector<double> mode_fractions(const std::vector<std::vector<double>>& samples,
                                   const std::vector<ModePredicate>& modes);

struct HistogramSpec {
  std::size_t dim_x = 0;
  std::size_t dim_y = 1;
  double x_lo = -4.0;
  double x_hi = 4.0;
  std::size_t x_bins = 80;
  double y_lo = -4.0;
  double y_hi = 4.0;
  std::size_t y_bins = 80;
};

struct Histogram2D {
  HistogramSpec spec;
  /// Row-major x_bins x y_bins, normalized over the samples inside the range.
  std::vector<double> frequencies;
  std::size_t counted = 0;
  std::size_t outside = 0;

  double at(std::size_t ix, std::size_t iy) const { return frequencies[ix * spec.y_bins + iy]; }
};

Histogram2D histogram2d(const std::vector<std::vector<double>>& samples, const HistogramSpec& spec);

struct ObservableFn {
  std::string name;
  std::string units;
  std::function<double(std::span<const double>)> fn;
};

Estimate ensemble_average(const std::vector<std::vector<double>>& samples,
                          const ObservableFn& observable);

/// sqrt(sum_p m_p |x_p - x_com|^2 / sum_p m_p) for particles stored as
/// consecutive `spatial_dim`-vectors.
double radius_of_gyration(std::span<const double> x, std::span<const double> masses,
                          std::size_t spatial_dim = 3);

}  // namespace cgvar
