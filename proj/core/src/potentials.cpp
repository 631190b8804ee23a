#include "cgvar/potentials.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <utility>

#include "cgvar/error.hpp"
#include "cgvar/numeric.hpp"

namespace cgvar {

double Potential::reduced_energy(double beta, std::span<const double> x) const {
  return beta * energy(x);
}

void Potential::reduced_force(double beta, std::span<const double> x,
                              std::span<double> out) const {
  force(x, out);
  for (double& f : out) {
    f *= beta;
  }
}

std::vector<double> Potential::force(std::span<const double> x) const {
  std::vector<double> f(dimension(), 0.0);
  force(x, f);
  return f;
}

EnergySample Potential::evaluate(std::span<const double> x) const {
  EnergySample s;
  s.x.assign(x.begin(), x.end());
  s.u = energy(x);
  s.f = force(x);
  return s;
}

void Potential::check_dimension(std::span<const double> x) const {
  require_shape(x.size(), dimension(), "configuration");
}

void Potential::check_dimension(std::span<const double> x, std::span<double> out) const {
  require_shape(x.size(), dimension(), "configuration");
  require_shape(out.size(), dimension(), "force output");
}

// ---------------------------------------------------------------------------

double DoubleWell2D::energy(std::span<const double> x) const {
  check_dimension(x);
  const double x1 = x[0];
  const double x2 = x[1];
  const double sq = x1 * x1;
  return 0.25 * sq * sq - 3.0 * sq + tilt_ * x1 + 0.5 * x2 * x2;
}

void DoubleWell2D::force(std::span<const double> x, std::span<double> out) const {
  check_dimension(x, out);
  const double x1 = x[0];
  out[0] = -(x1 * x1 * x1 - 6.0 * x1 + tilt_);
  out[1] = -x[1];
}

std::string DoubleWell2D::describe() const {
  std::ostringstream os;
  os << "DoubleWell2D(tilt=" << tilt_ << ")";
  return os.str();
}

// ---------------------------------------------------------------------------

Harmonic::Harmonic(std::size_t n, double stiffness) : n_(n), k_(stiffness) {
  if (n == 0) {
    throw ArgumentError("Harmonic dimension must be positive");
  }
  if (!(stiffness > 0.0)) {
    throw ArgumentError("Harmonic stiffness must be positive");
  }
}

double Harmonic::energy(std::span<const double> x) const {
  check_dimension(x);
  return 0.5 * k_ * squared_norm(x);
}

void Harmonic::force(std::span<const double> x, std::span<double> out) const {
  check_dimension(x, out);
  for (std::size_t i = 0; i < n_; ++i) {
    out[i] = -k_ * x[i];
  }
}

std::string Harmonic::describe() const {
  std::ostringstream os;
  os << "Harmonic(n=" << n_ << ", k=" << k_ << ")";
  return os.str();
}

double Harmonic::log_partition(double beta) const {
  if (!(beta > 0.0)) {
    throw ArgumentError("Harmonic::log_partition needs beta > 0");
  }
  return 0.5 * static_cast<double>(n_) * std::log(2.0 * M_PI / (beta * k_));
}

// ---------------------------------------------------------------------------

GaussianMixture::GaussianMixture(std::vector<double> weights,
                                 std::vector<std::vector<double>> means,
                                 std::vector<std::vector<double>> variances)
    : means_(std::move(means)), variances_(std::move(variances)) {
  if (weights.empty()) {
    throw ArgumentError("GaussianMixture needs at least one component");
  }
  require_shape(means_.size(), weights.size(), "GaussianMixture means");
  require_shape(variances_.size(), weights.size(), "GaussianMixture variances");
  dim_ = means_.front().size();
  if (dim_ == 0) {
    throw ArgumentError("GaussianMixture dimension must be positive");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (!(weights[k] > 0.0)) {
      throw ArgumentError("GaussianMixture weights must be positive");
    }
    require_shape(means_[k].size(), dim_, "GaussianMixture mean");
    require_shape(variances_[k].size(), dim_, "GaussianMixture variance");
    for (double v : variances_[k]) {
      if (!(v > 0.0)) {
        throw ArgumentError("GaussianMixture variances must be positive");
      }
    }
    total += weights[k];
  }
  log_weights_.reserve(weights.size());
  for (double w : weights) {
    log_weights_.push_back(std::log(w / total));
  }
}

void GaussianMixture::component_log_densities(std::span<const double> x,
                                              std::span<double> out) const {
  for (std::size_t k = 0; k < log_weights_.size(); ++k) {
    double acc = log_weights_[k];
    for (std::size_t j = 0; j < dim_; ++j) {
      const double d = x[j] - means_[k][j];
      acc -= 0.5 * (kLog2Pi + std::log(variances_[k][j]) + d * d / variances_[k][j]);
    }
    out[k] = acc;
  }
}

double GaussianMixture::energy(std::span<const double> x) const {
  check_dimension(x);
  std::vector<double> lp(log_weights_.size());
  component_log_densities(x, lp);
  return -log_sum_exp(lp);
}

void GaussianMixture::force(std::span<const double> x, std::span<double> out) const {
  check_dimension(x, out);
  std::vector<double> lp(log_weights_.size());
  component_log_densities(x, lp);
  const double norm = log_sum_exp(lp);
  std::fill(out.begin(), out.end(), 0.0);
  // F = grad log p = sum_k resp_k * (mu_k - x) / var_k
  for (std::size_t k = 0; k < lp.size(); ++k) {
    const double resp = std::exp(lp[k] - norm);
    for (std::size_t j = 0; j < dim_; ++j) {
      out[j] += resp * (means_[k][j] - x[j]) / variances_[k][j];
    }
  }
}

std::string GaussianMixture::describe() const {
  std::ostringstream os;
  os << "GaussianMixture(components=" << log_weights_.size() << ", n=" << dim_ << ")";
  return os.str();
}

// ---------------------------------------------------------------------------

AuxiliaryBounded::AuxiliaryBounded(std::shared_ptr<const Potential> inner, double half_width,
                                   double slope)
    : inner_(std::move(inner)), b_(half_width), u_(slope) {
  if (!inner_) {
    throw ArgumentError("AuxiliaryBounded needs an inner potential");
  }
  if (!(half_width > 0.0)) {
    throw ArgumentError("AuxiliaryBounded half-width b must be positive");
  }
  if (!(slope > 0.0)) {
    throw ArgumentError("AuxiliaryBounded slope u must be positive");
  }
}

double AuxiliaryBounded::excess(std::span<const double> x) const {
  double acc = 0.0;
  for (double xi : x) {
    acc += std::max(std::abs(xi) - b_, 0.0);
  }
  return acc;
}

double AuxiliaryBounded::energy_at(double beta, std::span<const double> x) const {
  check_dimension(x);
  if (!(beta > 0.0)) {
    throw ArgumentError("AuxiliaryBounded::energy_at needs beta > 0");
  }
  std::vector<double> clamped(x.begin(), x.end());
  for (double& c : clamped) {
    c = std::clamp(c, -b_, b_);
  }
  return inner_->energy(clamped) + (u_ / beta) * excess(x);
}

double AuxiliaryBounded::energy(std::span<const double> x) const { return energy_at(1.0, x); }

void AuxiliaryBounded::force(std::span<const double> x, std::span<double> out) const {
  reduced_force(1.0, x, out);
}

double AuxiliaryBounded::reduced_energy(double beta, std::span<const double> x) const {
  check_dimension(x);
  std::vector<double> clamped(x.begin(), x.end());
  for (double& c : clamped) {
    c = std::clamp(c, -b_, b_);
  }
  const double inner = beta == 0.0 ? 0.0 : beta * inner_->energy(clamped);
  return inner + u_ * excess(x);
}

void AuxiliaryBounded::reduced_force(double beta, std::span<const double> x,
                                     std::span<double> out) const {
  check_dimension(x, out);
  std::vector<double> clamped(x.begin(), x.end());
  for (double& c : clamped) {
    c = std::clamp(c, -b_, b_);
  }
  if (beta != 0.0) {
    inner_->force(clamped, out);
  } else {
    std::fill(out.begin(), out.end(), 0.0);
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > b_) {
      out[i] = -u_;
    } else if (x[i] < -b_) {
      out[i] = u_;
    } else {
      out[i] *= beta;
    }
  }
}

std::string AuxiliaryBounded::describe() const {
  std::ostringstream os;
  os << "AuxiliaryBounded(" << inner_->describe() << ", b=" << b_ << ", u=" << u_ << ")";
  return os.str();
}

double auxiliary_energy(const AuxiliaryBounded& potential, double beta,
                        std::span<const double> x) {
  return potential.energy_at(beta, x);
}

// ---------------------------------------------------------------------------

std::shared_ptr<const Potential> make_potential(const PotentialSpec& spec) {
  switch (spec.kind) {
    case PotentialSpec::Kind::DoubleWell2D:
      if (spec.dimension != 2) {
        throw ConfigError("DoubleWell2D is two-dimensional");
      }
      return std::make_shared<DoubleWell2D>(spec.tilt);
    case PotentialSpec::Kind::Harmonic:
      return std::make_shared<Harmonic>(spec.dimension, spec.stiffness);
    case PotentialSpec::Kind::GaussianMixture:
      return std::make_shared<GaussianMixture>(spec.weights, spec.means, spec.variances);
    case PotentialSpec::Kind::AuxiliaryBounded:
      if (!spec.inner) {
        throw ConfigError("AuxiliaryBounded spec has no inner potential");
      }
      return std::make_shared<AuxiliaryBounded>(make_potential(*spec.inner), spec.half_width,
                                                spec.slope);
  }
  throw ConfigError("unknown potential kind");
}

PotentialSpec bounded(PotentialSpec spec, double half_width, double slope) {
  if (spec.kind == PotentialSpec::Kind::AuxiliaryBounded) {
    return spec;
  }
  PotentialSpec outer;
  outer.kind = PotentialSpec::Kind::AuxiliaryBounded;
  outer.dimension = spec.dimension;
  outer.half_width = half_width;
  outer.slope = slope;
  outer.inner = std::make_shared<PotentialSpec>(std::move(spec));
  return outer;
}

const char* kind_name(PotentialSpec::Kind kind) {
  switch (kind) {
    case PotentialSpec::Kind::DoubleWell2D:
      return "double_well_2d";
    case PotentialSpec::Kind::Harmonic:
      return "harmonic";
    case PotentialSpec::Kind::GaussianMixture:
      return "gaussian_mixture";
    case PotentialSpec::Kind::AuxiliaryBounded:
      return "auxiliary_bounded";
  }
  return "unknown";
}

PotentialSpec::Kind parse_potential_kind(const std::string& name) {
  std::string key = name;
  std::transform(key.begin(), key.end(), key.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (key == "double_well_2d" || key == "doublewell2d" || key == "double_well") {
    return PotentialSpec::Kind::DoubleWell2D;
  }
  if (key == "harmonic") {
    return PotentialSpec::Kind::Harmonic;
  }
  if (key == "gaussian_mixture" || key == "gaussianmixture") {
    return PotentialSpec::Kind::GaussianMixture;
  }
  if (key == "auxiliary_bounded" || key == "auxiliarybounded") {
    return PotentialSpec::Kind::AuxiliaryBounded;
  }
  throw ConfigError("unknown potential kind '" + name + "'");
}

}  // namespace cgvar
