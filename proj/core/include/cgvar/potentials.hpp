#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cgvar {

using Configuration = std::vector<double>;

struct EnergySample {
  Configuration x;
  double u = 0.0;
  std::vector<double> f;
};

/// Energy + force contract. Implementations are stateless after
/// construction and safe to evaluate concurrently.
class Potential {
 public:
  virtual ~Potential() = default;

  virtual std::size_t dimension() const = 0;
  virtual double energy(std::span<const double> x) const = 0;
  /// Writes F(x) = -grad U(x) into `out`.
  virtual void force(std::span<const double> x, std::span<double> out) const = 0;
  virtual std::string describe() const = 0;

  /// beta * U(x). Potentials whose energy depends on beta override this so
  /// that the product stays finite as beta goes to 0.
  virtual double reduced_energy(double beta, std::span<const double> x) const;
  /// -d(beta * U)/dx.
  virtual void reduced_force(double beta, std::span<const double> x, std::span<double> out) const;

  std::vector<double> force(std::span<const double> x) const;
  EnergySample evaluate(std::span<const double> x) const;

 protected:
  void check_dimension(std::span<const double> x) const;
  void check_dimension(std::span<const double> x, std::span<double> out) const;
};

/// U(x) = 1/4 x1^4 - 3 x1^2 + c x1 + 1/2 x2^2 with tilt c (1 by default).
class DoubleWell2D final : public Potential {
 public:
  explicit DoubleWell2D(double tilt = 1.0) : tilt_(tilt) {}

  std::size_t dimension() const override { return 2; }
  double energy(std::span<const double> x) const override;
  void force(std::span<const double> x, std::span<double> out) const override;
  using Potential::force;
  std::string describe() const override;

  double tilt() const { return tilt_; }

 private:
  double tilt_;
};

/// U(x) = k/2 |x|^2 in n dimensions.
class Harmonic final : public Potential {
 public:
  Harmonic(std::size_t n, double stiffness);

  std::size_t dimension() const override { return n_; }
  double energy(std::span<const double> x) const override;
  void force(std::span<const double> x, std::span<double> out) const override;
  using Potential::force;
  std::string describe() const override;

  double stiffness() const { return k_; }
  /// log of the integral of exp(-beta U) over R^n.
  double log_partition(double beta) const;

 private:
  std::size_t n_;
  double k_;
};

/// U(x) = -log sum_k w_k N(x; mu_k, diag(var_k)).
class GaussianMixture final : public Potential {
 public:
  GaussianMixture(std::vector<double> weights, std::vector<std::vector<double>> means,
                  std::vector<std::vector<double>> variances);

  std::size_t dimension() const override { return dim_; }
  double energy(std::span<const double> x) const override;
  void force(std::span<const double> x, std::span<double> out) const override;
  using Potential::force;
  std::string describe() const override;

 private:
  /// Per-component log(w_k N(x; mu_k, var_k)).
  void component_log_densities(std::span<const double> x, std::span<double> out) const;

  std::size_t dim_;
  std::vector<double> log_weights_;
  std::vector<std::vector<double>> means_;
  std::vector<std::vector<double>> variances_;
};

/// Restricts an inner potential to the box [-b, b]^n with linear walls.
///
///   U_aux(x; beta) = U(clamp(x)) + (u / beta) * sum_i max(|x_i| - b, 0)
///
/// which reduces to U inside the box and is continuous at the faces. The
/// reduced energy beta * U_aux = beta * U(clamp(x)) + u * excess stays finite
/// at beta = 0, which is what keeps the tempered start integrable.
class AuxiliaryBounded final : public Potential {
 public:
  AuxiliaryBounded(std::shared_ptr<const Potential> inner, double half_width, double slope);

  std::size_t dimension() const override { return inner_->dimension(); }
  /// U_aux at beta = 1.
  double energy(std::span<const double> x) const override;
  void force(std::span<const double> x, std::span<double> out) const override;
  using Potential::force;
  std::string describe() const override;

  double reduced_energy(double beta, std::span<const double> x) const override;
  void reduced_force(double beta, std::span<const double> x, std::span<double> out) const override;

  /// U_aux(x; beta). Requires beta > 0.
  double energy_at(double beta, std::span<const double> x) const;

  const Potential& inner() const { return *inner_; }
  double half_width() const { return b_; }
  double slope() const { return u_; }

 private:
  double excess(std::span<const double> x) const;

  std::shared_ptr<const Potential> inner_;
  double b_;
  double u_;
};

/// Same as AuxiliaryBounded::energy_at.
double auxiliary_energy(const AuxiliaryBounded& potential, double beta, std::span<const double> x);

/// Declarative description used by configs and checkpoints.
struct PotentialSpec {
  enum class Kind { DoubleWell2D, Harmonic, GaussianMixture, AuxiliaryBounded };

  Kind kind = Kind::DoubleWell2D;
  std::size_t dimension = 2;
  double tilt = 1.0;       // DoubleWell2D
  double stiffness = 1.0;  // Harmonic
  std::vector<double> weights;                 // GaussianMixture
  std::vector<std::vector<double>> means;      // GaussianMixture
  std::vector<std::vector<double>> variances;  // GaussianMixture
  std::shared_ptr<PotentialSpec> inner;        // AuxiliaryBounded
  double half_width = 10.0;                    // AuxiliaryBounded b
  double slope = 1000.0;                       // AuxiliaryBounded u
};

std::shared_ptr<const Potential> make_potential(const PotentialSpec& spec);

/// Wraps `spec` in an AuxiliaryBounded layer unless it already is one.
PotentialSpec bounded(PotentialSpec spec, double half_width = 10.0, double slope = 1000.0);

const char* kind_name(PotentialSpec::Kind kind);
PotentialSpec::Kind parse_potential_kind(const std::string& name);

}  // namespace cgvar
