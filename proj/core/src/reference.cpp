#include "cgvar/reference.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "cgvar/error.hpp"
#include "cgvar/parallel.hpp"

namespace cgvar {

namespace {

constexpr double kAcceptLow = 0.1;
constexpr double kAcceptHigh = 0.9;

// log q(to | from) up to a constant shared by both directions
double log_proposal(std::span<const double> to, std::span<const double> from,
                    std::span<const double> drift_from, double tau) {
  double acc = 0.0;
  for (std::size_t j = 0; j < to.size(); ++j) {
    const double d = to[j] - from[j] - tau * drift_from[j];
    acc += d * d;
  }
  return -acc / (4.0 * tau);
}

}  // namespace

void MalaConfig::validate() const {
  if (!(tau > 0.0)) {
    throw ArgumentError("MALA step size must be positive");
  }
  if (burn_in >= steps) {
    throw ArgumentError("MALA burn-in must be shorter than the chain");
  }
  if (thin == 0) {
    throw ArgumentError("MALA thinning must be at least 1");
  }
  if (!(beta >= 0.0)) {
    throw ArgumentError("MALA needs beta >= 0");
  }
}

MalaResult mala_chain(const Potential& potential, const MalaConfig& config, Rng& rng) {
  config.validate();
  const std::size_t n = potential.dimension();
  std::vector<double> x = config.initial.empty() ? std::vector<double>(n, 0.0) : config.initial;
  require_shape(x.size(), n, "MALA initial point");

  // drift = beta * F, so the proposal mean is x + tau * drift
  std::vector<double> drift(n);
  double e = potential.reduced_energy(config.beta, x);
  if (!std::isfinite(e)) {
    throw EvaluationError("MALA initial energy is not finite");
  }
  potential.reduced_force(config.beta, x, drift);

  std::vector<double> y(n);
  std::vector<double> drift_y(n);
  std::vector<double> xi(n);
  const double noise = std::sqrt(2.0 * config.tau);

  MalaResult out;
  out.samples.reserve((config.steps - config.burn_in) / config.thin);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (std::size_t step = 0; step < config.steps; ++step) {
    fill_standard_normal(rng, xi);
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = x[j] + config.tau * drift[j] + noise * xi[j];
    }
    const double e_y = potential.reduced_energy(config.beta, y);
    bool accepted = false;
    const double u = uniform(rng);
    if (std::isfinite(e_y)) {
      potential.reduced_force(config.beta, y, drift_y);
      const double log_alpha = -e_y + e + log_proposal(x, y, drift_y, config.tau) -
                               log_proposal(y, x, drift, config.tau);
      accepted = std::log(u) < log_alpha;
    }
    if (accepted) {
      std::swap(x, y);
      std::swap(drift, drift_y);
      e = e_y;
    }
    if (step >= config.burn_in) {
      ++out.proposed;
      out.accepted += accepted ? 1 : 0;
      if ((step - config.burn_in + 1) % config.thin == 0) {
        out.samples.push_back(x);
      }
    }
  }
  out.acceptance_rate = static_cast<double>(out.accepted) / static_cast<double>(out.proposed);
  if (out.acceptance_rate < kAcceptLow || out.acceptance_rate > kAcceptHigh) {
    out.warnings.push_back("MALA acceptance rate " + std::to_string(out.acceptance_rate) +
                           " outside [0.1, 0.9]; consider adjusting tau");
  }
  return out;
}

std::vector<MalaResult> mala_chains(const Potential& potential, const MalaConfig& config,
                                    std::size_t chains, std::uint64_t seed) {
  std::vector<MalaResult> out(chains);
  parallel_blocks(chains, [&](std::size_t c) {
    Rng rng(seed + 0x9E3779B97F4A7C15ULL * (c + 1));
    out[c] = mala_chain(potential, config, rng);
  });
  return out;
}

std::vector<MalaResult> mala_chains(const Potential& potential, const MalaConfig& config,
                                    const std::vector<std::vector<double>>& starts,
                                    std::uint64_t seed) {
  std::vector<MalaResult> out(starts.size());
  parallel_blocks(starts.size(), [&](std::size_t c) {
    Rng rng(seed + 0x9E3779B97F4A7C15ULL * (c + 1));
    MalaConfig local = config;
    local.initial = starts[c];
    out[c] = mala_chain(potential, local, rng);
  });
  return out;
}

// ---------------------------------------------------------------------------

std::size_t QuadratureGrid::size() const {
  std::size_t n = 1;
  for (const GridAxis& a : axes) {
    n *= a.points;
  }
  return n;
}

double QuadratureGrid::cell_volume() const {
  double v = 1.0;
  for (const GridAxis& a : axes) {
    v *= a.spacing();
  }
  return v;
}

void QuadratureGrid::validate(std::size_t dimension) const {
  require_shape(axes.size(), dimension, "quadrature grid axes");
  for (const GridAxis& a : axes) {
    if (a.points < 3 || !(a.hi > a.lo)) {
      throw ArgumentError("quadrature axes need hi > lo and at least 3 points");
    }
  }
}

QuadratureGrid QuadratureGrid::refined() const {
  QuadratureGrid g = *this;
  for (GridAxis& a : g.axes) {
    a.points = (a.points - 1) * 2 + 1;
  }
  return g;
}

QuadratureGrid QuadratureGrid::double_well() {
  return QuadratureGrid{{GridAxis{-5.0, 5.0, 1001}, GridAxis{-8.0, 8.0, 1601}}};
}

QuadratureResult grid_quadrature(const Potential& potential, double beta,
                                 const QuadratureGrid& grid,
                                 const std::vector<ModePredicate>& modes) {
  const std::size_t dim = potential.dimension();
  grid.validate(dim);
  const std::size_t total = grid.size();
  const std::size_t rows = grid.axes[0].points;
  const std::size_t row_len = total / rows;

  // Pass 1: reduced energies, one grid row per block.
  std::vector<double> e(total);
  parallel_blocks(rows, [&](std::size_t r) {
    std::vector<double> x(dim);
    for (std::size_t c = 0; c < row_len; ++c) {
      std::size_t rem = c;
      x[0] = grid.axes[0].at(r);
      for (std::size_t d = dim; d-- > 1;) {
        x[d] = grid.axes[d].at(rem % grid.axes[d].points);
        rem /= grid.axes[d].points;
      }
      e[r * row_len + c] = potential.reduced_energy(beta, x);
    }
  });
  const double e_min = *std::min_element(e.begin(), e.end());
  if (!std::isfinite(e_min)) {
    throw EvaluationError("quadrature: energy minimum is not finite");
  }

  // Pass 2: weighted sums, per-row partials reduced in row order.
  const std::size_t n_modes = modes.size();
  const std::size_t width = 2 + 2 * dim + n_modes;  // w, w*e, w*x, w*x^2, masses
  std::vector<double> partial(rows * width, 0.0);
  std::vector<double> boundary(rows, 0.0);
  std::vector<std::string> boundary_name(rows);
  parallel_blocks(rows, [&](std::size_t r) {
    std::vector<double> x(dim);
    double* acc = partial.data() + r * width;
    for (std::size_t c = 0; c < row_len; ++c) {
      std::size_t rem = c;
      x[0] = grid.axes[0].at(r);
      bool edge = r == 0 || r + 1 == rows;
      std::string where = r == 0 ? "x1 = lo" : "x1 = hi";
      for (std::size_t d = dim; d-- > 1;) {
        const std::size_t i = rem % grid.axes[d].points;
        x[d] = grid.axes[d].at(i);
        if (i == 0 || i + 1 == grid.axes[d].points) {
          if (!edge) {
            where = "x" + std::to_string(d + 1) + (i == 0 ? " = lo" : " = hi");
          }
          edge = true;
        }
        rem /= grid.axes[d].points;
      }
      const double ev = e[r * row_len + c];
      const double w = std::exp(-(ev - e_min));
      if (edge && w > boundary[r]) {
        boundary[r] = w;
        boundary_name[r] = where;
      }
      acc[0] += w;
      acc[1] += w * ev;
      for (std::size_t d = 0; d < dim; ++d) {
        acc[2 + d] += w * x[d];
        acc[2 + dim + d] += w * x[d] * x[d];
      }
      for (std::size_t m = 0; m < n_modes; ++m) {
        if (modes[m].contains(x)) {
          acc[2 + 2 * dim + m] += w;
        }
      }
    }
  });

  QuadratureResult res;
  std::size_t worst = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (boundary[r] > boundary[worst]) {
      worst = r;
    }
  }
  res.boundary_ratio = boundary[worst];
  if (res.boundary_ratio >= kTailTolerance) {
    throw GridError("quadrature grid too small: density at boundary " + boundary_name[worst] +
                    " is " + std::to_string(res.boundary_ratio) + " of the peak");
  }

  std::vector<double> sum(width, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < width; ++k) {
      sum[k] += partial[r * width + k];
    }
  }
  const double z = sum[0];
  res.log_z = std::log(z * grid.cell_volume()) - e_min;
  const double mean_reduced = sum[1] / z;
  res.mean_energy = beta > 0.0 ? mean_reduced / beta : 0.0;
  res.entropy = res.log_z + mean_reduced;
  res.mean.resize(dim);
  res.variance.resize(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    res.mean[d] = sum[2 + d] / z;
    res.variance[d] = sum[2 + dim + d] / z - res.mean[d] * res.mean[d];
  }
  for (std::size_t m = 0; m < n_modes; ++m) {
    res.mode_masses.push_back(sum[2 + 2 * dim + m] / z);
    res.mode_names.push_back(modes[m].name);
  }
  return res;
}

std::vector<ModePredicate> sign_of_first_coordinate() {
  return {ModePredicate{"x1<0", [](std::span<const double> x) { return x[0] < 0.0; }},
          ModePredicate{"x1>0", [](std::span<const double> x) { return x[0] > 0.0; }}};
}

// ---------------------------------------------------------------------------

double ks_distance_standard_normal(std::vector<double> samples) {
  if (samples.empty()) {
    throw ArgumentError("KS distance of an empty sample");
  }
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-samples[i] / std::sqrt(2.0));
    d = std::max({d, static_cast<double>(i + 1) / n - cdf, cdf - static_cast<double>(i) / n});
  }
  return d;
}

double transition_asymmetry(std::span<const double> trajectory, std::span<const double> edges,
                            std::size_t min_count) {
  if (trajectory.size() < 2) {
    throw ArgumentError("transition counts need at least two states in the trajectory");
  }
  auto state = [&](double v) {
    return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), v) -
                                    edges.begin());
  };
  const std::size_t k = edges.size() + 1;
  std::vector<double> counts(k * k, 0.0);
  std::size_t prev = state(trajectory[0]);
  for (std::size_t t = 1; t < trajectory.size(); ++t) {
    const std::size_t cur = state(trajectory[t]);
    counts[prev * k + cur] += 1.0;
    prev = cur;
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const double a = counts[i * k + j];
      const double b = counts[j * k + i];
      if (a + b > 0.0 && a + b >= static_cast<double>(min_count)) {
        worst = std::max(worst, std::abs(a - b) / (0.5 * (a + b)));
      }
    }
  }
  return worst;
}

std::vector<std::vector<double>> quadrature_draws(const Potential& potential, double beta,
                                                  const QuadratureGrid& grid, std::size_t n,
                                                  Rng& rng) {
  const std::size_t dim = potential.dimension();
  grid.validate(dim);
  const std::size_t total = grid.size();
  std::vector<double> e(total);
  std::vector<double> x(dim);
  auto node = [&](std::size_t k) {
    for (std::size_t d = dim; d-- > 0;) {
      x[d] = grid.axes[d].at(k % grid.axes[d].points);
      k /= grid.axes[d].points;
    }
  };
  for (std::size_t k = 0; k < total; ++k) {
    node(k);
    e[k] = potential.reduced_energy(beta, x);
  }
  const double e_min = *std::min_element(e.begin(), e.end());
  if (!std::isfinite(e_min)) {
    throw EvaluationError("quadrature draws: energy minimum is not finite");
  }
  std::vector<double> cdf(total);
  double acc = 0.0;
  for (std::size_t k = 0; k < total; ++k) {
    acc += std::isfinite(e[k]) ? std::exp(-(e[k] - e_min)) : 0.0;
    cdf[k] = acc;
  }
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = uniform(rng) * acc;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    node(std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), total - 1));
    for (std::size_t d = 0; d < dim; ++d) {
      x[d] += (uniform(rng) - 0.5) * grid.axes[d].spacing();
    }
    out.push_back(x);
  }
  return out;
}

}  // namespace cgvar
