#include "cgvar/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "cgvar/error.hpp"
#include "cgvar/objective.hpp"
#include "cgvar/parallel.hpp"

namespace cgvar {

namespace {

constexpr std::size_t kChunk = 256;

void require_samples(std::size_t n, std::size_t min, const char* what) {
  if (n < min) {
    throw ArgumentError(std::string(what) + " needs at least " + std::to_string(min) +
                        " samples");
  }
}

Estimate mean_estimate(std::span<const double> values) {
  const SampleStats s = sample_stats(values);
  return {s.mean, s.stderr_of_mean()};
}

/// Decoder means at N prior draws, row-major N x n_f.
std::vector<double> decoder_means(const CgModel& model, std::size_t n, Rng& rng) {
  const std::size_t n_c = model.n_c();
  const std::size_t n_f = model.n_f();
  std::vector<double> z(n * n_c);
  fill_standard_normal(rng, z);
  const std::vector<double> zeros(kChunk * n_f, 0.0);
  std::vector<double> mu(n * n_f);
  ModelBatch batch(model);
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t count = std::min(n, begin + kChunk) - begin;
    const auto x = batch.decode(std::span(z).subspan(begin * n_c, count * n_c),
                                std::span(zeros).first(count * n_f), count);
    std::copy(x.begin(), x.end(), mu.begin() + static_cast<std::ptrdiff_t>(begin * n_f));
  }
  return mu;
}

}  // namespace

std::vector<Estimate> log_marginal(const CgModel& model,
                                   const std::vector<std::vector<double>>& xs, std::size_t n,
                                   Rng& rng) {
  require_samples(n, 100, "log_marginal");
  const std::size_t n_f = model.n_f();
  for (const auto& x : xs) {
    require_shape(x.size(), n_f, "log_marginal point");
  }
  const std::vector<double> mu = decoder_means(model, n, rng);
  const auto log_var = model.decoder_log_variance();
  std::vector<double> inv_var(n_f);
  double norm = 0.0;
  for (std::size_t j = 0; j < n_f; ++j) {
    inv_var[j] = std::exp(-log_var[j]);
    norm += kLog2Pi + log_var[j];
  }
  std::vector<Estimate> out(xs.size());
  const std::size_t blocks = (xs.size() + kChunk - 1) / kChunk;
  parallel_blocks(blocks, [&](std::size_t b) {
    std::vector<double> terms(n);
    const std::size_t end = std::min(xs.size(), (b + 1) * kChunk);
    for (std::size_t p = b * kChunk; p < end; ++p) {
      const auto& x = xs[p];
      for (std::size_t i = 0; i < n; ++i) {
        double acc = norm;
        for (std::size_t j = 0; j < n_f; ++j) {
          const double d = x[j] - mu[i * n_f + j];
          acc += d * d * inv_var[j];
        }
        terms[i] = -0.5 * acc;
      }
      out[p] = {log_mean_exp(terms), log_mean_exp_stderr(terms)};
    }
  });
  return out;
}

Estimate log_marginal(const CgModel& model, std::span<const double> x, std::size_t n, Rng& rng) {
  const std::vector<std::vector<double>> xs = {std::vector<double>(x.begin(), x.end())};
  return log_marginal(model, xs, n, rng).front();
}

Estimate log_marginal_importance(const CgModel& model, std::span<const double> x, std::size_t n,
                                 Rng& rng) {
  require_samples(n, 100, "log_marginal_importance");
  require_shape(x.size(), model.n_f(), "log_marginal point");
  ModelWorkspace ws = model.workspace();
  const EncoderOutput enc = ws.encode(x);
  const LatentPrior prior = model.prior();
  std::vector<double> terms(n);
  std::vector<double> z(model.n_c());
  for (std::size_t i = 0; i < n; ++i) {
    fill_standard_normal(rng, z);
    for (std::size_t k = 0; k < z.size(); ++k) {
      z[k] = enc.mean[k] + std::exp(0.5 * enc.log_var[k]) * z[k];
    }
    terms[i] = log_q_x_given_z(ws, x, z) + prior.log_density(z) -
               log_normal_diag(z, enc.mean, enc.log_var);
  }
  return {log_mean_exp(terms), log_mean_exp_stderr(terms)};
}

std::vector<SlicePoint> predicted_potential_slice(const CgModel& model, const Potential& potential,
                                                  double beta, std::span<const double> from,
                                                  std::span<const double> to, std::size_t points,
                                                  std::size_t n, Rng& rng) {
  if (!(beta > 0.0)) {
    throw ArgumentError("predicted potential needs beta > 0");
  }
  if (points < 2) {
    throw ArgumentError("a slice needs at least two points");
  }
  require_shape(from.size(), model.n_f(), "slice start");
  require_shape(to.size(), model.n_f(), "slice end");
  std::vector<std::vector<double>> xs(points, std::vector<double>(model.n_f()));
  for (std::size_t p = 0; p < points; ++p) {
    const double t = static_cast<double>(p) / static_cast<double>(points - 1);
    for (std::size_t j = 0; j < model.n_f(); ++j) {
      xs[p][j] = from[j] + t * (to[j] - from[j]);
    }
  }
  const auto lq = log_marginal(model, xs, n, rng);
  std::vector<SlicePoint> out(points);
  double min_target = INFINITY;
  double min_pred = INFINITY;
  for (std::size_t p = 0; p < points; ++p) {
    out[p].x = xs[p];
    out[p].log_q = lq[p].value;
    out[p].reduced_target = potential.reduced_energy(beta, xs[p]);
    min_target = std::min(min_target, out[p].reduced_target);
    if (std::isfinite(lq[p].value)) {
      min_pred = std::min(min_pred, -lq[p].value);
    }
  }
  for (SlicePoint& s : out) {
    s.reduced_predicted = -s.log_q - min_pred + min_target;
  }
  return out;
}

Estimate reverse_kl_bound(const CgModel& model, const Potential& potential, double beta,
                          std::size_t samples, Rng& rng, std::optional<double> log_z) {
  const ObjectiveEstimate l = estimate_objective(model, potential, beta, samples, rng);
  return {-l.total + log_z.value_or(0.0), l.std_err};
}

Estimate forward_kl_estimate(const CgModel& model,
                             const std::vector<std::vector<double>>& reference_samples,
                             double target_entropy, std::size_t n_marginal, Rng& rng) {
  require_samples(reference_samples.size(), 2, "forward_kl_estimate");
  const auto lq = log_marginal(model, reference_samples, n_marginal, rng);
  std::vector<double> neg(lq.size());
  for (std::size_t i = 0; i < lq.size(); ++i) {
    neg[i] = -lq[i].value;
  }
  const Estimate cross = mean_estimate(neg);
  return {cross.value - target_entropy, cross.std_err};
}

Estimate entropy_lower_bound(const CgModel& model, std::size_t samples, Rng& rng) {
  require_samples(samples, 2, "entropy_lower_bound");
  const std::size_t n_c = model.n_c();
  const std::size_t n_f = model.n_f();
  const NoiseBatch noise = NoiseBatch::draw(n_c, n_f, samples, rng);
  std::vector<double> log_r(samples);
  ModelBatch batch(model);
  for (std::size_t begin = 0; begin < samples; begin += kChunk) {
    const std::size_t count = std::min(samples, begin + kChunk) - begin;
    const auto z = std::span(noise.z).subspan(begin * n_c, count * n_c);
    const auto x = batch.decode(z, std::span(noise.eps).subspan(begin * n_f, count * n_f), count);
    batch.encode(x, count);
    batch.log_r(z, std::span(log_r).subspan(begin, count));
  }
  Estimate e = mean_estimate(log_r);
  e.value += joint_entropy(model);
  return e;
}

Estimate entropy_upper_bound(const CgModel& model, std::size_t samples, Rng& rng) {
  require_samples(samples, 100, "entropy_upper_bound");
  const std::size_t n_c = model.n_c();
  const std::size_t n_f = model.n_f();
  const NoiseBatch noise = NoiseBatch::draw(n_c, n_f, samples, rng);
  std::vector<double> xi(samples * n_c);
  fill_standard_normal(rng, xi);
  const auto log_var = model.decoder_log_variance();
  const LatentPrior prior = model.prior();
  const std::vector<double> zeros(kChunk * n_f, 0.0);
  std::vector<double> terms(samples);
  ModelBatch batch(model);
  std::vector<double> x;
  std::vector<double> z_post(kChunk * n_c);
  std::vector<double> log_r(kChunk);
  for (std::size_t begin = 0; begin < samples; begin += kChunk) {
    const std::size_t count = std::min(samples, begin + kChunk) - begin;
    // x ~ q(x), then z' ~ r(z | x)
    const auto xs = batch.decode(std::span(noise.z).subspan(begin * n_c, count * n_c),
                                 std::span(noise.eps).subspan(begin * n_f, count * n_f), count);
    x.assign(xs.begin(), xs.end());
    batch.encode(x, count);
    const auto m = batch.enc_mean();
    const auto lv = batch.enc_log_var();
    for (std::size_t k = 0; k < count * n_c; ++k) {
      z_post[k] = m[k] + std::exp(0.5 * lv[k]) * xi[begin * n_c + k];
    }
    const auto zp = std::span(z_post).first(count * n_c);
    batch.log_r(zp, std::span(log_r).first(count));
    const auto mu = batch.decode(zp, std::span(zeros).first(count * n_f), count);
    for (std::size_t i = 0; i < count; ++i) {
      const double log_qx = log_normal_diag(std::span(x).subspan(i * n_f, n_f),
                                            mu.subspan(i * n_f, n_f), log_var);
      terms[begin + i] = -log_qx - prior.log_density(zp.subspan(i * n_c, n_c)) + log_r[i];
    }
  }
  return mean_estimate(terms);
}

std::vector<CvAssignment> assign_cvs(const CgModel& model,
                                     const std::vector<std::vector<double>>& xs) {
  const std::size_t n_f = model.n_f();
  const std::size_t n_c = model.n_c();
  std::vector<CvAssignment> out(xs.size());
  ModelBatch batch(model);
  std::vector<double> buf;
  for (std::size_t begin = 0; begin < xs.size(); begin += kChunk) {
    const std::size_t count = std::min(xs.size(), begin + kChunk) - begin;
    buf.resize(count * n_f);
    for (std::size_t i = 0; i < count; ++i) {
      require_shape(xs[begin + i].size(), n_f, "CV assignment point");
      std::copy(xs[begin + i].begin(), xs[begin + i].end(),
                buf.begin() + static_cast<std::ptrdiff_t>(i * n_f));
    }
    batch.encode(buf, count);
    const auto m = batch.enc_mean();
    const auto lv = batch.enc_log_var();
    for (std::size_t i = 0; i < count; ++i) {
      CvAssignment& a = out[begin + i];
      a.x = xs[begin + i];
      a.z_mean.assign(m.begin() + static_cast<std::ptrdiff_t>(i * n_c),
                      m.begin() + static_cast<std::ptrdiff_t>((i + 1) * n_c));
      a.z_sigma.resize(n_c);
      for (std::size_t k = 0; k < n_c; ++k) {
        a.z_sigma[k] = std::exp(0.5 * lv[i * n_c + k]);
      }
    }
  }
  return out;
}

std::vector<std::vector<double>> sample_configurations(const CgModel& model, std::size_t n,
                                                       Rng& rng) {
  require_samples(n, 1, "sample_configurations");
  const NoiseBatch noise = NoiseBatch::draw(model.n_c(), model.n_f(), n, rng);
  const std::size_t n_f = model.n_f();
  std::vector<std::vector<double>> out(n);
  ModelBatch batch(model);
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t count = std::min(n, begin + kChunk) - begin;
    const auto x = batch.decode(std::span(noise.z).subspan(begin * model.n_c(), count * model.n_c()),
                                std::span(noise.eps).subspan(begin * n_f, count * n_f), count);
    for (std::size_t i = 0; i < count; ++i) {
      out[begin + i].assign(x.begin() + static_cast<std::ptrdiff_t>(i * n_f),
                            x.begin() + static_cast<std::ptrdiff_t>((i + 1) * n_f));
    }
  }
  return out;
}

Moments moments(const std::vector<std::vector<double>>& samples) {
  if (samples.empty()) {
    throw ArgumentError("moments of an empty sample");
  }
  const std::size_t dim = samples.front().size();
  Moments m;
  std::vector<double> column(samples.size());
  for (std::size_t d = 0; d < dim; ++d) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      require_shape(samples[i].size(), dim, "moment sample");
      column[i] = samples[i][d];
    }
    const SampleStats s = sample_stats(column);
    m.mean.push_back(s.mean);
    m.std.push_back(std::sqrt(s.variance));
  }
  return m;
}

std::vector<double> mode_fractions(const std::vector<std::vector<double>>& samples,
                                   const std::vector<ModePredicate>& modes) {
  if (samples.empty()) {
    throw ArgumentError("mode fractions of an empty sample");
  }
  std::vector<double> out(modes.size(), 0.0);
  for (const auto& x : samples) {
    for (std::size_t m = 0; m < modes.size(); ++m) {
      out[m] += modes[m].contains(x) ? 1.0 : 0.0;
    }
  }
  for (double& f : out) {
    f /= static_cast<double>(samples.size());
  }
  return out;
}

Histogram2D histogram2d(const std::vector<std::vector<double>>& samples,
                        const HistogramSpec& spec) {
  if (samples.empty()) {
    throw ArgumentError("histogram of an empty sample");
  }
  if (spec.x_bins == 0 || spec.y_bins == 0 || !(spec.x_hi > spec.x_lo) ||
      !(spec.y_hi > spec.y_lo)) {
    throw ArgumentError("histogram needs positive bin counts and hi > lo");
  }
  Histogram2D h;
  h.spec = spec;
  h.frequencies.assign(spec.x_bins * spec.y_bins, 0.0);
  const double wx = (spec.x_hi - spec.x_lo) / static_cast<double>(spec.x_bins);
  const double wy = (spec.y_hi - spec.y_lo) / static_cast<double>(spec.y_bins);
  for (const auto& s : samples) {
    const double x = s.at(spec.dim_x);
    const double y = s.at(spec.dim_y);
    if (!(x >= spec.x_lo && x < spec.x_hi && y >= spec.y_lo && y < spec.y_hi)) {
      ++h.outside;
      continue;
    }
    const auto ix = std::min(spec.x_bins - 1, static_cast<std::size_t>((x - spec.x_lo) / wx));
    const auto iy = std::min(spec.y_bins - 1, static_cast<std::size_t>((y - spec.y_lo) / wy));
    h.frequencies[ix * spec.y_bins + iy] += 1.0;
    ++h.counted;
  }
  if (h.counted > 0) {
    for (double& f : h.frequencies) {
      f /= static_cast<double>(h.counted);
    }
  }
  return h;
}

Estimate ensemble_average(const std::vector<std::vector<double>>& samples,
                          const ObservableFn& observable) {
  require_samples(samples.size(), 2, "ensemble_average");
  std::vector<double> v(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    v[i] = observable.fn(samples[i]);
    if (!std::isfinite(v[i])) {
      throw EvaluationError("observable '" + observable.name + "' is not finite");
    }
  }
  return mean_estimate(v);
}

double radius_of_gyration(std::span<const double> x, std::span<const double> masses,
                          std::size_t spatial_dim) {
  if (spatial_dim == 0) {
    throw ArgumentError("spatial dimension must be positive");
  }
  require_shape(x.size(), masses.size() * spatial_dim, "particle coordinates");
  double total = 0.0;
  for (double m : masses) {
    if (!(m > 0.0)) {
      throw ArgumentError("particle masses must be positive");
    }
    total += m;
  }
  if (!(total > 0.0)) {
    throw ArgumentError("total mass is zero");
  }
  std::vector<double> com(spatial_dim, 0.0);
  for (std::size_t p = 0; p < masses.size(); ++p) {
    for (std::size_t d = 0; d < spatial_dim; ++d) {
      com[d] += masses[p] * x[p * spatial_dim + d];
    }
  }
  for (double& c : com) {
    c /= total;
  }
  double acc = 0.0;
  for (std::size_t p = 0; p < masses.size(); ++p) {
    for (std::size_t d = 0; d < spatial_dim; ++d) {
      const double r = x[p * spatial_dim + d] - com[d];
      acc += masses[p] * r * r;
    }
  }
  return std::sqrt(acc / total);
}

std::vector<std::vector<double>> subsample_evenly(const std::vector<std::vector<double>>& rows,
                                                  std::size_t n) {
  if (rows.size() <= n) {
    return rows;
  }
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(rows[i * rows.size() / n]);
  }
  return out;
}

}  // namespace cgvar
