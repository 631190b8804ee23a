#include "cgvar/objective.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "cgvar/error.hpp"
#include "cgvar/parallel.hpp"

namespace cgvar {

namespace {

struct SampleTerms {
  double reduced_energy = 0.0;
  double log_r = 0.0;
  bool capped = false;
};

/// Evaluates one joint sample's contribution -beta U(x) + log r(z|x) and,
/// on request, its parameter gradient.
class SampleKernel {
 public:
  SampleKernel(const CgModel& model, const Potential& potential, double beta)
      : model_(model),
        potential_(potential),
        beta_(beta),
        ws_(model.workspace()),
        sigma_(model.decoder_sigma()),
        x_(model.n_f()),
        force_(model.n_f()),
        gx_(model.n_f()),
        enc_seed_(2 * model.n_c()) {
    const auto raw = model.params().view(model.decoder_log_var_slice());
    log_var_free_.resize(raw.size());
    for (std::size_t j = 0; j < raw.size(); ++j) {
      log_var_free_[j] = raw[j] >= kDecoderLogVarMin && raw[j] <= kDecoderLogVarMax;
    }
  }

  /// Adds d(-beta U + log r)/d(params) into grad.
  SampleTerms gradient(std::span<const double> z, std::span<const double> eps,
                       std::span<double> grad) {
    SampleTerms t;
    decode(z, eps);
    t.reduced_energy = energy(t.capped);
    if (t.capped) {
      std::ranges::fill(force_, 0.0);
    } else {
      potential_.reduced_force(beta_, x_, force_);
    }

    const std::size_t n_c = model_.n_c();
    const EncoderOutput& e = ws_.encode(x_);
    t.log_r = log_normal_diag(z, e.mean, e.log_var);
    for (std::size_t k = 0; k < n_c; ++k) {
      const double inv_var = std::exp(-e.log_var[k]);
      const double d = z[k] - e.mean[k];
      enc_seed_[k] = d * inv_var;
      const bool free = e.raw_log_var[k] >= kEncoderLogVarMin && e.raw_log_var[k] <= kEncoderLogVarMax;
      enc_seed_[n_c + k] = free ? 0.5 * (d * d * inv_var - 1.0) : 0.0;
    }
    ws_.encoder_graph().backward_accumulate(enc_seed_, grad, gx_);

    // dL/dx = F_beta(x) + d log r / dx
    for (std::size_t j = 0; j < gx_.size(); ++j) {
      gx_[j] += force_[j];
    }
    ws_.decoder_graph().backward_accumulate(gx_, grad, {});

    const std::size_t lv_off = model_.decoder_log_var_slice().offset;
    for (std::size_t j = 0; j < gx_.size(); ++j) {
      if (log_var_free_[j]) {
        grad[lv_off + j] += gx_[j] * eps[j] * 0.5 * sigma_[j];
      }
    }
    return t;
  }

 private:
  void decode(std::span<const double> z, std::span<const double> eps) {
    const auto mu = ws_.decoder_mean(z);
    for (std::size_t j = 0; j < x_.size(); ++j) {
      x_[j] = mu[j] + sigma_[j] * eps[j];
    }
  }

  double energy(bool& capped) const {
    const double e = potential_.reduced_energy(beta_, x_);
    if (!std::isfinite(e) || e > kEnergyCap) {
      capped = true;
      return kEnergyCap;
    }
    return e;
  }

  const CgModel& model_;
  const Potential& potential_;
  double beta_;
  ModelWorkspace ws_;
  std::vector<double> sigma_;
  std::vector<bool> log_var_free_;
  std::vector<double> x_;
  std::vector<double> force_;
  std::vector<double> gx_;
  std::vector<double> enc_seed_;
};

void check_args(const CgModel& model, const Potential& potential, double beta,
                const NoiseBatch& noise) {
  if (!(beta >= 0.0)) {
    throw ArgumentError("beta must be non-negative");
  }
  if (noise.count < 2) {
    throw ArgumentError("objective estimates need J >= 2 samples");
  }
  require_shape(potential.dimension(), model.n_f(), "potential dimension");
  require_shape(noise.n_f, model.n_f(), "noise n_f");
  require_shape(noise.n_c, model.n_c(), "noise n_c");
}

/// dH/d(params): 1/2 on every unclamped decoder log-variance.
std::vector<double> entropy_gradient(const CgModel& model) {
  std::vector<double> g(model.param_count(), 0.0);
  const auto& slice = model.decoder_log_var_slice();
  const auto raw = model.params().view(slice);
  for (std::size_t j = 0; j < raw.size(); ++j) {
    if (raw[j] >= kDecoderLogVarMin && raw[j] <= kDecoderLogVarMax) {
      g[slice.offset + j] = 0.5;
    }
  }
  return g;
}

ObjectiveEstimate summarize(const std::vector<SampleTerms>& terms, double entropy) {
  ObjectiveEstimate est;
  est.samples = terms.size();
  std::vector<double> per_sample(terms.size());
  double sum_e = 0.0;
  double sum_r = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    sum_e += terms[i].reduced_energy;
    sum_r += terms[i].log_r;
    per_sample[i] = -terms[i].reduced_energy + terms[i].log_r;
    est.capped_samples += terms[i].capped ? 1 : 0;
  }
  const double n = static_cast<double>(terms.size());
  est.mean_reduced_energy = sum_e / n;
  est.term_energy = -sum_e / n;
  est.term_recon = sum_r / n;
  est.term_entropy = entropy;
  est.total = est.term_energy + est.term_recon + est.term_entropy;
  est.std_err = sample_stats(per_sample).stderr_of_mean();
  return est;
}

}  // namespace

NoiseBatch NoiseBatch::draw(std::size_t n_c, std::size_t n_f, std::size_t count, Rng& rng) {
  NoiseBatch b;
  b.n_c = n_c;
  b.n_f = n_f;
  b.count = count;
  b.z.resize(n_c * count);
  b.eps.resize(n_f * count);
  for (std::size_t i = 0; i < count; ++i) {
    fill_standard_normal(rng, std::span<double>(b.z).subspan(i * n_c, n_c));
    fill_standard_normal(rng, std::span<double>(b.eps).subspan(i * n_f, n_f));
  }
  return b;
}

namespace {

constexpr std::size_t kChunk = 256;

/// One chunk of the batch: forward quantities and, after backprop, the
/// per-sample gradients in factored form.
struct Chunk {
  explicit Chunk(const CgModel& model) : batch(model) {}

  ModelBatch batch;
  std::size_t begin = 0;
  std::size_t count = 0;
  std::vector<double> log_r;
  std::vector<double> lv_grad;  // per-sample d/d(decoder log-variance), n_f x B
};

std::size_t chunk_count(std::size_t n) { return (n + kChunk - 1) / kChunk; }

void evaluate_chunk(Chunk& c, const Potential& potential, double beta, const NoiseBatch& noise,
                    std::vector<SampleTerms>& terms, bool with_gradient) {
  const CgModel& model = c.batch.model();
  const std::size_t n_f = model.n_f();
  const std::size_t n_c = model.n_c();
  const auto z = std::span(noise.z).subspan(c.begin * n_c, c.count * n_c);
  const auto eps = std::span(noise.eps).subspan(c.begin * n_f, c.count * n_f);
  const auto x = c.batch.decode(z, eps, c.count);
  c.batch.encode(x, c.count);
  c.log_r.resize(c.count);
  c.batch.log_r(z, c.log_r);

  std::vector<double> gx;
  if (with_gradient) {
    gx.assign(n_f * c.count, 0.0);
  }
  for (std::size_t i = 0; i < c.count; ++i) {
    SampleTerms& t = terms[c.begin + i];
    const auto xi = x.subspan(i * n_f, n_f);
    const double e = potential.reduced_energy(beta, xi);
    t.capped = !std::isfinite(e) || e > kEnergyCap;
    t.reduced_energy = t.capped ? kEnergyCap : e;
    t.log_r = c.log_r[i];
    if (with_gradient && !t.capped) {
      potential.reduced_force(beta, xi, std::span(gx).subspan(i * n_f, n_f));
    }
  }
  if (!with_gradient) {
    return;
  }

  // d log r / d(mean, raw log-variance)
  const auto mean = c.batch.enc_mean();
  const auto lv = c.batch.enc_log_var();
  const auto raw = c.batch.enc_raw_log_var();
  std::vector<double> seed_mu(n_c * c.count);
  std::vector<double> seed_lv(n_c * c.count);
  for (std::size_t k = 0; k < seed_mu.size(); ++k) {
    const double inv_var = std::exp(-lv[k]);
    const double d = z[k] - mean[k];
    seed_mu[k] = d * inv_var;
    const bool free = raw[k] >= kEncoderLogVarMin && raw[k] <= kEncoderLogVarMax;
    seed_lv[k] = free ? 0.5 * (d * d * inv_var - 1.0) : 0.0;
  }
  std::vector<double> gx_r(n_f * c.count);
  c.batch.encoder_backward(seed_mu, seed_lv, gx_r);
  // dL/dx = F_beta(x) + d log r / dx
  for (std::size_t k = 0; k < gx.size(); ++k) {
    gx[k] += gx_r[k];
  }
  c.batch.decoder_backward(gx);

  const auto sigma = model.decoder_sigma();
  const auto raw_lv = model.params().view(model.decoder_log_var_slice());
  c.lv_grad.assign(n_f * c.count, 0.0);
  for (std::size_t j = 0; j < n_f; ++j) {
    if (!(raw_lv[j] >= kDecoderLogVarMin && raw_lv[j] <= kDecoderLogVarMax)) {
      continue;
    }
    for (std::size_t i = 0; i < c.count; ++i) {
      const std::size_t k = i * n_f + j;
      c.lv_grad[k] = 0.5 + gx[k] * eps[k] * 0.5 * sigma[j];
    }
  }
}

std::vector<std::unique_ptr<Chunk>> make_chunks(const CgModel& model, std::size_t n) {
  std::vector<std::unique_ptr<Chunk>> chunks;
  for (std::size_t b = 0; b < chunk_count(n); ++b) {
    auto c = std::make_unique<Chunk>(model);
    c->begin = b * kChunk;
    c->count = std::min(n, c->begin + kChunk) - c->begin;
    chunks.push_back(std::move(c));
  }
  return chunks;
}

}  // namespace

ObjectiveEstimate estimate_objective(const CgModel& model, const Potential& potential, double beta,
                                     const NoiseBatch& noise) {
  check_args(model, potential, beta, noise);
  std::vector<SampleTerms> terms(noise.count);
  auto chunks = make_chunks(model, noise.count);
  parallel_blocks(chunks.size(), [&](std::size_t b) {
    evaluate_chunk(*chunks[b], potential, beta, noise, terms, false);
  });
  return summarize(terms, joint_entropy(model));
}

ObjectiveEstimate estimate_objective(const CgModel& model, const Potential& potential, double beta,
                                     std::size_t samples, Rng& rng) {
  return estimate_objective(model, potential, beta,
                            NoiseBatch::draw(model.n_c(), model.n_f(), samples, rng));
}

GradientEstimate estimate_gradient(const CgModel& model, const Potential& potential, double beta,
                                   const NoiseBatch& noise, const GradientOptions& options) {
  check_args(model, potential, beta, noise);
  if (options.normalize && !(options.kappa > 0.0)) {
    throw ArgumentError("gradient normalization needs kappa > 0");
  }
  const std::size_t p = model.param_count();
  const std::size_t n_f = model.n_f();
  const std::size_t lv_off = model.decoder_log_var_slice().offset;
  std::vector<SampleTerms> terms(noise.count);
  std::vector<double> norms(noise.count, 0.0);
  auto chunks = make_chunks(model, noise.count);

  parallel_blocks(chunks.size(), [&](std::size_t b) {
    Chunk& c = *chunks[b];
    evaluate_chunk(c, potential, beta, noise, terms, true);
    if (options.normalize) {
      std::span<double> sq(norms.data() + c.begin, c.count);
      c.batch.add_sample_sq_norms(sq);
      for (std::size_t i = 0; i < c.count; ++i) {
        for (std::size_t j = 0; j < n_f; ++j) {
          sq[i] += c.lv_grad[i * n_f + j] * c.lv_grad[i * n_f + j];
        }
        sq[i] = std::sqrt(sq[i]);
      }
    }
  });

  GradientEstimate out;
  const double n = static_cast<double>(noise.count);
  std::vector<double> scale(noise.count, 1.0);
  if (options.normalize) {
    double norm_sum = 0.0;
    for (double l : norms) {
      norm_sum += l;
    }
    out.telemetry.mean_sample_norm = norm_sum / n;
    out.telemetry.l_max = options.kappa * out.telemetry.mean_sample_norm;
    for (std::size_t i = 0; i < noise.count; ++i) {
      if (norms[i] > out.telemetry.l_max && out.telemetry.l_max > 0.0) {
        // g_n = (l_max / l_i) g
        scale[i] = out.telemetry.l_max / norms[i];
        ++out.telemetry.rescaled_samples;
      }
    }
  }

  std::vector<std::vector<double>> partial(chunks.size());
  parallel_blocks(chunks.size(), [&](std::size_t b) {
    const Chunk& c = *chunks[b];
    std::vector<double>& g = partial[b];
    g.assign(p, 0.0);
    const std::span<const double> s(scale.data() + c.begin, c.count);
    c.batch.accumulate_weighted(s, g);
    for (std::size_t i = 0; i < c.count; ++i) {
      for (std::size_t j = 0; j < n_f; ++j) {
        g[lv_off + j] += s[i] * c.lv_grad[i * n_f + j];
      }
    }
  });
  out.gradient.assign(p, 0.0);
  for (const auto& g : partial) {
    for (std::size_t k = 0; k < p; ++k) {
      out.gradient[k] += g[k];
    }
  }
  for (double& g : out.gradient) {
    g /= n;
  }
  out.objective = summarize(terms, joint_entropy(model));
  out.telemetry.capped_samples = out.objective.capped_samples;
  out.telemetry.grad_norm = std::sqrt(squared_norm(out.gradient));
  return out;
}

GradientEstimate estimate_gradient(const CgModel& model, const Potential& potential, double beta,
                                   std::size_t samples, Rng& rng, const GradientOptions& options) {
  return estimate_gradient(model, potential, beta,
                           NoiseBatch::draw(model.n_c(), model.n_f(), samples, rng), options);
}

GradBatch per_sample_gradients(const CgModel& model, const Potential& potential, double beta,
                               const NoiseBatch& noise) {
  check_args(model, potential, beta, noise);
  const std::vector<double> h_grad = entropy_gradient(model);
  SampleKernel kernel(model, potential, beta);
  GradBatch batch;
  batch.grads.reserve(noise.count);
  for (std::size_t i = 0; i < noise.count; ++i) {
    std::vector<double> g = h_grad;
    kernel.gradient(noise.z_at(i), noise.eps_at(i), g);
    batch.norms.push_back(std::sqrt(squared_norm(g)));
    batch.grads.push_back(std::move(g));
  }
  double total = 0.0;
  for (double l : batch.norms) {
    total += l;
  }
  batch.mean_norm = total / static_cast<double>(batch.norms.size());
  return batch;
}

GradBatch normalize_gradients(GradBatch batch, double kappa) {
  if (!(kappa > 0.0)) {
    throw ArgumentError("normalize_gradients needs kappa > 0");
  }
  if (batch.grads.empty()) {
    throw ArgumentError("normalize_gradients needs a non-empty batch");
  }
  if (batch.norms.size() != batch.grads.size()) {
    batch.norms.clear();
    for (const auto& g : batch.grads) {
      batch.norms.push_back(std::sqrt(squared_norm(g)));
    }
  }
  double total = 0.0;
  for (double l : batch.norms) {
    total += l;
  }
  batch.mean_norm = total / static_cast<double>(batch.norms.size());
  batch.l_max = kappa * batch.mean_norm;
  batch.rescaled = 0;
  if (batch.mean_norm == 0.0) {
    return batch;
  }
  for (std::size_t i = 0; i < batch.grads.size(); ++i) {
    if (batch.norms[i] > batch.l_max) {
      const double scale = batch.l_max / batch.norms[i];
      for (double& g : batch.grads[i]) {
        g *= scale;
      }
      batch.norms[i] = batch.l_max;
      ++batch.rescaled;
    }
  }
  return batch;
}

std::vector<double> batch_mean(const GradBatch& batch) {
  if (batch.grads.empty()) {
    throw ArgumentError("batch_mean of an empty batch");
  }
  std::vector<double> mean(batch.grads.front().size(), 0.0);
  for (const auto& g : batch.grads) {
    require_shape(g.size(), mean.size(), "batch gradient");
    for (std::size_t k = 0; k < g.size(); ++k) {
      mean[k] += g[k];
    }
  }
  for (double& m : mean) {
    m /= static_cast<double>(batch.grads.size());
  }
  return mean;
}

void adam_step(AdamState& state, std::span<const double> grad, std::span<double> params) {
  require_shape(grad.size(), params.size(), "adam gradient");
  require_shape(state.m.size(), params.size(), "adam first moment");
  require_shape(state.v.size(), params.size(), "adam second moment");
  for (std::size_t k = 0; k < grad.size(); ++k) {
    if (!std::isfinite(grad[k])) {
      throw NonFiniteGradientError(k, grad[k]);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < grad.size(); ++k) {
    state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * grad[k];
    state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * grad[k] * grad[k];
    const double m_hat = state.m[k] / c1;
    const double v_hat = state.v[k] / c2;
    params[k] -= state.alpha * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

}  // namespace cgvar
