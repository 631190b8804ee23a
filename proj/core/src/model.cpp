#include "cgvar/model.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "cgvar/error.hpp"

namespace cgvar {

namespace {

bool starts_with(const std::string& s, std::string_view prefix) {
  return s.compare(0, prefix.size(), prefix) == 0;
}

}  // namespace

void Architecture::validate() const {
  if (n_f == 0 || n_c == 0) {
    throw ConfigError("n_f and n_c must be positive");
  }
  if (!encoder_trunk.empty()) {
    ad::validate_chain(n_f, encoder_trunk, "encoder trunk");
  }
  ad::validate_chain(n_c, decoder, "decoder");
  if (decoder.back().out != n_f) {
    throw ConfigError("decoder output width " + std::to_string(decoder.back().out) +
                      " does not match n_f = " + std::to_string(n_f));
  }
}

Architecture Architecture::double_well(std::size_t width) {
  const auto selu = ad::Activation::parse("selu");
  const auto tanh = ad::Activation::parse("tanh");
  const ad::Activation none{};
  Architecture a;
  a.n_f = 2;
  a.n_c = 1;
  a.encoder_trunk = {{2, width, selu}, {width, width, selu}, {width, width, tanh}};
  a.decoder = {{1, width, tanh}, {width, width, tanh}, {width, 2, none}};
  return a;
}

Architecture Architecture::linear(std::size_t n_f, std::size_t n_c) {
  Architecture a;
  a.n_f = n_f;
  a.n_c = n_c;
  a.decoder = {{n_c, n_f, ad::Activation{}}};
  return a;
}

// ---------------------------------------------------------------------------

double LatentPrior::log_density(std::span<const double> z) const {
  require_shape(z.size(), n_c, "latent");
  return -0.5 * (static_cast<double>(n_c) * kLog2Pi + squared_norm(z));
}

double LatentPrior::entropy() const { return 0.5 * static_cast<double>(n_c) * (1.0 + kLog2Pi); }

std::vector<LatentCV> sample_prior(const LatentPrior& prior, std::size_t n, Rng& rng) {
  if (n == 0) {
    throw ArgumentError("sample_prior needs n >= 1");
  }
  std::vector<LatentCV> out(n, LatentCV(prior.n_c));
  for (LatentCV& z : out) {
    fill_standard_normal(rng, z);
  }
  return out;
}

double log_q_z(const LatentPrior& prior, std::span<const double> z) {
  return prior.log_density(z);
}

// ---------------------------------------------------------------------------

CgModel::CgModel(Architecture arch, Rng& rng) : arch_(std::move(arch)) {
  build();
  for (const ad::LinearLayer& layer : decoder_layers_) {
    ad::initialize_layer(layer, params_, rng);
  }
  for (const ad::LinearLayer& layer : encoder_layers_) {
    ad::initialize_layer(layer, params_, rng);
  }
  std::ranges::fill(params_.view(log_var_slice_), 0.0);
}

CgModel::CgModel(Architecture arch, std::vector<double> values) : arch_(std::move(arch)) {
  build();
  params_ = ad::ParamVector(layout_, std::move(values));
}

void CgModel::build() {
  arch_.validate();

  // theta: decoder mean network, then the free log-variances
  ad::ExprGraph dec(arch_.n_c);
  auto dec_mlp = ad::append_mlp(dec, layout_, dec.input(), arch_.decoder, "theta.dec");
  dec.set_outputs({dec_mlp.output});
  decoder_layers_ = std::move(dec_mlp.layers);
  log_var_slice_ = layout_.add("theta.log_var", arch_.n_f);

  // phi: shared trunk with mean and log-variance heads
  ad::ExprGraph enc(arch_.n_f);
  ad::NodeId trunk_out = enc.input();
  if (!arch_.encoder_trunk.empty()) {
    auto trunk = ad::append_mlp(enc, layout_, enc.input(), arch_.encoder_trunk, "phi.trunk");
    trunk_out = trunk.output;
    encoder_layers_ = std::move(trunk.layers);
  }
  const std::vector<ad::LayerSpec> head = {{arch_.trunk_width(), arch_.n_c, ad::Activation{}}};
  auto mu = ad::append_mlp(enc, layout_, trunk_out, head, "phi.mu");
  auto lv = ad::append_mlp(enc, layout_, trunk_out, head, "phi.log_var");
  enc.set_outputs({mu.output, lv.output});
  encoder_layers_.insert(encoder_layers_.end(), mu.layers.begin(), mu.layers.end());
  encoder_layers_.insert(encoder_layers_.end(), lv.layers.begin(), lv.layers.end());

  decoder_graph_ = std::move(dec);
  encoder_graph_ = std::move(enc);
  params_ = ad::ParamVector(layout_);
}

std::vector<ad::ParamSlice> CgModel::theta_slices() const {
  std::vector<ad::ParamSlice> out;
  for (const auto& s : layout_.slices()) {
    if (starts_with(s.name, "theta.")) {
      out.push_back(s);
    }
  }
  return out;
}

std::vector<ad::ParamSlice> CgModel::phi_slices() const {
  std::vector<ad::ParamSlice> out;
  for (const auto& s : layout_.slices()) {
    if (starts_with(s.name, "phi.")) {
      out.push_back(s);
    }
  }
  return out;
}

std::vector<double> CgModel::decoder_log_variance() const {
  const auto raw = params_.view(log_var_slice_);
  std::vector<double> out(raw.begin(), raw.end());
  for (double& v : out) {
    v = std::clamp(v, kDecoderLogVarMin, kDecoderLogVarMax);
  }
  return out;
}

std::vector<double> CgModel::decoder_sigma() const {
  std::vector<double> s = decoder_log_variance();
  for (double& v : s) {
    v = std::exp(0.5 * v);
  }
  return s;
}

std::size_t CgModel::clamped_log_variances() const {
  const auto raw = params_.view(log_var_slice_);
  return static_cast<std::size_t>(std::ranges::count_if(raw, [](double v) {
    return !(v >= kDecoderLogVarMin && v <= kDecoderLogVarMax);
  }));
}

namespace {

ad::BatchMlp chain(std::span<const ad::LinearLayer> layers, std::span<const ad::LayerSpec> specs) {
  std::vector<ad::Activation> acts;
  for (const ad::LayerSpec& s : specs) {
    acts.push_back(s.activation);
  }
  return ad::BatchMlp(std::vector<ad::LinearLayer>(layers.begin(), layers.end()), std::move(acts));
}

}  // namespace

ad::BatchMlp CgModel::decoder_batch() const { return chain(decoder_layers_, arch_.decoder); }

ad::BatchMlp CgModel::encoder_trunk_batch() const {
  if (arch_.encoder_trunk.empty()) {
    return {};
  }
  const std::size_t n = arch_.encoder_trunk.size();
  return chain(std::span(encoder_layers_).first(n), arch_.encoder_trunk);
}

ad::BatchMlp CgModel::encoder_mean_head_batch() const {
  const std::size_t n = arch_.encoder_trunk.size();
  return ad::BatchMlp({encoder_layers_[n]}, {ad::Activation{}});
}

ad::BatchMlp CgModel::encoder_log_var_head_batch() const {
  const std::size_t n = arch_.encoder_trunk.size();
  return ad::BatchMlp({encoder_layers_[n + 1]}, {ad::Activation{}});
}

// ---------------------------------------------------------------------------

ModelBatch::ModelBatch(const CgModel& model)
    : model_(&model),
      decoder_(model.decoder_batch()),
      trunk_(model.encoder_trunk_batch()),
      mean_head_(model.encoder_mean_head_batch()),
      log_var_head_(model.encoder_log_var_head_batch()) {}

std::span<const double> ModelBatch::decode(std::span<const double> z, std::span<const double> eps,
                                           std::size_t batch) {
  const std::size_t n_f = model_->n_f();
  require_shape(eps.size(), n_f * batch, "batch noise");
  batch_ = batch;
  const auto mu = decoder_.forward(model_->params().values(), z, batch);
  const auto sigma = model_->decoder_sigma();
  x_.resize(n_f * batch);
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t j = 0; j < n_f; ++j) {
      x_[i * n_f + j] = mu[i * n_f + j] + sigma[j] * eps[i * n_f + j];
    }
  }
  return x_;
}

void ModelBatch::encode(std::span<const double> x, std::size_t batch) {
  const auto params = model_->params().values();
  batch_ = batch;
  std::span<const double> h = x;
  if (trunk_.depth() > 0) {
    h = trunk_.forward(params, x, batch);
  } else {
    require_shape(x.size(), model_->n_f() * batch, "batch configuration");
  }
  const auto m = mean_head_.forward(params, h, batch);
  const auto lv = log_var_head_.forward(params, h, batch);
  mean_.assign(m.begin(), m.end());
  raw_log_var_.assign(lv.begin(), lv.end());
  log_var_.resize(raw_log_var_.size());
  for (std::size_t k = 0; k < log_var_.size(); ++k) {
    log_var_[k] = std::clamp(raw_log_var_[k], kEncoderLogVarMin, kEncoderLogVarMax);
  }
}

void ModelBatch::log_r(std::span<const double> z, std::span<double> out) const {
  const std::size_t n_c = model_->n_c();
  require_shape(z.size(), n_c * batch_, "batch latent");
  require_shape(out.size(), batch_, "batch log r");
  for (std::size_t i = 0; i < batch_; ++i) {
    out[i] = log_normal_diag(z.subspan(i * n_c, n_c), std::span(mean_).subspan(i * n_c, n_c),
                             std::span(log_var_).subspan(i * n_c, n_c));
  }
}

void ModelBatch::encoder_backward(std::span<const double> seed_mean,
                                  std::span<const double> seed_log_var, std::span<double> x_grad) {
  if (trunk_.depth() == 0) {
    head_grad_.resize(x_grad.size());
    mean_head_.backward(seed_mean, x_grad);
    log_var_head_.backward(seed_log_var, head_grad_);
    for (std::size_t k = 0; k < x_grad.size(); ++k) {
      x_grad[k] += head_grad_[k];
    }
    return;
  }
  const std::size_t width = trunk_.output_dim() * batch_;
  trunk_grad_.resize(width);
  head_grad_.resize(width);
  mean_head_.backward(seed_mean, trunk_grad_);
  log_var_head_.backward(seed_log_var, head_grad_);
  for (std::size_t k = 0; k < width; ++k) {
    trunk_grad_[k] += head_grad_[k];
  }
  trunk_.backward(trunk_grad_, x_grad);
}

void ModelBatch::decoder_backward(std::span<const double> seed) { decoder_.backward(seed, {}); }

void ModelBatch::add_sample_sq_norms(std::span<double> out) const {
  decoder_.add_sample_sq_norms(out);
  if (trunk_.depth() > 0) {
    trunk_.add_sample_sq_norms(out);
  }
  mean_head_.add_sample_sq_norms(out);
  log_var_head_.add_sample_sq_norms(out);
}

void ModelBatch::accumulate_weighted(std::span<const double> weights,
                                     std::span<double> grad) const {
  decoder_.accumulate_weighted(weights, grad);
  if (trunk_.depth() > 0) {
    trunk_.accumulate_weighted(weights, grad);
  }
  mean_head_.accumulate_weighted(weights, grad);
  log_var_head_.accumulate_weighted(weights, grad);
}

// ---------------------------------------------------------------------------

ModelWorkspace::ModelWorkspace(const CgModel& model)
    : model_(&model), decoder_(model.decoder_graph_), encoder_(model.encoder_graph_) {
  enc_out_.mean.resize(model.n_c());
  enc_out_.log_var.resize(model.n_c());
  enc_out_.raw_log_var.resize(model.n_c());
}

std::span<const double> ModelWorkspace::decoder_mean(std::span<const double> z) {
  return decoder_.forward(model_->params().values(), z);
}

const EncoderOutput& ModelWorkspace::encode(std::span<const double> x) {
  const auto out = encoder_.forward(model_->params().values(), x);
  const std::size_t n_c = model_->n_c();
  for (std::size_t k = 0; k < n_c; ++k) {
    enc_out_.mean[k] = out[k];
    enc_out_.raw_log_var[k] = out[n_c + k];
    enc_out_.log_var[k] = std::clamp(out[n_c + k], kEncoderLogVarMin, kEncoderLogVarMax);
  }
  return enc_out_;
}

std::vector<double> reparametrize(ModelWorkspace& ws, std::span<const double> z,
                                  std::span<const double> eps) {
  const CgModel& m = ws.model();
  require_shape(eps.size(), m.n_f(), "reparametrize noise");
  const auto sigma = m.decoder_sigma();
  const auto mu = ws.decoder_mean(z);
  std::vector<double> x(m.n_f());
  for (std::size_t j = 0; j < x.size(); ++j) {
    x[j] = mu[j] + sigma[j] * eps[j];
  }
  return x;
}

double log_normal_diag(std::span<const double> x, std::span<const double> mean,
                       std::span<const double> log_var) {
  require_shape(mean.size(), x.size(), "log_normal_diag mean");
  require_shape(log_var.size(), x.size(), "log_normal_diag log-variance");
  double acc = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - mean[j];
    acc += kLog2Pi + log_var[j] + d * d * std::exp(-log_var[j]);
  }
  return -0.5 * acc;
}

double log_q_x_given_z(ModelWorkspace& ws, std::span<const double> x,
                       std::span<const double> z) {
  require_shape(x.size(), ws.model().n_f(), "configuration");
  const auto lv = ws.model().decoder_log_variance();
  const auto mu = ws.decoder_mean(z);
  return log_normal_diag(x, mu, lv);
}

double log_r_z_given_x(ModelWorkspace& ws, std::span<const double> z,
                       std::span<const double> x) {
  require_shape(z.size(), ws.model().n_c(), "latent");
  const EncoderOutput& e = ws.encode(x);
  return log_normal_diag(z, e.mean, e.log_var);
}

double joint_entropy(const CgModel& model) {
  double h = model.prior().entropy();
  for (double lv : model.decoder_log_variance()) {
    h += 0.5 * (1.0 + kLog2Pi + lv);
  }
  return h;
}

std::vector<JointSample> ancestral_sample(const CgModel& model, std::size_t n, Rng& rng) {
  if (n == 0) {
    throw ArgumentError("ancestral_sample needs n >= 1");
  }
  ModelWorkspace ws = model.workspace();
  std::vector<JointSample> out(n);
  for (JointSample& s : out) {
    s.z.resize(model.n_c());
    s.eps.resize(model.n_f());
    fill_standard_normal(rng, s.z);
    fill_standard_normal(rng, s.eps);
    s.x = reparametrize(ws, s.z, s.eps);
  }
  return out;
}

}  // namespace cgvar
