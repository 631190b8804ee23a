#include "cgvar/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cgvar/error.hpp"

namespace cgvar {

using nlohmann::json;

namespace {

json activation_json(const ad::Activation& a) {
  return {{"kind", a.name()}, {"alpha", a.selu_alpha}, {"lambda", a.selu_lambda}};
}

ad::Activation activation_from(const json& j) {
  if (j.is_string()) {
    return ad::Activation::parse(j.get<std::string>());
  }
  ad::Activation a = ad::Activation::parse(j.at("kind").get<std::string>());
  a.selu_alpha = j.value("alpha", a.selu_alpha);
  a.selu_lambda = j.value("lambda", a.selu_lambda);
  return a;
}

json layers_json(const std::vector<ad::LayerSpec>& layers) {
  json out = json::array();
  for (const ad::LayerSpec& l : layers) {
    out.push_back({{"in", l.in}, {"out", l.out}, {"activation", activation_json(l.activation)}});
  }
  return out;
}

std::vector<ad::LayerSpec> layers_from(const json& j) {
  std::vector<ad::LayerSpec> out;
  for (const json& l : j) {
    out.push_back({l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>(),
                   activation_from(l.at("activation"))});
  }
  return out;
}

json arch_json(const Architecture& a) {
  return {{"n_f", a.n_f},
          {"n_c", a.n_c},
          {"encoder_trunk", layers_json(a.encoder_trunk)},
          {"decoder", layers_json(a.decoder)}};
}

Architecture arch_from(const json& j) {
  Architecture a;
  a.n_f = j.at("n_f").get<std::size_t>();
  a.n_c = j.at("n_c").get<std::size_t>();
  a.encoder_trunk = layers_from(j.at("encoder_trunk"));
  a.decoder = layers_from(j.at("decoder"));
  return a;
}

json slices_json(const std::vector<ad::ParamSlice>& slices) {
  json out = json::array();
  for (const ad::ParamSlice& s : slices) {
    out.push_back({{"name", s.name}, {"offset", s.offset}, {"rows", s.rows}, {"cols", s.cols}});
  }
  return out;
}

void check_layout(const json& stored, const std::vector<ad::ParamSlice>& expected,
                  const char* which) {
  if (stored.size() != expected.size()) {
    throw ConfigError(std::string("checkpoint ") + which + " does not match the architecture");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const json& s = stored[i];
    if (s.at("name").get<std::string>() != expected[i].name ||
        s.at("offset").get<std::size_t>() != expected[i].offset ||
        s.at("rows").get<std::size_t>() != expected[i].rows ||
        s.at("cols").get<std::size_t>() != expected[i].cols) {
      throw ConfigError(std::string("checkpoint ") + which + " slice '" +
                        s.at("name").get<std::string>() + "' does not match the architecture");
    }
  }
}

json potential_json(const PotentialSpec& p) {
  json j = {{"kind", kind_name(p.kind)}, {"dimension", p.dimension}};
  switch (p.kind) {
    case PotentialSpec::Kind::DoubleWell2D:
      j["tilt"] = p.tilt;
      break;
    case PotentialSpec::Kind::Harmonic:
      j["stiffness"] = p.stiffness;
      break;
    case PotentialSpec::Kind::GaussianMixture:
      j["weights"] = p.weights;
      j["means"] = p.means;
      j["variances"] = p.variances;
      break;
    case PotentialSpec::Kind::AuxiliaryBounded:
      j["half_width"] = p.half_width;
      j["slope"] = p.slope;
      if (p.inner) {
        j["inner"] = potential_json(*p.inner);
      }
      break;
  }
  return j;
}

PotentialSpec potential_from(const json& j) {
  PotentialSpec p;
  p.kind = parse_potential_kind(j.at("kind").get<std::string>());
  p.dimension = j.value("dimension", std::size_t{2});
  p.tilt = j.value("tilt", 1.0);
  p.stiffness = j.value("stiffness", 1.0);
  if (j.contains("weights")) {
    p.weights = j.at("weights").get<std::vector<double>>();
    p.means = j.at("means").get<std::vector<std::vector<double>>>();
    p.variances = j.at("variances").get<std::vector<std::vector<double>>>();
  }
  p.half_width = j.value("half_width", 10.0);
  p.slope = j.value("slope", 1000.0);
  if (j.contains("inner")) {
    p.inner = std::make_shared<PotentialSpec>(potential_from(j.at("inner")));
  }
  return p;
}

json temper_json(const TemperState& t) {
  json stages = json::array();
  for (const StageRecord& s : t.stages) {
    stages.push_back({{"k", s.k},
                      {"beta", s.beta},
                      {"c", s.c},
                      {"f", s.f_final},
                      {"log_z", s.log_z},
                      {"ess", s.ess}});
  }
  return {{"k", t.k},
          {"beta", t.beta},
          {"log_z", t.log_z},
          {"log_z_history", t.log_z_history},
          {"stages", stages}};
}

TemperState temper_from(const json& j) {
  TemperState t;
  t.k = j.at("k").get<std::size_t>();
  t.beta = j.at("beta").get<double>();
  t.log_z = j.at("log_z").get<double>();
  t.log_z_history = j.at("log_z_history").get<std::vector<double>>();
  for (const json& s : j.at("stages")) {
    t.stages.push_back(StageRecord{s.at("k").get<std::size_t>(), s.at("beta").get<double>(),
                                   s.at("c").get<double>(), s.at("f").get<double>(),
                                   s.at("log_z").get<double>(), s.at("ess").get<double>()});
  }
  return t;
}

json run_state_json(const RunState& r) {
  return {{"iteration", r.iteration},
          {"stage_iteration", r.stage_iteration},
          {"stage_converged", r.stage_converged},
          {"finished", r.finished},
          {"adam",
           {{"step", r.adam.step},
            {"m", r.adam.m},
            {"v", r.adam.v},
            {"alpha", r.adam.alpha},
            {"beta1", r.adam.beta1},
            {"beta2", r.adam.beta2},
            {"epsilon", r.adam.epsilon}}},
          {"temper", temper_json(r.temper)},
          {"stage_history", r.stage_history},
          {"rng", r.rng_state}};
}

RunState run_state_from(const json& j) {
  RunState r;
  r.iteration = j.at("iteration").get<std::size_t>();
  r.stage_iteration = j.at("stage_iteration").get<std::size_t>();
  r.stage_converged = j.at("stage_converged").get<bool>();
  r.finished = j.value("finished", false);
  const json& a = j.at("adam");
  r.adam.step = a.at("step").get<std::size_t>();
  r.adam.m = a.at("m").get<std::vector<double>>();
  r.adam.v = a.at("v").get<std::vector<double>>();
  r.adam.alpha = a.at("alpha").get<double>();
  r.adam.beta1 = a.at("beta1").get<double>();
  r.adam.beta2 = a.at("beta2").get<double>();
  r.adam.epsilon = a.at("epsilon").get<double>();
  r.temper = temper_from(j.at("temper"));
  r.stage_history = j.at("stage_history").get<std::vector<double>>();
  r.rng_state = j.at("rng").get<std::string>();
  return r;
}

}  // namespace

Checkpoint Checkpoint::of(const CgModel& model, std::uint64_t seed) {
  Checkpoint c;
  c.arch = model.architecture();
  const auto v = model.params().values();
  c.values.assign(v.begin(), v.end());
  c.seed = seed;
  return c;
}

CgModel Checkpoint::model() const { return CgModel(arch, values); }

std::string to_json(const Checkpoint& c) {
  const CgModel m = c.model();
  json j = {{"format", "cgvar-checkpoint/1"},
            {"arch", arch_json(c.arch)},
            {"theta_layout", slices_json(m.theta_slices())},
            {"phi_layout", slices_json(m.phi_slices())},
            {"values", c.values},
            {"n_c", c.arch.n_c},
            {"n_f", c.arch.n_f},
            {"seed", c.seed}};
  if (c.potential) {
    j["potential"] = potential_json(*c.potential);
  }
  if (c.run_state) {
    j["run_state"] = run_state_json(*c.run_state);
  }
  return j.dump(1);
}

Checkpoint checkpoint_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    Checkpoint c;
    c.arch = arch_from(j.at("arch"));
    c.values = j.at("values").get<std::vector<double>>();
    c.seed = j.value("seed", std::uint64_t{0});
    if (j.at("n_c").get<std::size_t>() != c.arch.n_c ||
        j.at("n_f").get<std::size_t>() != c.arch.n_f) {
      throw ConfigError("checkpoint n_c / n_f disagree with its architecture");
    }
    const CgModel m = c.model();
    check_layout(j.at("theta_layout"), m.theta_slices(), "theta_layout");
    check_layout(j.at("phi_layout"), m.phi_slices(), "phi_layout");
    if (j.contains("potential")) {
      c.potential = potential_from(j.at("potential"));
    }
    if (j.contains("run_state")) {
      c.run_state = run_state_from(j.at("run_state"));
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) {
      throw Error("cannot write checkpoint " + tmp);
    }
    out << to_json(checkpoint) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot read checkpoint " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

std::string potential_to_json(const PotentialSpec& spec) { return potential_json(spec).dump(); }

PotentialSpec potential_from_json(const std::string& text) {
  try {
    return potential_from(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed potential spec: ") + e.what());
  }
}

std::string rng_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_from_string(const std::string& state) {
  Rng rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) {
    throw ConfigError("malformed RNG state");
  }
  return rng;
}

}  // namespace cgvar
