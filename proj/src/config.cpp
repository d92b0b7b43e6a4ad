#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sirpdoa/errors.hpp"
#include "sirpdoa/harness.hpp"

namespace sirpdoa {

using nlohmann::json;

std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::CMLE:
      return "CMLE";
    case Estimator::IMLE:
      return "IMLE";
    case Estimator::IMAPE:
      return "IMAPE";
  }
  return "unknown";
}

Estimator parse_estimator(std::string_view name) {
  if (name == "CMLE") return Estimator::CMLE;
  if (name == "IMLE") return Estimator::IMLE;
  if (name == "IMAPE") return Estimator::IMAPE;
  throw ConfigError("unknown estimator '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
  if (sensors < 2) throw ConfigError("array needs at least two sensors");
  if (!(spacing > 0)) throw ConfigError("sensor spacing must be positive");
  if (doas_deg.empty()) throw ConfigError("at least one DOA is required");
  if (doas_deg.size() >= sensors) throw ConfigError("need fewer sources than sensors");
  for (std::size_t i = 0; i < doas_deg.size(); ++i) {
    if (!(doas_deg[i] > -90.0 && doas_deg[i] < 90.0)) {
      throw ConfigError("DOAs must lie strictly inside (-90, 90) degrees");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (doas_deg[i] == doas_deg[j]) throw ConfigError("DOAs must be distinct");
    }
  }
  if (snapshots < 1) throw ConfigError("snapshot count must be at least 1");
  if (!(shape > 0) || !(scale > 0)) throw ConfigError("texture shape and scale must be positive");
  if (texture == TextureKind::InverseGamma && !(shape > 1)) {
    throw ConfigError("inverse-gamma textures need shape > 1 for a finite SNR");
  }
  if (!(speckle_sigma2 > 0)) throw ConfigError("speckle power must be positive");
  if (snr_db.empty()) throw ConfigError("snr_db grid must not be empty");
  if (trials < 1) throw ConfigError("trials must be at least 1");
  if (estimators.empty()) throw ConfigError("select at least one estimator");
  if (iteration.stop.max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
  if (!(iteration.stop.theta_tolerance >= 0)) throw ConfigError("theta tolerance must be >= 0");
  if (!(iteration.q_step > 0) || iteration.q_step > 1) {
    throw ConfigError("speckle step must lie in (0, 1]");
  }
  iteration.grid.validate();
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig parse_config(std::string_view json_text) {
  ExperimentConfig c;
  try {
    const json j = json::parse(json_text);
    if (j.contains("array")) {
      const json& a = j.at("array");
      read(a, "sensors", c.sensors);
      read(a, "spacing", c.spacing);
    }
    read(j, "doas_deg", c.doas_deg);
    read(j, "snapshots", c.snapshots);
    if (j.contains("texture")) {
      const json& t = j.at("texture");
      if (t.contains("kind")) c.texture = parse_texture_kind(t.at("kind").get<std::string>());
      read(t, "shape", c.shape);
      read(t, "scale", c.scale);
    }
    if (j.contains("speckle")) read(j.at("speckle"), "sigma2", c.speckle_sigma2);
    read(j, "snr_db", c.snr_db);
    read(j, "trials", c.trials);
    if (j.contains("estimators")) {
      c.estimators.clear();
      for (const auto& e : j.at("estimators")) {
        c.estimators.push_back(parse_estimator(e.get<std::string>()));
      }
    }
    if (j.contains("stop")) {
      const json& s = j.at("stop");
      read(s, "max_iterations", c.iteration.stop.max_iterations);
      read(s, "theta_tol_rad", c.iteration.stop.theta_tolerance);
    }
    if (j.contains("speckle_update")) {
      const json& q = j.at("speckle_update");
      read(q, "step", c.iteration.q_step);
      read(q, "inner_repeats", c.iteration.q_inner_repeats);
      read(q, "monotone_guard", c.iteration.q_monotone_guard);
    }
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      double lo = rad_to_deg(c.iteration.grid.lo);
      double hi = rad_to_deg(c.iteration.grid.hi);
      double step = rad_to_deg(c.iteration.grid.coarse_step);
      double tol = rad_to_deg(c.iteration.grid.refine_tolerance);
      double sep = rad_to_deg(c.iteration.grid.min_separation);
      read(g, "lo_deg", lo);
      read(g, "hi_deg", hi);
      read(g, "coarse_step_deg", step);
      read(g, "refine_tol_deg", tol);
      read(g, "min_separation_deg", sep);
      c.iteration.grid = GridSpec::from_degrees(lo, hi, step, tol, sep);
    }
    read(j, "seed", c.master_seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open config file " + path.string());
  }
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string config_to_json(const ExperimentConfig& c, int indent) {
  json j;
  j["array"] = {{"sensors", c.sensors}, {"spacing", c.spacing}};
  j["doas_deg"] = c.doas_deg;
  j["snapshots"] = c.snapshots;
  j["texture"] = {{"kind", std::string(to_string(c.texture))},
                  {"shape", c.shape},
                  {"scale", c.scale}};
  j["speckle"] = {{"sigma2", c.speckle_sigma2}};
  j["snr_db"] = c.snr_db;
  j["trials"] = c.trials;
  json est = json::array();
  for (Estimator e : c.estimators) est.push_back(std::string(to_string(e)));
  j["estimators"] = est;
  j["stop"] = {{"max_iterations", c.iteration.stop.max_iterations},
               {"theta_tol_rad", c.iteration.stop.theta_tolerance}};
  j["speckle_update"] = {{"step", c.iteration.q_step},
                         {"inner_repeats", c.iteration.q_inner_repeats},
                         {"monotone_guard", c.iteration.q_monotone_guard}};
  j["grid"] = {{"lo_deg", rad_to_deg(c.iteration.grid.lo)},
               {"hi_deg", rad_to_deg(c.iteration.grid.hi)},
               {"coarse_step_deg", rad_to_deg(c.iteration.grid.coarse_step)},
               {"refine_tol_deg", rad_to_deg(c.iteration.grid.refine_tolerance)},
               {"min_separation_deg", rad_to_deg(c.iteration.grid.min_separation)}};
  j["seed"] = c.master_seed;
  return j.dump(indent);
}

}  // namespace sirpdoa
