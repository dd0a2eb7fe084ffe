#pragma once

// Strict run-configuration document: sections {geometry, fluid, surrogate,
// dataset, model, train, search, eval, serve}, every field optional, unknown
// keys rejected.

#include "hotleg/common.hpp"
#include "hotleg/flowgen.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace hotleg::runconfig {

inline const std::map<std::string, std::vector<std::string>>& schema() {
  static const std::map<std::string, std::vector<std::string>> s = {
      {"geometry", {"d_m", "flow_length", "elbow_angle_deg", "n_s", "n_r"}},
      {"fluid", {"density", "kinematic_viscosity", "inlet_temperature_k"}},
      {"surrogate",
       {"friction", "bend_pressure", "velocity_skew", "tke_amplification",
        "bump_width", "seed", "noise_amplitude", "calibrate"}},
      {"dataset",
       {"scenarios", "v_min", "v_max", "seed", "train_fraction", "split_seed"}},
      {"model",
       {"branch_hidden", "trunk_hidden", "with_heads", "seed", "dropout_rate"}},
      {"train",
       {"preset", "epochs", "batch_size", "learning_rate", "weight_decay",
        "dropout_rate", "patience", "seed", "holdout_fraction"}},
      {"search",
       {"trials", "widths", "batch_sizes", "dropout_lo", "dropout_hi", "lr_lo",
        "lr_hi", "wd_lo", "wd_hi", "max_epochs", "patience", "seed"}},
      {"eval", {"space", "batch_size", "export_artifacts"}},
      {"serve", {"host", "port", "max_concurrent", "default_space"}},
  };
  return s;
}

inline void validate(const ordered_json& cfg) {
  if (!cfg.is_object()) {
    throw config_error("run config: top level must be an object");
  }
  for (const auto& [section, body] : cfg.items()) {
    const auto it = schema().find(section);
    if (it == schema().end()) {
      throw config_error("run config: unknown section '" + section + "'");
    }
    if (!body.is_object()) {
      throw config_error("run config: section '" + section + "' must be an object");
    }
    for (const auto& [key, value] : body.items()) {
      if (std::find(it->second.begin(), it->second.end(), key) == it->second.end()) {
        throw config_error("run config: unknown key '" + section + "." + key + "'");
      }
    }
  }
}

inline ordered_json parse(const std::string& text) {
  ordered_json cfg = ordered_json::parse(text);
  validate(cfg);
  return cfg;
}

template <typename T>
T get(const ordered_json& cfg, const std::string& section, const std::string& key,
      T fallback) {
  if (cfg.contains(section) && cfg[section].contains(key)) {
    return cfg[section][key].get<T>();
  }
  return fallback;
}

inline flowgen::GeometryConfig geometry(const ordered_json& cfg) {
  flowgen::GeometryConfig g;
  g.d_m = get(cfg, "geometry", "d_m", g.d_m);
  g.flow_length = get(cfg, "geometry", "flow_length", g.flow_length);
  g.elbow_angle_deg = get(cfg, "geometry", "elbow_angle_deg", g.elbow_angle_deg);
  g.n_s = get(cfg, "geometry", "n_s", g.n_s);
  g.n_r = get(cfg, "geometry", "n_r", g.n_r);
  return g;
}

inline flowgen::FluidConfig fluid(const ordered_json& cfg) {
  flowgen::FluidConfig f;
  f.density = get(cfg, "fluid", "density", f.density);
  f.kinematic_viscosity =
      get(cfg, "fluid", "kinematic_viscosity", f.kinematic_viscosity);
  f.inlet_temperature_k =
      get(cfg, "fluid", "inlet_temperature_k", f.inlet_temperature_k);
  return f;
}

inline flowgen::SurrogateCoeffs surrogate(const ordered_json& cfg) {
  flowgen::SurrogateCoeffs c;
  c.friction = get(cfg, "surrogate", "friction", c.friction);
  c.bend_pressure = get(cfg, "surrogate", "bend_pressure", c.bend_pressure);
  c.velocity_skew = get(cfg, "surrogate", "velocity_skew", c.velocity_skew);
  c.tke_amplification =
      get(cfg, "surrogate", "tke_amplification", c.tke_amplification);
  c.bump_width = get(cfg, "surrogate", "bump_width", c.bump_width);
  c.seed = get<std::uint64_t>(cfg, "surrogate", "seed", c.seed);
  c.noise_amplitude = get(cfg, "surrogate", "noise_amplitude", c.noise_amplitude);
  return c;
}

inline ordered_json geometry_json(const flowgen::GeometryConfig& g) {
  return {{"d_m", g.d_m},
          {"flow_length", g.flow_length},
          {"elbow_angle_deg", g.elbow_angle_deg},
          {"n_s", g.n_s},
          {"n_r", g.n_r}};
}

inline ordered_json fluid_json(const flowgen::FluidConfig& f) {
  return {{"density", f.density},
          {"kinematic_viscosity", f.kinematic_viscosity},
          {"inlet_temperature_k", f.inlet_temperature_k}};
}

inline ordered_json coeffs_json(const flowgen::SurrogateCoeffs& c) {
  return {{"friction", c.friction},
          {"bend_pressure", c.bend_pressure},
          {"velocity_skew", c.velocity_skew},
          {"tke_amplification", c.tke_amplification},
          {"bump_width", c.bump_width},
          {"seed", c.seed},
          {"noise_amplitude", c.noise_amplitude}};
}

}  // namespace hotleg::runconfig
