#pragma once

#include <cstdint>
#include <string>

#include "epmbench/sim.hpp"

namespace epmbench::config {

/// Everything needed to simulate one dataset. See docs/formats.md for the JSON schema.
struct SimConfig {
  std::string name = "scene";
  sim::Scene scene;
  sim::MotionProfile motion;
  sim::Rig rig;
  sim::NoiseSpec noise;
  double imu_rate = 1000.0;
  Timestamp aps_start = 0;  // offset of the first exposure from the start of motion
  Timestamp step = 100;     // ideal DVS time step
  std::uint64_t seed = 1;

  void validate() const;
};

/// Parses a simulation config. Unknown keys are rejected so typos do not pass silently.
SimConfig parse_sim_config(const std::string& json_text, const std::string& what = "config");
SimConfig load_sim_config(const std::string& path);

/// Canonical JSON form; parse_sim_config(sim_config_json(c)) reproduces c.
std::string sim_config_json(const SimConfig& c);

/// Scene section alone, as stored in dataset manifests.
std::string scene_json(const sim::Scene& scene);

}  // namespace epmbench::config
