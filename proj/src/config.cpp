#include "epmbench/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace epmbench::config {

using nlohmann::json;

namespace {

struct Section {
  const json& j;
  std::string path;

  Section(const json& node, std::string where, std::initializer_list<const char*> allowed) : j(node), path(std::move(where)) {
    if (!j.is_object()) throw Error(ErrorCode::Parse, path + ": expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items()) {
      if (!ok.count(key)) throw Error(ErrorCode::Parse, path + ": unknown key '" + key + "'");
    }
  }

  bool has(const char* key) const { return j.contains(key); }

  template <typename T>
  T get(const char* key) const {
    if (!j.contains(key)) throw Error(ErrorCode::MissingField, path + ": missing '" + key + "'");
    try {
      return j.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorCode::Parse, path + "." + key + ": wrong type");
    }
  }

  template <typename T>
  void opt(const char* key, T& out) const {
    if (j.contains(key)) out = get<T>(key);
  }

  Eigen::Vector3d vec3(const char* key) const {
    auto v = get<std::vector<double>>(key);
    if (v.size() != 3) throw Error(ErrorCode::Parse, path + "." + key + ": expected 3 numbers");
    return {v[0], v[1], v[2]};
  }
};

sim::Scene parse_scene(const json& j) {
  Section s(j, "scene", {"kind", "period", "amplitude", "orientation", "base", "sharpness", "blob_sigma"});
  sim::Scene scene;
  try {
    scene.kind = sim::scene_kind_from_string(s.get<std::string>("kind"));
  } catch (const Error& e) {
    throw Error(ErrorCode::Parse, std::string("scene.kind: ") + e.what());
  }
  s.opt("period", scene.period);
  s.opt("amplitude", scene.amplitude);
  s.opt("orientation", scene.orientation);
  s.opt("base", scene.base);
  s.opt("sharpness", scene.sharpness);
  s.opt("blob_sigma", scene.blob_sigma);
  return scene;
}

sim::MotionProfile parse_motion(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::Parse, "motion: expected an object");
  std::string type = j.value("type", "");
  if (type == "constant") {
    Section s(j, "motion", {"type", "theta", "start_us", "duration_us"});
    Timestamp start = 0;
    s.opt("start_us", start);
    Timestamp d = s.get<Timestamp>("duration_us");
    if (d <= 0) throw Error(ErrorCode::InvalidArgument, "motion.duration_us must be positive");
    return sim::MotionProfile::constant(s.vec3("theta"), start, start + d);
  }
  if (type == "linear") {
    Section s(j, "motion", {"type", "theta_begin", "theta_end", "start_us", "duration_us"});
    Timestamp start = 0;
    s.opt("start_us", start);
    Timestamp d = s.get<Timestamp>("duration_us");
    if (d <= 0) throw Error(ErrorCode::InvalidArgument, "motion.duration_us must be positive");
    return sim::MotionProfile::linear(s.vec3("theta_begin"), s.vec3("theta_end"), start, start + d);
  }
  if (type == "segments") {
    Section s(j, "motion", {"type", "start_us", "segments"});
    Timestamp t = 0;
    s.opt("start_us", t);
    const json& arr = j.at("segments");
    if (!arr.is_array() || arr.empty()) throw Error(ErrorCode::Parse, "motion.segments: expected a non-empty array");
    std::vector<sim::MotionProfile::Segment> segs;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Section g(arr[i], "motion.segments[" + std::to_string(i) + "]", {"duration_us", "coeffs"});
      Timestamp d = g.get<Timestamp>("duration_us");
      if (d <= 0) throw Error(ErrorCode::InvalidArgument, g.path + ": duration_us must be positive");
      auto c = g.get<std::vector<std::vector<double>>>("coeffs");
      if (c.size() != 3) throw Error(ErrorCode::Parse, g.path + ".coeffs: expected one list per axis");
      sim::MotionProfile::Segment seg;
      seg.t0 = t;
      seg.t1 = t + d;
      for (int a = 0; a < 3; ++a) seg.coeffs[a] = c[a];
      segs.push_back(std::move(seg));
      t += d;
    }
    return sim::MotionProfile(std::move(segs));
  }
  throw Error(ErrorCode::Parse, "motion.type must be constant, linear or segments");
}

sim::Rig parse_rig(const json& j) {
  Section s(j, "camera", {"width", "height", "f", "cx", "cy", "kappa"});
  sim::Rig rig;
  s.opt("width", rig.geometry.width);
  s.opt("height", rig.geometry.height);
  s.opt("f", rig.intrinsics.f);
  rig.intrinsics.cx = 0.5 * (rig.geometry.width - 1);
  rig.intrinsics.cy = 0.5 * (rig.geometry.height - 1);
  s.opt("cx", rig.intrinsics.cx);
  s.opt("cy", rig.intrinsics.cy);
  s.opt("kappa", rig.intrinsics.kappa);
  return rig;
}

void parse_sensor(const json& j, sim::SensorParams& p) {
  Section s(j, "sensor", {"eps_pos", "eps_neg", "a", "b", "alpha", "beta", "tau_us", "eta_us", "full_scale"});
  s.opt("eps_pos", p.eps_pos);
  s.opt("eps_neg", p.eps_neg);
  s.opt("a", p.a);
  s.opt("b", p.b);
  s.opt("alpha", p.alpha);
  s.opt("beta", p.beta);
  s.opt("tau_us", p.tau);
  s.opt("eta_us", p.eta);
  s.opt("full_scale", p.full_scale);
}

void parse_noise(const json& j, sim::NoiseSpec& n) {
  Section s(j, "noise", {"ba_rate", "hole_prob", "jitter_sigma", "count_gain_sigma"});
  s.opt("ba_rate", n.ba_rate);
  s.opt("hole_prob", n.hole_prob);
  s.opt("jitter_sigma", n.jitter_sigma);
  s.opt("count_gain_sigma", n.count_gain_sigma);
}

json motion_json(const sim::MotionProfile& m) {
  json segs = json::array();
  for (const auto& seg : m.segments()) {
    segs.push_back({{"duration_us", seg.t1 - seg.t0}, {"coeffs", {seg.coeffs[0], seg.coeffs[1], seg.coeffs[2]}}});
  }
  return {{"type", "segments"}, {"start_us", m.begin()}, {"segments", segs}};
}

json scene_node(const sim::Scene& s) {
  return {{"kind", sim::to_string(s.kind)}, {"period", s.period},       {"amplitude", s.amplitude},
          {"orientation", s.orientation},  {"base", s.base},           {"sharpness", s.sharpness},
          {"blob_sigma", s.blob_sigma}};
}

}  // namespace

void SimConfig::validate() const {
  scene.validate();
  rig.geometry.validate();
  rig.intrinsics.validate();
  rig.params.validate();
  noise.validate();
  if (motion.segments().empty()) throw Error(ErrorCode::InvalidArgument, "motion is empty");
  if (motion.end() <= motion.begin()) throw Error(ErrorCode::InvalidArgument, "motion has zero duration");
  if (!(imu_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "imu_rate must be positive");
  if (aps_start < 0) throw Error(ErrorCode::InvalidArgument, "aps_start_us must be >= 0");
  if (step <= 0) throw Error(ErrorCode::InvalidArgument, "step_us must be positive");
}

SimConfig parse_sim_config(const std::string& text, const std::string& what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, what + ": " + e.what());
  }
  try {
    Section s(j, "config", {"name", "scene", "motion", "camera", "sensor", "noise", "imu_rate", "aps_start_us",
                            "step_us", "seed"});
    SimConfig c;
    s.opt("name", c.name);
    if (!s.has("scene")) throw Error(ErrorCode::MissingField, "config: missing 'scene'");
    if (!s.has("motion")) throw Error(ErrorCode::MissingField, "config: missing 'motion'");
    c.scene = parse_scene(j["scene"]);
    c.motion = parse_motion(j["motion"]);
    if (s.has("camera")) c.rig = parse_rig(j["camera"]);
    if (s.has("sensor")) parse_sensor(j["sensor"], c.rig.params);
    if (s.has("noise")) parse_noise(j["noise"], c.noise);
    s.opt("imu_rate", c.imu_rate);
    s.opt("aps_start_us", c.aps_start);
    s.opt("step_us", c.step);
    s.opt("seed", c.seed);
    c.validate();
    return c;
  } catch (const Error& e) {
    throw Error(e.code(), what + ": " + e.what());
  }
}

SimConfig load_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_sim_config(ss.str(), path);
}

std::string scene_json(const sim::Scene& scene) { return scene_node(scene).dump(); }

std::string sim_config_json(const SimConfig& c) {
  const auto& p = c.rig.params;
  json j{{"name", c.name},
         {"scene", scene_node(c.scene)},
         {"motion", motion_json(c.motion)},
         {"camera",
          {{"width", c.rig.geometry.width},
           {"height", c.rig.geometry.height},
           {"f", c.rig.intrinsics.f},
           {"cx", c.rig.intrinsics.cx},
           {"cy", c.rig.intrinsics.cy},
           {"kappa", c.rig.intrinsics.kappa}}},
         {"sensor",
          {{"eps_pos", p.eps_pos},
           {"eps_neg", p.eps_neg},
           {"a", p.a},
           {"b", p.b},
           {"alpha", p.alpha},
           {"beta", p.beta},
           {"tau_us", p.tau},
           {"eta_us", p.eta},
           {"full_scale", p.full_scale}}},
         {"noise",
          {{"ba_rate", c.noise.ba_rate},
           {"hole_prob", c.noise.hole_prob},
           {"jitter_sigma", c.noise.jitter_sigma},
           {"count_gain_sigma", c.noise.count_gain_sigma}}},
         {"imu_rate", c.imu_rate},
         {"aps_start_us", c.aps_start},
         {"step_us", c.step},
         {"seed", c.seed}};
  return j.dump(2);
}

}  // namespace epmbench::config
