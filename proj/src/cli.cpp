#include "epmbench/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "epmbench/bench.hpp"
#include "epmbench/classifier.hpp"
#include "epmbench/config.hpp"
#include "epmbench/epm.hpp"
#include "epmbench/filters.hpp"
#include "epmbench/io.hpp"
#include "epmbench/parallel.hpp"
#include "epmbench/report.hpp"
#include "epmbench/rng.hpp"
#include "epmbench/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace epmbench::cli {

namespace {

const std::vector<std::string> kMethods = {"raw", "e_opt", "baf", "nn", "nn2", "ie", "ie+te", "model"};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, path + ": " + e.what());
  }
}

std::string manifest_file(const std::string& arg) {
  if (fs::is_directory(arg)) return (fs::path(arg) / "dataset.json").string();
  return arg;
}

void require_out(const RunConfig& c) {
  if (c.out.empty()) throw Error(ErrorCode::InvalidArgument, "--out is required");
}

std::string rel_to(const std::string& target, const fs::path& base_dir) {
  return fs::relative(fs::absolute(target), fs::absolute(base_dir)).lexically_normal().generic_string();
}

// --- ground truth and calibration parameters -------------------------------------

json params_json(const epm::DvsParams& p) {
  return {{"eps_pos", p.eps_pos}, {"eps_neg", p.eps_neg}, {"offset", p.offset}};
}

epm::DvsParams params_from_json(const json& j, const std::string& what) {
  for (const char* key : {"eps_pos", "eps_neg", "offset"}) {
    if (!j.contains(key)) throw Error(ErrorCode::MissingField, what + ": missing '" + key + "'");
  }
  epm::DvsParams p{j["eps_pos"].get<double>(), j["eps_neg"].get<double>(), j["offset"].get<double>()};
  p.validate();
  return p;
}

std::string calibration_cache(const io::DatasetManifest& m) {
  return (fs::path(m.path).parent_path() / "calibration.json").string();
}

/// Parameters for EPM labelling, in order of preference: explicit file, the manifest's
/// calibration entry, the cached calibration, or ground truth when asked for.
std::pair<epm::DvsParams, std::string> resolve_params(const RunConfig& c, const io::DatasetManifest& m) {
  if (!c.calibration_path.empty()) {
    return {params_from_json(read_json_file(c.calibration_path), c.calibration_path), c.calibration_path};
  }
  if (c.use_truth) {
    if (m.sensor.empty()) throw Error(ErrorCode::MissingField, m.path + ": dataset has no ground-truth sensor file");
    std::string p = m.resolve(m.sensor);
    return {params_from_json(read_json_file(p), p), "truth"};
  }
  for (const std::string& p : {m.calibration.empty() ? std::string() : m.resolve(m.calibration), calibration_cache(m)}) {
    if (!p.empty() && fs::exists(p)) return {params_from_json(read_json_file(p), p), p};
  }
  throw Error(ErrorCode::MissingCalibration, "no calibration for " + m.path + "; run `epmbench calibrate --dataset " +
                                                 m.path + " --out <dir>` first, or pass --truth");
}

// --- EPM label sets ----------------------------------------------------------------

std::vector<EpmFrame> compute_epm(const Recording& rec, const epm::DvsParams& params, int threads) {
  std::vector<EpmFrame> out(rec.aps.frames.size());
  parallel_for(out.size(), threads, [&](std::size_t i) {
    out[i] = epm::epm_frame(rec.aps.frames[i], rec.imu, rec.intrinsics, params);
  });
  return out;
}

void write_labels(const fs::path& dir, const std::vector<EpmFrame>& frames, const epm::DvsParams& params,
                  const std::string& source, const std::string& dataset) {
  fs::create_directories(dir);
  json files = json::array();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "epm_%05zu.epm", i);
    io::write_epm((dir / name).string(), frames[i]);
    files.push_back(name);
  }
  json idx{{"format", "epmbench-labels"}, {"version", 1},  {"dataset", dataset},
           {"params", params_json(params)}, {"source", source}, {"frames", files}};
  write_text(dir / "labels.json", idx.dump(2) + "\n");
}

std::vector<EpmFrame> read_labels(const std::string& dir) {
  std::string index = (fs::path(dir) / "labels.json").string();
  json j = read_json_file(index);
  if (j.value("format", "") != "epmbench-labels") throw Error(ErrorCode::BadMagic, index + ": not a label index");
  if (!j.contains("frames")) throw Error(ErrorCode::MissingField, index + ": missing 'frames'");
  std::vector<EpmFrame> out;
  for (const auto& f : j["frames"]) out.push_back(io::read_epm((fs::path(dir) / f.get<std::string>()).string()));
  return out;
}

struct Loaded {
  io::DatasetManifest manifest;
  Recording rec;
};

Loaded load_dataset(const std::string& arg) {
  Loaded d;
  d.manifest = io::read_manifest(manifest_file(arg));
  d.rec = io::load_recording(d.manifest);
  return d;
}

std::vector<EpmFrame> labels_for(const RunConfig& c, std::size_t i, const Loaded& d) {
  std::vector<EpmFrame> frames;
  if (!c.labels.empty()) {
    frames = read_labels(c.labels.at(i));
    if (frames.size() != d.rec.aps.frames.size()) {
      throw Error(ErrorCode::InvalidArgument, c.labels[i] + ": label count differs from the dataset's APS frames");
    }
  } else {
    frames = compute_epm(d.rec, resolve_params(c, d.manifest).first, c.threads);
  }
  for (const auto& f : frames) {
    if (f.values.geometry() != d.rec.events.geometry()) {
      throw Error(ErrorCode::GeometryMismatch, "EPM frames and events of " + d.manifest.path + " differ in size");
    }
  }
  return frames;
}

// --- denoising methods ---------------------------------------------------------------

struct Denoised {
  std::string method;
  std::vector<std::pair<std::string, std::string>> parameters;
  denoise::FilterResult result;
  std::vector<std::uint8_t> tags;  // ie+te only
};

Denoised run_method(const std::string& method, const EventStream& events, const RunConfig& c) {
  Denoised d;
  d.method = method;
  const auto dt = std::to_string(c.dt);
  const auto radius = std::to_string(c.radius);
  if (method == "raw") {
    d.result = denoise::split_stream(events, std::vector<std::uint8_t>(events.size(), 1));
  } else if (method == "baf") {
    d.result = denoise::baf(events, c.dt, c.radius);
    d.parameters = {{"dt_us", dt}, {"radius", radius}};
  } else if (method == "nn" || method == "nn2") {
    int count = method == "nn2" ? 2 : c.min_count;
    d.result = denoise::nn_filter(events, c.dt, c.radius, count);
    d.parameters = {{"dt_us", dt}, {"radius", radius}, {"min_count", std::to_string(count)}};
  } else if (method == "ie") {
    d.result = denoise::ie_filter(events, c.dt);
    d.parameters = {{"dt_us", dt}};
  } else if (method == "ie+te") {
    auto labels = denoise::ie_label(events, c.dt);
    d.tags.reserve(labels.size());
    for (auto l : labels) d.tags.push_back(static_cast<std::uint8_t>(l));
    d.result = denoise::split_stream(events, std::vector<std::uint8_t>(events.size(), 1));
    d.parameters = {{"dt_us", dt}};
  } else if (method == "model") {
    if (c.model_path.empty()) throw Error(ErrorCode::InvalidArgument, "method 'model' needs --model");
    auto model = denoise::DenoiserModel::load(c.model_path);
    d.result = denoise::classify(model, events);
    d.method = std::string("model:") + denoise::to_string(model.objective);
    d.parameters = {{"model", fs::path(c.model_path).filename().string()},
                    {"epochs", std::to_string(model.epochs)},
                    {"seed", std::to_string(model.seed)}};
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown method '" + method + "'");
  }
  return d;
}

// --- calibration results ---------------------------------------------------------------

json calibration_json(const calib::CalibrationResult& r, const calib::SearchConfig& s) {
  json trace = json::array();
  for (const auto& t : r.trace) trace.push_back({t.offset, t.eps_pos, t.eps_neg, t.log_likelihood});
  return {{"eps_pos", r.eps_pos},
          {"eps_neg", r.eps_neg},
          {"offset", r.offset},
          {"log_likelihood", r.log_likelihood},
          {"convergence", calib::to_string(r.convergence)},
          {"evaluated_pixels", r.evaluated_pixels},
          {"offset_range", {r.offset_min, r.offset_max}},
          {"search",
           {{"eps_min", s.eps_min},
            {"eps_max", s.eps_max},
            {"offset_min_frac", s.offset_min_frac},
            {"offset_max_frac", s.offset_max_frac},
            {"rel_tol", s.rel_tol},
            {"prescan", s.prescan}}},
          {"warnings", r.warnings},
          {"trace_columns", {"offset", "eps_pos", "eps_neg", "log_likelihood"}},
          {"trace", trace}};
}

// --- dataset writing -------------------------------------------------------------------

void write_dataset(const fs::path& dir, const config::SimConfig& cfg, const sim::LabeledStream& events,
                   const ApsSequence& aps, const ImuTrace& imu) {
  fs::create_directories(dir / "aps");
  io::DatasetManifest m;
  m.path = (dir / "dataset.json").string();
  m.name = cfg.name;
  m.geometry = cfg.rig.geometry;
  m.events = "events.evt";
  m.eta = aps.eta;
  m.imu = "imu.csv";
  m.intrinsics = "intrinsics.json";
  m.sensor = "sensor.json";
  m.provenance = "provenance.tags";
  m.scene_json = config::scene_json(cfg.scene);
  io::write_events((dir / m.events).string(), events.stream);
  io::write_tags((dir / m.provenance).string(), events.is_signal);
  for (std::size_t i = 0; i < aps.frames.size(); ++i) {
    char name[40];
    std::snprintf(name, sizeof name, "aps/frame_%05zu.pgm", i);
    io::write_aps((dir / name).string(), aps.frames[i]);
    m.aps.push_back(name);
  }
  io::write_imu((dir / m.imu).string(), imu);
  io::write_intrinsics((dir / m.intrinsics).string(), cfg.rig.intrinsics);
  const auto& p = cfg.rig.params;
  json truth{{"eps_pos", p.eps_pos},   {"eps_neg", p.eps_neg}, {"offset", p.offset()}, {"a", p.a},
             {"b", p.b},               {"alpha", p.alpha},     {"beta", p.beta},     {"tau_us", p.tau},
             {"eta_us", p.eta},        {"full_scale", p.full_scale}};
  write_text(dir / m.sensor, truth.dump(2) + "\n");
  write_text(dir / "config.json", config::sim_config_json(cfg) + "\n");
  io::write_manifest(m.path, m);
}

config::SimConfig demo_config() {
  config::SimConfig c;
  c.name = "demo-sinusoid";
  c.scene.kind = sim::SceneKind::Sinusoid;
  c.scene.period = 0.2;
  c.scene.amplitude = 2.0;
  c.rig.params.alpha = 1.2e6;
  c.motion = sim::MotionProfile::constant({0.0, 0.5, 0.0}, 0, 600000);
  c.aps_start = 100000;
  return c;
}

}  // namespace

void RunConfig::validate() const {
  if (threads < 1) throw Error(ErrorCode::InvalidArgument, "--threads must be >= 1");
  if (dt <= 0) throw Error(ErrorCode::InvalidArgument, "--dt must be positive");
  if (radius < 1) throw Error(ErrorCode::InvalidArgument, "--radius must be >= 1");
  if (min_count < 1) throw Error(ErrorCode::InvalidArgument, "--min-count must be >= 1");
  if (!labels.empty() && labels.size() != datasets.size()) {
    throw Error(ErrorCode::InvalidArgument, "give one --labels directory per --dataset");
  }
  if (ba_rate < 0.0 || hole_prob < 0.0 || hole_prob > 1.0 || jitter < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "noise parameters out of range");
  }
  if (epochs < 1 || batch < 1 || !(learning_rate > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "training parameters must be positive");
  }
  if (m < 1 || m % 2 == 0 || k < 1 || !(t_max > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "feature size must be odd and positive, k >= 1, t-max > 0");
  }
}

int cmd_simulate(const RunConfig& c, std::ostream& out) {
  require_out(c);
  config::SimConfig cfg = c.config_path.empty() ? demo_config() : config::load_sim_config(c.config_path);
  if (c.seed_given) cfg.seed = c.seed;
  cfg.validate();
  sim::DvsOptions dvs;
  dvs.step_dt = cfg.step;
  dvs.threads = c.threads;
  dvs.count_gain_sigma = cfg.noise.count_gain_sigma;
  dvs.seed = mix_seed(cfg.seed, 1);
  EventStream clean = sim::ideal_dvs(cfg.scene, cfg.motion, cfg.rig, dvs);
  sim::NoiseSpec noise = cfg.noise;
  noise.count_gain_sigma = 0.0;  // already applied inside the DVS
  noise.rng_seed = mix_seed(cfg.seed, 2);
  Window span{cfg.motion.begin(), cfg.motion.end() - cfg.motion.begin()};
  sim::LabeledStream events = sim::inject_noise(clean, noise, span);
  sim::ApsOptions ao;
  ao.threads = c.threads;
  ao.start_offset = cfg.aps_start;
  ApsSequence aps = sim::synth_aps(cfg.scene, cfg.motion, cfg.rig, ao);
  ImuTrace imu = sim::synth_imu(cfg.motion, cfg.imu_rate);
  write_dataset(c.out, cfg, events, aps, imu);
  out << "simulated " << cfg.name << ": " << events.stream.size() << " events, " << aps.frames.size()
      << " APS frames, " << imu.samples.size() << " IMU samples -> " << c.out << "\n";
  return 0;
}

int cmd_inject(const RunConfig& c, std::ostream& out) {
  require_out(c);
  if (c.datasets.size() != 1) throw Error(ErrorCode::InvalidArgument, "inject-noise takes exactly one --dataset");
  io::DatasetManifest m = io::read_manifest(manifest_file(c.datasets[0]));
  Recording rec = io::load_recording(m);
  sim::LabeledStream in{rec.events, {}};
  if (!m.provenance.empty() && fs::exists(m.resolve(m.provenance))) {
    in.is_signal = io::read_tags(m.resolve(m.provenance));
    if (in.is_signal.size() != in.stream.size()) {
      throw Error(ErrorCode::InvalidArgument, m.path + ": provenance tags do not match the events");
    }
  } else {
    in.is_signal.assign(in.stream.size(), 1);
  }
  Window span;
  if (rec.imu.samples.size() >= 2) {
    span = {rec.imu.samples.front().t, rec.imu.samples.back().t - rec.imu.samples.front().t + 1};
  } else if (!rec.events.empty()) {
    span = {rec.events[0].t, rec.events[rec.events.size() - 1].t - rec.events[0].t + 1};
  } else {
    throw Error(ErrorCode::EmptyInput, m.path + ": cannot infer a time span for noise injection");
  }
  sim::NoiseSpec spec;
  spec.hole_prob = c.hole_prob;
  spec.jitter_sigma = c.jitter;
  spec.rng_seed = mix_seed(c.seed, 3);
  spec.ba_rate = c.ba_rate;
  if (c.ba_percent >= 0.0) {
    std::size_t signal = 0;
    for (auto t : in.is_signal) signal += t;
    // Expected BA count is this percentage of the signal event count.
    spec.ba_rate = c.ba_percent / 100.0 * static_cast<double>(signal) /
                   (to_seconds(span.length) * static_cast<double>(rec.events.geometry().pixel_count()));
  }
  sim::LabeledStream noisy = sim::inject_noise(in, spec, span);

  fs::path dir(c.out);
  fs::create_directories(dir);
  io::DatasetManifest o = m;
  o.path = (dir / "dataset.json").string();
  o.events = "events.evt";
  o.provenance = "provenance.tags";
  for (auto& a : o.aps) a = rel_to(m.resolve(a), dir);
  o.imu = m.imu.empty() ? "" : rel_to(m.resolve(m.imu), dir);
  o.intrinsics = rel_to(m.resolve(m.intrinsics), dir);
  o.sensor = m.sensor.empty() ? "" : rel_to(m.resolve(m.sensor), dir);
  o.calibration = m.calibration.empty() ? "" : rel_to(m.resolve(m.calibration), dir);
  io::write_events((dir / o.events).string(), noisy.stream);
  io::write_tags((dir / o.provenance).string(), noisy.is_signal);
  io::write_manifest(o.path, o);
  std::size_t noise = 0;
  for (auto t : noisy.is_signal) noise += t ? 0 : 1;
  out << "injected: " << noisy.stream.size() << " events (" << noise << " noise) -> " << c.out << "\n";
  return 0;
}

int cmd_label(const RunConfig& c, std::ostream& out) {
  require_out(c);
  if (c.datasets.size() != 1) throw Error(ErrorCode::InvalidArgument, "label takes exactly one --dataset");
  Loaded d = load_dataset(c.datasets[0]);
  auto [params, source] = resolve_params(c, d.manifest);
  auto frames = compute_epm(d.rec, params, c.threads);
  write_labels(c.out, frames, params, source == "truth" ? "truth" : "calibration", d.manifest.name);
  out << "labelled " << frames.size() << " frames (eps_pos " << params.eps_pos << ", eps_neg " << params.eps_neg
      << ", offset " << params.offset << ") -> " << c.out << "\n";
  return 0;
}

int cmd_calibrate(const RunConfig& c, std::ostream& out) {
  require_out(c);
  if (c.datasets.empty()) throw Error(ErrorCode::InvalidArgument, "calibrate needs at least one --dataset");
  std::vector<Recording> recs;
  std::vector<io::DatasetManifest> manifests;
  for (const auto& a : c.datasets) {
    Loaded d = load_dataset(a);
    manifests.push_back(d.manifest);
    recs.push_back(std::move(d.rec));
  }
  calib::SearchConfig s = c.search;
  s.threads = c.threads;
  calib::CalibrationResult r = calib::calibrate(recs, s);
  std::string text = calibration_json(r, s).dump(2) + "\n";
  write_text(fs::path(c.out) / "calibration.json", text);
  for (const auto& m : manifests) write_text(calibration_cache(m), text);
  for (const auto& w : r.warnings) out << "warning: " << w << "\n";
  out << "calibrated: eps_pos " << r.eps_pos << ", eps_neg " << r.eps_neg << ", offset " << r.offset << " ("
      << calib::to_string(r.convergence) << ") -> " << c.out << "\n";
  return 0;
}

int cmd_denoise(const RunConfig& c, std::ostream& out) {
  require_out(c);
  if (c.methods.size() != 1) throw Error(ErrorCode::InvalidArgument, "denoise takes exactly one --method");
  EventStream events;
  std::string input;
  if (!c.inputs.empty()) {
    input = c.inputs[0];
    events = io::read_events(input);
  } else if (c.datasets.size() == 1) {
    io::DatasetManifest m = io::read_manifest(manifest_file(c.datasets[0]));
    input = m.resolve(m.events);
    events = io::read_events_any(input, m.geometry);
  } else {
    throw Error(ErrorCode::InvalidArgument, "denoise needs --events or one --dataset");
  }
  Denoised d = run_method(c.methods[0], events, c);
  fs::path dir(c.out);
  fs::create_directories(dir);
  io::write_events((dir / "denoised.evt").string(), d.result.kept);
  io::write_events((dir / "removed.evt").string(), d.result.removed);
  json params = json::object();
  for (const auto& [k, v] : d.parameters) params[k] = v;
  json side{{"method", d.method},
            {"parameters", params},
            {"input", input},
            {"kept", d.result.kept.size()},
            {"removed", d.result.removed.size()}};
  if (!d.tags.empty()) {
    io::write_tags((dir / "ie_tags.bin").string(), d.tags);
    side["tags"] = "ie_tags.bin";
  }
  write_text(dir / "denoised.json", side.dump(2) + "\n");
  out << d.method << ": kept " << d.result.kept.size() << ", removed " << d.result.removed.size() << " -> " << c.out
      << "\n";
  return 0;
}

int cmd_train(const RunConfig& c, std::ostream& out) {
  require_out(c);
  if (c.datasets.empty()) throw Error(ErrorCode::InvalidArgument, "train needs at least one --dataset");
  std::vector<Loaded> data;
  std::vector<std::vector<EpmFrame>> labels;
  for (std::size_t i = 0; i < c.datasets.size(); ++i) {
    data.push_back(load_dataset(c.datasets[i]));
    labels.push_back(labels_for(c, i, data.back()));
  }
  std::vector<denoise::TrainingSource> sources;
  for (std::size_t i = 0; i < data.size(); ++i) sources.push_back({&data[i].rec.events, &labels[i]});
  denoise::FeatureConfig fc{c.m, c.k, c.t_max};
  auto set = denoise::build_training_set(sources, fc, c.max_events, mix_seed(c.seed, 4));
  denoise::TrainConfig tc;
  tc.objective = denoise::objective_from_string(c.objective);
  tc.epochs = c.epochs;
  tc.batch = c.batch;
  tc.learning_rate = c.learning_rate;
  tc.seed = c.seed;
  auto model = denoise::train(set, tc);
  fs::path dir(c.out);
  fs::create_directories(dir);
  model.save((dir / "model.bin").string());
  json j{{"objective", c.objective}, {"epochs", c.epochs},  {"batch", c.batch},
         {"learning_rate", c.learning_rate}, {"seed", c.seed}, {"m", c.m},
         {"k", c.k},                 {"t_max_us", c.t_max},  {"max_events", c.max_events},
         {"training_events", set.size()},    {"datasets", c.datasets}, {"loss_history", model.loss_history}};
  write_text(dir / "train.json", j.dump(2) + "\n");
  out << "trained " << c.objective << " model on " << set.size() << " events, final loss "
      << (model.loss_history.empty() ? 0.0f : model.loss_history.back()) << " -> " << c.out << "\n";
  return 0;
}

int cmd_bench(const RunConfig& c, std::ostream& out) {
  require_out(c);
  if (c.datasets.empty()) throw Error(ErrorCode::InvalidArgument, "bench needs at least one --dataset");
  if (!c.inputs.empty() && c.datasets.size() != 1) {
    throw Error(ErrorCode::InvalidArgument, "--events can only be combined with a single --dataset");
  }
  std::vector<bench::BenchmarkReport> reports;
  for (std::size_t i = 0; i < c.datasets.size(); ++i) {
    Loaded d = load_dataset(c.datasets[i]);
    auto frames = labels_for(c, i, d);
    std::vector<Window> windows;
    for (const auto& f : frames) windows.push_back(f.window);
    const std::string scene = c.scene.empty() ? d.manifest.name : c.scene;
    for (const auto& method : c.methods) {
      bench::BenchmarkReport r;
      if (method == "e_opt") {
        r.method = "e_opt";
        for (const auto& f : frames) {
          std::size_t n = f.valid_count();
          if (n == 0) continue;
          auto e = bench::e_opt(f);
          double lp = bench::log_prob(e, f);
          std::size_t ones = 0;
          for (auto v : e.values.data()) ones += v;
          r.windows.push_back({f.window, 0.0, lp, lp, n, ones});
        }
        r.aggregate = 0.0;
      } else {
        Denoised dn = run_method(method, d.rec.events, c);
        r = bench::bench_method(dn.result.kept, frames, windows, dn.method, c.threads);
        r.parameters = dn.parameters;
      }
      r.scene = scene;
      reports.push_back(std::move(r));
    }
    for (const auto& path : c.inputs) {
      EventStream ev = io::read_events(path);
      if (ev.geometry() != d.rec.events.geometry()) {
        throw Error(ErrorCode::GeometryMismatch, path + ": sensor size differs from the dataset");
      }
      std::string method = fs::path(path).stem().string();
      std::vector<std::pair<std::string, std::string>> params;
      std::string side = io::sidecar_path(path);
      if (fs::exists(side)) {
        json j = read_json_file(side);
        method = j.value("method", method);
        if (j.contains("parameters")) {
          for (const auto& [k, v] : j["parameters"].items()) params.emplace_back(k, v.get<std::string>());
        }
      }
      auto r = bench::bench_method(ev, frames, windows, method, c.threads);
      r.parameters = params;
      r.scene = scene;
      reports.push_back(std::move(r));
    }
  }
  fs::path dir(c.out);
  fs::create_directories(dir);
  report::write_reports((dir / "report.json").string(), reports);
  write_text(dir / "report.csv", report::summary_csv(reports));
  write_text(dir / "report_windows.csv", report::windows_csv(reports));
  write_text(dir / "report.svg", report::bar_chart_svg(reports));
  for (const auto& r : reports) {
    out << r.scene << "\t" << r.method << "\t" << report::format_number(r.aggregate) << "\n";
  }
  return 0;
}

int cmd_report(const RunConfig& c, std::ostream& out) {
  require_out(c);
  if (c.inputs.empty()) throw Error(ErrorCode::InvalidArgument, "report needs at least one --input");
  std::vector<bench::BenchmarkReport> all;
  for (const auto& p : c.inputs) {
    auto r = report::read_reports(fs::is_directory(p) ? (fs::path(p) / "report.json").string() : p);
    for (auto& row : r) {
      bool dup = std::any_of(all.begin(), all.end(), [&](const bench::BenchmarkReport& a) {
        return a.scene == row.scene && a.method == row.method;
      });
      if (dup) throw Error(ErrorCode::InvalidArgument, p + ": duplicate row for " + row.scene + "/" + row.method);
      all.push_back(std::move(row));
    }
  }
  std::string csv = report::summary_csv(all);
  std::string svg = report::bar_chart_svg(all);
  // The chart must carry exactly the CSV numbers.
  auto from_csv = report::parse_summary_csv(csv);
  auto from_svg = report::parse_svg_bars(svg);
  if (from_csv.size() != from_svg.size()) throw Error(ErrorCode::Numeric, "SVG bar count differs from the CSV rows");
  for (const auto& b : from_csv) {
    auto it = std::find_if(from_svg.begin(), from_svg.end(), [&](const report::Bar& s) {
      return s.scene == b.scene && s.method == b.method && s.value == b.value;
    });
    if (it == from_svg.end()) throw Error(ErrorCode::Numeric, "SVG bar for " + b.scene + "/" + b.method + " differs");
  }
  fs::path dir(c.out);
  fs::create_directories(dir);
  report::write_reports((dir / "report.json").string(), all);
  write_text(dir / "summary.csv", csv);
  write_text(dir / "windows.csv", report::windows_csv(all));
  write_text(dir / "summary.svg", svg);
  out << "report: " << all.size() << " rows -> " << c.out << "\n";
  return 0;
}

namespace {

std::string one_line(std::string s) {
  for (char& ch : s) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig c;
  c.threads = default_thread_count();
  CLI::App app{"Event-camera denoising benchmark"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "epmbench 1.0");

  auto common = [&](CLI::App* s) {
    s->add_option("--seed", c.seed, "RNG seed");
    s->add_option("--threads", c.threads, "worker threads (default: EPMBENCH_THREADS or all cores)");
    s->add_option("--out", c.out, "output directory")->required();
  };
  auto datasets = [&](CLI::App* s, bool many) {
    auto* o = s->add_option("--dataset", c.datasets, "dataset manifest or directory");
    if (!many) o->expected(1);
  };
  auto labelling = [&](CLI::App* s) {
    s->add_option("--labels", c.labels, "EPM directory from `label`, one per dataset");
    s->add_option("--calibration", c.calibration_path, "calibration or sensor JSON with eps_pos, eps_neg, offset");
    s->add_flag("--truth", c.use_truth, "label with the simulator's ground-truth parameters");
  };
  auto filter_params = [&](CLI::App* s) {
    s->add_option("--dt", c.dt, "filter time window, microseconds")->capture_default_str();
    s->add_option("--radius", c.radius, "neighborhood radius, pixels")->capture_default_str();
    s->add_option("--min-count", c.min_count, "neighbors required by method nn")->capture_default_str();
    s->add_option("--model", c.model_path, "trained model for method model");
  };

  auto* sim = app.add_subcommand("simulate", "simulate a dataset from a JSON config");
  sim->add_option("--config", c.config_path, "simulation config (default: built-in demo scene)");
  common(sim);

  auto* inj = app.add_subcommand("inject-noise", "add background activity, holes and jitter");
  datasets(inj, false);
  inj->add_option("--ba-rate", c.ba_rate, "background events per pixel per second");
  inj->add_option("--ba-percent", c.ba_percent, "background events as a percentage of the signal count");
  inj->add_option("--hole-prob", c.hole_prob, "probability of dropping each event");
  inj->add_option("--jitter", c.jitter, "timestamp noise sigma, microseconds");
  common(inj);

  auto* lab = app.add_subcommand("label", "compute one EPM frame per APS exposure");
  datasets(lab, false);
  labelling(lab);
  common(lab);

  auto* cal = app.add_subcommand("calibrate", "estimate eps_pos, eps_neg and offset by maximum likelihood");
  datasets(cal, true);
  cal->add_option("--eps-min", c.search.eps_min)->capture_default_str();
  cal->add_option("--eps-max", c.search.eps_max)->capture_default_str();
  cal->add_option("--offset-min-frac", c.search.offset_min_frac)->capture_default_str();
  cal->add_option("--offset-max-frac", c.search.offset_max_frac)->capture_default_str();
  cal->add_option("--rel-tol", c.search.rel_tol)->capture_default_str();
  cal->add_option("--prescan", c.search.prescan)->capture_default_str();
  common(cal);

  auto* den = app.add_subcommand("denoise", "run one denoiser over an event stream");
  datasets(den, false);
  den->add_option("--events", c.inputs, "EVT1 event file")->expected(1);
  den->add_option("--method", c.methods, "baf, nn, nn2, ie, ie+te or model")
      ->required()
      ->expected(1)
      ->check(CLI::IsMember({"raw", "baf", "nn", "nn2", "ie", "ie+te", "model"}));
  filter_params(den);
  common(den);

  auto* tr = app.add_subcommand("train", "train the event classifier on EPM-labelled events");
  datasets(tr, true);
  labelling(tr);
  tr->add_option("--objective", c.objective)->check(CLI::IsMember({"soft-reward", "soft-l1", "hard"}))->capture_default_str();
  tr->add_option("--epochs", c.epochs)->capture_default_str();
  tr->add_option("--batch", c.batch)->capture_default_str();
  tr->add_option("--lr", c.learning_rate)->capture_default_str();
  tr->add_option("--max-events", c.max_events, "subsample the training set (0 = all)")->capture_default_str();
  tr->add_option("--m", c.m, "feature patch size")->capture_default_str();
  tr->add_option("--k", c.k, "events kept per pixel and polarity")->capture_default_str();
  tr->add_option("--t-max", c.t_max, "age cap, microseconds")->capture_default_str();
  common(tr);

  auto* be = app.add_subcommand("bench", "score denoisers by RPMD against EPM labels");
  datasets(be, true);
  labelling(be);
  be->add_option("--method", c.methods, "methods to score")
      ->delimiter(',')
      ->check(CLI::IsMember(kMethods));
  be->add_option("--events", c.inputs, "extra denoised event files (with denoised.json sidecars)");
  be->add_option("--scene", c.scene, "scene name in the report (default: dataset name)");
  filter_params(be);
  common(be);

  auto* rep = app.add_subcommand("report", "merge benchmark reports into CSV and SVG");
  rep->add_option("--input", c.inputs, "report.json files or bench output directories")->required();
  common(rep);

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion& v) {
    out << "epmbench 1.0\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  c.subcommand = sub->get_name();
  c.seed_given = sub->count("--seed") > 0;
  if (c.subcommand == "bench" && c.methods.empty()) c.methods = {"raw", "e_opt", "baf", "nn2", "ie"};
  try {
    c.validate();
    if (c.subcommand == "simulate") return cmd_simulate(c, out);
    if (c.subcommand == "inject-noise") return cmd_inject(c, out);
    if (c.subcommand == "label") return cmd_label(c, out);
    if (c.subcommand == "calibrate") return cmd_calibrate(c, out);
    if (c.subcommand == "denoise") return cmd_denoise(c, out);
    if (c.subcommand == "train") return cmd_train(c, out);
    if (c.subcommand == "bench") return cmd_bench(c, out);
    if (c.subcommand == "report") return cmd_report(c, out);
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << one_line(e.what()) << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: io: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << one_line(e.what()) << "\n";
    return 1;
  }
  err << "error: usage: unknown subcommand\n";
  return 2;
}

int main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace epmbench::cli
