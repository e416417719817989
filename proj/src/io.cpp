#include "epmbench/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "binio.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace epmbench {

namespace binio {

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::Io, "read failed: " + path);
  return buf;
}

void write_file(const std::string& path, const std::vector<char>& data) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path);
}

}  // namespace binio

namespace io {

namespace {

std::string read_text(const std::string& path) {
  auto buf = binio::read_file(path);
  return std::string(buf.begin(), buf.end());
}

void write_text(const std::string& path, const std::string& text) {
  binio::write_file(path, std::vector<char>(text.begin(), text.end()));
}

json read_json(const std::string& path) {
  std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, path + ": " + e.what());
  }
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

template <typename T>
T field(const json& j, const char* key, const std::string& what) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorCode::MissingField, what + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::Parse, what + ": field '" + std::string(key) + "' has the wrong type");
  }
}

std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
bool parse_num(std::string_view s, T& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size() && !s.empty();
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == sep) {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::vector<std::string_view> lines_of(const std::string& text) {
  std::vector<std::string_view> out;
  std::string_view v(text);
  std::size_t start = 0;
  while (start < v.size()) {
    std::size_t nl = v.find('\n', start);
    if (nl == std::string_view::npos) nl = v.size();
    std::string_view line = v.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    start = nl + 1;
  }
  return out;
}

/// Checks order and bounds with distinct error codes before building the stream.
EventStream checked_stream(SensorGeometry g, std::vector<Event> ev, const std::string& what) {
  for (std::size_t i = 0; i < ev.size(); ++i) {
    if (!g.contains(ev[i].x, ev[i].y)) {
      throw Error(ErrorCode::OutOfBounds, what + ": event " + std::to_string(i) + " at (" + std::to_string(ev[i].x) +
                                              "," + std::to_string(ev[i].y) + ") outside " + std::to_string(g.width) +
                                              "x" + std::to_string(g.height));
    }
    if (i > 0 && ev[i].t < ev[i - 1].t) {
      throw Error(ErrorCode::Unsorted, what + ": event " + std::to_string(i) + " is earlier than its predecessor");
    }
  }
  return EventStream(g, std::move(ev));
}

void check_geometry_u16(SensorGeometry g) {
  g.validate();
  if (g.width > 65535 || g.height > 65535) throw Error(ErrorCode::InvalidArgument, "sensor too large for the format");
}

}  // namespace

std::vector<char> encode_events(const EventStream& stream) {
  check_geometry_u16(stream.geometry());
  binio::Writer w;
  w.bytes("EVT1", 4);
  w.u16(kEventFormatVersion);
  w.u16(static_cast<std::uint16_t>(stream.geometry().width));
  w.u16(static_cast<std::uint16_t>(stream.geometry().height));
  w.u64(stream.size());
  for (const Event& e : stream) {
    w.u64(static_cast<std::uint64_t>(e.t));
    w.u16(e.x);
    w.u16(e.y);
    w.i8(e.p);
    w.u8(0);
  }
  return w.data();
}

EventStream decode_events(const char* data, std::size_t size, const std::string& what) {
  binio::Reader r(data, size, what);
  if (size < 4 || std::string(data, 4) != "EVT1") throw Error(ErrorCode::BadMagic, what + ": missing EVT1 magic");
  char magic[4];
  r.bytes(magic, 4);
  std::uint16_t version = r.u16();
  if (version != kEventFormatVersion) {
    throw Error(ErrorCode::BadVersion, what + ": unsupported version " + std::to_string(version));
  }
  SensorGeometry g{r.u16(), r.u16()};
  std::uint64_t count = r.u64();
  if (g.width == 0 || g.height == 0) throw Error(ErrorCode::Parse, what + ": zero sensor size");
  constexpr std::size_t kRecord = 14;
  if (count > r.remaining() / kRecord) {
    throw Error(ErrorCode::Truncated, what + ": header announces " + std::to_string(count) + " events but only " +
                                          std::to_string(r.remaining() / kRecord) + " records are present");
  }
  if (r.remaining() != count * kRecord) {
    throw Error(ErrorCode::Parse, what + ": " + std::to_string(r.remaining() - count * kRecord) +
                                      " trailing bytes after the last record");
  }
  std::vector<Event> ev(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < ev.size(); ++i) {
    std::uint64_t t = r.u64();
    if (t > static_cast<std::uint64_t>(std::numeric_limits<Timestamp>::max())) {
      throw Error(ErrorCode::Parse, what + ": event " + std::to_string(i) + " timestamp overflows");
    }
    ev[i].t = static_cast<Timestamp>(t);
    ev[i].x = r.u16();
    ev[i].y = r.u16();
    ev[i].p = r.i8();
    r.u8();
    if (ev[i].p != 1 && ev[i].p != -1) {
      throw Error(ErrorCode::Parse, what + ": event " + std::to_string(i) + " has polarity " + std::to_string(ev[i].p));
    }
  }
  return checked_stream(g, std::move(ev), what);
}

void write_events(const std::string& path, const EventStream& stream) { binio::write_file(path, encode_events(stream)); }

EventStream read_events(const std::string& path) {
  auto buf = binio::read_file(path);
  return decode_events(buf.data(), buf.size(), path);
}

std::string encode_events_csv(const EventStream& stream) {
  std::string out = "t_us,x,y,p\n";
  out.reserve(out.size() + stream.size() * 20);
  for (const Event& e : stream) {
    out += std::to_string(e.t);
    out += ',';
    out += std::to_string(e.x);
    out += ',';
    out += std::to_string(e.y);
    out += ',';
    out += std::to_string(static_cast<int>(e.p));
    out += '\n';
  }
  return out;
}

EventStream decode_events_csv(const std::string& text, SensorGeometry geometry, const std::string& what) {
  geometry.validate();
  auto lines = lines_of(text);
  if (lines.empty() || lines[0] != "t_us,x,y,p") {
    throw Error(ErrorCode::Parse, what + ": expected header 't_us,x,y,p'");
  }
  std::vector<Event> ev;
  ev.reserve(lines.size());
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    auto f = split(lines[ln], ',');
    const std::string where = what + ":" + std::to_string(ln + 1);
    if (f.size() != 4) throw Error(ErrorCode::Parse, where + ": expected 4 fields, got " + std::to_string(f.size()));
    std::int64_t t, x, y, p;
    if (!parse_num(f[0], t) || !parse_num(f[1], x) || !parse_num(f[2], y) || !parse_num(f[3], p)) {
      throw Error(ErrorCode::Parse, where + ": malformed number");
    }
    if (t < 0) throw Error(ErrorCode::Parse, where + ": negative timestamp");
    if (p != 1 && p != -1) throw Error(ErrorCode::Parse, where + ": polarity must be 1 or -1, got " + std::to_string(p));
    if (x < 0 || y < 0 || x >= geometry.width || y >= geometry.height) {
      throw Error(ErrorCode::OutOfBounds, where + ": pixel (" + std::to_string(x) + "," + std::to_string(y) +
                                              ") outside sensor");
    }
    ev.push_back({t, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), static_cast<std::int8_t>(p)});
  }
  return checked_stream(geometry, std::move(ev), what);
}

void write_events_csv(const std::string& path, const EventStream& stream) {
  write_text(path, encode_events_csv(stream));
}

EventStream read_events_csv(const std::string& path, SensorGeometry geometry) {
  return decode_events_csv(read_text(path), geometry, path);
}

EventStream read_events_any(const std::string& path, std::optional<SensorGeometry> geometry) {
  if (fs::path(path).extension() == ".csv") {
    if (!geometry) throw Error(ErrorCode::InvalidArgument, path + ": CSV events need an explicit sensor size");
    return read_events_csv(path, *geometry);
  }
  EventStream s = read_events(path);
  if (geometry && !(s.geometry() == *geometry)) {
    throw Error(ErrorCode::GeometryMismatch, path + ": sensor size differs from the expected one");
  }
  return s;
}

std::string sidecar_path(const std::string& path) { return fs::path(path).replace_extension(".json").string(); }

void write_aps(const std::string& pgm_path, const ApsFrame& frame) {
  const auto& v = frame.values;
  check_geometry_u16(v.geometry());
  std::string header = "P5\n" + std::to_string(v.width()) + " " + std::to_string(v.height()) + "\n65535\n";
  binio::Writer w;
  w.bytes(header.data(), header.size());
  for (double a : v.data()) {
    if (!std::isfinite(a)) throw Error(ErrorCode::Numeric, pgm_path + ": non-finite APS value");
    long q = std::lround(std::clamp(a, 0.0, 65535.0));
    w.u8(static_cast<std::uint8_t>(q >> 8));  // PGM is big-endian
    w.u8(static_cast<std::uint8_t>(q & 0xFF));
  }
  binio::write_file(pgm_path, w.data());
  write_json(sidecar_path(pgm_path), json{{"k", frame.k}, {"start_t", frame.start_t}, {"tau", frame.tau}});
}

Grid<double> decode_pgm16(const std::vector<char>& bytes, const std::string& what) {
  std::size_t pos = 0;
  auto skip_ws = [&]() {
    while (pos < bytes.size()) {
      char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> long {
    skip_ws();
    std::size_t start = pos;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') ++pos;
    if (start == pos) {
      if (pos >= bytes.size()) throw Error(ErrorCode::Truncated, what + ": truncated PGM header");
      throw Error(ErrorCode::Parse, what + ": malformed PGM header");
    }
    if (pos - start > 9) throw Error(ErrorCode::Parse, what + ": PGM header number too large");
    return std::stol(std::string(bytes.data() + start, pos - start));
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw Error(ErrorCode::BadMagic, what + ": not a P5 PGM");
  pos = 2;
  long w = number();
  long h = number();
  long maxval = number();
  if (w <= 0 || h <= 0) throw Error(ErrorCode::Parse, what + ": PGM size must be positive");
  if (maxval != 65535) throw Error(ErrorCode::Parse, what + ": PGM maxval must be 65535, got " + std::to_string(maxval));
  if (pos >= bytes.size()) throw Error(ErrorCode::Truncated, what + ": truncated PGM header");
  ++pos;  // single whitespace before the raster
  std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 2;
  if (bytes.size() - pos < need) throw Error(ErrorCode::Truncated, what + ": PGM raster is truncated");
  if (bytes.size() - pos > need) throw Error(ErrorCode::Parse, what + ": trailing bytes after PGM raster");
  Grid<double> g(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto hi = static_cast<unsigned char>(bytes[pos + 2 * i]);
    auto lo = static_cast<unsigned char>(bytes[pos + 2 * i + 1]);
    g[i] = static_cast<double>((hi << 8) | lo);
  }
  return g;
}

ApsFrame read_aps(const std::string& pgm_path, std::optional<SensorGeometry> expected) {
  ApsFrame f;
  f.values = decode_pgm16(binio::read_file(pgm_path), pgm_path);
  if (expected && f.values.geometry() != *expected) {
    throw Error(ErrorCode::GeometryMismatch, pgm_path + ": frame is " + std::to_string(f.values.width()) + "x" +
                                                 std::to_string(f.values.height()) + ", expected " +
                                                 std::to_string(expected->width) + "x" + std::to_string(expected->height));
  }
  std::string sc = sidecar_path(pgm_path);
  if (!fs::exists(sc)) throw Error(ErrorCode::Io, pgm_path + ": sidecar " + sc + " not found");
  json j = read_json(sc);
  f.k = field<std::int64_t>(j, "k", sc);
  f.start_t = field<Timestamp>(j, "start_t", sc);
  f.tau = field<Timestamp>(j, "tau", sc);
  if (f.tau <= 0) throw Error(ErrorCode::Parse, sc + ": tau must be positive");
  return f;
}

void write_imu(const std::string& path, const ImuTrace& imu) {
  std::string out = "t_us,wx,wy,wz\n";
  for (const auto& s : imu.samples) {
    out += std::to_string(s.t) + "," + fmt_double(s.theta.x()) + "," + fmt_double(s.theta.y()) + "," +
           fmt_double(s.theta.z()) + "\n";
  }
  write_text(path, out);
}

ImuTrace read_imu(const std::string& path, std::vector<std::string>* warnings) {
  std::string text = read_text(path);
  auto lines = lines_of(text);
  ImuTrace trace;
  bool has_data = false;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) has_data = has_data || !lines[ln].empty();
  if (lines.empty() || (!has_data && (lines[0].empty() || lines[0] == "t_us,wx,wy,wz"))) {
    if (warnings) warnings->push_back(path + ": IMU file has no samples");
    return trace;
  }
  if (lines[0] != "t_us,wx,wy,wz") throw Error(ErrorCode::Parse, path + ": expected header 't_us,wx,wy,wz'");
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    auto f = split(lines[ln], ',');
    const std::string where = path + ":" + std::to_string(ln + 1);
    if (f.size() != 4) throw Error(ErrorCode::Parse, where + ": expected 4 fields");
    ImuSample s;
    double wx, wy, wz;
    if (!parse_num(f[0], s.t) || !parse_num(f[1], wx) || !parse_num(f[2], wy) || !parse_num(f[3], wz)) {
      throw Error(ErrorCode::Parse, where + ": malformed number");
    }
    s.theta = {wx, wy, wz};
    if (!s.theta.allFinite()) throw Error(ErrorCode::Numeric, where + ": non-finite angular velocity");
    if (!trace.samples.empty() && s.t <= trace.samples.back().t) {
      throw Error(ErrorCode::Unsorted, where + ": timestamps must increase");
    }
    trace.samples.push_back(s);
  }
  if (trace.samples.size() >= 2) {
    double span = to_seconds(trace.samples.back().t - trace.samples.front().t);
    trace.rate = static_cast<double>(trace.samples.size() - 1) / span;
  }
  return trace;
}

void write_epm(const std::string& path, const EpmFrame& frame) {
  const SensorGeometry g = frame.values.geometry();
  if (frame.valid.geometry() != g) throw Error(ErrorCode::GeometryMismatch, "EPM values and mask differ in size");
  binio::Writer w;
  for (std::size_t i = 0; i < frame.values.size(); ++i) {
    float v = static_cast<float>(frame.values[i]);
    if (frame.valid[i] && !(v >= 0.0f && v <= 1.0f)) {
      throw Error(ErrorCode::Numeric, path + ": valid EPM value outside [0, 1] at pixel " + std::to_string(i));
    }
    w.f32(v);
  }
  std::vector<std::uint8_t> bits((g.pixel_count() + 7) / 8, 0);
  for (std::size_t i = 0; i < frame.valid.size(); ++i) {
    if (frame.valid[i]) bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  for (auto b : bits) w.u8(b);
  binio::write_file(path, w.data());
  write_json(sidecar_path(path), json{{"width", g.width},
                                      {"height", g.height},
                                      {"window_start", frame.window.start},
                                      {"window_len", frame.window.length},
                                      {"values", "float32-le"},
                                      {"mask", "bitmap-lsb-first"}});
}

EpmFrame read_epm(const std::string& path) {
  std::string sc = sidecar_path(path);
  if (!fs::exists(sc)) throw Error(ErrorCode::Io, path + ": sidecar " + sc + " not found");
  json j = read_json(sc);
  SensorGeometry g{field<int>(j, "width", sc), field<int>(j, "height", sc)};
  if (g.width <= 0 || g.height <= 0) throw Error(ErrorCode::Parse, sc + ": size must be positive");
  EpmFrame f{{field<Timestamp>(j, "window_start", sc), field<Timestamp>(j, "window_len", sc)}, Grid<double>(g, 0.0),
             ValidityMask(g, 0)};
  auto buf = binio::read_file(path);
  const std::size_t n = g.pixel_count();
  const std::size_t need = n * 4 + (n + 7) / 8;
  if (buf.size() < need) throw Error(ErrorCode::Truncated, path + ": EPM file shorter than its sidecar size");
  if (buf.size() > need) throw Error(ErrorCode::Parse, path + ": EPM file longer than its sidecar size");
  binio::Reader r(buf.data(), buf.size(), path);
  for (std::size_t i = 0; i < n; ++i) f.values[i] = static_cast<double>(r.f32());
  for (std::size_t b = 0; b < (n + 7) / 8; ++b) {
    std::uint8_t byte = r.u8();
    for (std::size_t k = 0; k < 8 && b * 8 + k < n; ++k) f.valid[b * 8 + k] = (byte >> k) & 1u;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (f.valid[i] && !(f.values[i] >= 0.0 && f.values[i] <= 1.0)) {
      throw Error(ErrorCode::Numeric, path + ": valid pixel " + std::to_string(i) + " is NaN or outside [0, 1]");
    }
  }
  return f;
}

void write_intrinsics(const std::string& path, const CameraIntrinsics& k) {
  write_json(path, json{{"f", k.f}, {"cx", k.cx}, {"cy", k.cy}, {"kappa", k.kappa}});
}

CameraIntrinsics read_intrinsics(const std::string& path) {
  json j = read_json(path);
  CameraIntrinsics k{field<double>(j, "f", path), field<double>(j, "cx", path), field<double>(j, "cy", path),
                     j.contains("kappa") ? field<double>(j, "kappa", path) : 0.0};
  k.validate();
  return k;
}

void write_tags(const std::string& path, const std::vector<std::uint8_t>& tags) {
  binio::write_file(path, std::vector<char>(tags.begin(), tags.end()));
}

std::vector<std::uint8_t> read_tags(const std::string& path) {
  auto buf = binio::read_file(path);
  std::vector<std::uint8_t> tags(buf.begin(), buf.end());
  for (auto t : tags) {
    if (t > 1) throw Error(ErrorCode::Parse, path + ": provenance tags must be 0 or 1");
  }
  return tags;
}

std::string DatasetManifest::resolve(const std::string& rel) const {
  if (rel.empty()) return rel;
  fs::path p(rel);
  if (p.is_absolute()) return rel;
  return (fs::path(path).parent_path() / p).lexically_normal().string();
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
  json j{{"format", "epmbench-dataset"},
         {"version", 1},
         {"name", m.name},
         {"width", m.geometry.width},
         {"height", m.geometry.height},
         {"events", m.events},
         {"aps", m.aps},
         {"eta_us", m.eta},
         {"imu", m.imu},
         {"intrinsics", m.intrinsics}};
  if (!m.sensor.empty()) j["sensor"] = m.sensor;
  if (!m.calibration.empty()) j["calibration"] = m.calibration;
  if (!m.provenance.empty()) j["provenance"] = m.provenance;
  if (!m.scene_json.empty()) j["scene"] = json::parse(m.scene_json);
  write_json(path, j);
}

DatasetManifest read_manifest(const std::string& path) {
  json j = read_json(path);
  if (!j.is_object() || j.value("format", "") != "epmbench-dataset") {
    throw Error(ErrorCode::BadMagic, path + ": not a dataset manifest");
  }
  if (j.value("version", 0) != 1) throw Error(ErrorCode::BadVersion, path + ": unsupported manifest version");
  DatasetManifest m;
  m.path = path;
  m.name = j.value("name", fs::path(path).parent_path().filename().string());
  m.geometry = {field<int>(j, "width", path), field<int>(j, "height", path)};
  m.geometry.validate();
  m.events = field<std::string>(j, "events", path);
  m.aps = field<std::vector<std::string>>(j, "aps", path);
  m.eta = field<Timestamp>(j, "eta_us", path);
  m.imu = j.value("imu", "");
  m.intrinsics = field<std::string>(j, "intrinsics", path);
  m.sensor = j.value("sensor", "");
  m.calibration = j.value("calibration", "");
  m.provenance = j.value("provenance", "");
  if (j.contains("scene")) m.scene_json = j["scene"].dump();
  return m;
}

Recording load_recording(const DatasetManifest& m) {
  auto require = [&](const std::string& rel, const char* what) {
    if (rel.empty()) throw Error(ErrorCode::MissingField, m.path + ": dataset has no " + what + " file");
    std::string p = m.resolve(rel);
    if (!fs::exists(p)) throw Error(ErrorCode::Io, m.path + ": " + what + " file " + p + " does not exist");
    return p;
  };
  Recording rec;
  rec.name = m.name;
  rec.events = read_events_any(require(m.events, "events"), m.geometry);
  rec.aps.geometry = m.geometry;
  rec.aps.eta = m.eta;
  for (const auto& a : m.aps) rec.aps.frames.push_back(read_aps(require(a, "APS"), m.geometry));
  rec.aps.validate();
  rec.imu = read_imu(require(m.imu, "IMU"));
  rec.imu.validate();
  rec.intrinsics = read_intrinsics(require(m.intrinsics, "intrinsics"));
  return rec;
}

}  // namespace io
}  // namespace epmbench
