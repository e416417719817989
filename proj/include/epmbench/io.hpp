#pragma once

#include <optional>
#include <string>
#include <vector>

#include "epmbench/core.hpp"

namespace epmbench::io {

inline constexpr std::uint16_t kEventFormatVersion = 1;

// Binary event container "EVT1"; see docs/formats.md.
std::vector<char> encode_events(const EventStream& stream);
EventStream decode_events(const char* data, std::size_t size, const std::string& what = "events");
void write_events(const std::string& path, const EventStream& stream);
EventStream read_events(const std::string& path);

// CSV with header t_us,x,y,p. The sensor size is not part of the CSV.
std::string encode_events_csv(const EventStream& stream);
EventStream decode_events_csv(const std::string& text, SensorGeometry geometry, const std::string& what = "csv");
void write_events_csv(const std::string& path, const EventStream& stream);
EventStream read_events_csv(const std::string& path, SensorGeometry geometry);

/// Reads EVT1 or CSV by extension (.csv needs a geometry).
EventStream read_events_any(const std::string& path, std::optional<SensorGeometry> geometry = std::nullopt);

/// Path of the JSON sidecar that goes with a data file (extension replaced by .json).
std::string sidecar_path(const std::string& path);

// APS frame: 16-bit binary PGM (values rounded to integer counts) plus sidecar {k, start_t, tau}.
void write_aps(const std::string& pgm_path, const ApsFrame& frame);
ApsFrame read_aps(const std::string& pgm_path, std::optional<SensorGeometry> expected = std::nullopt);
Grid<double> decode_pgm16(const std::vector<char>& bytes, const std::string& what = "pgm");

// IMU trace: CSV t_us,wx,wy,wz. Rate is recovered from the mean sample spacing.
void write_imu(const std::string& path, const ImuTrace& imu);
ImuTrace read_imu(const std::string& path, std::vector<std::string>* warnings = nullptr);

// EPM frame: float32 grid followed by a packed validity bitmap, plus JSON sidecar.
void write_epm(const std::string& path, const EpmFrame& frame);
EpmFrame read_epm(const std::string& path);

void write_intrinsics(const std::string& path, const CameraIntrinsics& k);
CameraIntrinsics read_intrinsics(const std::string& path);

/// Per-event provenance tags (1 = signal, 0 = injected), one byte each.
void write_tags(const std::string& path, const std::vector<std::uint8_t>& tags);
std::vector<std::uint8_t> read_tags(const std::string& path);

struct DatasetManifest {
  std::string path;  // the manifest file itself; every other path is relative to its directory
  std::string name;
  SensorGeometry geometry;
  std::string events;
  std::vector<std::string> aps;
  Timestamp eta = 0;
  std::string imu;
  std::string intrinsics;
  std::string sensor;       // optional ground-truth sensor constants
  std::string calibration;  // optional calibration result
  std::string provenance;   // optional per-event signal/noise tags
  std::string scene_json;   // free-form scene metadata, serialized JSON

  std::string resolve(const std::string& rel) const;
};

void write_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::string& path);

/// Loads events, frames, IMU and intrinsics; checks that files exist and geometries agree.
Recording load_recording(const DatasetManifest& m);

}  // namespace epmbench::io
