#include "epmbench/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace epmbench {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::OutOfRange: return "out_of_range";
    case ErrorCode::EmptyInput: return "empty_input";
    case ErrorCode::GeometryMismatch: return "geometry_mismatch";
    case ErrorCode::Unsorted: return "unsorted";
    case ErrorCode::BadMagic: return "bad_magic";
    case ErrorCode::BadVersion: return "bad_version";
    case ErrorCode::Truncated: return "truncated";
    case ErrorCode::OutOfBounds: return "out_of_bounds";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Io: return "io";
    case ErrorCode::MissingField: return "missing_field";
    case ErrorCode::Numeric: return "numeric";
    case ErrorCode::Degenerate: return "degenerate";
    case ErrorCode::MissingCalibration: return "missing_calibration";
    case ErrorCode::StepTooCoarse: return "step_too_coarse";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message) : std::runtime_error(message), code_(code) {}

void SensorGeometry::validate() const {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::InvalidArgument,
                "sensor geometry must be positive, got " + std::to_string(width) + "x" + std::to_string(height));
  }
}

bool event_time_less(const Event& a, const Event& b) {
  if (a.t != b.t) return a.t < b.t;
  if (a.y != b.y) return a.y < b.y;
  if (a.x != b.x) return a.x < b.x;
  return a.p < b.p;
}

EventStream::EventStream(SensorGeometry geometry, std::vector<Event> events)
    : geometry_(geometry), events_(std::move(events)) {
  geometry_.validate();
  for (std::size_t i = 0; i < events_.size(); ++i) {
    const Event& e = events_[i];
    if (!geometry_.contains(e.x, e.y)) {
      std::ostringstream os;
      os << "event " << i << " at (" << e.x << "," << e.y << ") outside " << geometry_.width << "x"
         << geometry_.height;
      throw Error(ErrorCode::OutOfBounds, os.str());
    }
    if (e.t < 0) throw Error(ErrorCode::InvalidArgument, "event " + std::to_string(i) + " has negative timestamp");
    if (e.p != 1 && e.p != -1) {
      throw Error(ErrorCode::InvalidArgument, "event " + std::to_string(i) + " has polarity " + std::to_string(e.p));
    }
    if (i > 0 && e.t < events_[i - 1].t) {
      throw Error(ErrorCode::Unsorted, "event " + std::to_string(i) + " precedes its predecessor in time");
    }
  }
}

EventStream EventStream::from_unsorted(SensorGeometry geometry, std::vector<Event> events) {
  std::sort(events.begin(), events.end(), event_time_less);
  return EventStream(geometry, std::move(events));
}

void CameraIntrinsics::validate() const {
  if (!(f > 0.0) || !std::isfinite(f)) throw Error(ErrorCode::InvalidArgument, "focal length must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(kappa)) {
    throw Error(ErrorCode::InvalidArgument, "intrinsics must be finite");
  }
}

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << f, kappa, cx, 0.0, f, cy, 0.0, 0.0, 1.0;
  return k;
}

void ApsSequence::validate() const {
  geometry.validate();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const ApsFrame& fr = frames[i];
    if (fr.tau <= 0) throw Error(ErrorCode::InvalidArgument, "frame " + std::to_string(i) + " has tau <= 0");
    if (eta > 0 && fr.tau >= eta) {
      throw Error(ErrorCode::InvalidArgument, "frame " + std::to_string(i) + " exposure must be shorter than eta");
    }
    if (fr.values.geometry() != geometry) {
      throw Error(ErrorCode::GeometryMismatch, "frame " + std::to_string(i) + " geometry differs from sequence");
    }
    if (i > 0 && eta > 0 && fr.start_t - frames[i - 1].start_t != eta * (fr.k - frames[i - 1].k)) {
      throw Error(ErrorCode::InvalidArgument, "frame " + std::to_string(i) + " start not spaced by eta");
    }
    for (double v : fr.values.data()) {
      if (!std::isfinite(v)) throw Error(ErrorCode::Numeric, "frame " + std::to_string(i) + " has non-finite value");
    }
  }
}

void ImuTrace::validate() const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i].theta.allFinite()) {
      throw Error(ErrorCode::Numeric, "IMU sample " + std::to_string(i) + " is not finite");
    }
    if (i > 0 && samples[i].t < samples[i - 1].t) {
      throw Error(ErrorCode::Unsorted, "IMU sample " + std::to_string(i) + " is out of order");
    }
  }
}

std::size_t EpmFrame::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.data().begin(), valid.data().end(), std::uint8_t{1}));
}

std::vector<Window> exposure_windows(const ApsSequence& aps) {
  if (aps.frames.empty()) throw Error(ErrorCode::EmptyInput, "APS sequence has no frames");
  std::vector<Window> out;
  out.reserve(aps.frames.size());
  for (const auto& fr : aps.frames) out.push_back(fr.exposure());
  return out;
}

std::pair<std::size_t, std::size_t> slice_range(const EventStream& stream, Timestamp t0, Timestamp t1) {
  auto ev = stream.events();
  auto lo = std::lower_bound(ev.begin(), ev.end(), t0, [](const Event& e, Timestamp t) { return e.t < t; });
  auto hi = std::lower_bound(lo, ev.end(), std::max(t0, t1), [](const Event& e, Timestamp t) { return e.t < t; });
  return {static_cast<std::size_t>(lo - ev.begin()), static_cast<std::size_t>(hi - ev.begin())};
}

EventStream slice_stream(const EventStream& stream, Timestamp t0, Timestamp t1) {
  auto [lo, hi] = slice_range(stream, t0, t1);
  auto ev = stream.events();
  return EventStream(stream.geometry(), std::vector<Event>(ev.begin() + lo, ev.begin() + hi));
}

EventIndicatorFrame event_indicator(const EventStream& stream, const Window& window) {
  if (window.length <= 0) throw Error(ErrorCode::InvalidArgument, "indicator window length must be positive");
  EventIndicatorFrame out{window, Grid<std::uint8_t>(stream.geometry(), 0)};
  auto [lo, hi] = slice_range(stream, window.start, window.end());
  for (std::size_t i = lo; i < hi; ++i) out.values(stream[i].x, stream[i].y) = 1;
  return out;
}

}  // namespace epmbench
