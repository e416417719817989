#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace epmbench {

/// Timestamps are integer microseconds everywhere.
using Timestamp = std::int64_t;

inline constexpr double kMicrosPerSecond = 1e6;

inline double to_seconds(Timestamp t) { return static_cast<double>(t) / kMicrosPerSecond; }

enum class ErrorCode {
  InvalidArgument,
  OutOfRange,
  EmptyInput,
  GeometryMismatch,
  Unsorted,
  BadMagic,
  BadVersion,
  Truncated,
  OutOfBounds,
  Parse,
  Io,
  MissingField,
  Numeric,
  Degenerate,
  MissingCalibration,
  StepTooCoarse,
};

const char* to_string(ErrorCode code);

/// Every failure surfaced by the library is an Error carrying a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

struct SensorGeometry {
  int width = 0;
  int height = 0;

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  bool operator==(const SensorGeometry&) const = default;

  /// Throws unless width > 0 and height > 0.
  void validate() const;
};

/// Pixel coordinates are (x = column, y = row) with the origin at the top-left.
/// Polarity is stored signed: +1 brighter, -1 darker.
struct Event {
  Timestamp t = 0;
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int8_t p = 1;

  bool operator==(const Event&) const = default;
};

/// Half-open interval [start, start + length).
struct Window {
  Timestamp start = 0;
  Timestamp length = 0;

  Timestamp end() const { return start + length; }
  bool contains(Timestamp t) const { return t >= start && t < end(); }
  bool operator==(const Window&) const = default;
};

/// A time-ordered, bounds-checked sequence of events. Immutable once built.
class EventStream {
 public:
  EventStream() = default;
  /// Validates ordering, bounds, timestamps and polarity; throws Error on violation.
  EventStream(SensorGeometry geometry, std::vector<Event> events);

  /// Sorts by (t, y, x, p) before validating.
  static EventStream from_unsorted(SensorGeometry geometry, std::vector<Event> events);

  const SensorGeometry& geometry() const { return geometry_; }
  std::span<const Event> events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }
  const Event& operator[](std::size_t i) const { return events_[i]; }
  auto begin() const { return events_.begin(); }
  auto end() const { return events_.end(); }

  bool operator==(const EventStream&) const = default;

 private:
  SensorGeometry geometry_;
  std::vector<Event> events_;
};

bool event_time_less(const Event& a, const Event& b);

/// Row-major 2D array over the sensor grid.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {}
  explicit Grid(const SensorGeometry& g, T fill = T{}) : Grid(g.width, g.height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  SensorGeometry geometry() const { return {width_, height_}; }
  std::size_t size() const { return data_.size(); }

  T& operator()(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& operator()(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using ValidityMask = Grid<std::uint8_t>;

struct CameraIntrinsics {
  double f = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  double kappa = 0.0;

  void validate() const;
  Eigen::Matrix3d matrix() const;
  bool operator==(const CameraIntrinsics&) const = default;
};

/// Linear APS intensity in digital counts over one exposure [start_t, start_t + tau).
struct ApsFrame {
  std::int64_t k = 0;
  Timestamp start_t = 0;
  Timestamp tau = 0;
  Grid<double> values;

  Window exposure() const { return {start_t, tau}; }
  bool operator==(const ApsFrame&) const = default;
};

struct ApsSequence {
  SensorGeometry geometry;
  std::vector<ApsFrame> frames;
  Timestamp eta = 0;

  /// Checks tau < eta, eta spacing, finite values and matching geometry.
  void validate() const;
};

/// theta is the gyroscope angular velocity in rad/s. Sign convention: a fixed world
/// direction expressed in the camera frame evolves as dP/dt = theta x P.
struct ImuSample {
  Timestamp t = 0;
  Eigen::Vector3d theta = Eigen::Vector3d::Zero();

  bool operator==(const ImuSample& o) const { return t == o.t && theta == o.theta; }
};

struct ImuTrace {
  std::vector<ImuSample> samples;
  double rate = 1000.0;

  void validate() const;
};

struct EventIndicatorFrame {
  Window window;
  Grid<std::uint8_t> values;
};

/// Per-pixel Bernoulli probability of at least one event in the window. Values outside
/// `valid` are undefined and ignored by every consumer.
struct EpmFrame {
  Window window;
  Grid<double> values;
  ValidityMask valid;

  std::size_t valid_count() const;
};

/// Everything recorded by one camera pass: events plus the APS/IMU side channel.
struct Recording {
  std::string name;
  EventStream events;
  ApsSequence aps;
  ImuTrace imu;
  CameraIntrinsics intrinsics;
};

/// One window [start_t, start_t + tau) per APS frame.
std::vector<Window> exposure_windows(const ApsSequence& aps);

/// E(X) = 1 iff at least one event at X has t in the window. Polarity is ignored.
EventIndicatorFrame event_indicator(const EventStream& stream, const Window& window);

/// Events with t in [t0, t1), found by binary search.
EventStream slice_stream(const EventStream& stream, Timestamp t0, Timestamp t1);

/// Index range [first, last) of events with t in [t0, t1).
std::pair<std::size_t, std::size_t> slice_range(const EventStream& stream, Timestamp t0, Timestamp t1);

}  // namespace epmbench
