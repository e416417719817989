#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "epmbench/core.hpp"

namespace epmbench::denoise {

/// Channel index of a polarity: 0 for +1, 1 for -1.
inline int polarity_channel(int p) { return p > 0 ? 0 : 1; }

/// Per pixel and polarity, the timestamps of the k most recent events, newest first.
/// Storage is exactly width * height * k * 2 timestamps.
class RecentEventStore {
 public:
  static constexpr Timestamp kEmpty = std::numeric_limits<Timestamp>::min();

  RecentEventStore(SensorGeometry geometry, int k);

  /// Pushes e.t into the buffer of (x, y, p). Throws Unsorted if e.t precedes the
  /// previous update. A repeated timestamp at the same pixel and polarity is ignored.
  void update(const Event& e);

  /// r-th most recent timestamp (r = 0 newest) or kEmpty.
  Timestamp recent(int x, int y, int channel, int r) const {
    return slots_[(geometry_.index(x, y) * static_cast<std::size_t>(k_) + r) * 2 + channel];
  }
  /// The 2k slots of one pixel, laid out [r][channel].
  const Timestamp* pixel_slots(std::size_t pixel) const { return &slots_[pixel * static_cast<std::size_t>(k_) * 2]; }

  const SensorGeometry& geometry() const { return geometry_; }
  int k() const { return k_; }
  std::size_t slot_count() const { return slots_.size(); }
  Timestamp last_time() const { return last_t_; }
  void clear();

 private:
  SensorGeometry geometry_;
  int k_;
  std::vector<Timestamp> slots_;
  Timestamp last_t_ = kEmpty;
};

struct FeatureConfig {
  int m = 25;
  int k = 2;
  double t_max_us = 5e6;

  void validate() const;
  std::size_t size() const { return static_cast<std::size_t>(m) * m * k * 2; }
};

/// Q(i, j, r, c): age in microseconds of the r-th most recent event of channel c at
/// pixel (x + j - m/2, y + i - m/2), capped at t_max. Missing history and off-sensor
/// neighbors read t_max.
struct FeatureTensor {
  int m = 0;
  int k = 0;
  std::vector<float> q;

  std::size_t index(int i, int j, int r, int c) const {
    return ((static_cast<std::size_t>(i) * m + j) * k + r) * 2 + c;
  }
  float at(int i, int j, int r, int c) const { return q[index(i, j, r, c)]; }
};

/// Writes cfg.size() floats in FeatureTensor layout. The store must hold k >= cfg.k.
void extract_features_into(const RecentEventStore& store, const Event& e, const FeatureConfig& cfg, float* out);

FeatureTensor extract_features(const RecentEventStore& store, const Event& e, int m = 25, int k = 2,
                               double t_max_us = 5e6);

/// Replays a stream through a fresh store. Events sharing a timestamp are featurized
/// before any of them is pushed, so every feature sees strictly earlier events only.
/// visit(i, features) runs for each event with want(i) true (or all, if want is empty).
void replay(const EventStream& stream, const FeatureConfig& cfg, const std::function<bool(std::size_t)>& want,
            const std::function<void(std::size_t, const float*)>& visit);

}  // namespace epmbench::denoise
