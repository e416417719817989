#include "epmbench/features.hpp"

#include <algorithm>

namespace epmbench::denoise {

RecentEventStore::RecentEventStore(SensorGeometry geometry, int k) : geometry_(geometry), k_(k) {
  geometry_.validate();
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "store depth k must be >= 1");
  slots_.assign(geometry_.pixel_count() * static_cast<std::size_t>(k) * 2, kEmpty);
}

void RecentEventStore::clear() {
  std::fill(slots_.begin(), slots_.end(), kEmpty);
  last_t_ = kEmpty;
}

void RecentEventStore::update(const Event& e) {
  if (!geometry_.contains(e.x, e.y)) throw Error(ErrorCode::OutOfBounds, "event outside store geometry");
  if (e.t < last_t_) {
    throw Error(ErrorCode::Unsorted, "store update at t=" + std::to_string(e.t) + " after t=" + std::to_string(last_t_));
  }
  last_t_ = e.t;
  Timestamp* s = &slots_[geometry_.index(e.x, e.y) * static_cast<std::size_t>(k_) * 2];
  const int c = polarity_channel(e.p);
  if (s[c] == e.t) return;
  for (int r = k_ - 1; r > 0; --r) s[r * 2 + c] = s[(r - 1) * 2 + c];
  s[c] = e.t;
}

void FeatureConfig::validate() const {
  if (m < 1 || m % 2 == 0) throw Error(ErrorCode::InvalidArgument, "neighborhood size m must be odd, got " + std::to_string(m));
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (!(t_max_us > 0.0)) throw Error(ErrorCode::InvalidArgument, "t_max must be positive");
}

void extract_features_into(const RecentEventStore& store, const Event& e, const FeatureConfig& cfg, float* out) {
  const int m = cfg.m;
  const int k = cfg.k;
  const int h = m / 2;
  const float cap = static_cast<float>(cfg.t_max_us);
  const double capd = cfg.t_max_us;
  const SensorGeometry& g = store.geometry();
  const int per_pixel = 2 * k;
  for (int i = 0; i < m; ++i) {
    const int y = e.y + i - h;
    float* row = out + static_cast<std::size_t>(i) * m * per_pixel;
    if (y < 0 || y >= g.height) {
      std::fill(row, row + static_cast<std::size_t>(m) * per_pixel, cap);
      continue;
    }
    for (int j = 0; j < m; ++j) {
      const int x = e.x + j - h;
      float* cell = row + static_cast<std::size_t>(j) * per_pixel;
      if (x < 0 || x >= g.width) {
        std::fill(cell, cell + per_pixel, cap);
        continue;
      }
      const Timestamp* s = store.pixel_slots(g.index(x, y));
      for (int r = 0; r < k; ++r) {
        for (int c = 0; c < 2; ++c) {
          Timestamp ts = s[r * 2 + c];
          cell[r * 2 + c] = ts == RecentEventStore::kEmpty
                                ? cap
                                : static_cast<float>(std::min(static_cast<double>(e.t - ts), capd));
        }
      }
    }
  }
}

FeatureTensor extract_features(const RecentEventStore& store, const Event& e, int m, int k, double t_max_us) {
  FeatureConfig cfg{m, k, t_max_us};
  cfg.validate();
  if (k > store.k()) throw Error(ErrorCode::InvalidArgument, "k exceeds the store depth");
  if (!store.geometry().contains(e.x, e.y)) throw Error(ErrorCode::OutOfBounds, "event outside store geometry");
  FeatureTensor q{m, k, std::vector<float>(cfg.size())};
  extract_features_into(store, e, cfg, q.q.data());
  return q;
}

void replay(const EventStream& stream, const FeatureConfig& cfg, const std::function<bool(std::size_t)>& want,
            const std::function<void(std::size_t, const float*)>& visit) {
  cfg.validate();
  RecentEventStore store(stream.geometry(), cfg.k);
  std::vector<float> buf(cfg.size());
  std::size_t i = 0;
  const std::size_t n = stream.size();
  while (i < n) {
    std::size_t j = i;
    while (j < n && stream[j].t == stream[i].t) ++j;
    for (std::size_t a = i; a < j; ++a) {
      if (want && !want(a)) continue;
      extract_features_into(store, stream[a], cfg, buf.data());
      visit(a, buf.data());
    }
    for (std::size_t a = i; a < j; ++a) store.update(stream[a]);
    i = j;
  }
}

}  // namespace epmbench::denoise
