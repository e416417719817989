#include "epmbench/filters.hpp"

#include <algorithm>
#include <limits>

namespace epmbench::denoise {

namespace {

constexpr Timestamp kNever = std::numeric_limits<Timestamp>::min() / 2;

void check_params(Timestamp dt_us, int radius) {
  if (dt_us < 0) throw Error(ErrorCode::InvalidArgument, "dt must be >= 0");
  if (radius < 1) throw Error(ErrorCode::InvalidArgument, "radius must be >= 1");
}

}  // namespace

FilterResult split_stream(const EventStream& stream, std::vector<std::uint8_t> keep) {
  if (keep.size() != stream.size()) throw Error(ErrorCode::InvalidArgument, "keep mask length differs from stream");
  std::vector<Event> kept;
  std::vector<Event> removed;
  for (std::size_t i = 0; i < stream.size(); ++i) (keep[i] ? kept : removed).push_back(stream[i]);
  return {EventStream(stream.geometry(), std::move(kept)), EventStream(stream.geometry(), std::move(removed)),
          std::move(keep)};
}

FilterResult nn_filter(const EventStream& stream, Timestamp dt_us, int radius, int min_count) {
  check_params(dt_us, radius);
  if (min_count < 1) throw Error(ErrorCode::InvalidArgument, "min_count must be >= 1");
  const SensorGeometry g = stream.geometry();
  std::vector<Timestamp> last(g.pixel_count(), kNever);
  std::vector<std::uint8_t> keep(stream.size(), 0);
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const Event& e = stream[i];
    const int x0 = std::max(0, e.x - radius);
    const int x1 = std::min(g.width - 1, e.x + radius);
    const int y0 = std::max(0, e.y - radius);
    const int y1 = std::min(g.height - 1, e.y + radius);
    int support = 0;
    for (int y = y0; y <= y1 && support < min_count; ++y) {
      const Timestamp* row = &last[g.index(0, y)];
      for (int x = x0; x <= x1; ++x) {
        if (x == e.x && y == e.y) continue;
        if (e.t - row[x] <= dt_us) ++support;
      }
    }
    keep[i] = support >= min_count ? 1 : 0;
    last[g.index(e.x, e.y)] = e.t;
  }
  return split_stream(stream, std::move(keep));
}

FilterResult baf(const EventStream& stream, Timestamp dt_us, int radius) {
  return nn_filter(stream, dt_us, radius, 1);
}

std::vector<IeTag> ie_label(const EventStream& stream, Timestamp dt_us) {
  if (dt_us < 0) throw Error(ErrorCode::InvalidArgument, "dt must be >= 0");
  const SensorGeometry g = stream.geometry();
  std::vector<Timestamp> last(g.pixel_count() * 2, kNever);
  std::vector<IeTag> tags(stream.size());
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const Event& e = stream[i];
    Timestamp& slot = last[g.index(e.x, e.y) * 2 + (e.p > 0 ? 0 : 1)];
    tags[i] = e.t - slot <= dt_us ? IeTag::Trailing : IeTag::Inceptive;
    slot = e.t;
  }
  return tags;
}

FilterResult ie_filter(const EventStream& stream, Timestamp dt_us) {
  auto tags = ie_label(stream, dt_us);
  std::vector<std::uint8_t> keep(tags.size());
  for (std::size_t i = 0; i < tags.size(); ++i) keep[i] = tags[i] == IeTag::Inceptive ? 1 : 0;
  return split_stream(stream, std::move(keep));
}

}  // namespace epmbench::denoise
