#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "epmbench/core.hpp"

namespace epmbench::denoise {

/// Output of any event filter. keep[i] refers to the i-th input event.
struct FilterResult {
  EventStream kept;
  EventStream removed;
  std::vector<std::uint8_t> keep;
};

/// Splits a stream by a per-event keep flag, preserving order.
FilterResult split_stream(const EventStream& stream, std::vector<std::uint8_t> keep);

/// Background-activity filter: keep an event iff some other pixel within Chebyshev
/// distance `radius` fired (either polarity) at most dt_us earlier. Events are judged
/// against all earlier input events, including ones the filter removes.
FilterResult baf(const EventStream& stream, Timestamp dt_us = 5000, int radius = 1);

/// Nearest-neighbor filter: keep iff at least min_count distinct neighbor pixels fired
/// within dt_us. min_count = 1 is BAF; min_count = 2 is NN2.
FilterResult nn_filter(const EventStream& stream, Timestamp dt_us = 5000, int radius = 1, int min_count = 1);

enum class IeTag : std::uint8_t { Inceptive = 0, Trailing = 1 };

/// Inceptive iff the same pixel and polarity did not fire within the preceding dt_us.
std::vector<IeTag> ie_label(const EventStream& stream, Timestamp dt_us = 5000);

/// IE filter: keeps inceptive events only.
FilterResult ie_filter(const EventStream& stream, Timestamp dt_us = 5000);

}  // namespace epmbench::denoise
