#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <set>

#include "epmbench/core.hpp"
#include "epmbench/parallel.hpp"
#include "epmbench/rng.hpp"

using namespace epmbench;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

std::vector<Event> random_events(std::mt19937_64& rng, SensorGeometry g, std::size_t n) {
  std::vector<Event> ev(n);
  Timestamp t = 0;
  for (auto& e : ev) {
    t += static_cast<Timestamp>(rng() % 50);
    e = {t, static_cast<std::uint16_t>(rng() % g.width), static_cast<std::uint16_t>(rng() % g.height),
         static_cast<std::int8_t>((rng() & 1) ? 1 : -1)};
  }
  return ev;
}

}  // namespace

TEST(EventStream, RejectsOutOfBoundsUnsortedAndBadPolarity) {
  SensorGeometry g{4, 3};
  EXPECT_EQ(code_of([&] { EventStream(g, {{0, 4, 0, 1}}); }), ErrorCode::OutOfBounds);
  EXPECT_EQ(code_of([&] { EventStream(g, {{0, 0, 3, 1}}); }), ErrorCode::OutOfBounds);
  EXPECT_EQ(code_of([&] { EventStream(g, {{5, 0, 0, 1}, {4, 0, 0, 1}}); }), ErrorCode::Unsorted);
  EXPECT_EQ(code_of([&] { EventStream(g, {{0, 0, 0, 0}}); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { EventStream(g, {{-1, 0, 0, 1}}); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { EventStream({0, 3}, {}); }), ErrorCode::InvalidArgument);
  EXPECT_NO_THROW(EventStream(g, {{3, 1, 1, 1}, {3, 0, 0, -1}}));
}

TEST(EventStream, FromUnsortedOrdersByTimeThenPosition) {
  EventStream s = EventStream::from_unsorted({4, 4}, {{5, 1, 1, 1}, {2, 3, 0, -1}, {5, 0, 1, 1}, {2, 0, 2, 1}});
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s[0], (Event{2, 3, 0, -1}));
  EXPECT_EQ(s[1], (Event{2, 0, 2, 1}));
  EXPECT_EQ(s[2], (Event{5, 0, 1, 1}));
  EXPECT_EQ(s[3], (Event{5, 1, 1, 1}));
}

TEST(Window, IsHalfOpen) {
  Window w{10, 5};
  EXPECT_TRUE(w.contains(10));
  EXPECT_TRUE(w.contains(14));
  EXPECT_FALSE(w.contains(15));
  EXPECT_FALSE(w.contains(9));
  EXPECT_EQ(w.end(), 15);
}

TEST(SliceRange, MatchesLinearScan) {
  auto rng = make_rng(11, 0);
  SensorGeometry g{8, 8};
  EventStream s(g, random_events(rng, g, 500));
  for (int trial = 0; trial < 200; ++trial) {
    Timestamp t0 = static_cast<Timestamp>(rng() % 13000) - 100;
    Timestamp t1 = t0 + static_cast<Timestamp>(rng() % 3000);
    std::size_t lo = 0;
    while (lo < s.size() && s[lo].t < t0) ++lo;
    std::size_t hi = lo;
    while (hi < s.size() && s[hi].t < t1) ++hi;
    auto [a, b] = slice_range(s, t0, t1);
    EXPECT_EQ(a, lo);
    EXPECT_EQ(b, hi);
    EXPECT_EQ(slice_stream(s, t0, t1).size(), hi - lo);
  }
}

TEST(EventIndicator, IgnoresPolarityAndRespectsWindow) {
  EventStream s({3, 2}, {{9, 0, 0, 1}, {10, 1, 0, -1}, {12, 1, 0, 1}, {14, 2, 1, 1}, {15, 0, 1, -1}});
  EventIndicatorFrame e = event_indicator(s, {10, 5});
  EXPECT_EQ(e.values(0, 0), 0);
  EXPECT_EQ(e.values(1, 0), 1);
  EXPECT_EQ(e.values(2, 1), 1);
  EXPECT_EQ(e.values(0, 1), 0);
  EXPECT_EQ(code_of([&] { event_indicator(s, {10, 0}); }), ErrorCode::InvalidArgument);
}

TEST(ApsSequence, ValidatesTimingAndGeometry) {
  ApsSequence seq{{2, 2}, {}, 100};
  seq.frames.push_back({0, 0, 10, Grid<double>(2, 2, 1.0)});
  seq.frames.push_back({1, 100, 10, Grid<double>(2, 2, 1.0)});
  EXPECT_NO_THROW(seq.validate());
  seq.frames[1].start_t = 90;
  EXPECT_EQ(code_of([&] { seq.validate(); }), ErrorCode::InvalidArgument);
  seq.frames[1].start_t = 100;
  seq.frames[1].tau = 100;
  EXPECT_EQ(code_of([&] { seq.validate(); }), ErrorCode::InvalidArgument);
  seq.frames[1].tau = 10;
  seq.frames[1].values = Grid<double>(3, 2, 1.0);
  EXPECT_EQ(code_of([&] { seq.validate(); }), ErrorCode::GeometryMismatch);
  seq.frames[1].values = Grid<double>(2, 2, std::nan(""));
  EXPECT_EQ(code_of([&] { seq.validate(); }), ErrorCode::Numeric);
  EXPECT_EQ(code_of([] { exposure_windows(ApsSequence{}); }), ErrorCode::EmptyInput);
}

TEST(CameraIntrinsics, MatrixLayout) {
  CameraIntrinsics k{400, 31.5, 23.5, 0.25};
  Eigen::Matrix3d m = k.matrix();
  EXPECT_EQ(m(0, 0), 400);
  EXPECT_EQ(m(0, 1), 0.25);
  EXPECT_EQ(m(0, 2), 31.5);
  EXPECT_EQ(m(1, 1), 400);
  EXPECT_EQ(m(1, 2), 23.5);
  EXPECT_EQ(m(2, 2), 1);
  EXPECT_EQ(code_of([] { CameraIntrinsics{0, 0, 0, 0}.validate(); }), ErrorCode::InvalidArgument);
}

TEST(ErrorCode, NamesAreDistinct) {
  std::set<std::string> names;
  for (int c = 0; c <= static_cast<int>(ErrorCode::StepTooCoarse); ++c) {
    names.insert(to_string(static_cast<ErrorCode>(c)));
  }
  EXPECT_EQ(names.size(), static_cast<std::size_t>(ErrorCode::StepTooCoarse) + 1);
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
  for (int threads : {1, 2, 3, 8}) {
    for (std::size_t n : {0u, 1u, 7u, 1000u}) {
      std::vector<std::atomic<int>> hits(n);
      parallel_for(n, threads, [&](std::size_t i) { hits[i]++; });
      for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(hits[i].load(), 1);
    }
  }
}

TEST(Rng, StreamsAreReproducibleAndIndependent) {
  auto a = make_rng(5, 1);
  auto b = make_rng(5, 1);
  auto c = make_rng(5, 2);
  for (int i = 0; i < 10; ++i) {
    auto va = a();
    EXPECT_EQ(va, b());
    EXPECT_NE(va, c());
  }
  auto r = make_rng(1, 0);
  double sum = 0;
  for (int i = 0; i < 100000; ++i) {
    double u = uniform01(r);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.01);
}
