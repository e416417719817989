#include <gtest/gtest.h>

#include "epmbench/features.hpp"
#include "epmbench/rng.hpp"

using namespace epmbench;
using namespace epmbench::denoise;

TEST(RecentEventStore, KeepsNewestFirstPerChannel) {
  RecentEventStore s({3, 3}, 3);
  EXPECT_EQ(s.slot_count(), 3u * 3u * 3u * 2u);
  s.update({10, 1, 1, 1});
  s.update({20, 1, 1, -1});
  s.update({30, 1, 1, 1});
  s.update({40, 1, 1, 1});
  s.update({50, 1, 1, 1});
  EXPECT_EQ(s.recent(1, 1, 0, 0), 50);
  EXPECT_EQ(s.recent(1, 1, 0, 1), 40);
  EXPECT_EQ(s.recent(1, 1, 0, 2), 30);
  EXPECT_EQ(s.recent(1, 1, 1, 0), 20);
  EXPECT_EQ(s.recent(1, 1, 1, 1), RecentEventStore::kEmpty);
  EXPECT_EQ(s.recent(0, 0, 0, 0), RecentEventStore::kEmpty);
}

TEST(RecentEventStore, DuplicateTimestampIgnoredAndOrderEnforced) {
  RecentEventStore s({2, 2}, 2);
  s.update({5, 0, 0, 1});
  s.update({5, 0, 0, 1});
  EXPECT_EQ(s.recent(0, 0, 0, 1), RecentEventStore::kEmpty);
  EXPECT_THROW(s.update({4, 1, 1, 1}), Error);
  EXPECT_THROW(s.update({6, 2, 0, 1}), Error);
  s.clear();
  EXPECT_EQ(s.recent(0, 0, 0, 0), RecentEventStore::kEmpty);
  EXPECT_NO_THROW(s.update({1, 0, 0, 1}));
}

TEST(Features, AgesCapsAndBorders) {
  RecentEventStore s({5, 5}, 2);
  s.update({1000, 2, 2, 1});
  s.update({1500, 2, 2, 1});
  s.update({1800, 3, 2, -1});
  FeatureTensor q = extract_features(s, {2000, 2, 2, 1}, 3, 2, 600.0);
  ASSERT_EQ(q.q.size(), 3u * 3u * 2u * 2u);
  // Center pixel (i = j = 1): newest +1 event 500 us ago, the older one capped at 600.
  EXPECT_FLOAT_EQ(q.at(1, 1, 0, 0), 500.0f);
  EXPECT_FLOAT_EQ(q.at(1, 1, 1, 0), 600.0f);
  EXPECT_FLOAT_EQ(q.at(1, 1, 0, 1), 600.0f);
  // Right neighbor (j = 2) fired -1 200 us ago.
  EXPECT_FLOAT_EQ(q.at(1, 2, 0, 1), 200.0f);
  // Off-sensor neighbors of a corner event read t_max.
  FeatureTensor c = extract_features(s, {2000, 0, 0, 1}, 3, 2, 600.0);
  for (int r = 0; r < 2; ++r) {
    for (int ch = 0; ch < 2; ++ch) EXPECT_FLOAT_EQ(c.at(0, 0, r, ch), 600.0f);
  }
}

TEST(Features, ValidatesConfiguration) {
  RecentEventStore s({5, 5}, 1);
  EXPECT_THROW(extract_features(s, {0, 1, 1, 1}, 4, 1, 1e6), Error);
  EXPECT_THROW(extract_features(s, {0, 1, 1, 1}, 3, 2, 1e6), Error);
  EXPECT_THROW(extract_features(s, {0, 1, 1, 1}, 3, 1, 0.0), Error);
  EXPECT_THROW(extract_features(s, {0, 9, 1, 1}, 3, 1, 1e6), Error);
}

TEST(Replay, SameTimestampEventsDoNotSeeEachOther) {
  EventStream st({4, 4}, {{100, 1, 1, 1}, {200, 1, 1, 1}, {200, 2, 1, 1}, {300, 1, 1, 1}});
  FeatureConfig cfg{3, 1, 1000.0};
  std::vector<std::vector<float>> f(st.size());
  replay(st, cfg, {}, [&](std::size_t i, const float* q) { f[i].assign(q, q + cfg.size()); });
  FeatureTensor layout{3, 1, {}};
  // Event 2 at (2,1): its left neighbor (1,1) fired at 100 only, not at the simultaneous 200.
  EXPECT_FLOAT_EQ(f[2][layout.index(1, 0, 0, 0)], 100.0f);
  // Event 3 sees the 200 event at its own pixel.
  EXPECT_FLOAT_EQ(f[3][layout.index(1, 1, 0, 0)], 100.0f);
  EXPECT_FLOAT_EQ(f[3][layout.index(1, 2, 0, 0)], 100.0f);
}

TEST(Replay, FilterSelectsEvents) {
  auto rng = make_rng(51, 0);
  std::vector<Event> ev;
  for (int i = 0; i < 300; ++i) {
    ev.push_back({i * 3, static_cast<std::uint16_t>(rng() % 8), static_cast<std::uint16_t>(rng() % 8), 1});
  }
  EventStream st({8, 8}, ev);
  FeatureConfig cfg{5, 2, 1e5};
  std::vector<std::size_t> seen;
  replay(st, cfg, [](std::size_t i) { return i % 7 == 0; }, [&](std::size_t i, const float*) { seen.push_back(i); });
  ASSERT_EQ(seen.size(), 43u);
  for (std::size_t k = 0; k < seen.size(); ++k) EXPECT_EQ(seen[k], 7 * k);
}
