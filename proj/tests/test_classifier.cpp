#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "epmbench/classifier.hpp"
#include "epmbench/rng.hpp"

using namespace epmbench;
using namespace epmbench::denoise;
namespace fs = std::filesystem;

namespace {

// Separable toy set: signal iff the center pixel fired within 2 ms.
TrainingSet toy_set(std::size_t n, std::uint64_t seed) {
  TrainingSet set;
  set.features = {3, 1, 1e5};
  set.geometry = {16, 16};
  const auto d = static_cast<Eigen::Index>(set.features.size());
  set.x.resize(d, static_cast<Eigen::Index>(n));
  auto rng = make_rng(seed, 0);
  const FeatureTensor layout{3, 1, {}};
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index r = 0; r < d; ++r) set.x(r, static_cast<Eigen::Index>(i)) = static_cast<float>(1e5 * uniform01(rng));
    bool signal = uniform01(rng) < 0.5;
    float age = signal ? static_cast<float>(2000 * uniform01(rng)) : static_cast<float>(4000 + 9.6e4 * uniform01(rng));
    set.x(static_cast<Eigen::Index>(layout.index(1, 1, 0, 0)), static_cast<Eigen::Index>(i)) = age;
    LabeledEvent le;
    le.soft = signal ? 0.9 : 0.1;
    le.hard = signal;
    set.events.push_back(le);
  }
  return set;
}

double accuracy(const DenoiserModel& m, const TrainingSet& s) {
  Eigen::RowVectorXf y = m.predict(s.x);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < s.size(); ++i) ok += (y(static_cast<Eigen::Index>(i)) > 0.5f) == (s.events[i].hard != 0);
  return static_cast<double>(ok) / s.size();
}

fs::path temp_dir() {
  fs::path p = fs::temp_directory_path() / ("epmbench_test_classifier_" + std::to_string(::getpid()));
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(ObjectiveLoss, Values) {
  EXPECT_DOUBLE_EQ(objective_loss(Objective::SoftReward, 1.0, 0.8, 1), 0.2);
  EXPECT_DOUBLE_EQ(objective_loss(Objective::SoftReward, 0.0, 0.8, 1), 0.8);
  EXPECT_DOUBLE_EQ(objective_loss(Objective::SoftL1, 0.3, 0.8, 1), 0.5);
  EXPECT_NEAR(objective_loss(Objective::Hard, 0.25, 0.8, 1), -std::log(0.25), 1e-12);
  EXPECT_NEAR(objective_loss(Objective::Hard, 0.25, 0.8, 0), -std::log(0.75), 1e-12);
  EXPECT_TRUE(std::isfinite(objective_loss(Objective::Hard, 0.0, 0.8, 1)));
  // On binary outputs the two soft objectives are the same function.
  for (double m : {0.0, 0.3, 0.5, 0.9}) {
    for (double y : {0.0, 1.0}) {
      EXPECT_DOUBLE_EQ(objective_loss(Objective::SoftReward, y, m, 0), objective_loss(Objective::SoftL1, y, m, 0));
    }
  }
  EXPECT_EQ(objective_from_string("soft-l1"), Objective::SoftL1);
  EXPECT_THROW(objective_from_string("l2"), Error);
}

TEST(EncodeAges, MapsRangeMonotonically) {
  Eigen::MatrixXf a(1, 4);
  a << 0.0f, 1000.0f, 1e5f, 5e6f;
  Eigen::MatrixXf log = a;
  encode_ages(log, 5e6, 1000.0);
  EXPECT_FLOAT_EQ(log(0, 0), 0.0f);
  EXPECT_NEAR(log(0, 3), 1.0f, 1e-6);
  EXPECT_NEAR(log(0, 1), std::log(2.0) / std::log1p(5000.0), 1e-6);
  EXPECT_LT(log(0, 1), log(0, 2));
  Eigen::MatrixXf lin = a;
  encode_ages(lin, 5e6, 0.0);
  EXPECT_NEAR(lin(0, 2), 0.02f, 1e-7);
}

TEST(Train, LearnsSeparableRuleUnderEachObjective) {
  TrainingSet tr = toy_set(3000, 1);
  TrainingSet te = toy_set(1000, 2);
  for (Objective o : {Objective::Hard, Objective::SoftReward, Objective::SoftL1}) {
    TrainConfig cfg;
    cfg.objective = o;
    cfg.epochs = 15;
    cfg.learning_rate = 1e-3;
    DenoiserModel m = train(tr, cfg);
    ASSERT_EQ(m.loss_history.size(), 15u);
    EXPECT_LT(m.loss_history.back(), m.loss_history.front()) << to_string(o);
    EXPECT_GT(accuracy(m, te), 0.95) << to_string(o);
  }
}

TEST(Train, DeterministicForSeed) {
  TrainingSet tr = toy_set(500, 3);
  TrainConfig cfg;
  cfg.epochs = 2;
  DenoiserModel a = train(tr, cfg);
  DenoiserModel b = train(tr, cfg);
  EXPECT_EQ(a.w1, b.w1);
  EXPECT_EQ(a.w3, b.w3);
  cfg.seed = 2;
  EXPECT_NE(train(tr, cfg).w1, a.w1);
}

TEST(Train, RejectsDegenerateSets) {
  TrainingSet tr = toy_set(50, 4);
  for (auto& e : tr.events) e.hard = 1;
  EXPECT_THROW(train(tr, {}), Error);
  EXPECT_THROW(train(TrainingSet{}, {}), Error);
  TrainConfig bad;
  bad.epochs = 0;
  EXPECT_THROW(train(toy_set(50, 5), bad), Error);
}

TEST(Model, SaveLoadRoundTripAndCorruption) {
  TrainingSet tr = toy_set(400, 6);
  TrainConfig cfg;
  cfg.epochs = 2;
  DenoiserModel m = train(tr, cfg);
  fs::path dir = temp_dir();
  std::string path = (dir / "model.bin").string();
  m.save(path);
  DenoiserModel back = DenoiserModel::load(path);
  EXPECT_EQ(back.w1, m.w1);
  EXPECT_EQ(back.b2, m.b2);
  EXPECT_EQ(back.mean, m.mean);
  EXPECT_EQ(back.age_scale_us, m.age_scale_us);
  EXPECT_EQ(back.loss_history, m.loss_history);
  EXPECT_EQ(back.predict(tr.x), m.predict(tr.x));

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  auto write = [&](const std::string& b) {
    std::ofstream(path, std::ios::binary | std::ios::trunc) << b;
  };
  auto code = [&] {
    try {
      DenoiserModel::load(path);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  write("XXXX" + bytes.substr(4));
  EXPECT_EQ(code(), ErrorCode::BadMagic);
  std::string v = bytes;
  v[4] = 9;
  write(v);
  EXPECT_EQ(code(), ErrorCode::BadVersion);
  write(bytes.substr(0, bytes.size() / 2));
  EXPECT_EQ(code(), ErrorCode::Truncated);
  write(bytes + "x");
  EXPECT_EQ(code(), ErrorCode::Parse);
  fs::remove_all(dir);
}

TEST(BuildTrainingSet, LabelsInWindowValidEventsOnly) {
  EventStream s({4, 1}, {{5, 0, 0, 1}, {12, 1, 0, 1}, {15, 2, 0, -1}, {25, 3, 0, 1}, {31, 1, 0, 1}});
  EpmFrame a{{10, 10}, Grid<double>(4, 1), ValidityMask(4, 1, 1)};
  a.values.data() = {0.1, 0.7, 0.4, 0.9};
  a.valid(2, 0) = 0;
  EpmFrame b{{30, 10}, Grid<double>(4, 1), ValidityMask(4, 1, 1)};
  b.values.data() = {0.0, 0.5, 0.0, 0.0};
  std::vector<EpmFrame> epm = {a, b};
  TrainingSet set = build_training_set({{&s, &epm}}, {3, 1, 1000.0});
  ASSERT_EQ(set.size(), 2u);
  EXPECT_EQ(set.events[0].event, s[1]);
  EXPECT_DOUBLE_EQ(set.events[0].soft, 0.7);
  EXPECT_EQ(set.events[0].hard, 1);
  EXPECT_EQ(set.events[1].event, s[4]);
  EXPECT_EQ(set.events[1].hard, 0);  // 0.5 is not above 0.5
  EXPECT_EQ(set.x.cols(), 2);
  // Event 4 at (1,0) saw event 1 at its own pixel 19 us earlier.
  const FeatureTensor layout{3, 1, {}};
  EXPECT_FLOAT_EQ(set.x(static_cast<Eigen::Index>(layout.index(1, 1, 0, 0)), 1), 19.0f);

  std::vector<EpmFrame> overlapping = {a, a};
  EXPECT_THROW(build_training_set({{&s, &overlapping}}), Error);
}

TEST(Classify, ScoresMatchPredictOnReplayedFeatures) {
  TrainingSet tr = toy_set(400, 7);
  TrainConfig cfg;
  cfg.epochs = 1;
  DenoiserModel m = train(tr, cfg);
  auto rng = make_rng(8, 0);
  std::vector<Event> ev;
  for (int i = 0; i < 700; ++i) {
    ev.push_back({i * 50, static_cast<std::uint16_t>(rng() % 16), static_cast<std::uint16_t>(rng() % 16),
                  static_cast<std::int8_t>((rng() & 1) ? 1 : -1)});
  }
  EventStream s({16, 16}, ev);
  std::vector<float> scores;
  FilterResult r = classify(m, s, &scores);
  ASSERT_EQ(scores.size(), s.size());
  Eigen::MatrixXf x(static_cast<Eigen::Index>(m.features.size()), static_cast<Eigen::Index>(s.size()));
  replay(s, m.features, {}, [&](std::size_t i, const float* q) {
    std::copy(q, q + m.features.size(), x.col(static_cast<Eigen::Index>(i)).data());
  });
  Eigen::RowVectorXf y = m.predict(x);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_NEAR(scores[i], y(static_cast<Eigen::Index>(i)), 1e-5);
    EXPECT_EQ(r.keep[i], scores[i] > 0.5f ? 1 : 0);
  }
  EXPECT_THROW(classify(m, EventStream({8, 8}, {}), nullptr), Error);
}
