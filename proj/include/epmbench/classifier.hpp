#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "epmbench/core.hpp"
#include "epmbench/features.hpp"
#include "epmbench/filters.hpp"

namespace epmbench::denoise {

enum class Objective { SoftReward, SoftL1, Hard };
const char* to_string(Objective o);
Objective objective_from_string(const std::string& s);

/// One in-window event with its EPM labels. hard == (soft > 0.5).
struct LabeledEvent {
  Event event;
  std::size_t source = 0;  // index of the stream it came from
  double soft = 0.0;
  std::uint8_t hard = 0;
};

struct TrainingSet {
  FeatureConfig features;
  SensorGeometry geometry;
  std::vector<LabeledEvent> events;
  Eigen::MatrixXf x;  // features.size() rows, one column per event, raw ages in microseconds

  std::size_t size() const { return events.size(); }
};

struct TrainingSource {
  const EventStream* stream = nullptr;
  const std::vector<EpmFrame>* epm = nullptr;  // one frame per exposure window, time-ordered
};

/// Labels every event that falls inside an EPM window on a valid pixel. Features come
/// from replaying the whole stream, so history may include out-of-window events.
/// With max_events > 0 a seeded uniform subset of that size is kept.
TrainingSet build_training_set(const std::vector<TrainingSource>& sources, const FeatureConfig& cfg = {},
                               std::size_t max_events = 0, std::uint64_t seed = 0);

struct TrainConfig {
  Objective objective = Objective::Hard;
  int epochs = 12;
  int batch = 64;
  double learning_rate = 1e-4;
  double lr_decay = 0.1;  // multiplied into the rate once, at decay_epoch
  int decay_epoch = -1;   // < 0: three quarters of the way through
  int hidden1 = 128;
  int hidden2 = 32;
  double age_scale_us = 1000.0;  // log compression scale for ages; 0 keeps age / t_max
  std::uint64_t seed = 1;
};

/// Maps raw ages in [0, t_max] to [0, 1]: log1p(age / scale) / log1p(t_max / scale), or
/// age / t_max when scale is 0.
void encode_ages(Eigen::Ref<Eigen::MatrixXf> ages, double t_max_us, double age_scale_us);

/// Flattened time-surface -> 128 -> 32 -> 1 perceptron with ReLU hidden units and a
/// sigmoid output. Inputs are encoded ages (see encode_ages), standardized per feature.
class DenoiserModel {
 public:
  static constexpr std::uint32_t kVersion = 1;

  FeatureConfig features;
  SensorGeometry geometry;
  Objective objective = Objective::Hard;
  int epochs = 0;
  std::uint64_t seed = 0;
  double age_scale_us = 1000.0;
  std::vector<float> loss_history;  // mean training loss per epoch

  Eigen::VectorXf mean, inv_std;
  Eigen::MatrixXf w1, w2, w3;
  Eigen::VectorXf b1, b2, b3;

  std::size_t input_size() const { return static_cast<std::size_t>(w1.cols()); }

  /// Scores for raw-age feature columns, in [0, 1].
  Eigen::RowVectorXf predict(const Eigen::MatrixXf& raw) const;

  void save(const std::string& path) const;
  static DenoiserModel load(const std::string& path);
};

/// Mini-batch Adam. Deterministic for a fixed seed.
DenoiserModel train(const TrainingSet& set, const TrainConfig& cfg = {});

/// Loss of output y against soft label m and hard label e under an objective.
double objective_loss(Objective o, double y, double m, int e);

/// Replays the stream, scores each event and keeps it iff score > 0.5.
FilterResult classify(const DenoiserModel& model, const EventStream& stream, std::vector<float>* scores = nullptr);

}  // namespace epmbench::denoise
