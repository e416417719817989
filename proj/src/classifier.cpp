#include "epmbench/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "binio.hpp"
#include "epmbench/rng.hpp"

namespace epmbench::denoise {

const char* to_string(Objective o) {
  switch (o) {
    case Objective::SoftReward: return "soft-reward";
    case Objective::SoftL1: return "soft-l1";
    case Objective::Hard: return "hard";
  }
  return "unknown";
}

Objective objective_from_string(const std::string& s) {
  if (s == "soft-reward") return Objective::SoftReward;
  if (s == "soft-l1" || s == "soft-L1") return Objective::SoftL1;
  if (s == "hard" || s == "hard-classification") return Objective::Hard;
  throw Error(ErrorCode::InvalidArgument, "unknown objective '" + s + "'");
}

namespace {

/// Index of the window containing t, or npos.
std::size_t window_of(const std::vector<EpmFrame>& epm, Timestamp t) {
  auto it = std::upper_bound(epm.begin(), epm.end(), t, [](Timestamp v, const EpmFrame& f) { return v < f.window.start; });
  if (it == epm.begin()) return static_cast<std::size_t>(-1);
  std::size_t w = static_cast<std::size_t>(it - epm.begin()) - 1;
  return epm[w].window.contains(t) ? w : static_cast<std::size_t>(-1);
}

}  // namespace

TrainingSet build_training_set(const std::vector<TrainingSource>& sources, const FeatureConfig& cfg,
                               std::size_t max_events, std::uint64_t seed) {
  cfg.validate();
  TrainingSet set;
  set.features = cfg;
  bool have_geometry = false;

  struct Candidate {
    std::size_t source;
    std::size_t index;
    double soft;
  };
  std::vector<Candidate> cand;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const EventStream& stream = *sources[s].stream;
    const auto& epm = *sources[s].epm;
    if (!have_geometry) {
      set.geometry = stream.geometry();
      have_geometry = true;
    } else if (!(stream.geometry() == set.geometry)) {
      throw Error(ErrorCode::GeometryMismatch, "training streams differ in sensor geometry");
    }
    for (std::size_t w = 0; w < epm.size(); ++w) {
      if (epm[w].values.geometry() != stream.geometry()) {
        throw Error(ErrorCode::GeometryMismatch, "EPM frame geometry differs from its stream");
      }
      if (w > 0 && epm[w].window.start < epm[w - 1].window.end()) {
        throw Error(ErrorCode::InvalidArgument, "EPM windows must be time-ordered and disjoint");
      }
    }
    for (std::size_t i = 0; i < stream.size(); ++i) {
      const Event& e = stream[i];
      std::size_t w = window_of(epm, e.t);
      if (w == static_cast<std::size_t>(-1)) continue;
      if (!epm[w].valid(e.x, e.y)) continue;
      cand.push_back({s, i, epm[w].values(e.x, e.y)});
    }
  }

  if (max_events > 0 && cand.size() > max_events) {
    auto rng = make_rng(seed, 0x5e7);
    for (std::size_t i = 0; i < max_events; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng() % (cand.size() - i));
      std::swap(cand[i], cand[j]);
    }
    cand.resize(max_events);
    std::sort(cand.begin(), cand.end(), [](const Candidate& a, const Candidate& b) {
      return a.source != b.source ? a.source < b.source : a.index < b.index;
    });
  }

  set.x.resize(static_cast<Eigen::Index>(cfg.size()), static_cast<Eigen::Index>(cand.size()));
  set.events.reserve(cand.size());
  std::size_t next = 0;
  for (std::size_t s = 0; s < sources.size() && next < cand.size(); ++s) {
    std::size_t first = next;
    std::size_t last = first;
    while (last < cand.size() && cand[last].source == s) ++last;
    if (first == last) continue;
    const EventStream& stream = *sources[s].stream;
    std::vector<std::uint8_t> wanted(stream.size(), 0);
    for (std::size_t c = first; c < last; ++c) wanted[cand[c].index] = 1;
    std::size_t col = first;
    replay(stream, cfg, [&](std::size_t i) { return wanted[i] != 0; },
           [&](std::size_t i, const float* q) {
             std::copy(q, q + cfg.size(), set.x.col(static_cast<Eigen::Index>(col)).data());
             LabeledEvent le;
             le.event = stream[i];
             le.source = s;
             le.soft = cand[col].soft;
             le.hard = le.soft > 0.5 ? 1 : 0;
             set.events.push_back(le);
             ++col;
           });
    next = last;
  }
  return set;
}

double objective_loss(Objective o, double y, double m, int e) {
  switch (o) {
    case Objective::SoftReward: return 1.0 - (y * m + (1.0 - y) * (1.0 - m));
    case Objective::SoftL1: return std::abs(m - y);
    case Objective::Hard: {
      double p = std::clamp(y, 1e-7, 1.0 - 1e-7);
      return e ? -std::log(p) : -std::log1p(-p);
    }
  }
  return 0.0;
}

namespace {

Eigen::MatrixXf he_init(int rows, int cols, std::mt19937_64& rng) {
  Eigen::MatrixXf w(rows, cols);
  const double s = std::sqrt(2.0 / cols);
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<float>(s * standard_normal(rng));
  }
  return w;
}

struct Adam {
  Eigen::MatrixXf m, v;
  void init(Eigen::Index r, Eigen::Index c) {
    m = Eigen::MatrixXf::Zero(r, c);
    v = Eigen::MatrixXf::Zero(r, c);
  }
  template <typename P, typename G>
  void step(P& p, const G& g, float lr, int t) {
    constexpr float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g.cwiseProduct(g);
    const float c1 = 1.0f - std::pow(b1, static_cast<float>(t));
    const float c2 = 1.0f - std::pow(b2, static_cast<float>(t));
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

}  // namespace

void encode_ages(Eigen::Ref<Eigen::MatrixXf> ages, double t_max_us, double age_scale_us) {
  if (age_scale_us <= 0.0) {
    ages *= static_cast<float>(1.0 / t_max_us);
    return;
  }
  const float inv_scale = static_cast<float>(1.0 / age_scale_us);
  const float norm = static_cast<float>(1.0 / std::log1p(t_max_us / age_scale_us));
  ages = (ages.array() * inv_scale).log1p() * norm;
}

DenoiserModel train(const TrainingSet& set, const TrainConfig& cfg) {
  const std::size_t n = set.size();
  if (n == 0) throw Error(ErrorCode::EmptyInput, "training set is empty");
  std::size_t pos = 0;
  for (const auto& e : set.events) pos += e.hard;
  if (pos == 0 || pos == n) throw Error(ErrorCode::Degenerate, "training set contains a single class");
  if (cfg.epochs < 1 || cfg.batch < 1 || cfg.hidden1 < 1 || cfg.hidden2 < 1 || !(cfg.learning_rate > 0.0) ||
      !(cfg.age_scale_us >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "invalid training configuration");
  }
  const Eigen::Index d = set.x.rows();
  const double t_max = set.features.t_max_us;

  DenoiserModel model;
  model.features = set.features;
  model.geometry = set.geometry;
  model.objective = cfg.objective;
  model.epochs = cfg.epochs;
  model.seed = cfg.seed;
  model.age_scale_us = cfg.age_scale_us;

  // Per-feature standardization of the encoded ages.
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d), sq = Eigen::VectorXd::Zero(d);
  Eigen::VectorXf col(d);
  for (Eigen::Index j = 0; j < set.x.cols(); ++j) {
    col = set.x.col(j);
    encode_ages(col, t_max, cfg.age_scale_us);
    Eigen::VectorXd c = col.cast<double>();
    sum += c;
    sq += c.cwiseProduct(c);
  }
  Eigen::VectorXd mu = sum / static_cast<double>(n);
  Eigen::VectorXd var = (sq / static_cast<double>(n) - mu.cwiseProduct(mu)).cwiseMax(0.0);
  model.mean = mu.cast<float>();
  model.inv_std = var.cwiseSqrt().cwiseMax(1e-3).cwiseInverse().cast<float>();

  auto rng = make_rng(cfg.seed, 0x7a1);
  model.w1 = he_init(cfg.hidden1, static_cast<int>(d), rng);
  model.w2 = he_init(cfg.hidden2, cfg.hidden1, rng);
  model.w3 = he_init(1, cfg.hidden2, rng);
  model.b1 = Eigen::VectorXf::Zero(cfg.hidden1);
  model.b2 = Eigen::VectorXf::Zero(cfg.hidden2);
  model.b3 = Eigen::VectorXf::Zero(1);

  Adam aw1, aw2, aw3, ab1, ab2, ab3;
  aw1.init(model.w1.rows(), model.w1.cols());
  aw2.init(model.w2.rows(), model.w2.cols());
  aw3.init(1, cfg.hidden2);
  ab1.init(cfg.hidden1, 1);
  ab2.init(cfg.hidden2, 1);
  ab3.init(1, 1);

  const int decay_epoch = cfg.decay_epoch >= 0 ? cfg.decay_epoch : (3 * cfg.epochs) / 4;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Eigen::MatrixXf xb(d, cfg.batch);
  int t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const float lr = static_cast<float>(cfg.learning_rate * (epoch >= decay_epoch ? cfg.lr_decay : 1.0));
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch)) {
      const Eigen::Index b = static_cast<Eigen::Index>(std::min<std::size_t>(cfg.batch, n - start));
      xb.resize(d, b);
      for (Eigen::Index c = 0; c < b; ++c) xb.col(c) = set.x.col(static_cast<Eigen::Index>(order[start + c]));
      encode_ages(xb, t_max, cfg.age_scale_us);
      xb = ((xb.colwise() - model.mean).array().colwise() * model.inv_std.array()).matrix();
      Eigen::MatrixXf h1 = ((model.w1 * xb).colwise() + model.b1).cwiseMax(0.0f);
      Eigen::MatrixXf h2 = ((model.w2 * h1).colwise() + model.b2).cwiseMax(0.0f);
      Eigen::RowVectorXf z = (model.w3 * h2).array() + model.b3(0);
      Eigen::RowVectorXf y = (1.0f + (-z.array()).exp()).inverse().matrix();

      Eigen::RowVectorXf dz(b);
      for (Eigen::Index c = 0; c < b; ++c) {
        const LabeledEvent& le = set.events[order[start + c]];
        const float m = static_cast<float>(le.soft);
        const float yc = y(c);
        epoch_loss += objective_loss(cfg.objective, yc, m, le.hard);
        float g;
        switch (cfg.objective) {
          case Objective::SoftReward: g = (1.0f - 2.0f * m) * yc * (1.0f - yc); break;
          case Objective::SoftL1: g = (yc > m ? 1.0f : (yc < m ? -1.0f : 0.0f)) * yc * (1.0f - yc); break;
          default: g = yc - static_cast<float>(le.hard); break;
        }
        dz(c) = g / static_cast<float>(b);
      }
      Eigen::MatrixXf gw3 = dz * h2.transpose();
      Eigen::MatrixXf gb3(1, 1);
      gb3(0, 0) = dz.sum();
      Eigen::MatrixXf dh2 = (model.w3.transpose() * dz).cwiseProduct((h2.array() > 0.0f).cast<float>().matrix());
      Eigen::MatrixXf gw2 = dh2 * h1.transpose();
      Eigen::MatrixXf gb2 = dh2.rowwise().sum();
      Eigen::MatrixXf dh1 = (model.w2.transpose() * dh2).cwiseProduct((h1.array() > 0.0f).cast<float>().matrix());
      Eigen::MatrixXf gw1 = dh1 * xb.transpose();
      Eigen::MatrixXf gb1 = dh1.rowwise().sum();

      ++t;
      aw1.step(model.w1, gw1, lr, t);
      aw2.step(model.w2, gw2, lr, t);
      aw3.step(model.w3, gw3, lr, t);
      ab1.step(model.b1, gb1, lr, t);
      ab2.step(model.b2, gb2, lr, t);
      ab3.step(model.b3, gb3, lr, t);
    }
    model.loss_history.push_back(static_cast<float>(epoch_loss / static_cast<double>(n)));
  }
  return model;
}

namespace {

/// First layer with the standardization folded in.
struct Folded {
  Eigen::MatrixXf w1;
  Eigen::VectorXf b1;
};

Folded fold(const DenoiserModel& m) {
  Folded f;
  f.w1 = m.w1 * m.inv_std.asDiagonal();
  f.b1 = m.b1 - m.w1 * m.mean.cwiseProduct(m.inv_std);
  return f;
}

Eigen::RowVectorXf forward_folded(const DenoiserModel& m, const Folded& f, Eigen::MatrixXf& x) {
  encode_ages(x, m.features.t_max_us, m.age_scale_us);
  Eigen::MatrixXf h1 = ((f.w1 * x).colwise() + f.b1).cwiseMax(0.0f);
  Eigen::MatrixXf h2 = ((m.w2 * h1).colwise() + m.b2).cwiseMax(0.0f);
  Eigen::RowVectorXf z = (m.w3 * h2).array() + m.b3(0);
  return (1.0f + (-z.array()).exp()).inverse().matrix();
}

}  // namespace

Eigen::RowVectorXf DenoiserModel::predict(const Eigen::MatrixXf& raw) const {
  if (raw.rows() != w1.cols()) throw Error(ErrorCode::GeometryMismatch, "feature size differs from model input");
  Eigen::MatrixXf x = raw;
  return forward_folded(*this, fold(*this), x);
}

FilterResult classify(const DenoiserModel& model, const EventStream& stream, std::vector<float>* scores) {
  if (!(stream.geometry() == model.geometry)) {
    throw Error(ErrorCode::GeometryMismatch, "stream is " + std::to_string(stream.geometry().width) + "x" +
                                                 std::to_string(stream.geometry().height) + ", model was trained on " +
                                                 std::to_string(model.geometry.width) + "x" +
                                                 std::to_string(model.geometry.height));
  }
  const FeatureConfig& cfg = model.features;
  if (static_cast<std::size_t>(model.w1.cols()) != cfg.size()) {
    throw Error(ErrorCode::InvalidArgument, "model input size does not match its feature configuration");
  }
  const Folded f = fold(model);
  constexpr Eigen::Index kBatch = 256;
  Eigen::MatrixXf batch(static_cast<Eigen::Index>(cfg.size()), kBatch);
  std::vector<std::uint8_t> keep(stream.size(), 0);
  if (scores) scores->assign(stream.size(), 0.0f);
  std::size_t batch_first = 0;
  Eigen::Index fill = 0;
  auto flush = [&]() {
    if (fill == 0) return;
    Eigen::MatrixXf x = batch.leftCols(fill);
    Eigen::RowVectorXf y = forward_folded(model, f, x);
    for (Eigen::Index c = 0; c < fill; ++c) {
      keep[batch_first + static_cast<std::size_t>(c)] = y(c) > 0.5f ? 1 : 0;
      if (scores) (*scores)[batch_first + static_cast<std::size_t>(c)] = y(c);
    }
    batch_first += static_cast<std::size_t>(fill);
    fill = 0;
  };
  replay(stream, cfg, {}, [&](std::size_t, const float* q) {
    std::copy(q, q + cfg.size(), batch.col(fill).data());
    if (++fill == kBatch) flush();
  });
  flush();
  return split_stream(stream, std::move(keep));
}

void DenoiserModel::save(const std::string& path) const {
  binio::Writer w;
  w.bytes("EPMD", 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(features.m));
  w.u32(static_cast<std::uint32_t>(features.k));
  w.f64(features.t_max_us);
  w.f64(age_scale_us);
  w.u16(static_cast<std::uint16_t>(geometry.width));
  w.u16(static_cast<std::uint16_t>(geometry.height));
  w.u8(static_cast<std::uint8_t>(objective));
  w.u8(0);
  w.u8(0);
  w.u8(0);
  w.u32(static_cast<std::uint32_t>(epochs));
  w.u64(seed);
  w.u32(static_cast<std::uint32_t>(w1.cols()));
  w.u32(static_cast<std::uint32_t>(w1.rows()));
  w.u32(static_cast<std::uint32_t>(w2.rows()));
  w.u32(static_cast<std::uint32_t>(loss_history.size()));
  for (float v : loss_history) w.f32(v);
  auto vec = [&](const Eigen::VectorXf& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) w.f32(v(i));
  };
  auto mat = [&](const Eigen::MatrixXf& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) w.f32(m(r, c));
    }
  };
  vec(mean);
  vec(inv_std);
  mat(w1);
  vec(b1);
  mat(w2);
  vec(b2);
  mat(w3);
  vec(b3);
  binio::write_file(path, w.data());
}

DenoiserModel DenoiserModel::load(const std::string& path) {
  std::vector<char> buf = binio::read_file(path);
  binio::Reader r(buf.data(), buf.size(), path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "EPMD") throw Error(ErrorCode::BadMagic, path + ": not a model file");
  std::uint32_t version = r.u32();
  if (version != kVersion) throw Error(ErrorCode::BadVersion, path + ": unsupported model version " + std::to_string(version));
  DenoiserModel m;
  m.features.m = static_cast<int>(r.u32());
  m.features.k = static_cast<int>(r.u32());
  m.features.t_max_us = r.f64();
  m.age_scale_us = r.f64();
  if (!(m.age_scale_us >= 0.0) || !std::isfinite(m.age_scale_us)) throw Error(ErrorCode::Parse, path + ": bad age scale");
  m.geometry.width = r.u16();
  m.geometry.height = r.u16();
  std::uint8_t obj = r.u8();
  r.u8();
  r.u8();
  r.u8();
  if (obj > 2) throw Error(ErrorCode::Parse, path + ": bad objective tag");
  m.objective = static_cast<Objective>(obj);
  m.epochs = static_cast<int>(r.u32());
  m.seed = r.u64();
  const std::uint32_t d = r.u32();
  const std::uint32_t h1 = r.u32();
  const std::uint32_t h2 = r.u32();
  const std::uint32_t nl = r.u32();
  m.features.validate();
  if (d != m.features.size() || h1 == 0 || h2 == 0) throw Error(ErrorCode::Parse, path + ": inconsistent dimensions");
  std::uint64_t floats = nl + 2ull * d + 1ull * h1 * d + h1 + 1ull * h2 * h1 + h2 + h2 + 1;
  r.need(floats * 4);
  m.loss_history.resize(nl);
  for (auto& v : m.loss_history) v = r.f32();
  auto vec = [&](Eigen::VectorXf& v, std::uint32_t n) {
    v.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) v(i) = r.f32();
  };
  auto mat = [&](Eigen::MatrixXf& x, std::uint32_t rows, std::uint32_t cols) {
    x.resize(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i) {
      for (std::uint32_t j = 0; j < cols; ++j) x(i, j) = r.f32();
    }
  };
  vec(m.mean, d);
  vec(m.inv_std, d);
  mat(m.w1, h1, d);
  vec(m.b1, h1);
  mat(m.w2, h2, h1);
  vec(m.b2, h2);
  mat(m.w3, 1, h2);
  vec(m.b3, 1);
  if (r.remaining() != 0) throw Error(ErrorCode::Parse, path + ": trailing bytes after model");
  return m;
}

}  // namespace epmbench::denoise
