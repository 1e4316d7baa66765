#include "engage/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>

#include "engage/error.hpp"
#include "text.hpp"

namespace engage::features {

FrameInput frame_input(const ingest::FrameRecord& record) {
  FrameInput in;
  in.latent = record.latent;
  in.affect = {record.valence, record.arousal};
  in.behavioral = record.behavioral();
  return in;
}

Eigen::MatrixXd frame_sequence(const ingest::FrameSeries& series) {
  Eigen::MatrixXd seq(kFrameInputWidth, static_cast<Eigen::Index>(series.frames.size()));
  for (std::size_t t = 0; t < series.frames.size(); ++t) {
    const auto& r = series.frames[t];
    auto col = seq.col(static_cast<Eigen::Index>(t));
    for (int i = 0; i < ingest::kLatentDim; ++i) col(kFrameLatentOffset + i) = r.latent[i];
    col(kFrameAffectOffset) = r.valence;
    col(kFrameAffectOffset + 1) = r.arousal;
    const auto b = r.behavioral();
    for (int i = 0; i < ingest::kBehavioralDim; ++i) col(kFrameBehavioralOffset + i) = b[i];
  }
  return seq;
}

std::vector<Clip> segment_clips(const ingest::FrameSeries& series, double clip_seconds,
                                double overlap_fraction) {
  if (series.frames.empty()) throw Error(ErrorCode::kEmptySeries, series.video_id + ": no frames");
  if (!(series.fps > 0.0) || !(clip_seconds > 0.0)) {
    throw Error(ErrorCode::kInvalidConfig, "fps and clip length must be positive");
  }
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "overlap fraction must lie in [0, 1)");
  }
  const auto length = static_cast<std::int64_t>(std::llround(clip_seconds * series.fps));
  if (length < 2) throw Error(ErrorCode::kInvalidConfig, "clip must span at least 2 frames");
  const auto step = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(std::llround(static_cast<double>(length) * (1.0 - overlap_fraction))));

  const auto n = static_cast<std::int64_t>(series.frames.size());
  std::vector<Clip> clips;
  if (n < length) {
    Clip clip{series.video_id, 0, n - 1, series.frames, true};
    clip.records.resize(static_cast<std::size_t>(length), series.frames.back());
    clips.push_back(std::move(clip));
    return clips;
  }
  for (std::int64_t start = 0; start + length <= n; start += step) {
    Clip clip{series.video_id, start, start + length - 1, {}, false};
    clip.records.assign(series.frames.begin() + start, series.frames.begin() + start + length);
    clips.push_back(std::move(clip));
  }
  return clips;
}

double blink_rate(std::span<const double> au45, double threshold, int min_separation) {
  if (au45.empty()) return 0.0;
  std::vector<std::size_t> peaks;
  for (std::size_t t = 1; t + 1 < au45.size(); ++t) {
    if (au45[t] >= threshold && au45[t] > au45[t - 1] && au45[t] > au45[t + 1]) peaks.push_back(t);
  }
  // Tallest first; ties keep the earlier frame.
  std::stable_sort(peaks.begin(), peaks.end(),
                   [&](std::size_t a, std::size_t b) { return au45[a] > au45[b]; });
  std::vector<std::size_t> kept;
  for (auto p : peaks) {
    const bool clear = std::none_of(kept.begin(), kept.end(), [&](std::size_t q) {
      const auto gap = p > q ? p - q : q - p;
      return gap < static_cast<std::size_t>(std::max(min_separation, 0));
    });
    if (clear) kept.push_back(p);
  }
  return static_cast<double>(kept.size()) / static_cast<double>(au45.size());
}

namespace {

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};

MeanStd population_stats(std::span<const double> x) {
  MeanStd s;
  if (x.empty()) return s;
  // Shifted by the first sample: constant input gives its value and a zero std exactly.
  const double n = static_cast<double>(x.size());
  const double shift = x.front();
  double sum = 0.0;
  for (double v : x) sum += v - shift;
  const double offset = sum / n;
  double ss = 0.0;
  for (double v : x) ss += (v - shift - offset) * (v - shift - offset);
  s.mean = shift + offset;
  s.stddev = std::sqrt(ss / n);
  return s;
}

}  // namespace

DiffStats diff_stats(std::span<const double> signal, double fps) {
  if (signal.size() < 3) {
    throw Error(ErrorCode::kSeriesTooShort, "differencing needs at least 3 samples");
  }
  std::vector<double> vel(signal.size() - 1);
  for (std::size_t t = 1; t < signal.size(); ++t) vel[t - 1] = (signal[t] - signal[t - 1]) * fps;
  std::vector<double> acc(vel.size() - 1);
  for (std::size_t t = 1; t < vel.size(); ++t) acc[t - 1] = (vel[t] - vel[t - 1]) * fps;
  const auto v = population_stats(vel);
  const auto a = population_stats(acc);
  return {v.mean, v.stddev, a.mean, a.stddev};
}

const std::array<std::string, kClipFeatureCount>& clip_feature_names() {
  static const auto names = [] {
    std::array<std::string, kClipFeatureCount> n;
    std::size_t k = 0;
    char buf[64];
    const auto add = [&](const char* stem) {
      std::snprintf(buf, sizeof(buf), "f%02zu_%s", k, stem);
      n[k++] = buf;
    };
    add("valence_mean");
    add("valence_std");
    add("arousal_mean");
    add("arousal_std");
    add("blink_rate");
    for (const char* channel : {"gaze_x", "gaze_y", "head_x", "head_y", "head_z", "head_pitch",
                                "head_yaw", "head_roll", "wrist_x", "wrist_y", "wrist_z"}) {
      for (const char* stat : {"vel_mean", "vel_std", "acc_mean", "acc_std"}) {
        add((std::string(channel) + "_" + stat).c_str());
      }
    }
    return n;
  }();
  return names;
}

ClipFeatures clip_feature_vector(std::span<const ingest::FrameRecord> records, double fps,
                                 double blink_threshold, int blink_min_separation) {
  if (records.size() < 3) throw Error(ErrorCode::kSeriesTooShort, "clip needs at least 3 frames");
  const std::size_t n = records.size();
  std::vector<double> buf(n);
  const auto gather = [&](auto&& get) -> std::span<const double> {
    for (std::size_t t = 0; t < n; ++t) buf[t] = get(records[t]);
    return buf;
  };

  ClipFeatures f{};
  std::size_t k = 0;
  for (auto get : {+[](const ingest::FrameRecord& r) { return r.valence; },
                   +[](const ingest::FrameRecord& r) { return r.arousal; }}) {
    const auto s = population_stats(gather(get));
    f[k++] = s.mean;
    f[k++] = s.stddev;
  }
  f[k++] = blink_rate(gather([](const ingest::FrameRecord& r) { return r.au45; }), blink_threshold,
                      blink_min_separation);
  // Behavioral channels after au45, in frame order.
  for (int channel = 1; channel < ingest::kBehavioralDim; ++channel) {
    const auto d =
        diff_stats(gather([channel](const ingest::FrameRecord& r) { return r.behavioral()[channel]; }), fps);
    f[k++] = d.vel_mean;
    f[k++] = d.vel_std;
    f[k++] = d.acc_mean;
    f[k++] = d.acc_std;
  }
  return f;
}

ClipFeatures clip_feature_vector(const Clip& clip, double fps, double blink_threshold,
                                 int blink_min_separation) {
  return clip_feature_vector(std::span<const ingest::FrameRecord>(clip.records), fps, blink_threshold,
                             blink_min_separation);
}

Eigen::MatrixXd clip_sequence(const ingest::FrameSeries& series, const ClipParams& params) {
  const auto clips = segment_clips(series, params.clip_seconds, params.overlap_fraction);
  Eigen::MatrixXd seq(kClipFeatureCount, static_cast<Eigen::Index>(clips.size()));
  for (std::size_t c = 0; c < clips.size(); ++c) {
    const auto f = clip_feature_vector(clips[c], series.fps, params.blink_threshold,
                                       params.blink_min_separation);
    seq.col(static_cast<Eigen::Index>(c)) = Eigen::Map<const Eigen::VectorXd>(f.data(), kClipFeatureCount);
  }
  return seq;
}

Normalizer fit_normalizer(std::span<const Eigen::MatrixXd> samples, const std::string& layout_version) {
  Eigen::Index width = -1;
  Eigen::Index count = 0;
  for (const auto& m : samples) {
    if (width < 0) width = m.rows();
    if (m.rows() != width) throw Error(ErrorCode::kShapeMismatch, "samples differ in feature width");
    count += m.cols();
  }
  if (count < 2) throw Error(ErrorCode::kTooFewSamples, "normalizer needs at least 2 samples");

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(width);
  for (const auto& m : samples) sum += m.rowwise().sum();
  const Eigen::VectorXd mean = sum / static_cast<double>(count);
  Eigen::VectorXd ss = Eigen::VectorXd::Zero(width);
  for (const auto& m : samples) ss += (m.colwise() - mean).array().square().matrix().rowwise().sum();

  Normalizer n;
  n.layout_version = layout_version;
  n.mean.assign(mean.data(), mean.data() + width);
  n.stddev.resize(static_cast<std::size_t>(width));
  n.constant.resize(static_cast<std::size_t>(width));
  for (Eigen::Index i = 0; i < width; ++i) {
    const double sd = std::sqrt(ss(i) / static_cast<double>(count));
    const bool constant = !(sd > 1e-12 * std::max(1.0, std::abs(mean(i))));
    n.constant[static_cast<std::size_t>(i)] = constant;
    n.stddev[static_cast<std::size_t>(i)] = constant ? 1.0 : sd;
  }
  return n;
}

Eigen::MatrixXd apply_normalizer(const Normalizer& normalizer, const Eigen::MatrixXd& features,
                                 const std::string& layout_version) {
  if (normalizer.layout_version != layout_version) {
    throw Error(ErrorCode::kLayoutMismatch, "normalizer fitted for '" + normalizer.layout_version +
                                                "', features are '" + layout_version + "'");
  }
  if (static_cast<std::size_t>(features.rows()) != normalizer.width()) {
    throw Error(ErrorCode::kLayoutMismatch, "feature width " + std::to_string(features.rows()) +
                                                " != normalizer width " +
                                                std::to_string(normalizer.width()));
  }
  const auto w = static_cast<Eigen::Index>(normalizer.width());
  const Eigen::Map<const Eigen::VectorXd> mean(normalizer.mean.data(), w);
  const Eigen::Map<const Eigen::VectorXd> sd(normalizer.stddev.data(), w);
  Eigen::MatrixXd out = (features.colwise() - mean).array().colwise() / sd.array();
  // Constant features map to exactly zero.
  for (Eigen::Index i = 0; i < w; ++i) {
    if (normalizer.constant[static_cast<std::size_t>(i)]) out.row(i).setZero();
  }
  return out;
}

void write_clip_feature_table(std::ostream& out, std::span<const ClipFeatureRow> rows) {
  std::string buf = "video_id,clip_index,label";
  for (const auto& name : clip_feature_names()) {
    buf += ',';
    buf += name;
  }
  buf += '\n';
  for (const auto& row : rows) {
    buf += row.video_id;
    buf += ',';
    buf += std::to_string(row.clip_index);
    buf += ',';
    if (row.label.kind == ingest::LabelKind::kOrdinalClass) {
      buf += std::to_string(row.label.class_value);
    } else {
      detail::append_double(buf, row.label.real_value);
    }
    for (double v : row.values) {
      buf += ',';
      detail::append_double(buf, v);
    }
    buf += '\n';
  }
  out << buf;
}

std::vector<ClipFeatureRow> read_clip_feature_table(std::istream& in, ingest::LabelKind kind,
                                                    int num_classes) {
  std::string line;
  std::vector<std::string_view> cells;
  if (!std::getline(in, line)) throw Error(ErrorCode::kEmptyFile, "clip table has no header");
  detail::split_csv(line, cells);
  const auto& names = clip_feature_names();
  if (cells.size() != 3 + names.size() || cells[0] != "video_id" || cells[1] != "clip_index" ||
      cells[2] != "label") {
    throw Error(ErrorCode::kMissingColumn, "clip table header does not match the 49-feature layout");
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (cells[3 + i] != names[i]) {
      throw Error(ErrorCode::kMissingColumn, "expected column '" + names[i] + "'");
    }
  }
  std::vector<ClipFeatureRow> rows;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    detail::split_csv(line, cells);
    if (cells.size() != 3 + names.size()) {
      throw Error(ErrorCode::kMalformedRow, "clip table row has wrong cell count");
    }
    ClipFeatureRow row;
    row.video_id = std::string(cells[0]);
    const auto index = detail::parse_int(cells[1]);
    const auto label = detail::parse_double(cells[2]);
    if (!index || !label) throw Error(ErrorCode::kMalformedRow, "bad clip_index or label");
    row.clip_index = static_cast<int>(*index);
    row.label = kind == ingest::LabelKind::kOrdinalClass
                    ? ingest::Label::ordinal(static_cast<int>(*label), num_classes)
                    : ingest::Label::continuous(*label, num_classes);
    for (std::size_t i = 0; i < names.size(); ++i) {
      const auto v = detail::parse_double(cells[3 + i]);
      if (!v) throw Error(ErrorCode::kMalformedRow, "non-numeric clip feature");
      row.values[i] = *v;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace engage::features
