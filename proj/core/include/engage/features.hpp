#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "engage/ingest.hpp"

namespace engage::features {

// Frame-mode sequence rows: latent block, affect block, behavioral block.
inline constexpr int kFrameLatentOffset = 0;
inline constexpr int kFrameAffectOffset = ingest::kLatentDim;
inline constexpr int kFrameBehavioralOffset = ingest::kLatentDim + ingest::kAffectDim;
inline constexpr int kFrameInputWidth =
    ingest::kLatentDim + ingest::kAffectDim + ingest::kBehavioralDim;
inline constexpr int kClipFeatureCount = 49;

inline constexpr const char* kFrameLayoutVersion = "frame-270/v1";
inline constexpr const char* kClipLayoutVersion = "clip-49/v1";

struct FrameInput {
  std::array<double, ingest::kLatentDim> latent{};
  std::array<double, ingest::kAffectDim> affect{};  // valence, arousal
  std::array<double, ingest::kBehavioralDim> behavioral{};
};

FrameInput frame_input(const ingest::FrameRecord& record);

// kFrameInputWidth x T, one column per frame.
Eigen::MatrixXd frame_sequence(const ingest::FrameSeries& series);

struct Clip {
  std::string video_id;
  std::int64_t start_frame = 0;  // position in the series, not the file's frame column
  std::int64_t end_frame = 0;    // inclusive
  std::vector<ingest::FrameRecord> records;
  bool padded = false;
};

struct ClipParams {
  double clip_seconds = 10.0;
  double overlap_fraction = 0.5;
  double blink_threshold = 0.5;
  int blink_min_separation = 6;
};

// Clip length L = round(clip_seconds * fps), step = round(L * (1 - overlap)).
// Trailing partial clips are dropped; a series shorter than L yields a single
// clip padded by repeating its final frame.
std::vector<Clip> segment_clips(const ingest::FrameSeries& series, double clip_seconds = 10.0,
                                double overlap_fraction = 0.5);

// Peaks per frame. A peak is a strict local maximum >= threshold; among peaks
// closer than min_separation frames only the larger survives.
double blink_rate(std::span<const double> au45, double threshold = 0.5, int min_separation = 6);

struct DiffStats {
  double vel_mean = 0.0;
  double vel_std = 0.0;
  double acc_mean = 0.0;
  double acc_std = 0.0;

  friend bool operator==(const DiffStats&, const DiffStats&) = default;
};

// Backward differences scaled by fps; population statistics.
DiffStats diff_stats(std::span<const double> signal, double fps);

using ClipFeatures = std::array<double, kClipFeatureCount>;

const std::array<std::string, kClipFeatureCount>& clip_feature_names();

ClipFeatures clip_feature_vector(std::span<const ingest::FrameRecord> records, double fps,
                                 double blink_threshold = 0.5, int blink_min_separation = 6);
ClipFeatures clip_feature_vector(const Clip& clip, double fps, double blink_threshold = 0.5,
                                 int blink_min_separation = 6);

// kClipFeatureCount x (number of clips).
Eigen::MatrixXd clip_sequence(const ingest::FrameSeries& series, const ClipParams& params);

struct Normalizer {
  std::string layout_version;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> constant;

  std::size_t width() const { return mean.size(); }
  friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

// Columns of every matrix are pooled as samples. Zero-variance features get
// std 1 and are flagged constant.
Normalizer fit_normalizer(std::span<const Eigen::MatrixXd> samples, const std::string& layout_version);
Eigen::MatrixXd apply_normalizer(const Normalizer& normalizer, const Eigen::MatrixXd& features,
                                 const std::string& layout_version);

struct ClipFeatureRow {
  std::string video_id;
  int clip_index = 0;
  ingest::Label label;
  ClipFeatures values{};
};

void write_clip_feature_table(std::ostream& out, std::span<const ClipFeatureRow> rows);
std::vector<ClipFeatureRow> read_clip_feature_table(std::istream& in, ingest::LabelKind kind,
                                                    int num_classes = 4);

}  // namespace engage::features
