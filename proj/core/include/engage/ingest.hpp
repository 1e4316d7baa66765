#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace engage::ingest {

inline constexpr int kLatentDim = 256;
inline constexpr int kAffectDim = 2;
inline constexpr int kBehavioralDim = 12;
// frame, success, valence, arousal, 256 latent, 12 behavioral.
inline constexpr int kFrameFileColumns = 2 + kAffectDim + kLatentDim + kBehavioralDim;

struct FrameRecord {
  std::int64_t frame_index = 0;
  bool valid = true;  // tracker success
  double valence = 0.0;
  double arousal = 0.0;
  std::array<double, kLatentDim> latent{};
  double au45 = 0.0;                     // eye closure, tracker scale 0..5
  std::array<double, 2> gaze{};          // x, y direction w.r.t. camera
  std::array<double, 3> head_loc{};      // x, y, z in millimeters
  std::array<double, 3> head_pose{};     // pitch, yaw, roll in radians
  std::array<double, 3> wrist{};         // x, y, z normalized coordinates

  // The 12 behavioral values in frame order: au45, gaze, head_loc, head_pose, wrist.
  std::array<double, kBehavioralDim> behavioral() const;

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

enum class LabelKind { kOrdinalClass, kContinuous };

struct Label {
  LabelKind kind = LabelKind::kOrdinalClass;
  int class_value = 0;      // meaningful when kind == kOrdinalClass
  double real_value = 0.0;  // meaningful when kind == kContinuous
  int num_classes = 4;

  static Label ordinal(int class_value, int num_classes);
  static Label continuous(double real_value, int num_classes = 4);

  friend bool operator==(const Label&, const Label&) = default;
};

struct FrameSeries {
  std::string video_id;
  double fps = 30.0;
  std::vector<FrameRecord> frames;
  Label label;

  friend bool operator==(const FrameSeries&, const FrameSeries&) = default;
};

// Exact header of a per-frame feature file, in order.
const std::vector<std::string>& frame_file_columns();

FrameSeries parse_frame_table(std::istream& in, const std::string& source_name);
// video_id defaults to the file stem; label and fps come from the manifest.
FrameSeries parse_frame_file(const std::filesystem::path& path, double fps = 30.0);

void write_frame_table(std::ostream& out, const FrameSeries& series);
void write_frame_file(const std::filesystem::path& path, const FrameSeries& series);

enum class Split { kTrain, kValidation, kTest };
std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct ManifestEntry {
  std::string video_id;
  std::filesystem::path feature_file_path;  // absolute after load_manifest
  Label label;
  Split split = Split::kTrain;
  double fps = 30.0;
};

struct Manifest {
  int num_classes = 4;
  LabelKind label_kind = LabelKind::kOrdinalClass;
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> entries_for(Split split) const;
};

// Relative feature paths resolve against the manifest's directory.
Manifest load_manifest(const std::filesystem::path& path);
// Feature paths are written relative to the manifest's directory when possible.
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

FrameSeries load_series(const ManifestEntry& entry);

struct ValidationReport {
  std::size_t total_frames = 0;
  std::size_t invalid_frames = 0;
  double valid_fraction = 1.0;
  bool unusable = false;  // valid_fraction < kMinValidFraction
};

inline constexpr double kMinValidFraction = 0.5;

struct RepairResult {
  FrameSeries series;
  ValidationReport report;
};

// Invalid frames take the features of the previous valid frame (or the first
// valid frame for a leading run). Their valid flag and frame_index are kept.
RepairResult repair_series(const FrameSeries& series);

}  // namespace engage::ingest
