#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "engage/features.hpp"
#include "engage/ingest.hpp"
#include "engage/model.hpp"
#include "engage/ordinal.hpp"
#include "engage/training.hpp"

// Glue from a manifest to trained run directories and back to predictions.
namespace engage::pipeline {

enum class RunMode { kFrameClassify, kFrameOrdinal, kClipRegress };

std::string_view to_string(RunMode mode);
RunMode parse_run_mode(std::string_view text);

models::InputMode input_mode(RunMode mode);
ingest::LabelKind label_kind(RunMode mode);

struct RunConfig {
  RunMode mode = RunMode::kFrameOrdinal;
  // Backbone and sizes; mode, head and num_classes are derived from the run mode.
  models::ModelConfig model;
  training::TrainConfig train;
  features::ClipParams clip;
  bool shared_backbone = false;
  int jobs = 1;

  // ModelConfig actually built for `num_classes` classes.
  models::ModelConfig resolved_model(int num_classes) const;
};

// One sequence per usable video, unnormalized.
struct SplitData {
  std::vector<std::string> video_ids;
  std::vector<models::Matrix> sequences;
  std::vector<ingest::Label> labels;
  std::vector<std::string> skipped;  // videos below the valid-frame threshold
};

// Repairs each series and builds its model input; unusable series are skipped.
SplitData make_split(std::span<const ingest::FrameSeries> series, models::InputMode mode,
                     const features::ClipParams& clip, int jobs = 1);
SplitData load_split(const ingest::Manifest& manifest, ingest::Split split, models::InputMode mode,
                     const features::ClipParams& clip, int jobs = 1);

// Targets: class index for ordinal labels, real value for continuous ones.
training::Dataset make_dataset(const SplitData& data, const std::optional<features::Normalizer>& normalizer);

struct RunSummary {
  std::vector<training::TrainHistory> histories;
  std::size_t train_videos = 0;
  std::size_t validation_videos = 0;
  std::size_t skipped_videos = 0;
};

using LogFn = std::function<void(const std::string&)>;

// Trains on the manifest and writes a run directory:
//   run.json           configuration snapshot
//   history.csv        (history_threshold_<i>.csv for separate ordinal thresholds)
//   model/             checkpoint or ordinal model directory
RunSummary train_run(const RunConfig& config, const std::filesystem::path& manifest_path,
                     const std::filesystem::path& run_dir, const LogFn& log = {});

struct RunInfo {
  RunConfig config;
  std::filesystem::path manifest_path;
  int num_classes = 4;
};

RunInfo read_run_info(const std::filesystem::path& run_dir);

struct Prediction {
  std::string video_id;
  ingest::Label label;
  int predicted_class = 0;            // classification and ordinal runs
  std::vector<double> probabilities;  // reported class probabilities
  double value = 0.0;                 // regression, clipped to [0, 1]
};

// A trained run loaded into memory; predictions are read-only.
class TrainedRun {
 public:
  explicit TrainedRun(const std::filesystem::path& run_dir);

  const RunInfo& info() const { return info_; }
  // Takes an unnormalized sequence.
  Prediction predict(const models::Matrix& sequence) const;
  std::vector<Prediction> predict(const SplitData& data, int jobs = 1) const;

 private:
  RunInfo info_;
  std::optional<models::Model> model_;
  std::optional<ordinal::OrdinalModel> ordinal_;
};

void write_predictions(const std::filesystem::path& path, RunMode mode, const std::vector<Prediction>& predictions);

}  // namespace engage::pipeline
