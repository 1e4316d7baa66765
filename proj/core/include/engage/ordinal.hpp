#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "engage/model.hpp"
#include "engage/training.hpp"

namespace engage::ordinal {

// Bit i is 1 iff y <= i; length C-1, monotone non-decreasing.
std::vector<int> decompose_label(int y, int num_classes);
// Number of zeros before the first 1 (C-1 when all bits are zero).
int decode_label(std::span<const int> bits);

struct Recombination {
  std::vector<double> raw;       // signed telescoping masses, sum to 1
  std::vector<double> reported;  // raw clipped at 0 and renormalized
  int predicted_class = 0;       // argmax of raw, ties to the lower class
};

// exceed[i] = p(y > i) for thresholds i = 0..C-2.
Recombination recombine(std::span<const double> exceed);

struct OrdinalModel {
  int num_classes = 0;
  // Threshold i predicts the logit of p(y <= i). Empty when `shared` is set.
  std::vector<models::Model> thresholds;
  // Shared-backbone variant: one model with C-1 threshold outputs.
  std::optional<models::Model> shared;
};

struct OrdinalOptions {
  bool shared_backbone = false;
  int jobs = 1;  // threshold models train concurrently
};

struct OrdinalTrainResult {
  OrdinalModel model;
  std::vector<training::TrainHistory> histories;  // one per trained model
};

// train/validation targets are class indices (vectors of size 1). Threshold
// models are seeded base.seed + i and trained with config.seed + i. Inputs
// should already be normalized; a normalizer, if given, is attached to every
// member model so predictions accept raw sequences.
OrdinalTrainResult train_ordinal(const training::Dataset& train, const training::Dataset& validation,
                                 const models::ModelConfig& base, const training::TrainConfig& config,
                                 const OrdinalOptions& options = {},
                                 const std::optional<features::Normalizer>& normalizer = std::nullopt,
                                 const training::EpochCallback& on_epoch = {});

struct OrdinalPrediction {
  std::vector<double> exceed;
  Recombination recombination;
};

// Member models apply their own normalizer to the raw sequence.
OrdinalPrediction predict_ordinal(const OrdinalModel& model, const models::Matrix& sequence);

// Directory of per-threshold checkpoints plus ordinal.json listing C and order.
void save_ordinal(const OrdinalModel& model, const std::filesystem::path& dir);
OrdinalModel load_ordinal(const std::filesystem::path& dir);

}  // namespace engage::ordinal
