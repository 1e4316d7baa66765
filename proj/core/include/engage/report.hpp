#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "engage/forest.hpp"
#include "engage/ingest.hpp"
#include "engage/metrics.hpp"

namespace engage::eval {

struct ReportOptions {
  ingest::Split split = ingest::Split::kTest;
  // Defaults to the manifest recorded in the run directory.
  std::optional<std::filesystem::path> manifest;
  int jobs = 1;
  // Written as importance.svg / importance.csv when present.
  std::optional<ImportanceRanking> importance;
};

struct EvalReport {
  std::string mode;
  std::string split;
  std::size_t samples = 0;
  std::optional<double> accuracy;          // classification and ordinal runs
  std::optional<double> mse;               // regression runs
  std::optional<ConfusionMatrix> confusion;
  std::vector<double> per_class_recall;
  std::vector<std::string> skipped;        // videos below the valid-frame threshold
};

// Predicts the split with the run's model and writes report_<split>.json,
// predictions_<split>.csv and, for class predictions, confusion_<split>.txt.
// Throws kMissingCheckpoint when the run directory has no trained model.
EvalReport report(const std::filesystem::path& run_dir, const ReportOptions& options = {});

}  // namespace engage::eval
