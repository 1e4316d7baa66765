#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "engage/model.hpp"

namespace engage::training {

using models::Matrix;
using models::Vector;

struct TrainConfig {
  int batch_size = 32;
  int max_epochs = 100;
  int patience = 10;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  bool balanced_batching = true;
  // Training stops with kDivergedLoss when a batch loss turns non-finite or
  // exceeds this multiple of max(first batch loss, 1).
  double divergence_factor = 1e6;
  std::uint64_t seed = 7;
  // Derived from the model head when unset.
  std::optional<models::LossKind> loss;

  void validate(int num_classes) const;  // throws kInvalidConfig
};

// Inputs are shared so several target sets (e.g. ordinal thresholds) can reuse them.
struct Dataset {
  std::shared_ptr<const std::vector<Matrix>> inputs;
  std::vector<Vector> targets;  // class index (size 1), bit vector, or real value
  std::vector<int> strata;      // class per sample for balanced batching; empty if none

  std::size_t size() const { return targets.size(); }
};

using Batch = std::vector<std::size_t>;

// One epoch of batches, each holding at least floor(batch_size / C) samples of
// every class. Classes are drawn from per-class shuffled queues that are
// refilled when exhausted, so small classes repeat while large classes are
// visited at most once per epoch. The epoch has ceil(N / batch_size) batches.
std::vector<Batch> balanced_batches(std::span<const int> labels, int batch_size, std::uint64_t seed);
std::vector<Batch> shuffled_batches(std::size_t count, int batch_size, std::uint64_t seed);

class Adam {
 public:
  Adam(double learning_rate, double beta1, double beta2, double epsilon);
  void step(const models::ParameterRefs& params);

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

enum class MetricKind { kAccuracy, kMse };

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double validation_metric = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  MetricKind metric = MetricKind::kAccuracy;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
};

struct Evaluation {
  double loss = 0.0;
  double metric = 0.0;
};

Evaluation evaluate(const models::Model& model, const Dataset& data, models::LossKind loss);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains in place and restores the parameters of the best validation epoch.
TrainHistory fit(models::Model& model, const Dataset& train, const Dataset& validation,
                 const TrainConfig& config, const EpochCallback& on_epoch = {});

void write_history_table(const std::filesystem::path& path, const TrainHistory& history);

}  // namespace engage::training
