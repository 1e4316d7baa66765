#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "engage/features.hpp"
#include "engage/layers.hpp"

namespace engage::models {

enum class InputMode { kFrame, kClip };
enum class Backbone { kLstm, kTcn };
// kThresholds: C-1 sigmoid outputs, one per ordinal threshold (shared backbone).
enum class HeadKind { kMulticlass, kBinary, kRegression, kThresholds };

struct TcnParams {
  int levels = 8;
  int hidden = 128;
  int kernel = 16;
  double dropout = 0.25;

  friend bool operator==(const TcnParams&, const TcnParams&) = default;
};

struct ModelConfig {
  InputMode mode = InputMode::kFrame;
  Backbone backbone = Backbone::kTcn;
  HeadKind head = HeadKind::kMulticlass;
  int num_classes = 4;

  int latent_dim = ingest::kLatentDim;
  int affect_dim = ingest::kAffectDim;
  int behavioral_dim = ingest::kBehavioralDim;
  int clip_dim = features::kClipFeatureCount;

  int reducer_hidden = 128;
  int reducer_out = 32;
  int lstm_hidden1 = 128;
  int lstm_hidden2 = 64;
  TcnParams tcn;
  std::uint64_t seed = 7;

  int input_width() const;   // rows of the sequence fed to forward()
  int fused_width() const;   // per-step width entering the backbone
  int output_size() const;
  int backbone_width() const;
  // Longest input span that can influence the last TCN output.
  std::int64_t tcn_receptive_field() const;
  std::string layout_version() const;
  void validate() const;  // throws kInvalidConfig

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

std::string_view to_string(InputMode m);
std::string_view to_string(Backbone b);
std::string_view to_string(HeadKind h);
InputMode parse_input_mode(std::string_view s);
Backbone parse_backbone(std::string_view s);
HeadKind parse_head(std::string_view s);

// Activations recorded by a training forward pass, consumed by backward().
struct Trace {
  Matrix input;
  Matrix reducer_hidden;  // relu(first reducer layer), frame mode only
  Matrix fused;           // backbone input
  std::vector<LstmLayer::Cache> lstm;
  std::vector<TemporalBlock::Cache> tcn;
  Matrix backbone_out;
};

class Model {
 public:
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // Inference: dropout off, thread-safe on a const model.
  Vector forward(const Matrix& sequence) const;
  // Per-step backbone activations (backbone_width x T), inference mode.
  Matrix backbone_outputs(const Matrix& sequence) const;

  // Records activations into trace. Dropout applies when training() and rng is set.
  Vector forward(const Matrix& sequence, Trace& trace, Rng* rng) const;
  // Accumulates parameter gradients for dL/d(output).
  void backward(const Trace& trace, const Vector& d_output);

  // Applies the attached normalizer (if any), then forward().
  Vector predict(const Matrix& raw_sequence) const;

  ParameterRefs parameters();
  ConstParameterRefs parameters() const;
  Parameter* find_parameter(const std::string& name);
  std::size_t parameter_count() const;
  void zero_grad();

  bool training() const { return training_; }
  void set_training(bool training) { training_ = training; }

  const std::optional<features::Normalizer>& normalizer() const { return normalizer_; }
  void set_normalizer(std::optional<features::Normalizer> n) { normalizer_ = std::move(n); }

 private:
  void check_input(const Matrix& sequence) const;
  Matrix fuse(const Matrix& sequence, Trace* trace) const;
  Matrix run_backbone(const Matrix& fused, Trace* trace, Rng* rng) const;

  ModelConfig config_;
  Linear reducer1_;
  Linear reducer2_;
  std::vector<LstmLayer> lstm_;
  std::vector<TemporalBlock> tcn_;
  Linear head_;
  bool training_ = false;
  std::optional<features::Normalizer> normalizer_;
};

inline Model build_model(const ModelConfig& config) { return Model(config); }

enum class LossKind { kCrossEntropy, kBinaryCrossEntropy, kMeanSquaredError };

std::string_view to_string(LossKind k);
LossKind loss_for_head(HeadKind head);

// predictions: outputs x samples. Cross entropy takes targets as a 1 x samples
// row of class indices; the other kinds take targets shaped like predictions.
// Returns the mean loss over samples; grad (if given) receives dLoss/dPredictions.
double compute_loss(LossKind kind, const Matrix& predictions, const Matrix& targets,
                    Matrix* grad = nullptr);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t checked = 0;
};

// Central differences on every parameter entry. Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
// Requires inference mode; a model in training mode with dropout throws.
GradientCheckResult gradient_check(Model& model, const Matrix& sequence, const Matrix& target,
                                   double epsilon = 1e-5);

// Checkpoint: directory holding meta.json (config, layout version, seed,
// normalizer, parameter table) and params.bin (raw little-endian doubles).
inline constexpr int kCheckpointMajor = 1;
inline constexpr int kCheckpointMinor = 0;

void save_checkpoint(const Model& model, const std::filesystem::path& dir);
Model load_checkpoint(const std::filesystem::path& dir);

}  // namespace engage::models
