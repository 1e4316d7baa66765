#include "engage/model.hpp"

#include <cmath>

#include "engage/error.hpp"

namespace engage::models {

int ModelConfig::input_width() const {
  return mode == InputMode::kFrame ? latent_dim + affect_dim + behavioral_dim : clip_dim;
}

int ModelConfig::fused_width() const {
  return mode == InputMode::kFrame ? reducer_out + affect_dim + behavioral_dim : clip_dim;
}

int ModelConfig::output_size() const {
  switch (head) {
    case HeadKind::kMulticlass: return num_classes;
    case HeadKind::kThresholds: return num_classes - 1;
    case HeadKind::kBinary:
    case HeadKind::kRegression: return 1;
  }
  return 1;
}

int ModelConfig::backbone_width() const {
  return backbone == Backbone::kLstm ? lstm_hidden2 : tcn.hidden;
}

std::int64_t ModelConfig::tcn_receptive_field() const {
  return 1 + 2 * static_cast<std::int64_t>(tcn.kernel - 1) * ((std::int64_t{1} << tcn.levels) - 1);
}

std::string ModelConfig::layout_version() const {
  if (mode == InputMode::kFrame) {
    if (latent_dim == ingest::kLatentDim && affect_dim == ingest::kAffectDim &&
        behavioral_dim == ingest::kBehavioralDim) {
      return features::kFrameLayoutVersion;
    }
    return "frame-" + std::to_string(latent_dim) + "+" + std::to_string(affect_dim) + "+" +
           std::to_string(behavioral_dim) + "/v1";
  }
  if (clip_dim == features::kClipFeatureCount) return features::kClipLayoutVersion;
  return "clip-" + std::to_string(clip_dim) + "/v1";
}

void ModelConfig::validate() const {
  const auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidConfig, what); };
  if (num_classes < 2) fail("num_classes must be at least 2");
  if (head == HeadKind::kThresholds && num_classes < 3) fail("threshold head needs at least 3 classes");
  if (mode == InputMode::kFrame) {
    if (latent_dim <= 0 || affect_dim < 0 || behavioral_dim < 0) fail("frame block sizes must be positive");
    if (reducer_hidden <= 0 || reducer_out <= 0) fail("reducer sizes must be positive");
  } else if (clip_dim <= 0) {
    fail("clip width must be positive");
  }
  if (backbone == Backbone::kLstm) {
    if (lstm_hidden1 <= 0 || lstm_hidden2 <= 0) fail("lstm sizes must be positive");
  } else {
    if (tcn.levels <= 0 || tcn.levels > 30) fail("tcn levels must lie in [1, 30]");
    if (tcn.hidden <= 0 || tcn.kernel <= 0) fail("tcn hidden size and kernel must be positive");
    if (!(tcn.dropout >= 0.0 && tcn.dropout < 1.0)) fail("tcn dropout must lie in [0, 1)");
  }
}

std::string_view to_string(InputMode m) { return m == InputMode::kFrame ? "frame" : "clip"; }
std::string_view to_string(Backbone b) { return b == Backbone::kLstm ? "lstm" : "tcn"; }
std::string_view to_string(HeadKind h) {
  switch (h) {
    case HeadKind::kMulticlass: return "multiclass";
    case HeadKind::kBinary: return "binary";
    case HeadKind::kRegression: return "regression";
    case HeadKind::kThresholds: return "thresholds";
  }
  return "multiclass";
}

InputMode parse_input_mode(std::string_view s) {
  if (s == "frame") return InputMode::kFrame;
  if (s == "clip") return InputMode::kClip;
  throw Error(ErrorCode::kInvalidConfig, "unknown input mode '" + std::string(s) + "'");
}

Backbone parse_backbone(std::string_view s) {
  if (s == "lstm") return Backbone::kLstm;
  if (s == "tcn") return Backbone::kTcn;
  throw Error(ErrorCode::kInvalidConfig, "unknown backbone '" + std::string(s) + "'");
}

HeadKind parse_head(std::string_view s) {
  if (s == "multiclass") return HeadKind::kMulticlass;
  if (s == "binary") return HeadKind::kBinary;
  if (s == "regression") return HeadKind::kRegression;
  if (s == "thresholds") return HeadKind::kThresholds;
  throw Error(ErrorCode::kInvalidConfig, "unknown head '" + std::string(s) + "'");
}

Model::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  if (config_.mode == InputMode::kFrame) {
    reducer1_ = Linear("reducer.0", config_.latent_dim, config_.reducer_hidden, rng);
    reducer2_ = Linear("reducer.1", config_.reducer_hidden, config_.reducer_out, rng);
  }
  if (config_.backbone == Backbone::kLstm) {
    lstm_.emplace_back("lstm.0", config_.fused_width(), config_.lstm_hidden1, rng);
    lstm_.emplace_back("lstm.1", config_.lstm_hidden1, config_.lstm_hidden2, rng);
  } else {
    int in = config_.fused_width();
    for (int level = 0; level < config_.tcn.levels; ++level) {
      tcn_.emplace_back("tcn." + std::to_string(level), in, config_.tcn.hidden, config_.tcn.kernel,
                        1 << level, config_.tcn.dropout, rng);
      in = config_.tcn.hidden;
    }
  }
  head_ = Linear("head", config_.backbone_width(), config_.output_size(), rng);
}

void Model::check_input(const Matrix& sequence) const {
  if (sequence.rows() != config_.input_width() || sequence.cols() < 1) {
    throw Error(ErrorCode::kShapeMismatch,
                "sequence is " + std::to_string(sequence.rows()) + "x" + std::to_string(sequence.cols()) +
                    ", model expects " + std::to_string(config_.input_width()) + " rows and >= 1 step");
  }
}

Matrix Model::fuse(const Matrix& sequence, Trace* trace) const {
  if (config_.mode == InputMode::kClip) return sequence;
  Matrix hidden = reducer1_.forward(sequence.topRows(config_.latent_dim)).cwiseMax(0.0);
  const Matrix reduced = reducer2_.forward(hidden);
  const int rest = config_.affect_dim + config_.behavioral_dim;
  Matrix fused(config_.fused_width(), sequence.cols());
  fused.topRows(config_.reducer_out) = reduced;
  fused.bottomRows(rest) = sequence.bottomRows(rest);
  if (trace) trace->reducer_hidden = std::move(hidden);
  return fused;
}

Matrix Model::run_backbone(const Matrix& fused, Trace* trace, Rng* rng) const {
  if (config_.backbone == Backbone::kLstm) {
    if (trace) trace->lstm.resize(lstm_.size());
    Matrix h = fused;
    for (std::size_t i = 0; i < lstm_.size(); ++i) {
      h = lstm_[i].forward(h, trace ? &trace->lstm[i] : nullptr);
    }
    return h;
  }
  if (trace) trace->tcn.resize(tcn_.size());
  Rng* dropout_rng = training_ ? rng : nullptr;
  Matrix h = fused;
  for (std::size_t i = 0; i < tcn_.size(); ++i) {
    h = tcn_[i].forward(h, trace ? &trace->tcn[i] : nullptr, dropout_rng);
  }
  return h;
}

Vector Model::forward(const Matrix& sequence) const {
  check_input(sequence);
  const Matrix out = run_backbone(fuse(sequence, nullptr), nullptr, nullptr);
  return head_.forward(out.col(out.cols() - 1));
}

Matrix Model::backbone_outputs(const Matrix& sequence) const {
  check_input(sequence);
  return run_backbone(fuse(sequence, nullptr), nullptr, nullptr);
}

Vector Model::forward(const Matrix& sequence, Trace& trace, Rng* rng) const {
  check_input(sequence);
  trace.input = sequence;
  trace.fused = fuse(sequence, &trace);
  trace.backbone_out = run_backbone(trace.fused, &trace, rng);
  return head_.forward(trace.backbone_out.col(trace.backbone_out.cols() - 1));
}

void Model::backward(const Trace& trace, const Vector& d_output) {
  if (!d_output.allFinite()) throw Error(ErrorCode::kNonFiniteGradient, "non-finite output gradient");
  const Eigen::Index steps = trace.backbone_out.cols();
  Matrix d_backbone = Matrix::Zero(trace.backbone_out.rows(), steps);
  d_backbone.col(steps - 1) = head_.backward(trace.backbone_out.col(steps - 1), d_output);

  Matrix d = std::move(d_backbone);
  if (config_.backbone == Backbone::kLstm) {
    for (std::size_t i = lstm_.size(); i-- > 0;) d = lstm_[i].backward(trace.lstm[i], d);
  } else {
    for (std::size_t i = tcn_.size(); i-- > 0;) d = tcn_[i].backward(trace.tcn[i], d);
  }

  if (config_.mode == InputMode::kFrame) {
    const Matrix d_reduced = d.topRows(config_.reducer_out);
    const Matrix d_hidden = reducer2_.backward(trace.reducer_hidden, d_reduced);
    const Matrix d_pre = (trace.reducer_hidden.array() > 0.0).select(d_hidden.array(), 0.0).matrix();
    reducer1_.backward(trace.input.topRows(config_.latent_dim), d_pre);
  }
  for (const auto* p : std::as_const(*this).parameters()) {
    if (!p->grad.allFinite()) {
      throw Error(ErrorCode::kNonFiniteGradient, "non-finite gradient in " + p->name);
    }
  }
}

Vector Model::predict(const Matrix& raw_sequence) const {
  if (!normalizer_) return forward(raw_sequence);
  return forward(features::apply_normalizer(*normalizer_, raw_sequence, config_.layout_version()));
}

ParameterRefs Model::parameters() {
  ParameterRefs out;
  if (config_.mode == InputMode::kFrame) {
    reducer1_.collect(out);
    reducer2_.collect(out);
  }
  for (auto& l : lstm_) l.collect(out);
  for (auto& b : tcn_) b.collect(out);
  head_.collect(out);
  return out;
}

ConstParameterRefs Model::parameters() const {
  ConstParameterRefs out;
  if (config_.mode == InputMode::kFrame) {
    reducer1_.collect(out);
    reducer2_.collect(out);
  }
  for (const auto& l : lstm_) l.collect(out);
  for (const auto& b : tcn_) b.collect(out);
  head_.collect(out);
  return out;
}

Parameter* Model::find_parameter(const std::string& name) {
  for (auto* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void Model::zero_grad() {
  for (auto* p : parameters()) p->grad.setZero();
}

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::kCrossEntropy: return "cross_entropy";
    case LossKind::kBinaryCrossEntropy: return "binary_cross_entropy";
    case LossKind::kMeanSquaredError: return "mean_squared_error";
  }
  return "cross_entropy";
}

LossKind loss_for_head(HeadKind head) {
  switch (head) {
    case HeadKind::kMulticlass: return LossKind::kCrossEntropy;
    case HeadKind::kBinary:
    case HeadKind::kThresholds: return LossKind::kBinaryCrossEntropy;
    case HeadKind::kRegression: return LossKind::kMeanSquaredError;
  }
  return LossKind::kCrossEntropy;
}

double compute_loss(LossKind kind, const Matrix& predictions, const Matrix& targets, Matrix* grad) {
  const Eigen::Index samples = predictions.cols();
  if (samples == 0) throw Error(ErrorCode::kShapeMismatch, "no predictions");
  if (kind == LossKind::kCrossEntropy) {
    if (targets.rows() != 1 || targets.cols() != samples) {
      throw Error(ErrorCode::kShapeMismatch, "cross entropy expects a 1 x N row of class indices");
    }
    double total = 0.0;
    if (grad) grad->resize(predictions.rows(), samples);
    for (Eigen::Index n = 0; n < samples; ++n) {
      const auto z = predictions.col(n);
      const auto target = static_cast<Eigen::Index>(targets(0, n));
      if (target < 0 || target >= z.size()) throw Error(ErrorCode::kShapeMismatch, "class index out of range");
      const double m = z.maxCoeff();
      const Vector e = (z.array() - m).exp();
      const double s = e.sum();
      total += std::log(s) + m - z(target);
      if (grad) {
        grad->col(n) = e / s;
        (*grad)(target, n) -= 1.0;
      }
    }
    if (grad) *grad /= static_cast<double>(samples);
    return total / static_cast<double>(samples);
  }
  if (targets.rows() != predictions.rows() || targets.cols() != samples) {
    throw Error(ErrorCode::kShapeMismatch, "targets must match predictions in shape");
  }
  const double count = static_cast<double>(predictions.size());
  if (kind == LossKind::kBinaryCrossEntropy) {
    const auto z = predictions.array();
    const auto y = targets.array();
    const double total = (z.max(0.0) - z * y + (1.0 + (-z.abs()).exp()).log()).sum();
    if (grad) *grad = (((1.0 + (-z).exp()).inverse() - y) / count).matrix();
    return total / count;
  }
  const Matrix diff = predictions - targets;
  if (grad) *grad = 2.0 * diff / count;
  return diff.squaredNorm() / count;
}

GradientCheckResult gradient_check(Model& model, const Matrix& sequence, const Matrix& target,
                                   double epsilon) {
  const auto& cfg = model.config();
  if (model.training() && cfg.backbone == Backbone::kTcn && cfg.tcn.dropout > 0.0) {
    throw Error(ErrorCode::kInvalidConfig, "gradient check requires inference mode (dropout active)");
  }
  const LossKind kind = loss_for_head(cfg.head);
  const auto loss_at = [&] {
    const Vector out = model.forward(sequence);
    return compute_loss(kind, out, target);
  };

  model.zero_grad();
  Trace trace;
  const Vector out = model.forward(sequence, trace, nullptr);
  Matrix d_out;
  compute_loss(kind, out, target, &d_out);
  model.backward(trace, d_out.col(0));

  GradientCheckResult result;
  for (auto* p : model.parameters()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& w = p->value.data()[i];
      const double saved = w;
      w = saved + epsilon;
      const double up = loss_at();
      w = saved - epsilon;
      const double down = loss_at();
      w = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = p->grad.data()[i];
      if (!std::isfinite(analytic)) throw Error(ErrorCode::kNonFiniteGradient, p->name);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.checked;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  model.zero_grad();
  return result;
}

}  // namespace engage::models
