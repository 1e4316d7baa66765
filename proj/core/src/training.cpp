#include "engage/training.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "engage/error.hpp"
#include "text.hpp"

namespace engage::training {

void TrainConfig::validate(int num_classes) const {
  const auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidConfig, what); };
  if (batch_size < 1) fail("batch size must be positive");
  if (max_epochs < 1) fail("max epochs must be positive");
  // patience >= max_epochs simply never triggers early stopping.
  if (patience < 1) fail("patience must be positive");
  if (!(learning_rate > 0.0)) fail("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) fail("Adam betas must lie in [0, 1)");
  if (!(divergence_factor > 1.0)) fail("divergence factor must exceed 1");
  if (balanced_batching && num_classes > 0 && batch_size < num_classes) {
    fail("balanced batching needs batch size >= number of classes");
  }
}

std::vector<Batch> balanced_batches(std::span<const int> labels, int batch_size, std::uint64_t seed) {
  if (labels.empty()) throw Error(ErrorCode::kEmptyClass, "no samples");
  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
  if (*std::min_element(labels.begin(), labels.end()) < 0) {
    throw Error(ErrorCode::kOutOfRange, "negative class label");
  }
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
  for (int c = 0; c < classes; ++c) {
    if (members[static_cast<std::size_t>(c)].empty()) {
      throw Error(ErrorCode::kEmptyClass, "class " + std::to_string(c) + " has no samples");
    }
  }
  const int quota = batch_size / classes;
  if (quota < 1) throw Error(ErrorCode::kInvalidConfig, "batch size smaller than class count");
  const int spare = batch_size - quota * classes;

  std::mt19937_64 rng(seed);
  std::vector<std::deque<std::size_t>> queues(static_cast<std::size_t>(classes));
  const auto draw = [&](int c) {
    auto& q = queues[static_cast<std::size_t>(c)];
    if (q.empty()) {
      auto order = members[static_cast<std::size_t>(c)];
      std::shuffle(order.begin(), order.end(), rng);
      q.assign(order.begin(), order.end());
    }
    const auto i = q.front();
    q.pop_front();
    return i;
  };

  const std::size_t count = (labels.size() + static_cast<std::size_t>(batch_size) - 1) /
                            static_cast<std::size_t>(batch_size);
  std::vector<Batch> batches(count);
  for (std::size_t b = 0; b < count; ++b) {
    auto& batch = batches[b];
    batch.reserve(static_cast<std::size_t>(batch_size));
    for (int c = 0; c < classes; ++c) {
      for (int k = 0; k < quota; ++k) batch.push_back(draw(c));
    }
    for (int k = 0; k < spare; ++k) {
      batch.push_back(draw(static_cast<int>((b + static_cast<std::size_t>(k)) % static_cast<std::size_t>(classes))));
    }
  }
  return batches;
}

std::vector<Batch> shuffled_batches(std::size_t count, int batch_size, std::uint64_t seed) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < count; start += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(count, start + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void Adam::step(const models::ParameterRefs& params) {
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseAbs2();
    p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

namespace {

double sample_metric(models::LossKind kind, const Vector& out, const Vector& target) {
  switch (kind) {
    case models::LossKind::kCrossEntropy: {
      Eigen::Index best = 0;
      out.maxCoeff(&best);
      return best == static_cast<Eigen::Index>(target(0)) ? 1.0 : 0.0;
    }
    case models::LossKind::kBinaryCrossEntropy: {
      double hits = 0.0;
      for (Eigen::Index i = 0; i < out.size(); ++i) hits += ((out(i) > 0.0) == (target(i) > 0.5)) ? 1.0 : 0.0;
      return hits / static_cast<double>(out.size());
    }
    case models::LossKind::kMeanSquaredError: {
      const double p = std::clamp(out(0), 0.0, 1.0);
      return (p - target(0)) * (p - target(0));
    }
  }
  return 0.0;
}

bool improves(MetricKind metric, const Evaluation& candidate, const Evaluation& best) {
  if (metric == MetricKind::kMse) return candidate.metric < best.metric;
  if (candidate.metric != best.metric) return candidate.metric > best.metric;
  return candidate.loss < best.loss;
}

}  // namespace

Evaluation evaluate(const models::Model& model, const Dataset& data, models::LossKind loss) {
  if (data.size() == 0) throw Error(ErrorCode::kTooFewSamples, "empty evaluation set");
  Evaluation e;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector out = model.forward((*data.inputs)[i]);
    e.loss += models::compute_loss(loss, out, data.targets[i]);
    e.metric += sample_metric(loss, out, data.targets[i]);
  }
  e.loss /= static_cast<double>(data.size());
  e.metric /= static_cast<double>(data.size());
  return e;
}

TrainHistory fit(models::Model& model, const Dataset& train, const Dataset& validation,
                 const TrainConfig& config, const EpochCallback& on_epoch) {
  const auto loss_kind = config.loss.value_or(models::loss_for_head(model.config().head));
  const bool balanced = config.balanced_batching && !train.strata.empty();
  int classes = 0;
  if (balanced) classes = *std::max_element(train.strata.begin(), train.strata.end()) + 1;
  config.validate(classes);
  if (!train.inputs || train.size() == 0 || train.inputs->size() != train.size()) {
    throw Error(ErrorCode::kTooFewSamples, "training set is empty or inconsistent");
  }
  if (!validation.inputs || validation.size() == 0) {
    throw Error(ErrorCode::kTooFewSamples, "validation set is empty");
  }

  TrainHistory history;
  history.metric = loss_kind == models::LossKind::kMeanSquaredError ? MetricKind::kMse : MetricKind::kAccuracy;

  Adam optimizer(config.learning_rate, config.beta1, config.beta2, config.adam_epsilon);
  auto params = model.parameters();
  std::vector<Matrix> best_values;
  Evaluation best_eval;
  double reference_loss = -1.0;  // mean loss of the first batch, before any update

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::seed_seq seq{config.seed, static_cast<std::uint64_t>(epoch), std::uint64_t{0x5eed}};
    std::uint64_t epoch_seed = 0;
    {
      std::array<std::uint32_t, 2> words{};
      seq.generate(words.begin(), words.end());
      epoch_seed = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    }
    const auto batches = balanced ? balanced_batches(train.strata, config.batch_size, epoch_seed)
                                  : shuffled_batches(train.size(), config.batch_size, epoch_seed);
    models::Rng dropout_rng(epoch_seed ^ 0x9e3779b97f4a7c15ULL);

    model.set_training(true);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    models::Trace trace;
    Matrix grad;
    for (const auto& batch : batches) {
      model.zero_grad();
      const double scale = 1.0 / static_cast<double>(batch.size());
      double batch_loss = 0.0;
      for (const auto i : batch) {
        const Vector out = model.forward((*train.inputs)[i], trace, &dropout_rng);
        const double loss = models::compute_loss(loss_kind, out, train.targets[i], &grad);
        if (!std::isfinite(loss)) {
          model.set_training(false);
          throw Error(ErrorCode::kDivergedLoss, "non-finite training loss at epoch " + std::to_string(epoch));
        }
        loss_sum += loss;
        batch_loss += loss * scale;
        ++seen;
        try {
          model.backward(trace, grad.col(0) * scale);
        } catch (const Error& e) {
          model.set_training(false);
          if (e.code() == ErrorCode::kNonFiniteGradient) {
            throw Error(ErrorCode::kDivergedLoss, std::string(e.what()) + " at epoch " + std::to_string(epoch));
          }
          throw;
        }
      }
      if (reference_loss < 0.0) {
        reference_loss = batch_loss;
      } else if (batch_loss > config.divergence_factor * std::max(reference_loss, 1.0)) {
        model.set_training(false);
        std::ostringstream msg;
        msg << "training loss " << batch_loss << " at epoch " << epoch << " exceeds " << config.divergence_factor
            << "x the initial loss";
        throw Error(ErrorCode::kDivergedLoss, msg.str());
      }
      optimizer.step(params);
    }
    model.set_training(false);

    const auto eval = evaluate(model, validation, loss_kind);
    if (!std::isfinite(eval.loss)) {
      throw Error(ErrorCode::kDivergedLoss, "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(seen);
    record.validation_loss = eval.loss;
    record.validation_metric = eval.metric;
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    history.epochs.push_back(record);
    if (on_epoch) on_epoch(record);

    if (epoch == 0 || improves(history.metric, eval, best_eval)) {
      best_eval = eval;
      history.best_epoch = epoch;
      best_values.clear();
      for (const auto* p : params) best_values.push_back(p->value);
    } else if (epoch - history.best_epoch >= config.patience) {
      break;
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  model.zero_grad();
  return history;
}

void write_history_table(const std::filesystem::path& path, const TrainHistory& history) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  std::string buf = "epoch,train_loss,validation_loss,";
  buf += history.metric == MetricKind::kMse ? "validation_mse" : "validation_accuracy";
  buf += ",seconds,best\n";
  for (const auto& e : history.epochs) {
    buf += std::to_string(e.epoch) + ",";
    detail::append_double(buf, e.train_loss);
    buf += ',';
    detail::append_double(buf, e.validation_loss);
    buf += ',';
    detail::append_double(buf, e.validation_metric);
    buf += ',';
    detail::append_double(buf, e.seconds);
    buf += e.epoch == history.best_epoch ? ",1\n" : ",0\n";
  }
  out << buf;
}

}  // namespace engage::training
