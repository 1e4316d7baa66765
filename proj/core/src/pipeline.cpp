#include "engage/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <sstream>

#include "engage/error.hpp"
#include "engage/parallel.hpp"
#include "serialize.hpp"
#include "text.hpp"

namespace engage::pipeline {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kRunFormat = "engage-run";
constexpr int kRunVersion = 1;

json to_json(const training::TrainConfig& c) {
  json j{{"batch_size", c.batch_size}, {"max_epochs", c.max_epochs}, {"patience", c.patience},
         {"learning_rate", c.learning_rate}, {"beta1", c.beta1}, {"beta2", c.beta2},
         {"adam_epsilon", c.adam_epsilon}, {"balanced_batching", c.balanced_batching}, {"seed", c.seed},
         {"divergence_factor", c.divergence_factor}};
  j["loss"] = c.loss ? json(std::string(models::to_string(*c.loss))) : json(nullptr);
  return j;
}

training::TrainConfig train_config_from_json(const json& j) {
  training::TrainConfig c;
  c.batch_size = j.at("batch_size").get<int>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.patience = j.at("patience").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.adam_epsilon = j.at("adam_epsilon").get<double>();
  c.balanced_batching = j.at("balanced_batching").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.divergence_factor = j.at("divergence_factor").get<double>();
  if (!j.at("loss").is_null()) {
    const auto name = j.at("loss").get<std::string>();
    for (auto k : {models::LossKind::kCrossEntropy, models::LossKind::kBinaryCrossEntropy,
                   models::LossKind::kMeanSquaredError}) {
      if (models::to_string(k) == name) c.loss = k;
    }
  }
  return c;
}

json to_json(const features::ClipParams& p) {
  return {{"clip_seconds", p.clip_seconds}, {"overlap_fraction", p.overlap_fraction},
          {"blink_threshold", p.blink_threshold}, {"blink_min_separation", p.blink_min_separation}};
}

features::ClipParams clip_params_from_json(const json& j) {
  features::ClipParams p;
  p.clip_seconds = j.at("clip_seconds").get<double>();
  p.overlap_fraction = j.at("overlap_fraction").get<double>();
  p.blink_threshold = j.at("blink_threshold").get<double>();
  p.blink_min_separation = j.at("blink_min_separation").get<int>();
  return p;
}

std::vector<double> softmax(const models::Vector& z) {
  const double top = z.maxCoeff();
  std::vector<double> p(static_cast<std::size_t>(z.size()));
  double sum = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    p[static_cast<std::size_t>(i)] = std::exp(z(i) - top);
    sum += p[static_cast<std::size_t>(i)];
  }
  for (auto& v : p) v /= sum;
  return p;
}

std::string describe(const training::EpochRecord& r, const char* metric) {
  std::ostringstream s;
  s << "epoch " << r.epoch << " train_loss " << r.train_loss << " val_loss " << r.validation_loss << ' ' << metric
    << ' ' << r.validation_metric;
  return s.str();
}

}  // namespace

std::string_view to_string(RunMode mode) {
  switch (mode) {
    case RunMode::kFrameClassify: return "frame-classify";
    case RunMode::kFrameOrdinal: return "frame-ordinal";
    case RunMode::kClipRegress: return "clip-regress";
  }
  return "?";
}

RunMode parse_run_mode(std::string_view text) {
  for (auto m : {RunMode::kFrameClassify, RunMode::kFrameOrdinal, RunMode::kClipRegress}) {
    if (to_string(m) == text) return m;
  }
  throw Error(ErrorCode::kInvalidConfig, "unknown mode '" + std::string(text) + "'");
}

models::InputMode input_mode(RunMode mode) {
  return mode == RunMode::kClipRegress ? models::InputMode::kClip : models::InputMode::kFrame;
}

ingest::LabelKind label_kind(RunMode mode) {
  return mode == RunMode::kClipRegress ? ingest::LabelKind::kContinuous : ingest::LabelKind::kOrdinalClass;
}

models::ModelConfig RunConfig::resolved_model(int num_classes) const {
  auto m = model;
  m.mode = input_mode(mode);
  m.num_classes = num_classes;
  switch (mode) {
    case RunMode::kFrameClassify: m.head = models::HeadKind::kMulticlass; break;
    // Replaced per threshold by train_ordinal.
    case RunMode::kFrameOrdinal: m.head = models::HeadKind::kBinary; break;
    case RunMode::kClipRegress: m.head = models::HeadKind::kRegression; break;
  }
  return m;
}

SplitData make_split(std::span<const ingest::FrameSeries> series, models::InputMode mode,
                     const features::ClipParams& clip, int jobs) {
  std::vector<std::optional<models::Matrix>> seqs(series.size());
  parallel_for(series.size(), jobs, [&](std::size_t i) {
    auto repaired = ingest::repair_series(series[i]);
    if (repaired.report.unusable) return;
    seqs[i] = mode == models::InputMode::kFrame ? features::frame_sequence(repaired.series)
                                                : features::clip_sequence(repaired.series, clip);
  });
  SplitData out;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (!seqs[i]) {
      out.skipped.push_back(series[i].video_id);
      continue;
    }
    out.video_ids.push_back(series[i].video_id);
    out.sequences.push_back(std::move(*seqs[i]));
    out.labels.push_back(series[i].label);
  }
  return out;
}

SplitData load_split(const ingest::Manifest& manifest, ingest::Split split, models::InputMode mode,
                     const features::ClipParams& clip, int jobs) {
  const auto entries = manifest.entries_for(split);
  std::vector<ingest::FrameSeries> series(entries.size());
  parallel_for(entries.size(), jobs, [&](std::size_t i) { series[i] = ingest::load_series(entries[i]); });
  return make_split(series, mode, clip, jobs);
}

training::Dataset make_dataset(const SplitData& data, const std::optional<features::Normalizer>& normalizer) {
  auto inputs = std::make_shared<std::vector<models::Matrix>>();
  inputs->reserve(data.sequences.size());
  for (const auto& s : data.sequences) {
    inputs->push_back(normalizer ? features::apply_normalizer(*normalizer, s, normalizer->layout_version) : s);
  }
  training::Dataset ds;
  ds.inputs = std::move(inputs);
  for (const auto& l : data.labels) {
    if (l.kind == ingest::LabelKind::kOrdinalClass) {
      ds.targets.push_back(models::Vector::Constant(1, l.class_value));
      ds.strata.push_back(l.class_value);
    } else {
      ds.targets.push_back(models::Vector::Constant(1, l.real_value));
    }
  }
  return ds;
}

RunSummary train_run(const RunConfig& config, const fs::path& manifest_path, const fs::path& run_dir,
                     const LogFn& log) {
  const auto manifest = ingest::load_manifest(manifest_path);
  if (manifest.label_kind != label_kind(config.mode)) {
    throw Error(ErrorCode::kMixedLabelKinds, "mode " + std::string(to_string(config.mode)) +
                                                 " does not match the manifest's label kind");
  }
  const auto model_cfg = config.resolved_model(manifest.num_classes);
  model_cfg.validate();
  auto train_cfg = config.train;
  if (config.mode == RunMode::kClipRegress) train_cfg.balanced_batching = false;
  train_cfg.validate(manifest.num_classes);

  const auto mode = input_mode(config.mode);
  const auto train = load_split(manifest, ingest::Split::kTrain, mode, config.clip, config.jobs);
  const auto val = load_split(manifest, ingest::Split::kValidation, mode, config.clip, config.jobs);
  if (train.sequences.empty() || val.sequences.empty()) {
    throw Error(ErrorCode::kTooFewSamples, "training and validation splits must each hold a usable video");
  }
  for (const auto& v : train.skipped) {
    if (log) log("skipping " + v + ": too few valid frames");
  }

  const auto normalizer = features::fit_normalizer(train.sequences, model_cfg.layout_version());
  const auto train_ds = make_dataset(train, normalizer);
  const auto val_ds = make_dataset(val, normalizer);

  fs::create_directories(run_dir);
  json meta{{"format", kRunFormat},
            {"version", kRunVersion},
            {"mode", std::string(to_string(config.mode))},
            {"manifest", fs::absolute(manifest_path).lexically_normal().string()},
            {"num_classes", manifest.num_classes},
            {"model", detail::to_json(model_cfg)},
            {"train", to_json(train_cfg)},
            {"clip", to_json(config.clip)},
            {"shared_backbone", config.shared_backbone}};
  detail::write_json_file(run_dir / "run.json", meta);

  std::mutex log_mutex;
  const char* metric = config.mode == RunMode::kClipRegress ? "val_mse" : "val_accuracy";
  training::EpochCallback on_epoch;
  if (log) {
    on_epoch = [&](const training::EpochRecord& r) {
      std::lock_guard lock(log_mutex);
      log(describe(r, metric));
    };
  }

  RunSummary summary;
  summary.train_videos = train.sequences.size();
  summary.validation_videos = val.sequences.size();
  summary.skipped_videos = train.skipped.size() + val.skipped.size();

  const fs::path model_dir = run_dir / "model";
  fs::remove_all(model_dir);
  if (config.mode == RunMode::kFrameOrdinal) {
    ordinal::OrdinalOptions options{config.shared_backbone, config.jobs};
    auto result = ordinal::train_ordinal(train_ds, val_ds, model_cfg, train_cfg, options, normalizer, on_epoch);
    ordinal::save_ordinal(result.model, model_dir);
    summary.histories = std::move(result.histories);
  } else {
    models::Model model(model_cfg);
    model.set_normalizer(normalizer);
    summary.histories.push_back(training::fit(model, train_ds, val_ds, train_cfg, on_epoch));
    models::save_checkpoint(model, model_dir);
  }

  if (summary.histories.size() == 1) {
    training::write_history_table(run_dir / "history.csv", summary.histories.front());
  } else {
    for (std::size_t i = 0; i < summary.histories.size(); ++i) {
      training::write_history_table(run_dir / ("history_threshold_" + std::to_string(i) + ".csv"),
                                    summary.histories[i]);
    }
  }
  return summary;
}

RunInfo read_run_info(const fs::path& run_dir) {
  const fs::path path = run_dir / "run.json";
  if (!fs::exists(path)) throw Error(ErrorCode::kMissingCheckpoint, "no run.json in " + run_dir.string());
  const json j = detail::read_json_file(path);
  try {
    if (j.at("format").get<std::string>() != kRunFormat) {
      throw Error(ErrorCode::kCorruptCheckpoint, path.string() + " is not a run description");
    }
    if (j.at("version").get<int>() != kRunVersion) {
      throw Error(ErrorCode::kVersionMismatch, "unsupported run version in " + path.string());
    }
    RunInfo info;
    info.config.mode = parse_run_mode(j.at("mode").get<std::string>());
    info.config.model = detail::model_config_from_json(j.at("model"));
    info.config.train = train_config_from_json(j.at("train"));
    info.config.clip = clip_params_from_json(j.at("clip"));
    info.config.shared_backbone = j.at("shared_backbone").get<bool>();
    info.manifest_path = j.at("manifest").get<std::string>();
    info.num_classes = j.at("num_classes").get<int>();
    return info;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptCheckpoint, path.string() + ": " + e.what());
  }
}

TrainedRun::TrainedRun(const fs::path& run_dir) : info_(read_run_info(run_dir)) {
  const fs::path model_dir = run_dir / "model";
  if (!fs::exists(model_dir)) throw Error(ErrorCode::kMissingCheckpoint, "no model in " + run_dir.string());
  if (info_.config.mode == RunMode::kFrameOrdinal) {
    ordinal_ = ordinal::load_ordinal(model_dir);
  } else {
    model_ = models::load_checkpoint(model_dir);
  }
}

Prediction TrainedRun::predict(const models::Matrix& sequence) const {
  Prediction p;
  switch (info_.config.mode) {
    case RunMode::kFrameOrdinal: {
      const auto r = ordinal::predict_ordinal(*ordinal_, sequence);
      p.predicted_class = r.recombination.predicted_class;
      p.probabilities = r.recombination.reported;
      break;
    }
    case RunMode::kFrameClassify: {
      p.probabilities = softmax(model_->predict(sequence));
      p.predicted_class = static_cast<int>(
          std::max_element(p.probabilities.begin(), p.probabilities.end()) - p.probabilities.begin());
      break;
    }
    case RunMode::kClipRegress:
      p.value = std::clamp(model_->predict(sequence)(0), 0.0, 1.0);
      break;
  }
  return p;
}

std::vector<Prediction> TrainedRun::predict(const SplitData& data, int jobs) const {
  std::vector<Prediction> out(data.sequences.size());
  parallel_for(out.size(), jobs, [&](std::size_t i) {
    out[i] = predict(data.sequences[i]);
    out[i].video_id = data.video_ids[i];
    out[i].label = data.labels[i];
  });
  return out;
}

void write_predictions(const fs::path& path, RunMode mode, const std::vector<Prediction>& predictions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  std::string line;
  if (mode == RunMode::kClipRegress) {
    out << "video_id,label,prediction\n";
    for (const auto& p : predictions) {
      line = p.video_id + ',';
      detail::append_double(line, p.label.real_value);
      line += ',';
      detail::append_double(line, p.value);
      out << line << '\n';
    }
    return;
  }
  const std::size_t classes = predictions.empty() ? 0 : predictions.front().probabilities.size();
  out << "video_id,label,predicted";
  for (std::size_t c = 0; c < classes; ++c) out << ",p" << c;
  out << '\n';
  for (const auto& p : predictions) {
    line = p.video_id + ',' + std::to_string(p.label.class_value) + ',' + std::to_string(p.predicted_class);
    for (double v : p.probabilities) {
      line += ',';
      detail::append_double(line, v);
    }
    out << line << '\n';
  }
}

}  // namespace engage::pipeline
