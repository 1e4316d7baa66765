#include "engage/ordinal.hpp"

#include <cmath>
#include <string>

#include "engage/error.hpp"
#include "engage/parallel.hpp"
#include "serialize.hpp"

namespace engage::ordinal {

std::vector<int> decompose_label(int y, int num_classes) {
  if (num_classes < 2 || y < 0 || y >= num_classes) {
    throw Error(ErrorCode::kOutOfRange,
                "label " + std::to_string(y) + " not in [0, " + std::to_string(num_classes) + ")");
  }
  std::vector<int> bits(static_cast<std::size_t>(num_classes - 1));
  for (int i = 0; i < num_classes - 1; ++i) bits[static_cast<std::size_t>(i)] = y <= i ? 1 : 0;
  return bits;
}

int decode_label(std::span<const int> bits) {
  int y = 0;
  for (int b : bits) {
    if (b != 0) return y;
    ++y;
  }
  return y;
}

Recombination recombine(std::span<const double> exceed) {
  if (exceed.empty()) throw Error(ErrorCode::kInputOutOfRange, "need at least one threshold");
  for (double e : exceed) {
    if (!(e >= 0.0 && e <= 1.0)) {
      throw Error(ErrorCode::kInputOutOfRange, "exceedance probability outside [0, 1]");
    }
  }
  const std::size_t classes = exceed.size() + 1;
  Recombination r;
  r.raw.resize(classes);
  r.raw[0] = 1.0 - exceed[0];
  for (std::size_t k = 1; k + 1 < classes; ++k) r.raw[k] = exceed[k - 1] - exceed[k];
  r.raw[classes - 1] = exceed[classes - 2];

  for (std::size_t k = 1; k < classes; ++k) {
    if (r.raw[k] > r.raw[static_cast<std::size_t>(r.predicted_class)]) r.predicted_class = static_cast<int>(k);
  }

  r.reported.resize(classes);
  double total = 0.0;
  for (std::size_t k = 0; k < classes; ++k) {
    r.reported[k] = std::max(r.raw[k], 0.0);
    total += r.reported[k];
  }
  for (auto& p : r.reported) p /= total;
  return r;
}

namespace {

training::Dataset with_targets(const training::Dataset& data, int num_classes, int threshold,
                               bool all_thresholds) {
  training::Dataset out;
  out.inputs = data.inputs;
  out.strata = data.strata;
  out.targets.reserve(data.size());
  for (const auto& t : data.targets) {
    const auto bits = decompose_label(static_cast<int>(t(0)), num_classes);
    if (all_thresholds) {
      models::Vector v(static_cast<Eigen::Index>(bits.size()));
      for (std::size_t i = 0; i < bits.size(); ++i) v(static_cast<Eigen::Index>(i)) = bits[i];
      out.targets.push_back(std::move(v));
    } else {
      out.targets.push_back(models::Vector::Constant(1, bits[static_cast<std::size_t>(threshold)]));
    }
  }
  return out;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

OrdinalTrainResult train_ordinal(const training::Dataset& train, const training::Dataset& validation,
                                 const models::ModelConfig& base, const training::TrainConfig& config,
                                 const OrdinalOptions& options,
                                 const std::optional<features::Normalizer>& normalizer,
                                 const training::EpochCallback& on_epoch) {
  const int classes = base.num_classes;
  if (classes < 3) {
    throw Error(ErrorCode::kInvalidConfig, "ordinal decomposition needs at least 3 classes; use a binary model");
  }
  OrdinalTrainResult result;
  result.model.num_classes = classes;

  if (options.shared_backbone) {
    auto cfg = base;
    cfg.head = models::HeadKind::kThresholds;
    models::Model model(cfg);
    model.set_normalizer(normalizer);
    auto tc = config;
    tc.loss = models::LossKind::kBinaryCrossEntropy;
    result.histories.push_back(training::fit(model, with_targets(train, classes, 0, true),
                                             with_targets(validation, classes, 0, true), tc, on_epoch));
    result.model.shared = std::move(model);
    return result;
  }

  const auto thresholds = static_cast<std::size_t>(classes - 1);
  std::vector<std::optional<models::Model>> trained(thresholds);
  result.histories.resize(thresholds);
  parallel_for(thresholds, options.jobs, [&](std::size_t i) {
    auto cfg = base;
    cfg.head = models::HeadKind::kBinary;
    cfg.seed = base.seed + i;
    models::Model model(cfg);
    model.set_normalizer(normalizer);
    auto tc = config;
    tc.seed = config.seed + i;
    tc.loss = models::LossKind::kBinaryCrossEntropy;
    const int t = static_cast<int>(i);
    result.histories[i] = training::fit(model, with_targets(train, classes, t, false),
                                        with_targets(validation, classes, t, false), tc, on_epoch);
    trained[i] = std::move(model);
  });
  for (auto& m : trained) result.model.thresholds.push_back(std::move(*m));
  return result;
}

OrdinalPrediction predict_ordinal(const OrdinalModel& model, const models::Matrix& sequence) {
  OrdinalPrediction p;
  const auto thresholds = static_cast<std::size_t>(model.num_classes - 1);
  p.exceed.resize(thresholds);
  if (model.shared) {
    const models::Vector logits = model.shared->predict(sequence);
    for (std::size_t i = 0; i < thresholds; ++i) p.exceed[i] = 1.0 - sigmoid(logits(static_cast<Eigen::Index>(i)));
  } else {
    if (model.thresholds.size() != thresholds) {
      throw Error(ErrorCode::kShapeMismatch, "ordinal model has wrong number of thresholds");
    }
    for (std::size_t i = 0; i < thresholds; ++i) {
      p.exceed[i] = 1.0 - sigmoid(model.thresholds[i].predict(sequence)(0));
    }
  }
  p.recombination = recombine(p.exceed);
  return p;
}

void save_ordinal(const OrdinalModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json doc;
  doc["format"] = "engage-ordinal";
  doc["version"] = "1.0";
  doc["num_classes"] = model.num_classes;
  doc["shared_backbone"] = model.shared.has_value();
  doc["thresholds"] = nlohmann::json::array();
  if (model.shared) {
    models::save_checkpoint(*model.shared, dir / "shared");
    doc["thresholds"].push_back({{"index", -1}, {"checkpoint", "shared"}});
  } else {
    for (std::size_t i = 0; i < model.thresholds.size(); ++i) {
      const auto name = "threshold_" + std::to_string(i);
      models::save_checkpoint(model.thresholds[i], dir / name);
      doc["thresholds"].push_back({{"index", i}, {"checkpoint", name}});
    }
  }
  detail::write_json_file(dir / "ordinal.json", doc);
}

OrdinalModel load_ordinal(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "ordinal.json")) {
    throw Error(ErrorCode::kMissingCheckpoint, "no ordinal model at " + dir.string());
  }
  try {
    const auto doc = detail::read_json_file(dir / "ordinal.json");
    if (doc.value("format", "") != "engage-ordinal") {
      throw Error(ErrorCode::kCorruptCheckpoint, "not an ordinal model directory");
    }
    const auto version = doc.at("version").get<std::string>();
    if (version.substr(0, version.find('.')) != "1") {
      throw Error(ErrorCode::kVersionMismatch, "ordinal format " + version + " unsupported");
    }
    OrdinalModel model;
    model.num_classes = doc.at("num_classes").get<int>();
    if (doc.at("shared_backbone").get<bool>()) {
      model.shared = models::load_checkpoint(dir / doc.at("thresholds").at(0).at("checkpoint").get<std::string>());
    } else {
      const auto& list = doc.at("thresholds");
      if (list.size() != static_cast<std::size_t>(model.num_classes - 1)) {
        throw Error(ErrorCode::kCorruptCheckpoint, "ordinal manifest lists wrong number of thresholds");
      }
      for (std::size_t i = 0; i < list.size(); ++i) {
        if (list[i].at("index").get<std::size_t>() != i) {
          throw Error(ErrorCode::kCorruptCheckpoint, "thresholds out of order");
        }
        model.thresholds.push_back(models::load_checkpoint(dir / list[i].at("checkpoint").get<std::string>()));
      }
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptCheckpoint, std::string("ordinal manifest: ") + e.what());
  }
}

}  // namespace engage::ordinal
