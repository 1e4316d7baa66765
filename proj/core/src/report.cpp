#include "engage/report.hpp"

#include <fstream>

#include "engage/error.hpp"
#include "engage/pipeline.hpp"
#include "serialize.hpp"

namespace engage::eval {

namespace fs = std::filesystem;

EvalReport report(const fs::path& run_dir, const ReportOptions& options) {
  const pipeline::TrainedRun run(run_dir);
  const auto& info = run.info();
  const auto manifest = ingest::load_manifest(options.manifest.value_or(info.manifest_path));
  const auto data = pipeline::load_split(manifest, options.split, pipeline::input_mode(info.config.mode),
                                         info.config.clip, options.jobs);
  if (data.sequences.empty()) {
    throw Error(ErrorCode::kTooFewSamples,
                "no usable videos in split '" + std::string(ingest::to_string(options.split)) + "'");
  }
  const auto predictions = run.predict(data, options.jobs);

  EvalReport r;
  r.mode = std::string(pipeline::to_string(info.config.mode));
  r.split = std::string(ingest::to_string(options.split));
  r.samples = predictions.size();
  r.skipped = data.skipped;

  nlohmann::json doc{{"mode", r.mode}, {"split", r.split}, {"samples", r.samples}, {"skipped", r.skipped}};
  if (info.config.mode == pipeline::RunMode::kClipRegress) {
    std::vector<double> p, y;
    for (const auto& x : predictions) {
      p.push_back(x.value);
      y.push_back(x.label.real_value);
    }
    r.mse = mse(p, y);
    doc["mse"] = *r.mse;
  } else {
    std::vector<int> p, y;
    for (const auto& x : predictions) {
      p.push_back(x.predicted_class);
      y.push_back(x.label.class_value);
    }
    r.confusion = confusion(p, y, info.num_classes);
    r.accuracy = r.confusion->accuracy();
    r.per_class_recall = r.confusion->per_class_recall();
    std::vector<std::vector<long>> rows;
    for (int t = 0; t < info.num_classes; ++t) {
      rows.emplace_back();
      for (int q = 0; q < info.num_classes; ++q) rows.back().push_back(r.confusion->count(t, q));
    }
    doc["accuracy"] = *r.accuracy;
    doc["confusion"] = rows;
    doc["per_class_recall"] = r.per_class_recall;

    std::ofstream table(run_dir / ("confusion_" + r.split + ".txt"), std::ios::binary);
    if (!table) throw Error(ErrorCode::kIo, "cannot write confusion table in " + run_dir.string());
    r.confusion->write_table(table);
  }

  pipeline::write_predictions(run_dir / ("predictions_" + r.split + ".csv"), info.config.mode, predictions);
  if (options.importance) {
    std::ofstream svg(run_dir / "importance.svg", std::ios::binary);
    write_importance_svg(svg, *options.importance);
    std::ofstream csv(run_dir / "importance.csv", std::ios::binary);
    write_importance_table(csv, *options.importance);
    if (!svg || !csv) throw Error(ErrorCode::kIo, "cannot write importance files in " + run_dir.string());
  }
  detail::write_json_file(run_dir / ("report_" + r.split + ".json"), doc);
  return r;
}

}  // namespace engage::eval
