#include "engage/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include "engage/error.hpp"
#include "engage/features.hpp"
#include "engage/forest.hpp"
#include "engage/parallel.hpp"
#include "engage/pipeline.hpp"
#include "engage/report.hpp"
#include "engage/synth.hpp"

namespace engage::cli {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::string manifest;
  std::string out;
  std::string run_dir;
  std::string split = "test";
  std::string table_split = "all";  // features / rank-features
  int jobs = static_cast<int>(default_jobs());
  std::uint64_t seed = 7;

  // synth
  synth::SynthConfig synth;

  // features / training
  features::ClipParams clip;
  std::string mode = "frame-ordinal";
  std::string backbone = "tcn";
  training::TrainConfig train;
  models::ModelConfig model;
  bool shared_backbone = false;

  // rank-features / eval
  int trees = 500;
  bool importance = false;
};

// Relative manifest paths resolve against ENGAGE_DATA_DIR when it is set.
fs::path resolve_manifest(const std::string& path) {
  fs::path p(path);
  if (p.is_relative()) {
    if (const char* base = std::getenv("ENGAGE_DATA_DIR"); base != nullptr && *base != '\0') p = fs::path(base) / p;
  }
  // `--manifest d/manifest` names the file without its extension.
  if (!fs::exists(p) && fs::exists(fs::path(p).concat(".json"))) p.concat(".json");
  if (fs::is_directory(p)) p /= "manifest.json";
  return p;
}

void add_clip_options(CLI::App* app, Options& o) {
  app->add_option("--clip-seconds", o.clip.clip_seconds, "Clip length in seconds")->check(CLI::PositiveNumber);
  app->add_option("--overlap", o.clip.overlap_fraction, "Overlap between consecutive clips")
      ->check(CLI::Range(0.0, 0.99));
  app->add_option("--blink-threshold", o.clip.blink_threshold, "AU45 level counted as a blink peak");
}

void add_jobs(CLI::App* app, Options& o) {
  app->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

std::string history_line(const pipeline::RunSummary& s, pipeline::RunMode mode) {
  std::ostringstream line;
  line << "trained " << s.histories.size() << " model(s) on " << s.train_videos << " videos ("
       << s.validation_videos << " validation, " << s.skipped_videos << " skipped); best validation "
       << (mode == pipeline::RunMode::kClipRegress ? "mse" : "accuracy");
  for (const auto& h : s.histories) line << ' ' << h.epochs[static_cast<std::size_t>(h.best_epoch)].validation_metric;
  return line.str();
}

std::vector<int> class_labels(const pipeline::SplitData& data) {
  std::vector<int> labels;
  for (const auto& l : data.labels) {
    if (l.kind != ingest::LabelKind::kOrdinalClass) {
      throw Error(ErrorCode::kMixedLabelKinds, "feature ranking needs class labels");
    }
    labels.push_back(l.class_value);
  }
  return labels;
}

// Clip rows from every usable video of the requested splits, labelled by video.
eval::ImportanceRanking rank_clip_features(const ingest::Manifest& manifest, const std::string& split,
                                           const Options& o) {
  pipeline::SplitData all;
  for (auto s : {ingest::Split::kTrain, ingest::Split::kValidation, ingest::Split::kTest}) {
    if (split != "all" && ingest::parse_split(split) != s) continue;
    auto part = pipeline::load_split(manifest, s, models::InputMode::kClip, o.clip, o.jobs);
    for (std::size_t i = 0; i < part.sequences.size(); ++i) {
      all.video_ids.push_back(part.video_ids[i]);
      all.sequences.push_back(std::move(part.sequences[i]));
      all.labels.push_back(part.labels[i]);
    }
  }
  const auto labels = class_labels(all);
  Eigen::Index rows = 0;
  for (const auto& s : all.sequences) rows += s.cols();
  Eigen::MatrixXd table(rows, features::kClipFeatureCount);
  std::vector<int> row_labels;
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < all.sequences.size(); ++i) {
    for (Eigen::Index c = 0; c < all.sequences[i].cols(); ++c) {
      table.row(at++) = all.sequences[i].col(c).transpose();
      row_labels.push_back(labels[i]);
    }
  }
  const auto& names = features::clip_feature_names();
  eval::ForestConfig fc;
  fc.trees = o.trees;
  fc.seed = o.seed;
  fc.jobs = o.jobs;
  return eval::rf_importance(table, row_labels, std::vector<std::string>(names.begin(), names.end()), fc);
}

int cmd_synth(const Options& o, std::ostream& out) {
  auto cfg = o.synth;
  cfg.seed = o.seed;
  const auto manifest = synth::generate(cfg, o.out, o.jobs);
  out << "wrote " << manifest.entries.size() << " videos and " << (fs::path(o.out) / "manifest.json").string()
      << '\n';
  return kExitOk;
}

int cmd_features(const Options& o, std::ostream& out) {
  const auto manifest = ingest::load_manifest(resolve_manifest(o.manifest));
  std::vector<features::ClipFeatureRow> rows;
  for (const auto& entry : manifest.entries) {
    if (o.table_split != "all" && ingest::parse_split(o.table_split) != entry.split) continue;
    const auto repaired = ingest::repair_series(ingest::load_series(entry));
    if (repaired.report.unusable) continue;
    const auto clips = features::segment_clips(repaired.series, o.clip.clip_seconds, o.clip.overlap_fraction);
    for (std::size_t i = 0; i < clips.size(); ++i) {
      rows.push_back({entry.video_id, static_cast<int>(i), entry.label,
                      features::clip_feature_vector(clips[i], repaired.series.fps, o.clip.blink_threshold,
                                                    o.clip.blink_min_separation)});
    }
  }
  std::ofstream file(o.out, std::ios::binary);
  if (!file) throw Error(ErrorCode::kIo, "cannot write " + o.out);
  features::write_clip_feature_table(file, rows);
  out << "wrote " << rows.size() << " clip rows to " << o.out << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, const CLI::App& app, std::ostream& out, std::ostream& err) {
  pipeline::RunConfig rc;
  rc.mode = pipeline::parse_run_mode(o.mode);
  rc.model = o.model;
  rc.model.backbone = models::parse_backbone(o.backbone);
  rc.model.seed = o.seed;
  rc.train = o.train;
  rc.train.seed = o.seed;
  rc.clip = o.clip;
  rc.shared_backbone = o.shared_backbone;
  rc.jobs = o.jobs;
  const auto summary =
      pipeline::train_run(rc, resolve_manifest(o.manifest), o.out, [&](const std::string& line) { err << line << '\n'; });
  // Flags and file values as resolved, loadable again with --config.
  std::ofstream snapshot(fs::path(o.out) / "config.toml", std::ios::binary);
  std::istringstream all(app.config_to_str(true, false));
  for (std::string line; std::getline(all, line);) {
    if (line.rfind("train.", 0) == 0) snapshot << line << '\n';
  }
  out << history_line(summary, rc.mode) << '\n';
  return kExitOk;
}

int cmd_predict(const Options& o, std::ostream& out) {
  const pipeline::TrainedRun run(o.run_dir);
  const auto manifest =
      ingest::load_manifest(o.manifest.empty() ? run.info().manifest_path : resolve_manifest(o.manifest));
  const auto data = pipeline::load_split(manifest, ingest::parse_split(o.split), pipeline::input_mode(run.info().config.mode),
                                         run.info().config.clip, o.jobs);
  const auto predictions = run.predict(data, o.jobs);
  const fs::path dest = o.out.empty() ? fs::path(o.run_dir) / ("predictions_" + o.split + ".csv") : fs::path(o.out);
  pipeline::write_predictions(dest, run.info().config.mode, predictions);
  out << "wrote " << predictions.size() << " predictions to " << dest.string() << '\n';
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  eval::ReportOptions ro;
  ro.split = ingest::parse_split(o.split);
  ro.jobs = o.jobs;
  if (!o.manifest.empty()) ro.manifest = resolve_manifest(o.manifest);
  if (o.importance) {
    const auto info = pipeline::read_run_info(o.run_dir);
    auto opts = o;
    opts.clip = info.config.clip;
    ro.importance = rank_clip_features(ingest::load_manifest(ro.manifest.value_or(info.manifest_path)), "train", opts);
  }
  const auto r = eval::report(o.run_dir, ro);
  out << r.mode << ' ' << r.split << ": " << r.samples << " videos";
  if (r.accuracy) out << ", accuracy " << *r.accuracy;
  if (r.mse) out << ", mse " << *r.mse;
  out << '\n';
  if (r.confusion) r.confusion->write_table(out);
  return kExitOk;
}

int cmd_rank(const Options& o, std::ostream& out) {
  const auto manifest = ingest::load_manifest(resolve_manifest(o.manifest));
  const auto ranking = rank_clip_features(manifest, o.table_split, o);
  fs::create_directories(o.out);
  std::ofstream csv(fs::path(o.out) / "importance.csv", std::ios::binary);
  eval::write_importance_table(csv, ranking);
  std::ofstream svg(fs::path(o.out) / "importance.svg", std::ios::binary);
  eval::write_importance_svg(svg, ranking);
  if (!csv || !svg) throw Error(ErrorCode::kIo, "cannot write importance files in " + o.out);
  for (std::size_t i = 0; i < std::min<std::size_t>(ranking.size(), 10); ++i) {
    out << i + 1 << ' ' << ranking[i].name << ' ' << ranking[i].raw << '\n';
  }
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Engagement recognition from per-frame affect and behavior features"};
  app.name("engage");
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML/INI file with option values; command-line flags take precedence");
  app.require_subcommand(1, 1);
  app.fallthrough();  // `engage train --config f` reaches the top-level option

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset with a manifest");
  synth_cmd->add_option("--out", o.out, "Output directory")->required();
  synth_cmd->add_option("--seed", o.seed, "Random seed");
  synth_cmd->add_option("--classes", o.synth.num_classes, "Engagement levels")->check(CLI::Range(2, 100));
  synth_cmd->add_option("--videos-per-class", o.synth.videos_per_class, "Videos per level")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--frames", o.synth.frames_per_video, "Frames per video")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--fps", o.synth.fps, "Frame rate")->check(CLI::PositiveNumber);
  synth_cmd->add_flag("--continuous", o.synth.continuous_labels, "Emit continuous labels in [0,1]");
  add_jobs(synth_cmd, o);

  auto* features_cmd = app.add_subcommand("features", "Write the clip-level feature table");
  features_cmd->add_option("--manifest", o.manifest, "Manifest file")->required();
  features_cmd->add_option("--out", o.out, "Output CSV")->required();
  features_cmd->add_option("--split", o.table_split, "train, validation, test or all");
  features_cmd->add_option("--seed", o.seed, "Unused; accepted for uniformity");
  add_clip_options(features_cmd, o);
  add_jobs(features_cmd, o);

  auto* train_cmd = app.add_subcommand("train", "Train a model and write a run directory");
  train_cmd->add_option("--manifest", o.manifest, "Manifest file")->required();
  train_cmd->add_option("--out", o.out, "Run directory")->required();
  train_cmd->add_option("--mode", o.mode, "Task")
      ->check(CLI::IsMember({"frame-classify", "frame-ordinal", "clip-regress"}));
  train_cmd->add_option("--model", o.backbone, "Sequence backbone")->check(CLI::IsMember({"lstm", "tcn"}));
  train_cmd->add_option("--batch-size", o.train.batch_size, "Samples per batch")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", o.train.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--epochs", o.train.max_epochs, "Maximum epochs")->check(CLI::PositiveNumber);
  train_cmd->add_option("--patience", o.train.patience, "Epochs without improvement before stopping")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", o.seed, "Seed for initialization, batching and dropout");
  train_cmd->add_flag("--balanced,!--no-balanced", o.train.balanced_batching,
                     "Class-balanced batches (--no-balanced: plain shuffling)")
      ->default_str("true");
  train_cmd->add_flag("--shared-backbone", o.shared_backbone, "Ordinal thresholds share one backbone");
  train_cmd->add_option("--tcn-levels", o.model.tcn.levels, "TCN residual blocks")->check(CLI::PositiveNumber);
  train_cmd->add_option("--tcn-hidden", o.model.tcn.hidden, "TCN channels")->check(CLI::PositiveNumber);
  train_cmd->add_option("--tcn-kernel", o.model.tcn.kernel, "TCN kernel size")->check(CLI::Range(2, 1024));
  train_cmd->add_option("--tcn-dropout", o.model.tcn.dropout, "TCN dropout")->check(CLI::Range(0.0, 0.95));
  train_cmd->add_option("--lstm-hidden1", o.model.lstm_hidden1, "First LSTM width")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lstm-hidden2", o.model.lstm_hidden2, "Second LSTM width")->check(CLI::PositiveNumber);
  train_cmd->add_option("--reducer-hidden", o.model.reducer_hidden, "Latent reducer hidden width")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--reducer-out", o.model.reducer_out, "Latent reducer output width")
      ->check(CLI::PositiveNumber);
  add_clip_options(train_cmd, o);
  add_jobs(train_cmd, o);

  auto* predict_cmd = app.add_subcommand("predict", "Predict a split with a trained run");
  predict_cmd->add_option("--run", o.run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  predict_cmd->add_option("--manifest", o.manifest, "Manifest (defaults to the training manifest)");
  predict_cmd->add_option("--split", o.split, "train, validation or test");
  predict_cmd->add_option("--out", o.out, "Predictions CSV (defaults to <run>/predictions_<split>.csv)");
  predict_cmd->add_option("--seed", o.seed, "Unused; prediction is deterministic");
  add_jobs(predict_cmd, o);

  auto* eval_cmd = app.add_subcommand("eval", "Write an evaluation report for a trained run");
  eval_cmd->add_option("--run", o.run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--manifest", o.manifest, "Manifest (defaults to the training manifest)");
  eval_cmd->add_option("--split", o.split, "train, validation or test");
  eval_cmd->add_flag("--importance", o.importance, "Also rank clip features on the train split and chart them");
  eval_cmd->add_option("--trees", o.trees, "Forest size for --importance")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seed", o.seed, "Forest seed for --importance");
  add_jobs(eval_cmd, o);

  auto* rank_cmd = app.add_subcommand("rank-features", "Random-forest permutation importance of clip features");
  rank_cmd->add_option("--manifest", o.manifest, "Manifest file")->required();
  rank_cmd->add_option("--out", o.out, "Output directory")->required();
  rank_cmd->add_option("--split", o.table_split, "train, validation, test or all");
  rank_cmd->add_option("--trees", o.trees, "Trees in the forest")->check(CLI::PositiveNumber);
  rank_cmd->add_option("--seed", o.seed, "Forest seed");
  add_clip_options(rank_cmd, o);
  add_jobs(rank_cmd, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* failing = &app;
    for (const auto* sub : app.get_subcommands()) failing = sub;
    err << failing->help();
    return kExitUsage;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(o, out);
    if (features_cmd->parsed()) return cmd_features(o, out);
    if (train_cmd->parsed()) return cmd_train(o, app, out, err);
    if (predict_cmd->parsed()) return cmd_predict(o, out);
    if (eval_cmd->parsed()) return cmd_eval(o, out);
    if (rank_cmd->parsed()) return cmd_rank(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::kDivergedLoss ? kExitDiverged : kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace engage::cli
