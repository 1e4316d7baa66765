#include "engage/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "engage/error.hpp"
#include "text.hpp"

namespace engage::ingest {
namespace fs = std::filesystem;
using detail::append_double;
using detail::parse_double;
using detail::parse_int;

std::array<double, kBehavioralDim> FrameRecord::behavioral() const {
  return {au45,         gaze[0],      gaze[1],      head_loc[0], head_loc[1], head_loc[2],
          head_pose[0], head_pose[1], head_pose[2], wrist[0],    wrist[1],    wrist[2]};
}

Label Label::ordinal(int class_value, int num_classes) {
  if (num_classes < 2 || class_value < 0 || class_value >= num_classes) {
    throw Error(ErrorCode::kOutOfRange, "class " + std::to_string(class_value) + " not in [0, " +
                                            std::to_string(num_classes) + ")");
  }
  return Label{LabelKind::kOrdinalClass, class_value, 0.0, num_classes};
}

Label Label::continuous(double real_value, int num_classes) {
  if (!(real_value >= 0.0 && real_value <= 1.0)) {
    throw Error(ErrorCode::kOutOfRange, "continuous label must lie in [0, 1]");
  }
  return Label{LabelKind::kContinuous, 0, real_value, num_classes};
}

const std::vector<std::string>& frame_file_columns() {
  static const std::vector<std::string> columns = [] {
    std::vector<std::string> c = {"frame", "success", "valence", "arousal"};
    char buf[16];
    for (int i = 0; i < kLatentDim; ++i) {
      std::snprintf(buf, sizeof(buf), "latent_%03d", i);
      c.emplace_back(buf);
    }
    for (const char* name : {"au45", "gaze_x", "gaze_y", "head_x", "head_y", "head_z", "head_pitch",
                             "head_yaw", "head_roll", "wrist_x", "wrist_y", "wrist_z"}) {
      c.emplace_back(name);
    }
    return c;
  }();
  return columns;
}

namespace {

void check_header(const std::vector<std::string_view>& header, const std::string& source) {
  const auto& expected = frame_file_columns();
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (i < header.size() && header[i] == expected[i]) continue;
    const bool present = std::find(header.begin(), header.end(), expected[i]) != header.end();
    if (!present) {
      throw Error(ErrorCode::kMissingColumn, source + ": missing column '" + expected[i] + "'");
    }
    throw Error(ErrorCode::kMissingColumn, source + ": column '" + expected[i] +
                                               "' expected at position " + std::to_string(i));
  }
  if (header.size() != expected.size()) {
    throw Error(ErrorCode::kMissingColumn,
                source + ": unexpected extra column '" + std::string(header[expected.size()]) + "'");
  }
}

}  // namespace

FrameSeries parse_frame_table(std::istream& in, const std::string& source_name) {
  std::string line;
  std::vector<std::string_view> cells;
  cells.reserve(kFrameFileColumns + 1);

  bool have_header = false;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    detail::split_csv(line, cells);
    check_header(cells, source_name);
    have_header = true;
    break;
  }
  if (!have_header) throw Error(ErrorCode::kEmptyFile, source_name + ": no header row");

  FrameSeries series;
  series.video_id = source_name;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    detail::split_csv(line, cells);
    const auto where = [&] { return source_name + ":" + std::to_string(line_no); };
    if (cells.size() != static_cast<std::size_t>(kFrameFileColumns)) {
      throw Error(ErrorCode::kMalformedRow, where() + ": expected " +
                                                std::to_string(kFrameFileColumns) + " cells, got " +
                                                std::to_string(cells.size()));
    }
    FrameRecord r;
    const auto frame = parse_int(cells[0]);
    const auto success = parse_double(cells[1]);
    if (!frame || *frame < 0) throw Error(ErrorCode::kMalformedRow, where() + ": bad frame index");
    if (!success || (*success != 0.0 && *success != 1.0)) {
      throw Error(ErrorCode::kMalformedRow, where() + ": success must be 0 or 1");
    }
    r.frame_index = *frame;
    r.valid = *success == 1.0;

    std::array<double, kFrameFileColumns - 2> values{};
    for (std::size_t c = 2; c < cells.size(); ++c) {
      const auto v = parse_double(cells[c]);
      if (!v) {
        throw Error(ErrorCode::kMalformedRow,
                    where() + ": non-numeric cell in column '" + frame_file_columns()[c] + "'");
      }
      if (r.valid && !std::isfinite(*v)) {
        throw Error(ErrorCode::kMalformedRow,
                    where() + ": non-finite value in column '" + frame_file_columns()[c] + "'");
      }
      values[c - 2] = *v;
    }
    std::size_t k = 0;
    r.valence = values[k++];
    r.arousal = values[k++];
    for (auto& x : r.latent) x = values[k++];
    r.au45 = values[k++];
    for (auto& x : r.gaze) x = values[k++];
    for (auto& x : r.head_loc) x = values[k++];
    for (auto& x : r.head_pose) x = values[k++];
    for (auto& x : r.wrist) x = values[k++];

    if (r.valid && (std::abs(r.valence) > 1.0 || std::abs(r.arousal) > 1.0)) {
      throw Error(ErrorCode::kMalformedRow, where() + ": valence/arousal outside [-1, 1]");
    }
    if (!series.frames.empty() && r.frame_index <= series.frames.back().frame_index) {
      throw Error(ErrorCode::kMalformedRow, where() + ": frame index not strictly increasing");
    }
    series.frames.push_back(r);
  }
  if (series.frames.empty()) throw Error(ErrorCode::kEmptyFile, source_name + ": no data rows");
  return series;
}

FrameSeries parse_frame_file(const fs::path& path, double fps) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  auto series = parse_frame_table(in, path.string());
  series.video_id = path.stem().string();
  series.fps = fps;
  return series;
}

void write_frame_table(std::ostream& out, const FrameSeries& series) {
  std::string buf;
  const auto& columns = frame_file_columns();
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) buf += ',';
    buf += columns[i];
  }
  buf += '\n';
  const auto put = [&buf](double v) {
    buf += ',';
    append_double(buf, v);
  };
  for (const auto& r : series.frames) {
    buf += std::to_string(r.frame_index);
    buf += r.valid ? ",1" : ",0";
    put(r.valence);
    put(r.arousal);
    for (double x : r.latent) put(x);
    for (double x : r.behavioral()) put(x);
    buf += '\n';
  }
  out << buf;
}

void write_frame_file(const fs::path& path, const FrameSeries& series) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  write_frame_table(out, series);
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "validation" || text == "val") return Split::kValidation;
  if (text == "test") return Split::kTest;
  throw Error(ErrorCode::kOutOfRange, "unknown split '" + std::string(text) + "'");
}

std::vector<ManifestEntry> Manifest::entries_for(Split split) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(e);
  }
  return out;
}

namespace {

Label parse_label(const nlohmann::json& j, int num_classes, const std::string& where) {
  const bool has_class = j.contains("class_value");
  const bool has_real = j.contains("real_value");
  if (has_class == has_real) {
    throw Error(ErrorCode::kMixedLabelKinds,
                where + ": label needs exactly one of class_value / real_value");
  }
  if (has_class) return Label::ordinal(j.at("class_value").get<int>(), num_classes);
  return Label::continuous(j.at("real_value").get<double>(), num_classes);
}

}  // namespace

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kUnresolvablePath, "cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedRow, path.string() + ": " + e.what());
  }

  Manifest manifest;
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  try {
    manifest.num_classes = doc.value("num_classes", 4);
    if (manifest.num_classes < 2) {
      throw Error(ErrorCode::kOutOfRange, "num_classes must be at least 2");
    }
    std::unordered_set<std::string> seen;
    std::set<LabelKind> kinds;
    for (const auto& je : doc.at("entries")) {
      ManifestEntry e;
      e.video_id = je.at("video_id").get<std::string>();
      if (!seen.insert(e.video_id).second) {
        throw Error(ErrorCode::kDuplicateVideoId, "video_id '" + e.video_id + "' repeated");
      }
      e.label = parse_label(je.at("label"), manifest.num_classes, e.video_id);
      kinds.insert(e.label.kind);
      if (kinds.size() > 1) {
        throw Error(ErrorCode::kMixedLabelKinds, "manifest mixes class_value and real_value labels");
      }
      e.split = parse_split(je.at("split").get<std::string>());
      e.fps = je.value("fps", 30.0);
      if (!(e.fps > 0.0)) throw Error(ErrorCode::kOutOfRange, e.video_id + ": fps must be positive");
      fs::path p = je.at("feature_file_path").get<std::string>();
      if (p.is_relative()) p = base / p;
      if (!fs::exists(p)) {
        throw Error(ErrorCode::kUnresolvablePath, e.video_id + ": " + p.string() + " not found");
      }
      e.feature_file_path = fs::absolute(p).lexically_normal();
      manifest.entries.push_back(std::move(e));
    }
    if (!kinds.empty()) manifest.label_kind = *kinds.begin();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedRow, path.string() + ": " + e.what());
  }
  std::stable_sort(manifest.entries.begin(), manifest.entries.end(),
                   [](const ManifestEntry& a, const ManifestEntry& b) { return a.split < b.split; });
  return manifest;
}

void save_manifest(const Manifest& manifest, const fs::path& path) {
  nlohmann::json doc;
  doc["num_classes"] = manifest.num_classes;
  doc["entries"] = nlohmann::json::array();
  const fs::path base = fs::absolute(path.has_parent_path() ? path.parent_path() : fs::path("."));
  for (const auto& e : manifest.entries) {
    nlohmann::json je;
    je["video_id"] = e.video_id;
    fs::path p = e.feature_file_path;
    if (p.is_absolute()) {
      const auto rel = p.lexically_relative(base);
      if (!rel.empty() && *rel.begin() != "..") p = rel;
    }
    je["feature_file_path"] = p.generic_string();
    if (e.label.kind == LabelKind::kOrdinalClass) {
      je["label"] = {{"class_value", e.label.class_value}};
    } else {
      je["label"] = {{"real_value", e.label.real_value}};
    }
    je["split"] = std::string(to_string(e.split));
    je["fps"] = e.fps;
    doc["entries"].push_back(std::move(je));
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

FrameSeries load_series(const ManifestEntry& entry) {
  auto series = parse_frame_file(entry.feature_file_path, entry.fps);
  series.video_id = entry.video_id;
  series.label = entry.label;
  return series;
}

RepairResult repair_series(const FrameSeries& series) {
  RepairResult result{series, {}};
  auto& frames = result.series.frames;
  auto& report = result.report;
  report.total_frames = frames.size();

  std::ptrdiff_t first_valid = -1;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].valid) {
      if (first_valid < 0) first_valid = static_cast<std::ptrdiff_t>(i);
    } else {
      ++report.invalid_frames;
    }
  }
  if (first_valid < 0) {
    throw Error(ErrorCode::kAllFramesInvalid, series.video_id + ": no valid frames");
  }

  const auto fill = [](FrameRecord& dst, const FrameRecord& src) {
    const auto index = dst.frame_index;
    dst = src;
    dst.frame_index = index;
    dst.valid = false;
  };
  const FrameRecord* last = &frames[static_cast<std::size_t>(first_valid)];
  for (auto& r : frames) {
    if (r.valid) {
      last = &r;
    } else {
      fill(r, *last);
    }
  }

  report.valid_fraction = static_cast<double>(report.total_frames - report.invalid_frames) /
                          static_cast<double>(report.total_frames);
  report.unusable = report.valid_fraction < kMinValidFraction;
  return result;
}

}  // namespace engage::ingest
