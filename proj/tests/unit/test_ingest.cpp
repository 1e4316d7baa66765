#include <doctest.h>

#include <fstream>
#include <sstream>

#include "engage/error.hpp"
#include "engage/ingest.hpp"
#include "test_util.hpp"

using namespace engage;
using namespace engage::ingest;

namespace {

FrameSeries make_series(int n, std::uint64_t salt = 0) {
  FrameSeries s;
  s.video_id = "v";
  s.fps = 30.0;
  for (int t = 0; t < n; ++t) {
    FrameRecord r;
    r.frame_index = t;
    r.valence = 0.5 * std::sin(0.1 * t + static_cast<double>(salt));
    r.arousal = 0.25 * std::cos(0.07 * t);
    for (int k = 0; k < kLatentDim; ++k) r.latent[static_cast<std::size_t>(k)] = 0.001 * k - 0.01 * t + 1e-7 * static_cast<double>(salt);
    r.au45 = 0.1 * (t % 7);
    r.gaze = {0.01 * t, -0.02 * t};
    r.head_loc = {1.5 * t, 2.0, 600.0 + t};
    r.head_pose = {0.1, -0.2, 0.3 / (t + 1)};
    r.wrist = {0.5, 0.25 + 1e-3 * t, 0.0};
    s.frames.push_back(r);
  }
  return s;
}

std::string to_csv(const FrameSeries& s) {
  std::ostringstream out;
  write_frame_table(out, s);
  return out.str();
}

void write_manifest(const std::filesystem::path& p, const std::string& body) { testing::write_file(p, body); }

}  // namespace

TEST_CASE("header lists 272 columns in schema order") {
  const auto& cols = frame_file_columns();
  REQUIRE(cols.size() == static_cast<std::size_t>(kFrameFileColumns));
  CHECK(cols.front() == "frame");
  CHECK(cols[1] == "success");
  CHECK(cols[4] == "latent_000");
  CHECK(cols[259] == "latent_255");
  CHECK(cols[260] == "au45");
  CHECK(cols.back() == "wrist_z");
}

TEST_CASE("300 valid rows parse into 300 valid records") {
  const auto s = make_series(300);
  std::istringstream in(to_csv(s));
  const auto parsed = parse_frame_table(in, "mem");
  REQUIRE(parsed.frames.size() == 300);
  for (const auto& r : parsed.frames) CHECK(r.valid);
}

TEST_CASE("missing latent_255 is a schema violation") {
  auto text = to_csv(make_series(5));
  const auto pos = text.find(",latent_255");
  REQUIRE(pos != std::string::npos);
  text.erase(pos, std::string(",latent_255").size());
  std::istringstream in(text);
  try {
    parse_frame_table(in, "mem");
    FAIL("expected MissingColumn");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMissingColumn);
  }
}

TEST_CASE("parse errors") {
  SUBCASE("empty file") {
    std::istringstream in("");
    CHECK_THROWS_AS(parse_frame_table(in, "mem"), Error);
  }
  SUBCASE("header only") {
    auto text = to_csv(make_series(1));
    text = text.substr(0, text.find('\n') + 1);
    std::istringstream in(text);
    try {
      parse_frame_table(in, "mem");
      FAIL("expected EmptyFile");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kEmptyFile);
    }
  }
  SUBCASE("non-numeric cell") {
    auto text = to_csv(make_series(3));
    const auto second_row = text.find('\n') + 1;
    const auto comma = text.find(',', second_row + 2);  // after frame and success
    text.replace(comma + 1, 1, "x");
    std::istringstream in(text);
    try {
      parse_frame_table(in, "mem");
      FAIL("expected MalformedRow");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kMalformedRow);
    }
  }
  SUBCASE("missing file") {
    try {
      parse_frame_file("/nonexistent/engage.csv");
      FAIL("expected Io");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kIo);
    }
  }
}

TEST_CASE("rows 10-14 with success=0 give 5 invalid records") {
  auto s = make_series(300);
  for (int t = 10; t < 15; ++t) s.frames[static_cast<std::size_t>(t)].valid = false;
  std::istringstream in(to_csv(s));
  const auto parsed = parse_frame_table(in, "mem");
  REQUIRE(parsed.frames.size() == 300);
  int invalid = 0;
  for (const auto& r : parsed.frames) invalid += r.valid ? 0 : 1;
  CHECK(invalid == 5);
  CHECK_FALSE(parsed.frames[12].valid);
}

TEST_CASE("parse, write, parse round-trips exactly") {
  testing::TempDir dir;
  auto s = make_series(40, 3);
  s.frames[7].valid = false;
  s.video_id = "clip_a";
  write_frame_file(dir.path() / "clip_a.csv", s);
  const auto once = parse_frame_file(dir.path() / "clip_a.csv", 30.0);
  write_frame_file(dir.path() / "again.csv", once);
  auto twice = parse_frame_file(dir.path() / "again.csv", 30.0);
  twice.video_id = once.video_id;
  CHECK(once.video_id == "clip_a");
  CHECK(once == twice);
  CHECK(once.frames == s.frames);
}

TEST_CASE("manifest with one entry per split") {
  testing::TempDir dir;
  for (const char* id : {"a", "b", "c"}) {
    auto s = make_series(10);
    write_frame_file(dir.path() / (std::string(id) + ".csv"), s);
  }
  write_manifest(dir.path() / "manifest.json", R"({"num_classes": 4, "entries": [
    {"video_id": "a", "feature_file_path": "a.csv", "label": {"class_value": 0}, "split": "train", "fps": 30},
    {"video_id": "b", "feature_file_path": "b.csv", "label": {"class_value": 3}, "split": "val", "fps": 25},
    {"video_id": "c", "feature_file_path": "c.csv", "label": {"class_value": 2}, "split": "test", "fps": 30}]})");
  const auto m = load_manifest(dir.path() / "manifest.json");
  CHECK(m.num_classes == 4);
  CHECK(m.label_kind == LabelKind::kOrdinalClass);
  CHECK(m.entries_for(Split::kTrain).size() == 1);
  CHECK(m.entries_for(Split::kValidation).size() == 1);
  CHECK(m.entries_for(Split::kTest).size() == 1);
  const auto val = m.entries_for(Split::kValidation).front();
  CHECK(val.video_id == "b");
  CHECK(val.fps == 25.0);
  CHECK(val.label.class_value == 3);
  CHECK(val.feature_file_path.is_absolute());

  const auto series = load_series(val);
  CHECK(series.video_id == "b");
  CHECK(series.fps == 25.0);
  CHECK(series.label == val.label);

  save_manifest(m, dir.path() / "copy.json");
  const auto again = load_manifest(dir.path() / "copy.json");
  REQUIRE(again.entries.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(again.entries[i].video_id == m.entries[i].video_id);
    CHECK(again.entries[i].feature_file_path == m.entries[i].feature_file_path);
    CHECK(again.entries[i].label == m.entries[i].label);
  }
}

TEST_CASE("manifest contract violations") {
  testing::TempDir dir;
  write_frame_file(dir.path() / "a.csv", make_series(5));
  auto expect = [&](const std::string& body, ErrorCode code) {
    write_manifest(dir.path() / "m.json", body);
    try {
      load_manifest(dir.path() / "m.json");
      FAIL("expected " << to_string(code));
    } catch (const Error& e) {
      CHECK(e.code() == code);
    }
  };
  expect(R"({"num_classes": 4, "entries": [
    {"video_id": "a", "feature_file_path": "a.csv", "label": {"class_value": 0}, "split": "train", "fps": 30},
    {"video_id": "a", "feature_file_path": "a.csv", "label": {"class_value": 1}, "split": "test", "fps": 30}]})",
         ErrorCode::kDuplicateVideoId);
  expect(R"({"num_classes": 4, "entries": [
    {"video_id": "a", "feature_file_path": "a.csv", "label": {"class_value": 0}, "split": "train", "fps": 30},
    {"video_id": "b", "feature_file_path": "a.csv", "label": {"real_value": 0.33}, "split": "test", "fps": 30}]})",
         ErrorCode::kMixedLabelKinds);
  expect(R"({"num_classes": 4, "entries": [
    {"video_id": "a", "feature_file_path": "missing.csv", "label": {"class_value": 0}, "split": "train", "fps": 30}]})",
         ErrorCode::kUnresolvablePath);
  expect(R"({"num_classes": 4, "entries": [
    {"video_id": "a", "feature_file_path": "a.csv", "label": {"class_value": 4}, "split": "train", "fps": 30}]})",
         ErrorCode::kOutOfRange);
}

TEST_CASE("labels validate their ranges") {
  CHECK(Label::ordinal(3, 4).class_value == 3);
  CHECK_THROWS_AS(Label::ordinal(4, 4), Error);
  CHECK_THROWS_AS(Label::ordinal(0, 1), Error);
  CHECK(Label::continuous(0.66).real_value == 0.66);
  CHECK_THROWS_AS(Label::continuous(1.5), Error);
}

TEST_CASE("repair: all valid is the identity") {
  const auto s = make_series(50);
  const auto r = repair_series(s);
  CHECK(r.series == s);
  CHECK(r.report.valid_fraction == 1.0);
  CHECK_FALSE(r.report.unusable);
}

TEST_CASE("repair: frames 10-14 copy frame 9") {
  auto s = make_series(300);
  for (int t = 10; t < 15; ++t) {
    auto& f = s.frames[static_cast<std::size_t>(t)];
    f.valid = false;
    f.valence = 0.0;  // trackers emit zeros on failure
    f.latent.fill(0.0);
  }
  const auto r = repair_series(s);
  CHECK(r.report.valid_fraction == doctest::Approx(295.0 / 300.0).epsilon(1e-15));
  CHECK(r.report.invalid_frames == 5);
  const auto& src = s.frames[9];
  for (int t = 10; t < 15; ++t) {
    const auto& f = r.series.frames[static_cast<std::size_t>(t)];
    CHECK_FALSE(f.valid);
    CHECK(f.frame_index == t);
    CHECK(f.valence == src.valence);
    CHECK(f.arousal == src.arousal);
    CHECK(f.latent == src.latent);
    CHECK(f.behavioral() == src.behavioral());
  }
  // Valid frames untouched.
  for (std::size_t t = 0; t < 300; ++t) {
    if (s.frames[t].valid) CHECK(r.series.frames[t] == s.frames[t]);
  }
}

TEST_CASE("repair: leading invalid run is back-filled") {
  auto s = make_series(20);
  for (int t = 0; t < 3; ++t) s.frames[static_cast<std::size_t>(t)].valid = false;
  const auto r = repair_series(s);
  for (int t = 0; t < 3; ++t) CHECK(r.series.frames[static_cast<std::size_t>(t)].latent == s.frames[3].latent);
}

TEST_CASE("repair: 200 of 300 invalid is unusable") {
  auto s = make_series(300);
  for (int t = 0; t < 200; ++t) s.frames[static_cast<std::size_t>(3 * (t / 2) + t % 2)].valid = false;
  const auto r = repair_series(s);
  CHECK(r.report.invalid_frames == 200);
  CHECK(r.report.valid_fraction == doctest::Approx(1.0 / 3.0));
  CHECK(r.report.unusable);
}

TEST_CASE("repair: idempotent, and all-invalid raises") {
  auto s = make_series(60);
  std::mt19937 rng(5);
  for (auto& f : s.frames) f.valid = (rng() % 3) != 0;
  s.frames[0].valid = false;
  const auto once = repair_series(s);
  const auto twice = repair_series(once.series);
  CHECK(twice.series == once.series);
  CHECK(twice.report.valid_fraction == once.report.valid_fraction);

  for (auto& f : s.frames) f.valid = false;
  try {
    repair_series(s);
    FAIL("expected AllFramesInvalid");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kAllFramesInvalid);
  }
}
