#include <doctest.h>

#include <cmath>
#include <sstream>

#include "engage/error.hpp"
#include "engage/features.hpp"
#include "test_util.hpp"

using namespace engage;
using namespace engage::features;
using ingest::FrameRecord;
using ingest::FrameSeries;

namespace {

FrameSeries blank_series(int n, double fps = 30.0) {
  FrameSeries s;
  s.video_id = "v";
  s.fps = fps;
  for (int t = 0; t < n; ++t) {
    FrameRecord r;
    r.frame_index = t;
    s.frames.push_back(r);
  }
  return s;
}

// Symmetric triangle of the given apex height and half-width, added by max.
void add_pulse(std::vector<double>& x, int apex, double height, int half_width = 3) {
  for (int d = -half_width; d <= half_width; ++d) {
    const int t = apex + d;
    if (t < 0 || t >= static_cast<int>(x.size())) continue;
    const double v = height * (1.0 - std::abs(d) / static_cast<double>(half_width + 1));
    x[static_cast<std::size_t>(t)] = std::max(x[static_cast<std::size_t>(t)], v);
  }
}

int expect_code(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return static_cast<int>(e.code());
  }
  return -1;
}

}  // namespace

TEST_CASE("frame input keeps the three blocks apart") {
  FrameRecord r;
  r.valence = 0.1;
  r.arousal = -0.2;
  r.latent[255] = 7.0;
  r.au45 = 1.0;
  r.wrist[2] = 9.0;
  const auto in = frame_input(r);
  CHECK(in.latent.size() == 256);
  CHECK(in.affect[0] == 0.1);
  CHECK(in.affect[1] == -0.2);
  CHECK(in.behavioral[0] == 1.0);
  CHECK(in.behavioral[11] == 9.0);

  auto s = blank_series(3);
  s.frames[2] = r;
  const auto m = frame_sequence(s);
  CHECK(m.rows() == kFrameInputWidth);
  CHECK(m.cols() == 3);
  CHECK(m(kFrameLatentOffset + 255, 2) == 7.0);
  CHECK(m(kFrameAffectOffset, 2) == 0.1);
  CHECK(m(kFrameAffectOffset + 1, 2) == -0.2);
  CHECK(m(kFrameBehavioralOffset, 2) == 1.0);
  CHECK(m(kFrameBehavioralOffset + 11, 2) == 9.0);
}

TEST_CASE("9000 frames at 30 fps give 59 clips") {
  const auto clips = segment_clips(blank_series(9000), 10.0, 0.5);
  REQUIRE(clips.size() == 59);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    CHECK(clips[i].records.size() == 300);
    CHECK_FALSE(clips[i].padded);
    CHECK(clips[i].start_frame == static_cast<std::int64_t>(150 * i));
    CHECK(clips[i].end_frame - clips[i].start_frame + 1 == 300);
  }
  // Consecutive clips share L - step frames.
  CHECK(clips[1].start_frame <= clips[0].end_frame);
  CHECK(clips[0].end_frame - clips[1].start_frame + 1 == 150);
}

TEST_CASE("clip count formula across lengths and overlaps") {
  for (double overlap : {0.0, 0.25, 0.5, 0.9}) {
    for (int n : {300, 301, 449, 450, 1234}) {
      const int length = 300;
      const int step = std::max(1, static_cast<int>(std::lround(length * (1.0 - overlap))));
      const auto clips = segment_clips(blank_series(n), 10.0, overlap);
      CHECK(clips.size() == static_cast<std::size_t>((n - length) / step + 1));
      for (const auto& c : clips) CHECK(c.records.size() == static_cast<std::size_t>(length));
    }
  }
}

TEST_CASE("300 frames fit one clip; 200 frames are padded") {
  const auto exact = segment_clips(blank_series(300));
  REQUIRE(exact.size() == 1);
  CHECK_FALSE(exact[0].padded);

  auto short_series = blank_series(200);
  short_series.frames.back().valence = 0.7;
  const auto padded = segment_clips(short_series);
  REQUIRE(padded.size() == 1);
  CHECK(padded[0].padded);
  REQUIRE(padded[0].records.size() == 300);
  for (std::size_t t = 199; t < 300; ++t) CHECK(padded[0].records[t].valence == 0.7);
  CHECK(padded[0].records[198].valence == 0.0);
}

TEST_CASE("segmentation errors") {
  CHECK(expect_code([] { segment_clips(blank_series(0)); }) == static_cast<int>(ErrorCode::kEmptySeries));
  CHECK(expect_code([] { segment_clips(blank_series(10), 0.01); }) == static_cast<int>(ErrorCode::kInvalidConfig));
}

TEST_CASE("blink rate fixtures") {
  std::vector<double> zeros(300, 0.0);
  CHECK(blink_rate(zeros) == 0.0);

  std::vector<double> x(300, 0.0);
  add_pulse(x, 50, 1.2);
  add_pulse(x, 150, 2.0);
  add_pulse(x, 250, 0.3);
  CHECK(blink_rate(x, 0.5) == doctest::Approx(2.0 / 300.0));

  std::vector<double> close(300, 0.0);
  add_pulse(close, 100, 1.0, 1);
  add_pulse(close, 103, 1.5, 1);
  CHECK(blink_rate(close, 0.5, 6) == doctest::Approx(1.0 / 300.0));
  CHECK(blink_rate(close, 0.5, 2) == doctest::Approx(2.0 / 300.0));
}

TEST_CASE("blink rate is invariant to joint scaling of series and threshold") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::vector<double> x(500);
  for (auto& v : x) v = u(rng);
  for (double k : {0.5, 3.0, 10.0}) {
    std::vector<double> y(x);
    for (auto& v : y) v *= k;
    CHECK(blink_rate(y, 0.7 * k) == blink_rate(x, 0.7));
  }
}

TEST_CASE("diff_stats fixtures") {
  const std::vector<double> constant(20, 3.5);
  CHECK(diff_stats(constant, 30.0) == DiffStats{0, 0, 0, 0});

  std::vector<double> ramp(50);
  for (std::size_t t = 0; t < ramp.size(); ++t) ramp[t] = 2.0 * static_cast<double>(t);
  CHECK(diff_stats(ramp, 30.0) == DiffStats{60, 0, 0, 0});

  const std::vector<double> quad{0, 1, 4, 9, 16};
  const auto q = diff_stats(quad, 1.0);
  CHECK(q.vel_mean == 4.0);
  CHECK(q.vel_std == doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));
  CHECK(q.acc_mean == 2.0);
  CHECK(q.acc_std == 0.0);

  const std::vector<double> two{1, 2};
  CHECK(expect_code([&] { diff_stats(two, 30.0); }) == static_cast<int>(ErrorCode::kSeriesTooShort));
}

TEST_CASE("diff_stats ignores constant offsets") {
  auto x = std::vector<double>(100);
  std::mt19937 rng(9);
  std::normal_distribution<double> n(0, 1);
  for (auto& v : x) v = n(rng);
  auto y = x;
  for (auto& v : y) v += 17.0;
  const auto a = diff_stats(x, 30.0);
  const auto b = diff_stats(y, 30.0);
  CHECK(a.vel_mean == doctest::Approx(b.vel_mean).epsilon(1e-9));
  CHECK(a.vel_std == doctest::Approx(b.vel_std).epsilon(1e-9));
  CHECK(a.acc_mean == doctest::Approx(b.acc_mean).epsilon(1e-9));
  CHECK(a.acc_std == doctest::Approx(b.acc_std).epsilon(1e-9));
}

TEST_CASE("clip feature layout") {
  const auto& names = clip_feature_names();
  CHECK(names[0] == "f00_valence_mean");
  CHECK(names[3] == "f03_arousal_std");
  CHECK(names[4] == "f04_blink_rate");
  CHECK(names[5] == "f05_gaze_x_vel_mean");
  CHECK(names[13] == "f13_head_x_vel_mean");
  CHECK(names[25] == "f25_head_pitch_vel_mean");
  CHECK(names[37] == "f37_wrist_x_vel_mean");
  CHECK(names[48] == "f48_wrist_z_acc_std");

  // A ramp on one channel shows up only at that channel's velocity mean.
  auto s = blank_series(30);
  for (int t = 0; t < 30; ++t) {
    s.frames[static_cast<std::size_t>(t)].gaze[0] = 0.1 * t;
    s.frames[static_cast<std::size_t>(t)].wrist[2] = 0.5 * t * t;
  }
  const auto f = clip_feature_vector(s.frames, 30.0);
  CHECK(f[5] == doctest::Approx(3.0));
  CHECK(f[6] == doctest::Approx(0.0));
  CHECK(f[45] == doctest::Approx(30.0 * 0.5 * 29.0));  // mean of (2t-1)*0.5*30 over t=1..29
  CHECK(f[47] == doctest::Approx(900.0));
  CHECK(f[48] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("constant and alternating clips") {
  auto s = blank_series(300);
  for (auto& r : s.frames) {
    r.valence = 0.3;
    r.arousal = -0.4;
    r.head_loc = {1, 2, 3};
    r.au45 = 0.2;
  }
  const auto f = clip_feature_vector(s.frames, 30.0);
  CHECK(f[0] == 0.3);
  CHECK(f[2] == -0.4);
  CHECK(f[1] == 0.0);
  CHECK(f[3] == 0.0);
  CHECK(f[4] == 0.0);
  for (int i = 5; i < kClipFeatureCount; ++i) CHECK(f[static_cast<std::size_t>(i)] == 0.0);

  for (std::size_t t = 0; t < s.frames.size(); ++t) s.frames[t].valence = t % 2 == 0 ? -0.2 : 0.2;
  const auto g = clip_feature_vector(s.frames, 30.0);
  CHECK(g[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(0.2));
}

TEST_CASE("clip features stay finite and in range") {
  std::mt19937 rng(17);
  std::normal_distribution<double> n(0, 3);
  auto s = blank_series(300);
  for (auto& r : s.frames) {
    r.valence = std::clamp(n(rng) / 3, -1.0, 1.0);
    r.arousal = std::clamp(n(rng) / 3, -1.0, 1.0);
    r.au45 = std::abs(n(rng));
    for (auto& v : r.gaze) v = n(rng);
    for (auto& v : r.head_loc) v = 100 * n(rng);
    for (auto& v : r.head_pose) v = n(rng);
    for (auto& v : r.wrist) v = n(rng);
  }
  const auto f = clip_feature_vector(s.frames, 30.0);
  for (double v : f) CHECK(std::isfinite(v));
  CHECK(f[4] >= 0.0);
  CHECK(f[4] <= 1.0);
  for (int i = 6; i < kClipFeatureCount; i += 2) CHECK(f[static_cast<std::size_t>(i)] >= 0.0);

  const auto seq = clip_sequence(s, {});
  CHECK(seq.rows() == kClipFeatureCount);
  CHECK(seq.cols() == 1);
  CHECK(seq(2, 0) == f[2]);

  CHECK(expect_code([&] { clip_feature_vector(std::span(s.frames).first(2), 30.0); }) ==
        static_cast<int>(ErrorCode::kSeriesTooShort));
}

TEST_CASE("normalizer fixtures") {
  Eigen::MatrixXd a(2, 2);
  a << 0, 2, 5, 5;  // row 0 takes {0, 2}; row 1 is constant
  const std::vector<Eigen::MatrixXd> samples{a};
  const auto n = fit_normalizer(samples, "test/v1");
  CHECK(n.mean[0] == 1.0);
  CHECK(n.stddev[0] == 1.0);
  CHECK_FALSE(n.constant[0]);
  CHECK(n.constant[1]);
  CHECK(n.stddev[1] == 1.0);

  const auto z = apply_normalizer(n, a, "test/v1");
  CHECK(z(0, 0) == -1.0);
  CHECK(z(0, 1) == 1.0);
  CHECK(z(1, 0) == 0.0);
  CHECK(z(1, 1) == 0.0);

  CHECK(expect_code([&] { apply_normalizer(n, a, "test/v2"); }) == static_cast<int>(ErrorCode::kLayoutMismatch));
  CHECK(expect_code([&] { apply_normalizer(n, Eigen::MatrixXd::Zero(3, 1), "test/v1"); }) ==
        static_cast<int>(ErrorCode::kLayoutMismatch));
  const std::vector<Eigen::MatrixXd> one{Eigen::MatrixXd::Zero(2, 1)};
  CHECK(expect_code([&] { fit_normalizer(one, "test/v1"); }) == static_cast<int>(ErrorCode::kTooFewSamples));
}

TEST_CASE("normalized training data has zero mean and unit std") {
  std::vector<Eigen::MatrixXd> samples;
  for (unsigned i = 0; i < 5; ++i) {
    Eigen::MatrixXd m = testing::random_matrix(4, 7 + i, i);
    m.row(1) = m.row(1) * 10.0 + Eigen::RowVectorXd::Constant(m.cols(), 3.0);
    samples.push_back(m);
  }
  const auto n = fit_normalizer(samples, "t");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(4), sq = Eigen::VectorXd::Zero(4);
  double count = 0;
  for (const auto& s : samples) {
    const auto z = apply_normalizer(n, s, "t");
    sum += z.rowwise().sum();
    sq += z.array().square().matrix().rowwise().sum();
    count += static_cast<double>(z.cols());
  }
  for (int r = 0; r < 4; ++r) {
    CHECK(sum(r) / count == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
    CHECK(sq(r) / count == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("clip feature table round-trips") {
  std::vector<ClipFeatureRow> rows(2);
  rows[0].video_id = "a";
  rows[0].clip_index = 0;
  rows[0].label = ingest::Label::ordinal(2, 4);
  rows[1].video_id = "a";
  rows[1].clip_index = 1;
  rows[1].label = ingest::Label::ordinal(2, 4);
  for (int i = 0; i < kClipFeatureCount; ++i) {
    rows[0].values[static_cast<std::size_t>(i)] = 0.1 * i;
    rows[1].values[static_cast<std::size_t>(i)] = -1.0 / (i + 3);
  }
  std::stringstream io;
  write_clip_feature_table(io, rows);
  const auto header = io.str().substr(0, io.str().find('\n'));
  CHECK(header.rfind("video_id,clip_index,label,f00_valence_mean,", 0) == 0);
  const auto back = read_clip_feature_table(io, ingest::LabelKind::kOrdinalClass, 4);
  REQUIRE(back.size() == 2);
  CHECK(back[1].values == rows[1].values);
  CHECK(back[0].label == rows[0].label);
  CHECK(back[1].clip_index == 1);
}
