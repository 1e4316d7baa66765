#include <doctest.h>

#include <cmath>
#include <map>

#include "engage/error.hpp"
#include "engage/features.hpp"
#include "engage/synth.hpp"
#include "test_util.hpp"

using namespace engage;
using namespace engage::synth;

TEST_CASE("default config: 200 videos with a 30/10/10 split per class") {
  SynthConfig c;
  c.frames_per_video = 12;  // keeps the files small; counts do not depend on it
  testing::TempDir dir;
  const auto manifest = generate(c, dir.path(), 2);
  CHECK(manifest.entries.size() == 200);
  std::map<std::pair<int, ingest::Split>, int> counts;
  for (const auto& e : manifest.entries) {
    CHECK(std::filesystem::exists(e.feature_file_path));
    ++counts[{e.label.class_value, e.split}];
  }
  for (int level = 0; level < 4; ++level) {
    CHECK(counts[{level, ingest::Split::kTrain}] == 30);
    CHECK(counts[{level, ingest::Split::kValidation}] == 10);
    CHECK(counts[{level, ingest::Split::kTest}] == 10);
  }
  int files = 0;
  for (const auto& f : std::filesystem::directory_iterator(dir.path() / "frames")) files += f.is_regular_file() ? 1 : 0;
  CHECK(files == 200);

  const auto loaded = ingest::load_manifest(dir.path() / "manifest.json");
  CHECK(loaded.entries.size() == 200);
  CHECK(loaded.label_kind == ingest::LabelKind::kOrdinalClass);
}

TEST_CASE("same seed gives byte-identical output; a new seed does not") {
  SynthConfig c;
  c.videos_per_class = 3;
  c.frames_per_video = 60;
  testing::TempDir a, b, d;
  generate(c, a.path(), 1);
  generate(c, b.path(), 3);
  c.seed = 8;
  generate(c, d.path(), 1);
  CHECK(testing::read_file(a.path() / "manifest.json") == testing::read_file(b.path() / "manifest.json"));
  for (const auto& f : std::filesystem::directory_iterator(a.path() / "frames")) {
    const auto name = f.path().filename();
    CHECK(testing::read_file(f.path()) == testing::read_file(b.path() / "frames" / name));
    CHECK(testing::read_file(f.path()) != testing::read_file(d.path() / "frames" / name));
  }
}

TEST_CASE("generated files pass ingest with every frame valid") {
  SynthConfig c;
  c.videos_per_class = 2;
  c.continuous_labels = true;
  testing::TempDir dir;
  const auto manifest = generate(c, dir.path(), 1);
  CHECK(manifest.label_kind == ingest::LabelKind::kContinuous);
  for (const auto& e : manifest.entries) {
    const auto series = ingest::load_series(e);
    CHECK(series.frames.size() == 300);
    const auto repaired = ingest::repair_series(series);
    CHECK(repaired.report.valid_fraction == 1.0);
    for (const auto& r : series.frames) {
      CHECK(std::abs(r.valence) <= 1.0);
      CHECK(std::abs(r.arousal) <= 1.0);
    }
  }
}

TEST_CASE("continuous labels follow the 0, .33, .66, 1 grid") {
  SynthConfig c;
  c.continuous_labels = true;
  CHECK(c.label_for(0).real_value == 0.0);
  CHECK(c.label_for(1).real_value == 0.33);
  CHECK(c.label_for(2).real_value == 0.66);
  CHECK(c.label_for(3).real_value == 1.0);
}

TEST_CASE("class-conditional affect and movement match the generator within 3 SE") {
  const SynthConfig c;
  const int n = c.frames_per_video;
  const double affect_var = c.subject_affect_sd * c.subject_affect_sd +
                            ar1_mean_variance(c.affect_noise_sd, c.affect_ar, n);
  const double se_affect = std::sqrt(affect_var / c.videos_per_class);
  const double log_step_var = c.movement_log_sd * c.movement_log_sd + 1.0 / (2.0 * 9.0 * (n - 1));
  const double se_log_step = std::sqrt(log_step_var / c.videos_per_class);

  for (int level = 0; level < c.num_classes; ++level) {
    double arousal = 0.0, valence = 0.0, log_step = 0.0;
    for (int i = 0; i < c.videos_per_class; ++i) {
      const auto s = generate_video(c, level, level * c.videos_per_class + i);
      double a = 0.0, v = 0.0, ss = 0.0;
      for (std::size_t t = 0; t < s.frames.size(); ++t) {
        a += s.frames[t].arousal;
        v += s.frames[t].valence;
        if (t == 0) continue;
        // Nine channels share one step size: head loc, head pose, wrist.
        for (int k = 0; k < 3; ++k) {
          const double d1 = s.frames[t].head_loc[k] - s.frames[t - 1].head_loc[k];
          const double d2 = s.frames[t].head_pose[k] - s.frames[t - 1].head_pose[k];
          const double d3 = s.frames[t].wrist[k] - s.frames[t - 1].wrist[k];
          ss += d1 * d1 + d2 * d2 + d3 * d3;
        }
      }
      arousal += a / n;
      valence += v / n;
      log_step += 0.5 * std::log(ss / (9.0 * (n - 1)));
    }
    arousal /= c.videos_per_class;
    valence /= c.videos_per_class;
    log_step /= c.videos_per_class;
    CHECK(std::abs(arousal - c.arousal_mean(level)) <= 0.05);
    CHECK(std::abs(arousal - c.arousal_mean(level)) <= 3 * se_affect);
    CHECK(std::abs(valence - c.valence_mean(level)) <= 3 * se_affect);
    CHECK(std::abs(log_step - std::log(c.movement_sd(level))) <= 3 * se_log_step);
  }
}

TEST_CASE("gaze carries no level information") {
  const SynthConfig c;
  for (int level : {0, 3}) {
    double ss = 0.0;
    long steps = 0;
    for (int i = 0; i < 20; ++i) {
      const auto s = generate_video(c, level, 1000 + level * 20 + i);
      for (std::size_t t = 1; t < s.frames.size(); ++t) {
        for (int k = 0; k < 2; ++k) {
          const double d = s.frames[t].gaze[k] - s.frames[t - 1].gaze[k];
          ss += d * d;
          ++steps;
        }
      }
    }
    CHECK(std::sqrt(ss / steps) == doctest::Approx(c.gaze_step_sd).epsilon(0.02));
  }
}

TEST_CASE("blink rate falls with engagement level") {
  SynthConfig c;
  c.frames_per_video = 3000;
  double low = 0.0, high = 0.0;
  for (int i = 0; i < 10; ++i) {
    std::vector<double> a, b;
    for (const auto& r : generate_video(c, 0, i).frames) a.push_back(r.au45);
    for (const auto& r : generate_video(c, 3, 100 + i).frames) b.push_back(r.au45);
    low += features::blink_rate(a) * c.fps;
    high += features::blink_rate(b) * c.fps;
  }
  // Overlapping pulses merge, so detected rates sit a little under the Poisson rate.
  CHECK(low / 10 == doctest::Approx(c.blink_rate(0)).epsilon(0.2));
  CHECK(high / 10 == doctest::Approx(c.blink_rate(3)).epsilon(0.2));
  CHECK(low > high);
}

TEST_CASE("AR(1) mean variance closed form") {
  CHECK(ar1_mean_variance(1.0, 0.0, 10) == doctest::Approx(0.1));
  CHECK(ar1_mean_variance(2.0, 0.0, 4) == doctest::Approx(1.0));
  // phi -> 1 keeps the full variance.
  CHECK(ar1_mean_variance(1.0, 0.999999, 50) == doctest::Approx(1.0).epsilon(1e-3));
  // Empirical check.
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z(0.0, 1.0);
  const double phi = 0.9, sd = 0.15;
  double s2 = 0.0;
  const int reps = 20000, n = 30;
  for (int r = 0; r < reps; ++r) {
    double e = sd * z(rng), sum = e;
    for (int t = 1; t < n; ++t) {
      e = phi * e + sd * std::sqrt(1 - phi * phi) * z(rng);
      sum += e;
    }
    s2 += (sum / n) * (sum / n);
  }
  CHECK(s2 / reps == doctest::Approx(ar1_mean_variance(sd, phi, n)).epsilon(0.05));
}

TEST_CASE("oracle limits") {
  SynthConfig separable;
  separable.arousal_step = 5.0;
  separable.arousal_base = -7.5;  // means far apart; clipping at +-1 keeps them distinct enough
  separable.affect_noise_sd = 1e-4;
  separable.subject_affect_sd = 1e-4;
  separable.valence_step = 0.6;
  separable.valence_base = -0.9;
  CHECK(oracle_accuracy(separable, 10000, 3) >= 0.999);

  SynthConfig flat;
  flat.arousal_step = 0.0;
  flat.valence_step = 0.0;
  flat.movement_step = 0.0;
  flat.blink_step = 0.0;
  CHECK(oracle_accuracy(flat, 20000, 3) == doctest::Approx(0.25).epsilon(0.06));

  const SynthConfig defaults;
  const double frozen = oracle_accuracy(defaults, 100000, 1);
  CHECK(frozen == doctest::Approx(0.985).epsilon(0.005));
}

TEST_CASE("invalid configs are rejected") {
  SynthConfig c;
  c.movement_base = 0.3;  // 0.3 - 0.12 * 3 < 0
  CHECK_THROWS_AS(c.validate(), Error);
  SynthConfig d;
  d.train_fraction = 0.9;
  d.validation_fraction = 0.1;
  CHECK_THROWS_AS(d.validate(), Error);
}
