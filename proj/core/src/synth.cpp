#include "engage/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>

#include "engage/error.hpp"
#include "engage/parallel.hpp"

namespace engage::synth {
namespace {

using Rng = std::mt19937_64;

Rng derived_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

constexpr std::uint64_t kVideoStream = 1;
constexpr std::uint64_t kProjectionStream = 2;
constexpr std::uint64_t kSplitStream = 3;

// Fixed 256 x 2 map from (valence, arousal) to the latent block.
std::vector<std::array<double, 2>> latent_projection(const SynthConfig& config) {
  auto rng = derived_rng(config.seed, kProjectionStream, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::array<double, 2>> p(ingest::kLatentDim);
  for (auto& row : p) row = {normal(rng), normal(rng)};
  return p;
}

std::vector<double> ar1_series(Rng& rng, int n, double mean, double sd, double phi) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double innovation = sd * std::sqrt(1.0 - phi * phi);
  std::vector<double> x(static_cast<std::size_t>(n));
  double e = sd * normal(rng);
  for (int t = 0; t < n; ++t) {
    if (t > 0) e = phi * e + innovation * normal(rng);
    x[static_cast<std::size_t>(t)] = std::clamp(mean + e, -1.0, 1.0);
  }
  return x;
}

std::string video_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "video_%04d", index);
  return buf;
}

double gaussian_log_density(double x, double mean, double var) {
  if (var <= 0.0) return x == mean ? 0.0 : -std::numeric_limits<double>::infinity();
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + (x - mean) * (x - mean) / var);
}

double poisson_log_pmf(long k, double rate) {
  if (rate <= 0.0) return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  return static_cast<double>(k) * std::log(rate) - rate - std::lgamma(static_cast<double>(k) + 1.0);
}

}  // namespace

ingest::Label SynthConfig::label_for(int level) const {
  if (!continuous_labels) return ingest::Label::ordinal(level, num_classes);
  const double value = std::floor(100.0 * level / (num_classes - 1) + 1e-9) / 100.0;
  return ingest::Label::continuous(value, num_classes);
}

void SynthConfig::validate() const {
  const auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidConfig, what); };
  if (num_classes < 2) fail("need at least 2 classes");
  if (videos_per_class < 1) fail("need at least one video per class");
  if (frames_per_video < 3) fail("videos need at least 3 frames");
  if (!(fps > 0.0)) fail("fps must be positive");
  if (!(affect_ar >= 0.0 && affect_ar < 1.0)) fail("AR coefficient must lie in [0, 1)");
  if (affect_noise_sd < 0.0 || subject_affect_sd < 0.0 || movement_log_sd < 0.0 || gaze_step_sd < 0.0 ||
      au45_noise_sd < 0.0 || latent_noise_sd < 0.0) {
    fail("noise levels must be non-negative");
  }
  for (int l = 0; l < num_classes; ++l) {
    if (!(movement_sd(l) > 0.0)) fail("movement sd must stay positive at level " + std::to_string(l));
    if (blink_rate(l) < 0.0) fail("blink rate must stay non-negative at level " + std::to_string(l));
  }
  if (!(train_fraction > 0.0 && validation_fraction >= 0.0 && train_fraction + validation_fraction < 1.0)) {
    fail("split fractions must leave room for a test split");
  }
}

ingest::FrameSeries generate_video(const SynthConfig& config, int level, int video_index) {
  static thread_local std::pair<std::uint64_t, std::vector<std::array<double, 2>>> cache{~0ULL, {}};
  if (cache.first != config.seed || cache.second.empty()) cache = {config.seed, latent_projection(config)};
  const auto& projection = cache.second;

  auto rng = derived_rng(config.seed, kVideoStream, static_cast<std::uint64_t>(video_index));
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = config.frames_per_video;

  const double valence_offset = config.subject_affect_sd * normal(rng);
  const double arousal_offset = config.subject_affect_sd * normal(rng);
  const auto valence = ar1_series(rng, n, config.valence_mean(level) + valence_offset,
                                  config.affect_noise_sd, config.affect_ar);
  const auto arousal = ar1_series(rng, n, config.arousal_mean(level) + arousal_offset,
                                  config.affect_noise_sd, config.affect_ar);

  const double step = config.movement_sd(level) * std::exp(config.movement_log_sd * normal(rng));

  std::vector<double> au45(static_cast<std::size_t>(n));
  for (auto& v : au45) v = std::abs(config.au45_noise_sd * normal(rng));
  std::poisson_distribution<int> blinks(config.blink_rate(level) * n / config.fps);
  const int count = config.blink_rate(level) > 0.0 ? blinks(rng) : 0;
  std::uniform_int_distribution<int> where(0, n - 1);
  const int hw = config.blink_half_width;
  for (int b = 0; b < count; ++b) {
    const int apex = where(rng);
    for (int d = -hw; d <= hw; ++d) {
      const int t = apex + d;
      if (t < 0 || t >= n) continue;
      const double v = config.blink_height * (1.0 - std::abs(d) / static_cast<double>(hw + 1));
      au45[static_cast<std::size_t>(t)] = std::max(au45[static_cast<std::size_t>(t)], v);
    }
  }

  ingest::FrameSeries series;
  series.video_id = video_name(video_index);
  series.fps = config.fps;
  series.label = config.label_for(level);
  series.frames.resize(static_cast<std::size_t>(n));

  std::array<double, 2> gaze{0.0, 0.0};
  std::array<double, 3> head_loc{0.0, 0.0, 600.0};
  std::array<double, 3> head_pose{0.0, 0.0, 0.0};
  std::array<double, 3> wrist{0.5, 0.8, 0.0};
  for (int t = 0; t < n; ++t) {
    auto& r = series.frames[static_cast<std::size_t>(t)];
    r.frame_index = t;
    r.valid = true;
    r.valence = valence[static_cast<std::size_t>(t)];
    r.arousal = arousal[static_cast<std::size_t>(t)];
    for (int i = 0; i < ingest::kLatentDim; ++i) {
      const auto& p = projection[static_cast<std::size_t>(i)];
      r.latent[static_cast<std::size_t>(i)] =
          p[0] * r.valence + p[1] * r.arousal + config.latent_noise_sd * normal(rng);
    }
    r.au45 = au45[static_cast<std::size_t>(t)];
    if (t > 0) {
      for (auto& g : gaze) g += config.gaze_step_sd * normal(rng);
      for (auto& h : head_loc) h += step * normal(rng);
      for (auto& h : head_pose) h += step * normal(rng);
      for (auto& w : wrist) w += step * normal(rng);
    }
    r.gaze = gaze;
    r.head_loc = head_loc;
    r.head_pose = head_pose;
    r.wrist = wrist;
  }
  return series;
}

std::vector<ingest::Split> stratified_splits(const SynthConfig& config) {
  config.validate();
  const int total = config.num_classes * config.videos_per_class;
  // Each class is shuffled and cut at the configured fractions.
  std::vector<ingest::Split> splits(static_cast<std::size_t>(total));
  auto split_rng = derived_rng(config.seed, kSplitStream, 0);
  const int n_train = static_cast<int>(std::lround(config.train_fraction * config.videos_per_class));
  const int n_val = static_cast<int>(std::lround(config.validation_fraction * config.videos_per_class));
  for (int level = 0; level < config.num_classes; ++level) {
    std::vector<int> order(static_cast<std::size_t>(config.videos_per_class));
    for (int i = 0; i < config.videos_per_class; ++i) order[static_cast<std::size_t>(i)] = i;
    std::shuffle(order.begin(), order.end(), split_rng);
    for (int rank = 0; rank < config.videos_per_class; ++rank) {
      const int video = level * config.videos_per_class + order[static_cast<std::size_t>(rank)];
      splits[static_cast<std::size_t>(video)] = rank < n_train           ? ingest::Split::kTrain
                                                : rank < n_train + n_val ? ingest::Split::kValidation
                                                                         : ingest::Split::kTest;
    }
  }
  return splits;
}

ingest::Manifest generate(const SynthConfig& config, const std::filesystem::path& out_dir, int jobs) {
  const auto splits = stratified_splits(config);
  const int total = config.num_classes * config.videos_per_class;

  std::filesystem::create_directories(out_dir / "frames");
  ingest::Manifest manifest;
  manifest.num_classes = config.num_classes;
  manifest.label_kind = config.continuous_labels ? ingest::LabelKind::kContinuous : ingest::LabelKind::kOrdinalClass;
  manifest.entries.resize(static_cast<std::size_t>(total));
  parallel_for(static_cast<std::size_t>(total), jobs, [&](std::size_t video) {
    const int level = static_cast<int>(video) / config.videos_per_class;
    const auto series = generate_video(config, level, static_cast<int>(video));
    const auto path = std::filesystem::absolute(out_dir / "frames" / (series.video_id + ".csv"));
    ingest::write_frame_file(path, series);
    manifest.entries[video] = {series.video_id, path, series.label, splits[video], config.fps};
  });
  ingest::save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

double ar1_mean_variance(double stationary_sd, double coefficient, int n) {
  // Var(mean) = sd^2 / n^2 * (n + 2 sum_{k=1}^{n-1} (n-k) phi^k)
  double acc = static_cast<double>(n);
  double power = 1.0;
  for (int k = 1; k < n; ++k) {
    power *= coefficient;
    acc += 2.0 * static_cast<double>(n - k) * power;
  }
  return stationary_sd * stationary_sd * acc / (static_cast<double>(n) * static_cast<double>(n));
}

double oracle_accuracy(const SynthConfig& config, int n_mc, std::uint64_t seed) {
  config.validate();
  if (n_mc < 1) throw Error(ErrorCode::kInvalidConfig, "need at least one Monte Carlo draw");
  const int n = config.frames_per_video;
  const int classes = config.num_classes;
  const double affect_var = config.subject_affect_sd * config.subject_affect_sd +
                            ar1_mean_variance(config.affect_noise_sd, config.affect_ar, n);
  // Log of a sample sd over 9 channels x (n-1) Gaussian steps.
  const double log_step_var = config.movement_log_sd * config.movement_log_sd + 1.0 / (2.0 * 9.0 * (n - 1));
  const double seconds = n / config.fps;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, classes - 1);
  long correct = 0;
  for (int draw = 0; draw < n_mc; ++draw) {
    const int level = pick(rng);
    const double arousal = config.arousal_mean(level) + std::sqrt(affect_var) * normal(rng);
    const double valence = config.valence_mean(level) + std::sqrt(affect_var) * normal(rng);
    const double log_step = std::log(config.movement_sd(level)) + std::sqrt(log_step_var) * normal(rng);
    const double rate = config.blink_rate(level) * seconds;
    const long blinks = rate > 0.0 ? std::poisson_distribution<long>(rate)(rng) : 0;

    int best = 0;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < classes; ++c) {
      const double ll = gaussian_log_density(arousal, config.arousal_mean(c), affect_var) +
                        gaussian_log_density(valence, config.valence_mean(c), affect_var) +
                        gaussian_log_density(log_step, std::log(config.movement_sd(c)), log_step_var) +
                        poisson_log_pmf(blinks, config.blink_rate(c) * seconds);
      if (ll > best_ll) {
        best_ll = ll;
        best = c;
      }
    }
    if (best == level) ++correct;
  }
  return static_cast<double>(correct) / n_mc;
}

}  // namespace engage::synth
