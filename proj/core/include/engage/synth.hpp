#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "engage/ingest.hpp"

namespace engage::synth {

// Per-level generative parameters are affine in the engagement level l.
struct SynthConfig {
  int num_classes = 4;
  bool continuous_labels = false;  // labels floor(100 l/(C-1))/100, e.g. 0, .33, .66, 1
  int videos_per_class = 50;
  int frames_per_video = 300;
  double fps = 30.0;

  double arousal_base = -0.6;  // mu_a(l) = base + step * l
  double arousal_step = 0.4;
  double valence_base = -0.3;
  double valence_step = 0.25;
  double affect_noise_sd = 0.15;  // stationary sd of the AR(1) noise
  double affect_ar = 0.9;
  double subject_affect_sd = 0.1;  // per-video offset on both affect means

  double movement_base = 0.5;  // random-walk step sd sigma_m(l) for head and wrist
  double movement_step = -0.12;
  double movement_log_sd = 0.35;  // per-video log-normal jitter on sigma_m
  double gaze_step_sd = 0.3;      // level-independent

  double blink_base = 0.5;  // Poisson blinks per second
  double blink_step = -0.1;
  double blink_height = 1.5;
  int blink_half_width = 3;  // frames on each side of the pulse apex
  double au45_noise_sd = 0.05;

  double latent_noise_sd = 0.1;

  double train_fraction = 0.6;
  double validation_fraction = 0.2;
  std::uint64_t seed = 7;

  double arousal_mean(int level) const { return arousal_base + arousal_step * level; }
  double valence_mean(int level) const { return valence_base + valence_step * level; }
  double movement_sd(int level) const { return movement_base + movement_step * level; }
  double blink_rate(int level) const { return blink_base + blink_step * level; }
  ingest::Label label_for(int level) const;

  void validate() const;  // throws kInvalidConfig
};

// One video at the given level; deterministic in (config.seed, video_index).
ingest::FrameSeries generate_video(const SynthConfig& config, int level, int video_index);

// Split of every video index (level * videos_per_class + i), stratified per class.
std::vector<ingest::Split> stratified_splits(const SynthConfig& config);

// Writes frames/<video_id>.csv and manifest.json under out_dir, with a split
// stratified per class. Returns the manifest as written.
ingest::Manifest generate(const SynthConfig& config, const std::filesystem::path& out_dir, int jobs = 1);

// Monte Carlo accuracy of the Bayes classifier over the generator's sufficient
// statistics (mean arousal, mean valence, log movement scale, blink count).
double oracle_accuracy(const SynthConfig& config, int n_mc, std::uint64_t seed = 1);

// Variance of the mean of n consecutive samples of a stationary AR(1) process.
double ar1_mean_variance(double stationary_sd, double coefficient, int n);

}  // namespace engage::synth
