#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "valley/theory.hpp"
#include "valley/valley_models.hpp"

namespace valley::sim {

enum class NoiseKind { Uniform, ClippedGaussian, Zero };

struct SGDConfig {
  double eta = 0.1;
  double nu = 0.0;  // strict noise bound: realized |w_t| < nu (0 means no noise)
  NoiseKind noise_kind = NoiseKind::Uniform;
  std::int64_t steps = 1000;
  std::uint64_t seed = 0;
  double w_init = 0.0;

  void validate() const;
};

// Recorded run of w_{t+1} = w_t - eta * (grad(w_t) + noise_t). positions has
// steps+1 entries; gradients/noises have steps entries and make the update
// rule replayable exactly.
struct Trajectory {
  std::vector<double> positions;
  std::vector<double> gradients;
  std::vector<double> noises;
  SGDConfig config;
};

[[nodiscard]] Trajectory run_sgd(const Loss1D& model, const SGDConfig& config);

// One oscillation round: starts at a sharp->flat crossing (position >= 0,
// previous position < 0) and ends just before the next such crossing, so the
// trailing sharp-side iterates belong to the round.
struct RoundSegment {
  std::int64_t start = 0;
  std::int64_t end = 0;  // inclusive
  double w0 = 0.0;       // first iterate of the round
  double average = 0.0;  // mean of positions[start..end]
  std::int64_t sharp_dwell = 0;

  [[nodiscard]] std::int64_t length() const { return end - start + 1; }
  [[nodiscard]] std::int64_t flat_dwell() const { return length() - sharp_dwell; }
};

// Empty when the trajectory has fewer than two sharp->flat crossings.
[[nodiscard]] std::vector<RoundSegment> segment_rounds(const Trajectory& traj);

struct RoundStatistics {
  std::size_t n_rounds = 0;
  double mean_average = 0.0;
  double stderr_average = 0.0;
  double frac_flat_dwell_ge_tmin = 0.0;  // flat dwell >= floor(t_min)
  double stderr_flat_dwell = 0.0;
  double frac_exit_by_tmax = 0.0;  // flat dwell <= ceil(t_max), the w_{t_max} < 0 event
  double stderr_exit = 0.0;
  double frac_length_le_tmax = 0.0;  // whole round (incl. sharp tail) <= ceil(t_max)
  double stderr_length = 0.0;
  std::map<std::int64_t, std::int64_t> sharp_dwell_histogram;
};

// Requires at least 30 rounds. t_min / t_max are compared against floor and
// ceil respectively, matching the dwell-time statements.
[[nodiscard]] RoundStatistics round_statistics(const std::vector<RoundSegment>& segments,
                                               double t_min, double t_max);

struct RunningAverage {
  std::vector<double> series;  // running mean of positions[burn_in..t]
  double final_average = 0.0;
};

[[nodiscard]] RunningAverage average_iterates(const Trajectory& traj, std::int64_t burn_in);

// Index of the first sharp->flat crossing (0 when none); the oscillation
// accounting starts there.
[[nodiscard]] std::int64_t default_burn_in(const Trajectory& traj);

struct TheoremTwoReport {
  theory::TheoremTwoConstants constants;
  theory::HypothesisReport hypotheses;
  bool hypothesis_override = false;
  RoundStatistics stats;
  double ci99_low = 0.0;
  double ci99_high = 0.0;
  std::size_t w0_violations = 0;  // round starts outside [p_min, p_max] (tolerance 1e-12)
  bool positive_bias = false;     // mean - 3*stderr > 0
  bool exceeds_c0 = false;        // mean - 3*stderr > c_0 (meaningful when tau condition holds)
  bool dwell_lower_ok = false;    // P(flat dwell >= floor(t_min)) >= 1 - t_min/tau - 3*se
  bool dwell_upper_ok = false;    // P(length <= ceil(t_max))     >= 1 - t_max/tau - 3*se
};

// Simulates until n_rounds full rounds are collected and checks the
// oscillation-bias claims empirically. Throws theory::InfeasibleHypotheses
// when the hypothesis report fails and override is not set.
[[nodiscard]] TheoremTwoReport verify_theorem_two(const PiecewiseValley1D& model, SGDConfig config,
                                                  std::size_t n_rounds,
                                                  bool override_hypotheses = false);

struct SmallLrScenarios {
  Trajectory flat_start;
  Trajectory sharp_start;
  double flat_average = 0.0;
  double sharp_average = 0.0;
  bool flat_average_positive = false;
  bool sharp_closer_to_center = false;  // |sharp avg| < |flat avg|
};

// Noise-free small-learning-rate runs from both sides of the valley; throws
// when either run crosses the minimum within the budget.
[[nodiscard]] SmallLrScenarios small_lr_scenarios(const Loss1D& model, double eta,
                                                  std::int64_t steps, double flat_start,
                                                  double sharp_start);

}  // namespace valley::sim
