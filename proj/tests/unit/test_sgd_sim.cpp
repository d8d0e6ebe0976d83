#include <doctest.h>

#include <cmath>

#include "valley/sgd_sim.hpp"

using namespace valley;
using namespace valley::sim;

namespace {

// Tight ratio-30 valley satisfying every oscillation hypothesis at nu = 0.025.
PiecewiseValley1D c30_valley() {
  return PiecewiseValley1D({.a_plus = 0.05, .b_plus = 0.025, .a_minus = -1.5, .b_minus = -1.8,
                            .nu = 0.025});
}

SGDConfig c30_config() {
  SGDConfig cfg;
  cfg.eta = 0.1;
  cfg.nu = 0.025;
  cfg.noise_kind = NoiseKind::Uniform;
  cfg.steps = 100000;
  cfg.seed = 42;
  cfg.w_init = 0.07;
  return cfg;
}

Trajectory from_positions(std::vector<double> positions) {
  Trajectory traj;
  traj.positions = std::move(positions);
  return traj;
}

}  // namespace

TEST_CASE("noise-free runs follow the update rule exactly") {
  const Loss1D model = default_asymmetric_valley();
  SGDConfig cfg;
  cfg.eta = 0.1;
  cfg.nu = 0.0;
  cfg.steps = 4;
  cfg.w_init = 0.05;
  const auto traj = run_sgd(model, cfg);
  REQUIRE(traj.positions.size() == 5);
  // Flat side: each step moves down by eta * a+ = 0.01 while w >= 0.
  CHECK(traj.positions[1] == doctest::Approx(0.04).epsilon(1e-14));
  CHECK(traj.positions[2] == doctest::Approx(0.03).epsilon(1e-14));

  cfg.w_init = -0.01;
  cfg.steps = 1;
  const auto sharp = run_sgd(model, cfg);
  CHECK(sharp.positions[1] == doctest::Approx(0.09).epsilon(1e-14));
}

TEST_CASE("same seed replays bitwise") {
  const Loss1D model = default_asymmetric_valley();
  SGDConfig cfg;
  cfg.eta = 0.1;
  cfg.nu = 0.05;
  cfg.steps = 5000;
  cfg.seed = 7;
  cfg.w_init = 0.05;
  const auto a = run_sgd(model, cfg);
  const auto b = run_sgd(model, cfg);
  REQUIRE(a.positions.size() == b.positions.size());
  for (std::size_t i = 0; i < a.positions.size(); ++i) {
    CHECK(a.positions[i] == b.positions[i]);
  }
}

TEST_CASE("recorded gradients and noises replay the update identity") {
  const Loss1D model = default_asymmetric_valley();
  SGDConfig cfg;
  cfg.eta = 0.1;
  cfg.nu = 0.05;
  cfg.steps = 2000;
  cfg.seed = 3;
  cfg.w_init = 0.02;
  const auto traj = run_sgd(model, cfg);
  for (std::size_t t = 0; t < traj.gradients.size(); ++t) {
    const double next = traj.positions[t] - cfg.eta * (traj.gradients[t] + traj.noises[t]);
    CHECK(traj.positions[t + 1] == next);
    CHECK(std::abs(traj.noises[t]) < cfg.nu);
  }

  cfg.noise_kind = NoiseKind::ClippedGaussian;
  const auto clipped = run_sgd(model, cfg);
  for (double n : clipped.noises) CHECK(std::abs(n) < cfg.nu);
}

TEST_CASE("divergent configurations abort") {
  const Loss1D model = SymmetricFunction1D(SymmetricFunction1D::Kind::SharpSided, 0.1);
  SGDConfig cfg;
  cfg.eta = 2e7;
  cfg.nu = 0.0;
  cfg.steps = 10;
  cfg.w_init = 1.0;
  CHECK_THROWS_AS((void)run_sgd(model, cfg), std::runtime_error);
}

TEST_CASE("round segmentation on a crafted crossing pattern") {
  const auto traj = from_positions({-1.0, 1.0, 0.5, 0.2, -1.0, 1.0, -0.5});
  const auto rounds = segment_rounds(traj);
  REQUIRE(rounds.size() == 1);
  CHECK(rounds[0].start == 1);
  CHECK(rounds[0].end == 4);
  CHECK(rounds[0].length() == 4);
  CHECK(rounds[0].sharp_dwell == 1);
  CHECK(rounds[0].w0 == 1.0);
  CHECK(rounds[0].average == doctest::Approx((1.0 + 0.5 + 0.2 - 1.0) / 4.0));
}

TEST_CASE("trajectories without oscillation produce no rounds") {
  CHECK(segment_rounds(from_positions({3.0, 2.5, 2.0, 1.5, 1.0})).empty());
  CHECK(segment_rounds(from_positions({-3.0, -2.5, -2.0})).empty());
}

TEST_CASE("round starts stay inside the first-iterate bounds") {
  const auto model = c30_valley();
  auto cfg = c30_config();
  const auto traj = run_sgd(Loss1D(model), cfg);
  const auto rounds = segment_rounds(traj);
  REQUIRE(rounds.size() > 100);
  GradientBounds bounds = model.bounds();
  bounds.nu = cfg.nu;
  const auto [p_min, p_max] = theory::compute_p_bounds(bounds, cfg.eta);
  for (const auto& r : rounds) {
    CHECK(r.w0 >= p_min - 1e-12);
    CHECK(r.w0 <= p_max + 1e-12);
  }
}

TEST_CASE("rounds partition the oscillating span of the trajectory") {
  const auto model = c30_valley();
  auto cfg = c30_config();
  cfg.steps = 20000;
  const auto traj = run_sgd(Loss1D(model), cfg);
  const auto rounds = segment_rounds(traj);
  REQUIRE(rounds.size() > 2);
  std::int64_t total = 0;
  for (std::size_t i = 0; i < rounds.size(); ++i) {
    total += rounds[i].length();
    if (i > 0) CHECK(rounds[i].start == rounds[i - 1].end + 1);
  }
  CHECK(total == rounds.back().end + 1 - rounds.front().start);
}

TEST_CASE("round statistics require 30 rounds") {
  std::vector<RoundSegment> few(10);
  CHECK_THROWS_AS((void)round_statistics(few, 1.0, 2.0), std::invalid_argument);
}

TEST_CASE("noise-free tight rounds are fully deterministic") {
  // Ratio-10 valley, w0 = 0.095: each round descends ten flat iterates and
  // spends exactly one iterate on the sharp side.
  const PiecewiseValley1D model = default_asymmetric_valley();
  SGDConfig cfg;
  cfg.eta = 0.1;
  cfg.nu = 0.0;
  cfg.noise_kind = NoiseKind::Zero;
  cfg.steps = 2000;
  cfg.w_init = 0.095;
  const auto traj = run_sgd(Loss1D(model), cfg);
  const auto rounds = segment_rounds(traj);
  REQUIRE(rounds.size() >= 30);
  const auto first_len = rounds.front().length();
  for (const auto& r : rounds) {
    CHECK(r.sharp_dwell == 1);
    CHECK(r.length() == first_len);
    // Closed-form flat dwell for tight noise-free rounds.
    const auto expect = static_cast<std::int64_t>(std::floor(r.w0 / (cfg.eta * 0.1))) + 1;
    CHECK(r.flat_dwell() == expect);
    CHECK(r.average == doctest::Approx(rounds.front().average).epsilon(1e-12));
  }
}

TEST_CASE("iterate averaging and burn-in") {
  const auto traj = from_positions({1.0, 2.0, 3.0});
  const auto avg = average_iterates(traj, 0);
  CHECK(avg.final_average == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(avg.series.front() == 1.0);
  CHECK_THROWS_AS((void)average_iterates(traj, 3), std::invalid_argument);
  CHECK(default_burn_in(from_positions({-1.0, -0.5, 0.5, 0.2})) == 2);
  CHECK(default_burn_in(from_positions({1.0, 0.5})) == 0);
}

TEST_CASE("symmetric sharp oscillation denoises under averaging") {
  const Loss1D model = SymmetricFunction1D(SymmetricFunction1D::Kind::SharpSided, 1.0);
  SGDConfig cfg;
  cfg.eta = 0.1;
  cfg.nu = 0.05;
  cfg.steps = 10000;
  cfg.w_init = 0.03;
  const double amplitude = cfg.eta * (1.0 + cfg.nu);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    cfg.seed = seed;
    const auto traj = run_sgd(model, cfg);
    const auto avg = average_iterates(traj, default_burn_in(traj));
    CHECK(std::abs(avg.final_average) < amplitude);
  }
}

TEST_CASE("asymmetric oscillation biases the average to the flat side") {
  const Loss1D model = default_asymmetric_valley();
  SGDConfig cfg;
  cfg.eta = 0.1;
  cfg.nu = 0.05;
  cfg.steps = 20000;
  cfg.w_init = 0.05;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    cfg.seed = seed;
    const auto traj = run_sgd(model, cfg);
    const auto avg = average_iterates(traj, default_burn_in(traj));
    CHECK(avg.final_average > 0.0);
  }
}

TEST_CASE("oscillation-bias verification on the ratio-30 configuration") {
  const auto rep = verify_theorem_two(c30_valley(), c30_config(), 2000);
  CHECK(rep.hypotheses.all_ok());
  CHECK(rep.constants.tau_condition_ok);
  CHECK(rep.positive_bias);
  CHECK(rep.exceeds_c0);
  CHECK(rep.dwell_lower_ok);
  CHECK(rep.dwell_upper_ok);
  CHECK(rep.w0_violations == 0);
  CHECK(rep.stats.mean_average > rep.constants.c0);
}

TEST_CASE("noise-free verification compares the deterministic round average to c_0") {
  const PiecewiseValley1D model({.a_plus = 0.05, .b_plus = 0.05, .a_minus = -1.5, .b_minus = -1.5,
                                 .nu = 0.0});
  SGDConfig cfg;
  cfg.eta = 0.1;
  cfg.nu = 0.0;
  cfg.noise_kind = NoiseKind::Zero;
  cfg.seed = 1;
  cfg.w_init = 0.1475;
  const auto rep = verify_theorem_two(model, cfg, 100);
  CHECK(rep.stats.stderr_average < 1e-14);  // identical rounds up to ulp drift
  CHECK(rep.stats.mean_average == doctest::Approx(0.0725).epsilon(1e-10));
  CHECK(rep.constants.c0 == doctest::Approx(29.0 * 29.0 / 60.0 * 0.005).epsilon(1e-12));
  CHECK(rep.exceeds_c0);
  CHECK(rep.dwell_upper_ok);
  CHECK(rep.stats.sharp_dwell_histogram.size() == 1);
  CHECK(rep.stats.sharp_dwell_histogram.begin()->first == 1);
}

TEST_CASE("symmetric input fails the hypothesis gate") {
  const PiecewiseValley1D symmetric(
      {.a_plus = 0.5, .b_plus = 0.5, .a_minus = -0.5, .b_minus = -0.5, .nu = 0.0});
  SGDConfig cfg;
  cfg.eta = 0.1;
  cfg.nu = 0.0;
  CHECK_THROWS_AS((void)verify_theorem_two(symmetric, cfg, 50), theory::InfeasibleHypotheses);
}

TEST_CASE("small learning rates keep each side on its own side") {
  const Loss1D model = default_asymmetric_valley();
  const auto res = small_lr_scenarios(model, 1e-3, 250, 3.0, -0.3);
  CHECK(res.flat_average_positive);
  CHECK(res.sharp_closer_to_center);
  for (double w : res.flat_start.positions) CHECK(w > 0.0);
  for (double w : res.sharp_start.positions) CHECK(w < 0.0);
  // Monotone descent on the flat side.
  for (std::size_t t = 1; t < res.flat_start.positions.size(); ++t) {
    CHECK(res.flat_start.positions[t] < res.flat_start.positions[t - 1]);
  }
  // A budget long enough to cross the minimum trips the oscillation guard.
  CHECK_THROWS_AS((void)small_lr_scenarios(model, 1e-3, 1000, 3.0, -0.3), std::runtime_error);
}
