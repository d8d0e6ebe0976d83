#include "valley/sgd_sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "valley/rng.hpp"

namespace valley::sim {

namespace {

constexpr double kDivergenceGuard = 1e6;

double draw_noise(Rng& rng, const SGDConfig& cfg) {
  if (cfg.nu == 0.0 || cfg.noise_kind == NoiseKind::Zero) return 0.0;
  switch (cfg.noise_kind) {
    case NoiseKind::Uniform:
      return rng.symmetric_open(cfg.nu);
    case NoiseKind::ClippedGaussian: {
      const double cap = cfg.nu * (1.0 - 1e-12);
      return std::clamp(rng.gaussian() * (cfg.nu / 3.0), -cap, cap);
    }
    case NoiseKind::Zero:
      return 0.0;
  }
  return 0.0;
}

double mean(const std::vector<double>& xs, std::size_t from, std::size_t to_excl) {
  double s = 0.0;
  for (std::size_t i = from; i < to_excl; ++i) s += xs[i];
  return s / static_cast<double>(to_excl - from);
}

}  // namespace

void SGDConfig::validate() const {
  if (!(eta > 0.0)) throw std::invalid_argument("SGDConfig: eta must be > 0");
  if (!(nu >= 0.0)) throw std::invalid_argument("SGDConfig: nu must be >= 0");
  if (steps < 0) throw std::invalid_argument("SGDConfig: steps must be >= 0");
  if (!std::isfinite(w_init)) throw std::invalid_argument("SGDConfig: w_init must be finite");
}

Trajectory run_sgd(const Loss1D& model, const SGDConfig& config) {
  config.validate();
  Trajectory traj;
  traj.config = config;
  traj.positions.reserve(static_cast<std::size_t>(config.steps) + 1);
  traj.gradients.reserve(static_cast<std::size_t>(config.steps));
  traj.noises.reserve(static_cast<std::size_t>(config.steps));

  Rng rng(mix_seed(config.seed, 0x51d));
  double w = config.w_init;
  traj.positions.push_back(w);
  for (std::int64_t t = 0; t < config.steps; ++t) {
    const double g = grad(model, w);
    const double noise = draw_noise(rng, config);
    w = w - config.eta * (g + noise);
    if (std::abs(w) > kDivergenceGuard)
      throw std::runtime_error("run_sgd: trajectory diverged past 1e6");
    traj.gradients.push_back(g);
    traj.noises.push_back(noise);
    traj.positions.push_back(w);
  }
  return traj;
}

std::vector<RoundSegment> segment_rounds(const Trajectory& traj) {
  const auto& w = traj.positions;
  std::vector<std::int64_t> crossings;
  for (std::size_t i = 1; i < w.size(); ++i) {
    if (w[i] >= 0.0 && w[i - 1] < 0.0) crossings.push_back(static_cast<std::int64_t>(i));
  }
  std::vector<RoundSegment> rounds;
  if (crossings.size() < 2) return rounds;
  rounds.reserve(crossings.size() - 1);
  for (std::size_t j = 0; j + 1 < crossings.size(); ++j) {
    RoundSegment seg;
    seg.start = crossings[j];
    seg.end = crossings[j + 1] - 1;
    seg.w0 = w[static_cast<std::size_t>(seg.start)];
    seg.average = mean(w, static_cast<std::size_t>(seg.start), static_cast<std::size_t>(seg.end) + 1);
    seg.sharp_dwell = 0;
    for (std::int64_t i = seg.start; i <= seg.end; ++i) {
      if (w[static_cast<std::size_t>(i)] < 0.0) ++seg.sharp_dwell;
    }
    rounds.push_back(seg);
  }
  return rounds;
}

RoundStatistics round_statistics(const std::vector<RoundSegment>& segments, double t_min,
                                 double t_max) {
  if (segments.size() < 30)
    throw std::invalid_argument("round_statistics: need at least 30 rounds");
  RoundStatistics st;
  st.n_rounds = segments.size();
  const double n = static_cast<double>(segments.size());

  double sum = 0.0;
  for (const auto& s : segments) sum += s.average;
  st.mean_average = sum / n;
  double ss = 0.0;
  for (const auto& s : segments) {
    const double d = s.average - st.mean_average;
    ss += d * d;
  }
  st.stderr_average = std::sqrt(ss / (n - 1.0) / n);

  const auto floor_tmin = static_cast<std::int64_t>(std::floor(t_min));
  const auto ceil_tmax = static_cast<std::int64_t>(std::ceil(t_max));
  std::size_t flat_ok = 0;
  std::size_t exit_ok = 0;
  std::size_t len_ok = 0;
  for (const auto& s : segments) {
    if (s.flat_dwell() >= floor_tmin) ++flat_ok;
    if (s.flat_dwell() <= ceil_tmax) ++exit_ok;
    if (s.length() <= ceil_tmax) ++len_ok;
    ++st.sharp_dwell_histogram[s.sharp_dwell];
  }
  st.frac_flat_dwell_ge_tmin = static_cast<double>(flat_ok) / n;
  st.frac_exit_by_tmax = static_cast<double>(exit_ok) / n;
  st.frac_length_le_tmax = static_cast<double>(len_ok) / n;
  st.stderr_flat_dwell =
      std::sqrt(st.frac_flat_dwell_ge_tmin * (1.0 - st.frac_flat_dwell_ge_tmin) / n);
  st.stderr_exit = std::sqrt(st.frac_exit_by_tmax * (1.0 - st.frac_exit_by_tmax) / n);
  st.stderr_length = std::sqrt(st.frac_length_le_tmax * (1.0 - st.frac_length_le_tmax) / n);
  return st;
}

RunningAverage average_iterates(const Trajectory& traj, std::int64_t burn_in) {
  if (burn_in < 0 || static_cast<std::size_t>(burn_in) >= traj.positions.size())
    throw std::invalid_argument("average_iterates: burn_in out of range");
  RunningAverage out;
  out.series.reserve(traj.positions.size() - static_cast<std::size_t>(burn_in));
  double sum = 0.0;
  for (std::size_t i = static_cast<std::size_t>(burn_in); i < traj.positions.size(); ++i) {
    sum += traj.positions[i];
    out.series.push_back(sum / static_cast<double>(out.series.size() + 1));
  }
  out.final_average = out.series.back();
  return out;
}

std::int64_t default_burn_in(const Trajectory& traj) {
  const auto& w = traj.positions;
  for (std::size_t i = 1; i < w.size(); ++i) {
    if (w[i] >= 0.0 && w[i - 1] < 0.0) return static_cast<std::int64_t>(i);
  }
  return 0;
}

TheoremTwoReport verify_theorem_two(const PiecewiseValley1D& model, SGDConfig config,
                                    std::size_t n_rounds, bool override_hypotheses) {
  config.validate();
  GradientBounds bounds = model.bounds();
  bounds.nu = config.nu;  // the theorem constants are evaluated at the simulated noise level
  bounds.validate();

  TheoremTwoReport rep;
  rep.hypotheses = theory::theorem_two_hypothesis_check(bounds);
  rep.hypothesis_override = override_hypotheses;
  if (!rep.hypotheses.all_ok() && !override_hypotheses)
    throw theory::InfeasibleHypotheses("verify_theorem_two: hypothesis check failed");
  rep.constants = theory::compute_constants(bounds, config.eta, std::nullopt);

  // Collect at least n_rounds full rounds, growing the budget when the
  // initial estimate based on t_max falls short.
  const double expected_len = rep.constants.t_max + 2.0;
  std::int64_t steps = static_cast<std::int64_t>((static_cast<double>(n_rounds) + 8.0) * expected_len) + 64;
  std::vector<RoundSegment> rounds;
  Trajectory traj;
  for (int attempt = 0; attempt < 6; ++attempt) {
    config.steps = steps;
    traj = run_sgd(Loss1D(model), config);
    rounds = segment_rounds(traj);
    if (rounds.size() >= n_rounds) break;
    steps *= 2;
  }
  if (rounds.size() < n_rounds)
    throw std::runtime_error("verify_theorem_two: could not collect the requested rounds");
  rounds.resize(n_rounds);

  rep.stats = round_statistics(rounds, rep.constants.t_min, rep.constants.t_max);
  rep.ci99_low = rep.stats.mean_average - 2.5758293035489 * rep.stats.stderr_average;
  rep.ci99_high = rep.stats.mean_average + 2.5758293035489 * rep.stats.stderr_average;

  for (const auto& seg : rounds) {
    if (seg.w0 < rep.constants.p_min - 1e-12 || seg.w0 > rep.constants.p_max + 1e-12)
      ++rep.w0_violations;
  }

  const double lower = rep.stats.mean_average - 3.0 * rep.stats.stderr_average;
  rep.positive_bias = lower > 0.0;
  rep.exceeds_c0 = lower > rep.constants.c0;
  rep.dwell_lower_ok = rep.stats.frac_flat_dwell_ge_tmin >=
                       1.0 - rep.constants.t_min / rep.constants.tau -
                           3.0 * rep.stats.stderr_flat_dwell;
  rep.dwell_upper_ok = rep.stats.frac_exit_by_tmax >=
                       1.0 - rep.constants.t_max / rep.constants.tau -
                           3.0 * rep.stats.stderr_exit;
  return rep;
}

SmallLrScenarios small_lr_scenarios(const Loss1D& model, double eta, std::int64_t steps,
                                    double flat_start, double sharp_start) {
  if (!(flat_start > 0.0) || !(sharp_start < 0.0))
    throw std::invalid_argument("small_lr_scenarios: starts must lie on opposite sides");
  SGDConfig cfg;
  cfg.eta = eta;
  cfg.nu = 0.0;
  cfg.noise_kind = NoiseKind::Zero;
  cfg.steps = steps;

  cfg.w_init = flat_start;
  SmallLrScenarios out;
  out.flat_start = run_sgd(model, cfg);
  cfg.w_init = sharp_start;
  out.sharp_start = run_sgd(model, cfg);

  for (double w : out.flat_start.positions) {
    if (w < 0.0) throw std::runtime_error("small_lr_scenarios: flat-side run crossed the minimum");
  }
  for (double w : out.sharp_start.positions) {
    if (w > 0.0) throw std::runtime_error("small_lr_scenarios: sharp-side run crossed the minimum");
  }

  out.flat_average = average_iterates(out.flat_start, 0).final_average;
  out.sharp_average = average_iterates(out.sharp_start, 0).final_average;
  out.flat_average_positive = out.flat_average > 0.0;
  out.sharp_closer_to_center = std::abs(out.sharp_average) < std::abs(out.flat_average);
  return out;
}

}  // namespace valley::sim
