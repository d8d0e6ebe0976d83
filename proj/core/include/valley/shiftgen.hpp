#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "valley/theory.hpp"
#include "valley/valley_models.hpp"

namespace valley::shift {

// Offsets v (each with ||v|| <= R) over which a shift gap is maximized.
// Recorded as a grid maximum: a lower bound on the true sup.
struct SamplingPlan {
  std::vector<std::vector<double>> offsets;
  std::string description;

  static SamplingPlan along_direction(std::span<const double> u, double radius, std::size_t steps);
  static SamplingPlan ball(std::size_t dim, double radius, std::size_t samples, std::uint64_t seed);
  void append(const SamplingPlan& other);
};

struct ShiftGapResult {
  std::vector<double> delta;
  double gap = 0.0;             // grid maximum of |L' - L_hat|
  double min_l = 0.0;           // vertical offsets used for L'
  double min_l_hat = 0.0;
  std::string min_method;       // "exact" or "grid"
  std::string grid_description;
  double ratio_to_zero_shift = std::numeric_limits<double>::quiet_NaN();
};

// xi_delta(w) = max_v |L'(w + v + delta) - L_hat(w + v)| over the plan,
// with L' = L - min L + min L_hat. Known minima may be passed when the
// models are synthetic; otherwise both are estimated over the same plan.
[[nodiscard]] ShiftGapResult shift_gap(const LandscapeModel& population,
                                       const LandscapeModel& empirical,
                                       std::span<const double> center,
                                       std::span<const double> delta, double radius,
                                       const SamplingPlan& plan,
                                       std::optional<double> known_min_l = std::nullopt,
                                       std::optional<double> known_min_l_hat = std::nullopt);

struct ShiftScan {
  std::vector<double> deltas;
  std::vector<double> gaps;
  std::vector<double> ratios;  // gap / gap(0); NaN when degenerate
  double gap_at_zero = 0.0;
  bool degenerate_zero_gap = false;
  double argmin_delta = 0.0;
  double min_gap = 0.0;
};

// 1D scan of the shift gap along a direction; the recovered shift is the
// argmin of the curve.
[[nodiscard]] ShiftScan scan_shift(const LandscapeModel& population,
                                   const LandscapeModel& empirical,
                                   std::span<const double> center, std::span<const double> u,
                                   double delta_lo, double delta_hi, std::size_t steps,
                                   double window_radius, std::size_t window_steps,
                                   std::optional<double> known_min_l = std::nullopt,
                                   std::optional<double> known_min_l_hat = std::nullopt);

// L_hat(x) = L(x + shift); the zero-gap construction used in tests and the
// recovery experiment.
class ShiftedModel final : public LandscapeModel {
 public:
  ShiftedModel(const LandscapeModel& base, std::vector<double> shift);
  [[nodiscard]] std::size_t dim() const override { return shift_.size(); }
  [[nodiscard]] double loss(std::span<const double> w) const override;

 private:
  const LandscapeModel* base_;
  std::vector<double> shift_;
};

// Per-axis description of a shift model: the certified asymmetry tuple, the
// realized slopes, and the shift magnitude.
struct AxisInfo {
  double p = 0.0;
  double c = 0.0;
  double zeta = 0.0;
  double r = 0.0;  // +inf for globally linear axes
  double flat_slope = 0.0;
  double sharp_slope = 0.0;  // magnitude
  double delta_bar = 0.0;
};

// Population loss plus, for each of the 2^k sign patterns of delta, an
// empirical loss L_hat_s(x) = L(x + delta_s) + pert_s(x). The perturbation is
// a sum of non-negative cosine bumps per (axis, own-coordinate sign), with
// total amplitude <= xi and slopes inside the asymmetry margins, so the
// (delta_s, R)-shift gap is <= xi for every pattern by construction.
class ShiftModel {
 public:
  ShiftModel(SeparableValleyND population, std::vector<double> delta_bar, double xi,
             std::uint64_t seed, double radius);

  [[nodiscard]] const SeparableValleyND& population() const { return population_; }
  [[nodiscard]] std::size_t num_directions() const { return axes_.size(); }
  [[nodiscard]] const AxisInfo& axis_info(std::size_t i) const { return axes_.at(i); }
  [[nodiscard]] double xi() const { return xi_; }
  [[nodiscard]] double radius() const { return radius_; }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }

  // Pattern bit i set means delta_i = +delta_bar_i.
  [[nodiscard]] double empirical_axis_loss(std::size_t axis, bool positive, double t) const;
  [[nodiscard]] double empirical_loss(std::uint32_t pattern, std::span<const double> x) const;
  [[nodiscard]] double empirical_axis_minimizer(std::size_t axis, bool positive) const;
  [[nodiscard]] std::vector<double> empirical_minimizer_coords(std::uint32_t pattern) const;
  [[nodiscard]] std::vector<double> empirical_minimizer(std::uint32_t pattern) const;

  // LandscapeModel view of one pattern's empirical loss.
  [[nodiscard]] std::unique_ptr<LandscapeModel> empirical_model(std::uint32_t pattern) const;

  // Grid check of the per-pattern shift gap; returns the largest measured
  // gap across all patterns (requires k <= 20).
  [[nodiscard]] double max_measured_shift_gap(std::size_t grid_points) const;

  [[nodiscard]] theory::GapBoundConfig bound_config(std::span<const double> bias) const;

 private:
  struct Bump {
    double center;
    double half_width;
    double amplitude;
  };

  [[nodiscard]] double perturbation(std::size_t axis, bool positive, double t) const;

  SeparableValleyND population_;
  std::vector<AxisInfo> axes_;
  std::vector<std::vector<Bump>> bumps_;       // indexed by 2*axis + (positive ? 1 : 0)
  std::vector<double> minimizers_;             // cached, same indexing
  double xi_ = 0.0;
  double radius_ = 0.0;
  std::uint64_t seed_ = 0;
};

struct ExpectedLossGap {
  double at_minimizer = 0.0;  // E_delta L(w*_hat)
  double at_biased = 0.0;     // E_delta L(w*_hat + sum_i l_i u^i)
  double gap = 0.0;
  double stderr_gap = 0.0;    // 0 for exact enumeration
  std::size_t samples = 0;    // 2^k for enumeration
  theory::GapBound bound;
  double bound_value = 0.0;
};

// Exact average over all 2^k sign patterns (k <= 20), mirroring the pairing
// argument. The population loss is evaluated at each pattern's empirical
// minimizer and at its biased companion.
[[nodiscard]] ExpectedLossGap enumerate_expected_losses(const ShiftModel& model,
                                                        std::span<const double> bias);

// Unbiased sign-sampling estimate for k beyond the enumeration budget.
[[nodiscard]] ExpectedLossGap monte_carlo_expected_losses(const ShiftModel& model,
                                                          std::span<const double> bias,
                                                          std::size_t n_samples,
                                                          std::uint64_t seed);

[[nodiscard]] ShiftModel build_shift_pair(const SeparableValleyND& valley,
                                          std::vector<double> delta_bar, double xi,
                                          std::uint64_t seed, double radius = 0.0);

struct TheoremOneInstance {
  ShiftModel model;
  std::vector<double> bias;
};

// Builds a shift model whose axes realize the given (c_i, p_i) tuples with
// shift magnitudes delta_bar and bias lengths l. xi = 0 uses tight slopes
// (the equality case); xi > 0 uses margined slopes so the perturbation fits
// inside the asymmetry margins. Throws when l leaves the certified range
// l_i <= delta_bar_i - zeta (minus the minimizer-drift allowance when
// xi > 0).
[[nodiscard]] TheoremOneInstance make_theorem_one_instance(
    std::span<const double> c, std::span<const double> p, std::span<const double> delta_bar,
    std::span<const double> l, double xi, std::uint64_t seed, std::size_t embed_dim = 0);

// Seeded instance with k axes for the inequality battery.
[[nodiscard]] TheoremOneInstance random_theorem_one_instance(std::uint64_t seed, std::size_t k,
                                                             double xi);

}  // namespace valley::shift
