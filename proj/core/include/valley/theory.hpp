#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "valley/valley_models.hpp"

namespace valley::theory {

// Thrown when the oscillation analysis does not apply to the given bounds
// (e.g. the combined drift a_- + a_+ + 2*nu is not negative).
struct InfeasibleHypotheses : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// First-iterate bounds after a sharp->flat crossing:
//   p_min = -eta * (a_- + a_+ + 2 nu),  p_max = -eta * (b_- - nu).
[[nodiscard]] std::pair<double, double> compute_p_bounds(const GradientBounds& bounds, double eta);

// Dwell-time bounds (iteration counts, real valued). Both are independent of
// the learning rate; the concentration argument is run in eta-free units.
[[nodiscard]] double compute_t_min(const GradientBounds& bounds, double tau);
[[nodiscard]] double compute_t_max(const GradientBounds& bounds, double tau);

struct C0Result {
  double c0 = 0.0;       // t_min^2 / (2 t_max) * eta * a_+
  double t_min = 0.0;
  double t_max = 0.0;
  double tau = 0.0;
  bool tau_condition_ok = false;  // (t_min + t_max) / tau <= 1/2
};

[[nodiscard]] C0Result compute_c0(const GradientBounds& bounds, double eta, double tau);

// Smallest power of two tau with (t_min(tau) + t_max(tau)) / tau <= 1/2,
// i.e. the confidence constant picked constructively. Throws
// InfeasibleHypotheses when no power of two up to 2^62 works.
[[nodiscard]] double auto_tau(const GradientBounds& bounds);

// A second ceiling on tau that keeps t_min >= 2:
//   tau <= exp(((c-3) a_+ / (2 nu) - 1)^2) / 2.
// Reported alongside the condition above; unbounded when nu = 0.
[[nodiscard]] std::optional<double> tau_remark_upper_bound(const GradientBounds& bounds);

struct TheoremTwoConstants {
  double eta = 0.0;
  double tau = 0.0;
  double p_min = 0.0;
  double p_max = 0.0;
  double t_min = 0.0;
  double t_max = 0.0;
  double c0 = 0.0;
  bool tau_condition_ok = false;
};

// Bundle of every constant at one (bounds, eta, tau) triple; tau defaults to
// auto_tau when not supplied.
[[nodiscard]] TheoremTwoConstants compute_constants(const GradientBounds& bounds, double eta,
                                                    std::optional<double> tau = std::nullopt);

struct HypothesisReport {
  double c = 0.0;        // -a_- / a_+
  double c_prime = 0.0;  // -(b_- - nu) / b_+
  double c_prime_limit = 0.0;  // e^{c/3} / 6
  bool asymmetric = false;     // c > 1
  bool c_prime_ok = false;     // c_prime < e^{c/3} / 6
  bool noise_ok = false;       // nu <= a_+
  bool drift_ok = false;       // a_- + a_+ + 2 nu < 0

  [[nodiscard]] bool all_ok() const { return asymmetric && c_prime_ok && noise_ok && drift_ok; }
};

[[nodiscard]] HypothesisReport theorem_two_hypothesis_check(const GradientBounds& bounds);

// Inputs for the expected-loss gap lower bound over k asymmetric directions.
struct GapBoundConfig {
  std::vector<double> c;          // asymmetry ratios, > 1
  std::vector<double> p;          // flat-side gradient bounds, > 0
  std::vector<double> l;          // bias lengths
  std::vector<double> delta_bar;  // per-direction shift magnitudes
  double xi = 0.0;                // shift-gap bound
  double r = 0.0;                 // direction validity range
  double zeta = 0.0;              // dead-zone radius
};

struct GapBound {
  double bound_value = 0.0;          // sum_i (c_i - 1) l_i p_i / 2 - 2 k xi
  std::vector<bool> lower_ok;        // l_i > 4 xi / ((c_i - 1) p_i)
  std::vector<bool> upper_ok;        // l_i <= max{r - delta_bar_i, delta_bar_i - zeta}
  [[nodiscard]] bool feasible() const;
};

[[nodiscard]] GapBound theorem_one_lower_bound(const GapBoundConfig& cfg);

[[nodiscard]] nlohmann::json to_json(const TheoremTwoConstants& constants,
                                     const HypothesisReport& hypotheses);

}  // namespace valley::theory
