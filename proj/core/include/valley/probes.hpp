#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "valley/landscape.hpp"
#include "valley/param_vector.hpp"
#include "valley/valley_models.hpp"

namespace valley::probes {

enum class DirectionKind { RandomUnitInterval, RandomGaussian, InterSolution, GroupMasked, Custom };

struct Direction {
  std::vector<double> v;  // unit norm
  DirectionKind provenance = DirectionKind::Custom;
};

// RandomUnitInterval draws every entry from (0, 1) before normalizing - the
// variant that tends to expose asymmetry - while RandomGaussian is the
// symmetric contrast case. GroupMasked zeroes everything outside the mask.
[[nodiscard]] Direction sample_direction(DirectionKind kind, std::size_t dim, std::uint64_t seed,
                                         const ParamGroupMask* mask = nullptr);
[[nodiscard]] Direction direction_between(std::span<const double> from, std::span<const double> to);

struct SliceProfile {
  std::vector<double> offsets;
  std::vector<double> values;
  std::vector<std::uint8_t> finite;  // per-point flag
  std::vector<double> second;        // optional second series (empty when absent)
};

[[nodiscard]] SliceProfile slice(const LandscapeModel& model, std::span<const double> center,
                                 std::span<const double> u, double lo, double hi,
                                 std::size_t steps, const LandscapeModel* second = nullptr);

struct AsymmetryVerdict {
  AsymmetrySpec spec;
  bool holds = false;
  double flat_max_slope = 0.0;
  double sharp_min_slope_magnitude = 0.0;
  std::string method;
};

// Checks the (r, p, c, zeta) definition on a grid over (zeta, r): directional
// slope < p at +l and < -c*p at -l. Slopes come from the model's exact
// directional gradient when available, central differences otherwise.
[[nodiscard]] AsymmetryVerdict classify_direction(const LandscapeModel& model,
                                                  std::span<const double> center,
                                                  std::span<const double> u,
                                                  const AsymmetrySpec& spec,
                                                  std::size_t grid_points = 32);

struct FitPolicy {
  double r = 3.0;
  double zeta = 0.5;
  std::size_t grid_points = 32;
  double accept_c = 2.0;
  // Scale r and zeta by ||center|| / sqrt(d) when the center is away from the
  // origin, so the probe window tracks the parameter scale of the model.
  bool normalize_units = true;
};

struct FittedDirection {
  Direction direction;
  AsymmetrySpec fitted;  // p = measured flat max slope, c = sharp/flat ratio
  AsymmetryVerdict verdict;
  std::size_t trial = 0;
};

// Fits (p, c) along one given direction under the policy.
[[nodiscard]] FittedDirection fit_direction(const LandscapeModel& model,
                                            std::span<const double> center, Direction direction,
                                            const FitPolicy& policy);

// Samples (0,1)-directions and returns the first with fitted c above the
// acceptance threshold; nullopt when no trial qualifies.
[[nodiscard]] std::optional<FittedDirection> find_asymmetric_direction(
    const LandscapeModel& model, std::span<const double> center, const FitPolicy& policy,
    std::size_t trials, std::uint64_t seed);

struct NeighborhoodReport {
  double holds_fraction = 0.0;
  std::size_t n_samples = 0;
  std::vector<double> offsets;
  std::vector<double> mean_profile;
  std::vector<double> variance_profile;  // of profiles centered at offset 0
};

// Checks the spec at center + v - <v,u>u for v sampled uniformly in the ball
// of radius r_prime, and aggregates the loss slices along u.
[[nodiscard]] NeighborhoodReport verify_neighborhood_asymmetry(
    const LandscapeModel& model, std::span<const double> center, std::span<const double> u,
    const AsymmetrySpec& spec, double r_prime, std::size_t n_samples, std::uint64_t seed,
    std::size_t grid_points = 32, std::size_t profile_steps = 41);

struct InterpolationResult {
  SliceProfile profile;       // along a + t (b - a)
  double end_a = 0.0;         // loss at t = 0
  double end_b = 0.0;         // loss at t = 1
  bool bump = false;
  double bump_height = 0.0;   // interior max minus max endpoint, when positive
};

// Loss along the segment between two parameter vectors, extended beyond the
// endpoints. The bump detector looks only at t in [0, 1] and fires when an
// interior maximum exceeds both endpoints by 2% of the profile's range.
[[nodiscard]] InterpolationResult interpolate(const LandscapeModel& model,
                                              std::span<const double> params_a,
                                              std::span<const double> params_b, double lo = -0.5,
                                              double hi = 1.5, std::size_t steps = 81,
                                              const LandscapeModel* second = nullptr);

struct RayProfile {
  std::vector<double> radii;
  std::vector<double> mean;
  std::vector<double> stderr_;
  std::size_t n_rays = 0;
};

// Mean loss at center + radius * g over Gaussian unit rays g.
[[nodiscard]] RayProfile random_ray_profile(const LandscapeModel& model,
                                            std::span<const double> center, std::size_t n_rays,
                                            std::span<const double> radii, std::uint64_t seed);

struct StabilityReport {
  std::vector<SliceProfile> profiles;
  double stability_index = 0.0;   // max pairwise sup-difference, later half
  double early_index = 0.0;       // same statistic over the first half
};

[[nodiscard]] StabilityReport projected_slice_stability(
    const LandscapeModel& model, std::span<const std::vector<double>> checkpoints,
    std::span<const double> u, double lo, double hi, std::size_t steps);

struct BnComparison {
  FittedDirection bn;
  FittedDirection non_bn;
};

// Fits asymmetry along a BN-masked and a non-BN-masked random direction,
// paired by seed.
[[nodiscard]] BnComparison bn_direction_comparison(const LandscapeModel& model,
                                                   std::span<const double> center,
                                                   const ParamGroupMask& bn,
                                                   const ParamGroupMask& non_bn,
                                                   std::uint64_t seed, const FitPolicy& policy);

}  // namespace valley::probes
