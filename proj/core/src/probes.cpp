#include "valley/probes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "valley/rng.hpp"

namespace valley::probes {

namespace {

std::vector<double> linspace(double lo, double hi, std::size_t steps) {
  if (steps < 2) throw std::invalid_argument("probes: need at least 2 grid steps");
  std::vector<double> xs(steps);
  for (std::size_t j = 0; j < steps; ++j) {
    xs[j] = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(steps - 1);
  }
  return xs;
}

void normalize(std::vector<double>& v) {
  const double n = norm2(v);
  if (!(n > 0.0)) throw std::invalid_argument("probes: cannot normalize a zero direction");
  for (double& x : v) x /= n;
}

// Directional slope of the loss at center + t*u, exact when the model
// provides gradients.
double slope_at(const LandscapeModel& model, std::span<const double> center,
                std::span<const double> u, double t, double h, bool exact) {
  const std::vector<double> at = axpy(center, t, u);
  if (exact) return model.directional_grad(at, u, h);
  const std::vector<double> plus = axpy(center, t + h, u);
  const std::vector<double> minus = axpy(center, t - h, u);
  return (model.loss(plus) - model.loss(minus)) / (2.0 * h);
}

struct SlopeScan {
  double flat_max = -std::numeric_limits<double>::infinity();
  double sharp_min_magnitude = std::numeric_limits<double>::infinity();
  std::string method;
};

SlopeScan scan_slopes(const LandscapeModel& model, std::span<const double> center,
                      std::span<const double> u, double zeta, double r, std::size_t grid_points) {
  if (grid_points < 16) throw std::invalid_argument("probes: slope grid needs >= 16 points");
  if (!(r > zeta)) throw std::invalid_argument("probes: need r > zeta");
  const bool exact = model.has_exact_directional_grad();
  const double spacing = (r - zeta) / static_cast<double>(grid_points);
  const double h = std::min(spacing * 0.5, 1e-3 * r);
  SlopeScan scan;
  scan.method = exact ? "exact-directional-gradient"
                      : "central-difference(h=" + std::to_string(h) + ")";
  for (std::size_t j = 0; j < grid_points; ++j) {
    const double l = zeta + (static_cast<double>(j) + 0.5) * spacing;
    scan.flat_max = std::max(scan.flat_max, slope_at(model, center, u, l, h, exact));
    // Sharp side: slope of the loss along +u evaluated at -l; the definition
    // wants it below -c*p, i.e. magnitude above c*p.
    const double s = slope_at(model, center, u, -l, h, exact);
    scan.sharp_min_magnitude = std::min(scan.sharp_min_magnitude, -s);
  }
  return scan;
}

double unit_scale(std::span<const double> center, bool normalize_units) {
  if (!normalize_units) return 1.0;
  const double n = norm2(center);
  if (!(n > 0.0)) return 1.0;
  return n / std::sqrt(static_cast<double>(center.size()));
}

}  // namespace

Direction sample_direction(DirectionKind kind, std::size_t dim, std::uint64_t seed,
                           const ParamGroupMask* mask) {
  if (dim < 1) throw std::invalid_argument("sample_direction: dim must be >= 1");
  Rng rng(mix_seed(seed, 0xd12));
  Direction d;
  d.provenance = kind;
  d.v.assign(dim, 0.0);
  switch (kind) {
    case DirectionKind::RandomUnitInterval:
      for (double& x : d.v) x = rng.uniform_open01();
      break;
    case DirectionKind::RandomGaussian:
      for (double& x : d.v) x = rng.gaussian();
      break;
    case DirectionKind::GroupMasked: {
      if (mask == nullptr || mask->count() == 0)
        throw std::invalid_argument("sample_direction: group-masked kind needs a non-empty mask");
      if (mask->selected.size() != dim)
        throw std::invalid_argument("sample_direction: mask dimension mismatch");
      for (std::size_t i = 0; i < dim; ++i) {
        const double g = rng.gaussian();  // one draw per coordinate keeps pairing by seed
        if (mask->selected[i]) d.v[i] = g;
      }
      break;
    }
    case DirectionKind::InterSolution:
    case DirectionKind::Custom:
      throw std::invalid_argument("sample_direction: use direction_between for this kind");
  }
  normalize(d.v);
  return d;
}

Direction direction_between(std::span<const double> from, std::span<const double> to) {
  if (from.size() != to.size()) throw std::invalid_argument("direction_between: size mismatch");
  Direction d;
  d.provenance = DirectionKind::InterSolution;
  d.v.resize(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) d.v[i] = to[i] - from[i];
  normalize(d.v);
  return d;
}

SliceProfile slice(const LandscapeModel& model, std::span<const double> center,
                   std::span<const double> u, double lo, double hi, std::size_t steps,
                   const LandscapeModel* second) {
  SliceProfile prof;
  prof.offsets = linspace(lo, hi, steps);
  prof.values.reserve(steps);
  prof.finite.reserve(steps);
  for (double l : prof.offsets) {
    const std::vector<double> at = axpy(center, l, u);
    double v = std::numeric_limits<double>::quiet_NaN();
    try {
      v = model.loss(at);
    } catch (const std::runtime_error&) {
      // fall through with NaN, flagged below
    }
    prof.values.push_back(v);
    prof.finite.push_back(std::isfinite(v) ? 1 : 0);
    if (second != nullptr) prof.second.push_back(second->loss(at));
  }
  return prof;
}

AsymmetryVerdict classify_direction(const LandscapeModel& model, std::span<const double> center,
                                    std::span<const double> u, const AsymmetrySpec& spec,
                                    std::size_t grid_points) {
  spec.validate();
  const SlopeScan scan = scan_slopes(model, center, u, spec.zeta, spec.r, grid_points);
  AsymmetryVerdict verdict;
  verdict.spec = spec;
  verdict.flat_max_slope = scan.flat_max;
  verdict.sharp_min_slope_magnitude = scan.sharp_min_magnitude;
  verdict.method = scan.method;
  verdict.holds = scan.flat_max < spec.p && scan.sharp_min_magnitude > spec.c * spec.p;
  return verdict;
}

FittedDirection fit_direction(const LandscapeModel& model, std::span<const double> center,
                              Direction direction, const FitPolicy& policy) {
  const double scale = unit_scale(center, policy.normalize_units);
  const double r = policy.r * scale;
  const double zeta = policy.zeta * scale;
  const SlopeScan scan = scan_slopes(model, center, direction.v, zeta, r, policy.grid_points);

  FittedDirection fit;
  fit.direction = std::move(direction);
  fit.verdict.flat_max_slope = scan.flat_max;
  fit.verdict.sharp_min_slope_magnitude = scan.sharp_min_magnitude;
  fit.verdict.method = scan.method + ", units x" + std::to_string(scale);

  const double p = scan.flat_max;
  double c = 0.0;
  if (p > 0.0 && scan.sharp_min_magnitude > 0.0) c = scan.sharp_min_magnitude / p;
  fit.fitted = AsymmetrySpec{.r = r, .p = p > 0.0 ? p : 1.0, .c = std::max(c, 1.0 + 1e-12),
                             .zeta = zeta};
  fit.verdict.spec = fit.fitted;
  fit.verdict.holds = c > policy.accept_c;
  return fit;
}

std::optional<FittedDirection> find_asymmetric_direction(const LandscapeModel& model,
                                                         std::span<const double> center,
                                                         const FitPolicy& policy,
                                                         std::size_t trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("find_asymmetric_direction: trials must be >= 1");
  for (std::size_t t = 0; t < trials; ++t) {
    Direction dir = sample_direction(DirectionKind::RandomUnitInterval, model.dim(),
                                     mix_seed(seed, t));
    FittedDirection fit = fit_direction(model, center, std::move(dir), policy);
    if (fit.verdict.holds) {
      fit.trial = t;
      return fit;
    }
  }
  return std::nullopt;
}

NeighborhoodReport verify_neighborhood_asymmetry(const LandscapeModel& model,
                                                 std::span<const double> center,
                                                 std::span<const double> u,
                                                 const AsymmetrySpec& spec, double r_prime,
                                                 std::size_t n_samples, std::uint64_t seed,
                                                 std::size_t grid_points,
                                                 std::size_t profile_steps) {
  if (n_samples < 1) throw std::invalid_argument("verify_neighborhood_asymmetry: need samples");
  if (profile_steps % 2 == 0) ++profile_steps;  // keep offset 0 on the grid
  if (r_prime < 0.0) throw std::invalid_argument("verify_neighborhood_asymmetry: r_prime >= 0");

  NeighborhoodReport rep;
  rep.n_samples = n_samples;
  rep.offsets = linspace(-spec.r, spec.r, profile_steps);
  rep.mean_profile.assign(profile_steps, 0.0);
  rep.variance_profile.assign(profile_steps, 0.0);
  std::vector<std::vector<double>> centered(n_samples);

  const std::size_t dim = model.dim();
  std::size_t holds = 0;
  const std::size_t mid = profile_steps / 2;
  for (std::size_t s = 0; s < n_samples; ++s) {
    Rng rng = Rng::substream(seed, s);
    std::vector<double> v(dim, 0.0);
    if (r_prime > 0.0) {
      for (double& x : v) x = rng.gaussian();
      const double n = norm2(v);
      const double rad =
          r_prime * std::pow(rng.uniform_open01(), 1.0 / static_cast<double>(dim));
      for (double& x : v) x *= n > 0.0 ? rad / n : 0.0;
    }
    // Remove the component along u: the basepoint moves only orthogonally.
    const double along = dot(v, u);
    std::vector<double> base = axpy(center, 1.0, v);
    for (std::size_t i = 0; i < dim; ++i) base[i] -= along * u[i];

    if (classify_direction(model, base, u, spec, grid_points).holds) ++holds;

    SliceProfile prof = slice(model, base, u, -spec.r, spec.r, profile_steps);
    centered[s] = prof.values;
    const double at_zero = prof.values[mid];
    for (std::size_t j = 0; j < profile_steps; ++j) {
      rep.mean_profile[j] += prof.values[j];
      centered[s][j] -= at_zero;
    }
  }
  rep.holds_fraction = static_cast<double>(holds) / static_cast<double>(n_samples);
  for (std::size_t j = 0; j < profile_steps; ++j) {
    rep.mean_profile[j] /= static_cast<double>(n_samples);
  }
  // Variance of the vertically aligned slices; exactly zero for separable
  // models where every neighboring slice is a translate.
  for (std::size_t j = 0; j < profile_steps; ++j) {
    double mean_c = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) mean_c += centered[s][j];
    mean_c /= static_cast<double>(n_samples);
    double ss = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
      const double d = centered[s][j] - mean_c;
      ss += d * d;
    }
    rep.variance_profile[j] = ss / static_cast<double>(n_samples);
  }
  return rep;
}

InterpolationResult interpolate(const LandscapeModel& model, std::span<const double> params_a,
                                std::span<const double> params_b, double lo, double hi,
                                std::size_t steps, const LandscapeModel* second) {
  if (params_a.size() != params_b.size())
    throw std::invalid_argument("interpolate: parameter size mismatch");
  if (!(lo <= 0.0) || !(hi >= 1.0))
    throw std::invalid_argument("interpolate: range must cover [0, 1]");

  std::vector<double> dir(params_a.size());
  for (std::size_t i = 0; i < dir.size(); ++i) dir[i] = params_b[i] - params_a[i];

  InterpolationResult res;
  res.profile = slice(model, params_a, dir, lo, hi, steps, second);
  res.end_a = model.loss(params_a);
  res.end_b = model.loss(params_b);

  double interior_max = -std::numeric_limits<double>::infinity();
  double seg_min = std::min(res.end_a, res.end_b);
  double seg_max = std::max(res.end_a, res.end_b);
  for (std::size_t j = 0; j < res.profile.offsets.size(); ++j) {
    const double t = res.profile.offsets[j];
    if (t <= 0.0 || t >= 1.0 || !res.profile.finite[j]) continue;
    interior_max = std::max(interior_max, res.profile.values[j]);
    seg_min = std::min(seg_min, res.profile.values[j]);
    seg_max = std::max(seg_max, res.profile.values[j]);
  }
  const double range = seg_max - seg_min;
  const double threshold = std::max(res.end_a, res.end_b) + 0.02 * range;
  if (std::isfinite(interior_max) && interior_max > threshold) {
    res.bump = true;
    res.bump_height = interior_max - std::max(res.end_a, res.end_b);
  }
  return res;
}

RayProfile random_ray_profile(const LandscapeModel& model, std::span<const double> center,
                              std::size_t n_rays, std::span<const double> radii,
                              std::uint64_t seed) {
  if (n_rays < 2) throw std::invalid_argument("random_ray_profile: need at least 2 rays");
  if (radii.empty()) throw std::invalid_argument("random_ray_profile: empty radius grid");
  RayProfile prof;
  prof.n_rays = n_rays;
  prof.radii.assign(radii.begin(), radii.end());
  prof.mean.assign(radii.size(), 0.0);
  prof.stderr_.assign(radii.size(), 0.0);

  std::vector<double> sum(radii.size(), 0.0);
  std::vector<double> sum_sq(radii.size(), 0.0);
  const std::size_t dim = model.dim();
  for (std::size_t ray = 0; ray < n_rays; ++ray) {
    Rng rng = Rng::substream(seed, ray);
    std::vector<double> g(dim);
    for (double& x : g) x = rng.gaussian();
    normalize(g);
    for (std::size_t j = 0; j < prof.radii.size(); ++j) {
      const double v = model.loss(axpy(center, prof.radii[j], g));
      sum[j] += v;
      sum_sq[j] += v * v;
    }
  }
  const double n = static_cast<double>(n_rays);
  for (std::size_t j = 0; j < prof.radii.size(); ++j) {
    prof.mean[j] = sum[j] / n;
    const double var = std::max(0.0, (sum_sq[j] - sum[j] * sum[j] / n) / (n - 1.0));
    prof.stderr_[j] = std::sqrt(var / n);
  }
  return prof;
}

StabilityReport projected_slice_stability(const LandscapeModel& model,
                                          std::span<const std::vector<double>> checkpoints,
                                          std::span<const double> u, double lo, double hi,
                                          std::size_t steps) {
  if (checkpoints.size() < 2)
    throw std::invalid_argument("projected_slice_stability: need at least 2 checkpoints");
  StabilityReport rep;
  rep.profiles.reserve(checkpoints.size());
  for (const auto& cp : checkpoints) {
    rep.profiles.push_back(slice(model, cp, u, lo, hi, steps));
  }
  const auto sup_diff = [&](std::size_t a, std::size_t b) {
    double m = 0.0;
    for (std::size_t j = 0; j < steps; ++j) {
      m = std::max(m, std::abs(rep.profiles[a].values[j] - rep.profiles[b].values[j]));
    }
    return m;
  };
  const std::size_t half = checkpoints.size() / 2;
  for (std::size_t a = half; a < checkpoints.size(); ++a) {
    for (std::size_t b = a + 1; b < checkpoints.size(); ++b) {
      rep.stability_index = std::max(rep.stability_index, sup_diff(a, b));
    }
  }
  for (std::size_t a = 0; a < half; ++a) {
    for (std::size_t b = a + 1; b < half; ++b) {
      rep.early_index = std::max(rep.early_index, sup_diff(a, b));
    }
  }
  return rep;
}

BnComparison bn_direction_comparison(const LandscapeModel& model, std::span<const double> center,
                                     const ParamGroupMask& bn, const ParamGroupMask& non_bn,
                                     std::uint64_t seed, const FitPolicy& policy) {
  if (bn.count() == 0 || non_bn.count() == 0)
    throw std::invalid_argument("bn_direction_comparison: both groups must be non-empty");
  BnComparison cmp;
  cmp.bn = fit_direction(model, center,
                         sample_direction(DirectionKind::GroupMasked, model.dim(), seed, &bn),
                         policy);
  cmp.non_bn = fit_direction(
      model, center, sample_direction(DirectionKind::GroupMasked, model.dim(), seed, &non_bn),
      policy);
  return cmp;
}

}  // namespace valley::probes
