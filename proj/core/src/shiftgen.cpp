#include "valley/shiftgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "valley/parallel.hpp"
#include "valley/rng.hpp"

namespace valley::shift {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Kahan {
  double sum = 0.0;
  double carry = 0.0;
  void add(double x) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
};

std::vector<double> linspace(double lo, double hi, std::size_t steps) {
  if (steps < 2) throw std::invalid_argument("linspace: need at least 2 steps");
  std::vector<double> xs(steps);
  for (std::size_t j = 0; j < steps; ++j) {
    xs[j] = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(steps - 1);
  }
  return xs;
}

AxisInfo derive_axis_info(const Loss1D& axis) {
  AxisInfo info;
  if (const auto* pw = std::get_if<PiecewiseValley1D>(&axis)) {
    info.p = pw->bounds().a_plus;
    info.c = pw->bounds().asymmetry_ratio();
    info.zeta = 0.0;
    info.r = std::numeric_limits<double>::infinity();
    info.flat_slope = pw->bounds().a_plus;
    info.sharp_slope = -pw->bounds().a_minus;
  } else if (const auto* sv = std::get_if<SpecValley1D>(&axis)) {
    info.p = sv->spec().p;
    info.c = sv->spec().c;
    info.zeta = sv->spec().zeta;
    info.r = sv->spec().r;
    info.flat_slope = sv->flat_slope();
    info.sharp_slope = sv->sharp_slope();
  } else {
    const auto& sym = std::get<SymmetricFunction1D>(axis);
    info.p = sym.slope();
    info.c = 1.0;
    info.zeta = 0.0;
    info.r = std::numeric_limits<double>::infinity();
    info.flat_slope = sym.slope();
    info.sharp_slope = sym.slope();
  }
  return info;
}

class EmpiricalPatternModel final : public LandscapeModel {
 public:
  EmpiricalPatternModel(const ShiftModel& model, std::uint32_t pattern)
      : model_(&model), pattern_(pattern) {}
  [[nodiscard]] std::size_t dim() const override { return model_->population().dim(); }
  [[nodiscard]] double loss(std::span<const double> w) const override {
    return model_->empirical_loss(pattern_, w);
  }

 private:
  const ShiftModel* model_;
  std::uint32_t pattern_;
};

}  // namespace

SamplingPlan SamplingPlan::along_direction(std::span<const double> u, double radius,
                                           std::size_t steps) {
  SamplingPlan plan;
  for (double t : linspace(-radius, radius, steps)) {
    std::vector<double> v(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) v[i] = t * u[i];
    plan.offsets.push_back(std::move(v));
  }
  plan.description = "line(" + std::to_string(steps) + ",R=" + std::to_string(radius) + ")";
  return plan;
}

SamplingPlan SamplingPlan::ball(std::size_t dim, double radius, std::size_t samples,
                                std::uint64_t seed) {
  SamplingPlan plan;
  Rng rng(mix_seed(seed, 0xba11));
  for (std::size_t s = 0; s < samples; ++s) {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.gaussian();
    const double n = norm2(v);
    const double rad = radius * std::pow(rng.uniform_open01(), 1.0 / static_cast<double>(dim));
    for (auto& x : v) x *= n > 0.0 ? rad / n : 0.0;
    plan.offsets.push_back(std::move(v));
  }
  plan.description = "ball(" + std::to_string(samples) + ",R=" + std::to_string(radius) + ")";
  return plan;
}

void SamplingPlan::append(const SamplingPlan& other) {
  offsets.insert(offsets.end(), other.offsets.begin(), other.offsets.end());
  description += "+" + other.description;
}

ShiftGapResult shift_gap(const LandscapeModel& population, const LandscapeModel& empirical,
                         std::span<const double> center, std::span<const double> delta,
                         double radius, const SamplingPlan& plan,
                         std::optional<double> known_min_l,
                         std::optional<double> known_min_l_hat) {
  if (plan.offsets.empty()) throw std::invalid_argument("shift_gap: empty sampling plan");
  if (radius < 0.0) throw std::invalid_argument("shift_gap: radius must be >= 0");

  std::vector<double> pop_vals;
  std::vector<double> emp_vals;
  pop_vals.reserve(plan.offsets.size());
  emp_vals.reserve(plan.offsets.size());
  for (const auto& v : plan.offsets) {
    if (norm2(v) > radius * (1.0 + 1e-12) + 1e-300) continue;  // stay inside the ball
    std::vector<double> at_emp = axpy(center, 1.0, v);
    std::vector<double> at_pop = axpy(at_emp, 1.0, delta);
    pop_vals.push_back(population.loss(at_pop));
    emp_vals.push_back(empirical.loss(at_emp));
  }
  if (pop_vals.empty()) throw std::invalid_argument("shift_gap: no plan offsets inside the ball");

  ShiftGapResult res;
  res.delta.assign(delta.begin(), delta.end());
  res.grid_description = plan.description;
  res.min_l = known_min_l ? *known_min_l : *std::min_element(pop_vals.begin(), pop_vals.end());
  res.min_l_hat =
      known_min_l_hat ? *known_min_l_hat : *std::min_element(emp_vals.begin(), emp_vals.end());
  res.min_method = known_min_l && known_min_l_hat ? "exact" : "grid";

  double gap = 0.0;
  for (std::size_t i = 0; i < pop_vals.size(); ++i) {
    const double normalized = pop_vals[i] - res.min_l + res.min_l_hat;
    gap = std::max(gap, std::abs(normalized - emp_vals[i]));
  }
  res.gap = gap;
  return res;
}

ShiftScan scan_shift(const LandscapeModel& population, const LandscapeModel& empirical,
                     std::span<const double> center, std::span<const double> u, double delta_lo,
                     double delta_hi, std::size_t steps, double window_radius,
                     std::size_t window_steps, std::optional<double> known_min_l,
                     std::optional<double> known_min_l_hat) {
  const SamplingPlan plan = SamplingPlan::along_direction(u, window_radius, window_steps);
  const auto gap_at = [&](double d) {
    std::vector<double> delta(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) delta[i] = d * u[i];
    return shift_gap(population, empirical, center, delta, window_radius, plan, known_min_l,
                     known_min_l_hat)
        .gap;
  };

  ShiftScan scan;
  scan.gap_at_zero = gap_at(0.0);
  scan.degenerate_zero_gap = !(scan.gap_at_zero > 1e-15);
  scan.deltas = linspace(delta_lo, delta_hi, steps);
  scan.gaps.reserve(steps);
  scan.ratios.reserve(steps);
  scan.min_gap = std::numeric_limits<double>::infinity();
  for (double d : scan.deltas) {
    const double g = gap_at(d);
    scan.gaps.push_back(g);
    scan.ratios.push_back(scan.degenerate_zero_gap ? std::numeric_limits<double>::quiet_NaN()
                                                   : g / scan.gap_at_zero);
    if (g < scan.min_gap) {
      scan.min_gap = g;
      scan.argmin_delta = d;
    }
  }
  return scan;
}

ShiftedModel::ShiftedModel(const LandscapeModel& base, std::vector<double> shift)
    : base_(&base), shift_(std::move(shift)) {
  if (shift_.size() != base.dim()) throw std::invalid_argument("ShiftedModel: dimension mismatch");
}

double ShiftedModel::loss(std::span<const double> w) const {
  return base_->loss(axpy(w, 1.0, shift_));
}

ShiftModel::ShiftModel(SeparableValleyND population, std::vector<double> delta_bar, double xi,
                       std::uint64_t seed, double radius)
    : population_(std::move(population)), xi_(xi), seed_(seed) {
  const std::size_t k = population_.num_axes();
  if (delta_bar.size() != k)
    throw std::invalid_argument("ShiftModel: one delta_bar entry per axis required");
  if (xi < 0.0) throw std::invalid_argument("ShiftModel: xi must be >= 0");

  axes_.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    AxisInfo info = derive_axis_info(population_.axis(i));
    info.delta_bar = delta_bar[i];
    if (!(info.delta_bar >= info.zeta) || !(info.delta_bar <= info.r))
      throw std::invalid_argument("ShiftModel: need zeta <= delta_bar <= r on every axis");
    axes_.push_back(info);
  }

  double max_delta = 0.0;
  for (const auto& a : axes_) max_delta = std::max(max_delta, a.delta_bar);
  radius_ = radius > 0.0 ? radius : max_delta + 1.0;

  bumps_.assign(2 * k, {});
  if (xi_ > 0.0) {
    for (std::size_t i = 0; i < k; ++i) {
      const auto& a = axes_[i];
      const double margin =
          std::min(a.p - a.flat_slope, a.sharp_slope - a.c * a.p);
      if (!(margin > 0.0))
        throw std::invalid_argument(
            "ShiftModel: xi > 0 needs slope margins; tight axes cannot carry a perturbation");
      // Slopes inside the margins keep every direction asymmetric for every
      // pattern; the extra cap keeps the empirical minimizer inside the
      // dead zone (drift <= zeta/4).
      const double slope_budget = std::min(0.8 * margin, 0.25 * a.flat_slope);
      const double amp_budget = xi_ / static_cast<double>(k);
      for (int sign = 0; sign < 2; ++sign) {
        Rng rng = Rng::substream(seed, 0xb0b0 + 2 * i + static_cast<std::size_t>(sign));
        double weights[3];
        double wsum = 0.0;
        for (double& w : weights) {
          w = rng.uniform(0.5, 1.0);
          wsum += w;
        }
        auto& list = bumps_[2 * i + static_cast<std::size_t>(sign)];
        const double span = a.delta_bar + radius_;
        for (double w : weights) {
          Bump b;
          b.amplitude = amp_budget * w / wsum;
          b.half_width = std::max(b.amplitude * kPi / (2.0 * slope_budget / 3.0), 0.05);
          b.center = rng.uniform(-span, span);
          list.push_back(b);
        }
      }
    }
  }

  minimizers_.assign(2 * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (int sign = 0; sign < 2; ++sign) {
      const bool positive = sign == 1;
      const double shift_i = positive ? axes_[i].delta_bar : -axes_[i].delta_bar;
      const double zeta = axes_[i].zeta;
      const auto& list = bumps_[2 * i + static_cast<std::size_t>(sign)];
      if (list.empty() || zeta == 0.0) {
        // Perturbation slopes are below both valley slopes, so the kink at
        // -shift stays the exact minimizer when there is no dead zone.
        minimizers_[2 * i + static_cast<std::size_t>(sign)] = -shift_i;
        continue;
      }
      const double lo = -shift_i - zeta;
      const double hi = -shift_i + zeta;
      const auto f = [&](double t) { return empirical_axis_loss(i, positive, t); };
      constexpr std::size_t kGrid = 2048;
      double best_t = lo;
      double best_f = f(lo);
      for (std::size_t j = 1; j <= kGrid; ++j) {
        const double t = lo + (hi - lo) * static_cast<double>(j) / kGrid;
        const double v = f(t);
        if (v < best_f) {
          best_f = v;
          best_t = t;
        }
      }
      double a = std::max(lo, best_t - (hi - lo) / kGrid);
      double b = std::min(hi, best_t + (hi - lo) / kGrid);
      // Golden-section refinement inside the winning bracket.
      constexpr double kGolden = 0.61803398874989484820;
      double x1 = b - kGolden * (b - a);
      double x2 = a + kGolden * (b - a);
      double f1 = f(x1);
      double f2 = f(x2);
      while (b - a > 1e-12) {
        if (f1 < f2) {
          b = x2;
          x2 = x1;
          f2 = f1;
          x1 = b - kGolden * (b - a);
          f1 = f(x1);
        } else {
          a = x1;
          x1 = x2;
          f1 = f2;
          x2 = a + kGolden * (b - a);
          f2 = f(x2);
        }
      }
      minimizers_[2 * i + static_cast<std::size_t>(sign)] = 0.5 * (a + b);
    }
  }
}

double ShiftModel::perturbation(std::size_t axis, bool positive, double t) const {
  const auto& list = bumps_[2 * axis + (positive ? 1u : 0u)];
  double total = 0.0;
  for (const auto& b : list) {
    const double y = (t - b.center) / b.half_width;
    if (y > -1.0 && y < 1.0) total += b.amplitude * 0.5 * (1.0 + std::cos(kPi * y));
  }
  return total;
}

double ShiftModel::empirical_axis_loss(std::size_t axis, bool positive, double t) const {
  const double shift = positive ? axes_[axis].delta_bar : -axes_[axis].delta_bar;
  return valley::loss(population_.axis(axis), t + shift) + perturbation(axis, positive, t);
}

double ShiftModel::empirical_loss(std::uint32_t pattern, std::span<const double> x) const {
  double total = 0.0;
  for (std::size_t i = 0; i < axes_.size(); ++i) {
    const bool positive = (pattern >> i) & 1u;
    total += empirical_axis_loss(i, positive, population_.axis_coordinate(x, i));
  }
  return total;
}

double ShiftModel::empirical_axis_minimizer(std::size_t axis, bool positive) const {
  return minimizers_.at(2 * axis + (positive ? 1u : 0u));
}

std::vector<double> ShiftModel::empirical_minimizer_coords(std::uint32_t pattern) const {
  std::vector<double> coords(axes_.size());
  for (std::size_t i = 0; i < axes_.size(); ++i) {
    coords[i] = empirical_axis_minimizer(i, (pattern >> i) & 1u);
  }
  return coords;
}

std::vector<double> ShiftModel::empirical_minimizer(std::uint32_t pattern) const {
  return population_.point_at(empirical_minimizer_coords(pattern));
}

std::unique_ptr<LandscapeModel> ShiftModel::empirical_model(std::uint32_t pattern) const {
  return std::make_unique<EmpiricalPatternModel>(*this, pattern);
}

double ShiftModel::max_measured_shift_gap(std::size_t grid_points) const {
  const std::size_t k = axes_.size();
  if (k > 20) throw std::invalid_argument("max_measured_shift_gap: enumeration budget is k <= 20");
  const std::size_t patterns = std::size_t{1} << k;
  const std::size_t per_axis = std::max<std::size_t>(grid_points / k, 8);

  double worst = 0.0;
  for (std::size_t s = 0; s < patterns; ++s) {
    const auto pattern = static_cast<std::uint32_t>(s);
    const auto wstar = empirical_minimizer_coords(pattern);
    // Offsets along each axis through the empirical minimizer, plus the
    // minimizer itself so the grid minimum of L_hat is exact.
    std::vector<std::vector<double>> coords;
    coords.push_back(wstar);
    for (std::size_t i = 0; i < k; ++i) {
      for (double t : linspace(-radius_, radius_, per_axis)) {
        auto c = wstar;
        c[i] += t;
        coords.push_back(std::move(c));
      }
    }
    double min_emp = std::numeric_limits<double>::infinity();
    std::vector<double> pop_vals(coords.size());
    std::vector<double> emp_vals(coords.size());
    for (std::size_t j = 0; j < coords.size(); ++j) {
      double pop = 0.0;
      double emp = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        const bool positive = (pattern >> i) & 1u;
        const double shift = positive ? axes_[i].delta_bar : -axes_[i].delta_bar;
        pop += valley::loss(population_.axis(i), coords[j][i] + shift);
        emp += empirical_axis_loss(i, positive, coords[j][i]);
      }
      pop_vals[j] = pop;
      emp_vals[j] = emp;
      min_emp = std::min(min_emp, emp);
    }
    // Population minimum is exactly 0 by construction; L' = L + min L_hat.
    for (std::size_t j = 0; j < coords.size(); ++j) {
      worst = std::max(worst, std::abs(pop_vals[j] + min_emp - emp_vals[j]));
    }
  }
  return worst;
}

theory::GapBoundConfig ShiftModel::bound_config(std::span<const double> bias) const {
  const std::size_t k = axes_.size();
  if (bias.size() != k) throw std::invalid_argument("bound_config: bias length mismatch");
  theory::GapBoundConfig cfg;
  cfg.xi = xi_;
  cfg.r = std::numeric_limits<double>::infinity();
  cfg.zeta = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    cfg.c.push_back(axes_[i].c);
    cfg.p.push_back(axes_[i].p);
    cfg.l.push_back(bias[i]);
    cfg.delta_bar.push_back(axes_[i].delta_bar);
    cfg.r = std::min(cfg.r, axes_[i].r);
    cfg.zeta = std::max(cfg.zeta, axes_[i].zeta);
  }
  return cfg;
}

namespace {

// Per-axis population losses at the empirical minimizer and at the biased
// point, for both coordinate signs. All enumeration sums run off these.
struct GapTables {
  std::vector<double> at_min[2];
  std::vector<double> at_bias[2];
};

GapTables build_tables(const ShiftModel& model, std::span<const double> bias) {
  const std::size_t k = model.num_directions();
  GapTables t;
  for (int s = 0; s < 2; ++s) {
    t.at_min[s].resize(k);
    t.at_bias[s].resize(k);
  }
  for (std::size_t i = 0; i < k; ++i) {
    for (int s = 0; s < 2; ++s) {
      const double tmin = model.empirical_axis_minimizer(i, s == 1);
      t.at_min[s][i] = valley::loss(model.population().axis(i), tmin);
      t.at_bias[s][i] = valley::loss(model.population().axis(i), tmin + bias[i]);
    }
  }
  return t;
}

ExpectedLossGap finalize(const ShiftModel& model, std::span<const double> bias,
                         ExpectedLossGap partial) {
  partial.bound = theory::theorem_one_lower_bound(model.bound_config(bias));
  partial.bound_value = partial.bound.bound_value;
  return partial;
}

}  // namespace

ExpectedLossGap enumerate_expected_losses(const ShiftModel& model, std::span<const double> bias) {
  const std::size_t k = model.num_directions();
  if (k > 20) throw std::invalid_argument("enumerate_expected_losses: enumeration budget is k <= 20");
  if (bias.size() != k) throw std::invalid_argument("enumerate_expected_losses: bias length mismatch");
  for (std::size_t i = 0; i < k; ++i) {
    if (!(model.axis_info(i).c > 1.0))
      throw std::invalid_argument("enumerate_expected_losses: every axis must be asymmetric (c > 1)");
  }

  const GapTables tables = build_tables(model, bias);
  const std::size_t patterns = std::size_t{1} << k;

  constexpr std::size_t kChunk = 1 << 12;
  const std::size_t n_chunks = (patterns + kChunk - 1) / kChunk;
  std::vector<double> chunk_min(n_chunks, 0.0);
  std::vector<double> chunk_bias(n_chunks, 0.0);
  for_chunks(patterns, kChunk, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
    Kahan sum_min;
    Kahan sum_bias;
    for (std::size_t s = begin; s < end; ++s) {
      double v_min = 0.0;
      double v_bias = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t bit = (s >> i) & 1u;
        v_min += tables.at_min[bit][i];
        v_bias += tables.at_bias[bit][i];
      }
      sum_min.add(v_min);
      sum_bias.add(v_bias);
    }
    chunk_min[chunk] = sum_min.sum;
    chunk_bias[chunk] = sum_bias.sum;
  });

  Kahan total_min;
  Kahan total_bias;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    total_min.add(chunk_min[c]);
    total_bias.add(chunk_bias[c]);
  }

  ExpectedLossGap out;
  out.samples = patterns;
  out.at_minimizer = total_min.sum / static_cast<double>(patterns);
  out.at_biased = total_bias.sum / static_cast<double>(patterns);
  out.gap = out.at_minimizer - out.at_biased;
  out.stderr_gap = 0.0;
  return finalize(model, bias, out);
}

ExpectedLossGap monte_carlo_expected_losses(const ShiftModel& model, std::span<const double> bias,
                                            std::size_t n_samples, std::uint64_t seed) {
  const std::size_t k = model.num_directions();
  if (bias.size() != k)
    throw std::invalid_argument("monte_carlo_expected_losses: bias length mismatch");
  if (n_samples < 100)
    throw std::invalid_argument("monte_carlo_expected_losses: need at least 100 samples");
  for (std::size_t i = 0; i < k; ++i) {
    if (!(model.axis_info(i).c > 1.0))
      throw std::invalid_argument("monte_carlo_expected_losses: every axis must be asymmetric");
  }

  const GapTables tables = build_tables(model, bias);

  struct Chunk {
    Kahan sum_min, sum_bias, sum_gap, sum_gap_sq;
  };
  constexpr std::size_t kChunk = 1 << 12;
  const std::size_t n_chunks = (n_samples + kChunk - 1) / kChunk;
  std::vector<Chunk> chunks(n_chunks);
  for_chunks(n_samples, kChunk, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
    auto& acc = chunks[chunk];
    for (std::size_t s = begin; s < end; ++s) {
      Rng rng = Rng::substream(seed, s);
      std::uint64_t bits = rng.next_u64();
      double v_min = 0.0;
      double v_bias = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        if (i > 0 && i % 64 == 0) bits = rng.next_u64();
        const std::size_t bit = (bits >> (i % 64)) & 1u;
        v_min += tables.at_min[bit][i];
        v_bias += tables.at_bias[bit][i];
      }
      acc.sum_min.add(v_min);
      acc.sum_bias.add(v_bias);
      acc.sum_gap.add(v_min - v_bias);
      acc.sum_gap_sq.add((v_min - v_bias) * (v_min - v_bias));
    }
  });

  Kahan total_min, total_bias, total_gap, total_gap_sq;
  for (const auto& c : chunks) {
    total_min.add(c.sum_min.sum);
    total_bias.add(c.sum_bias.sum);
    total_gap.add(c.sum_gap.sum);
    total_gap_sq.add(c.sum_gap_sq.sum);
  }

  const double n = static_cast<double>(n_samples);
  ExpectedLossGap out;
  out.samples = n_samples;
  out.at_minimizer = total_min.sum / n;
  out.at_biased = total_bias.sum / n;
  out.gap = total_gap.sum / n;
  const double var = std::max(0.0, (total_gap_sq.sum - total_gap.sum * total_gap.sum / n) / (n - 1.0));
  out.stderr_gap = std::sqrt(var / n);
  return finalize(model, bias, out);
}

ShiftModel build_shift_pair(const SeparableValleyND& valley, std::vector<double> delta_bar,
                            double xi, std::uint64_t seed, double radius) {
  return ShiftModel(valley, std::move(delta_bar), xi, seed, radius);
}

TheoremOneInstance make_theorem_one_instance(std::span<const double> c, std::span<const double> p,
                                             std::span<const double> delta_bar,
                                             std::span<const double> l, double xi,
                                             std::uint64_t seed, std::size_t embed_dim) {
  const std::size_t k = c.size();
  if (k == 0 || p.size() != k || delta_bar.size() != k || l.size() != k)
    throw std::invalid_argument("make_theorem_one_instance: c, p, delta_bar, l must share length");
  std::vector<Loss1D> axes;
  axes.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (!(l[i] <= delta_bar[i]))
      throw std::invalid_argument(
          "make_theorem_one_instance: need l_i <= delta_bar_i so the biased point stays in the "
          "certified range");
    if (xi == 0.0) {
      axes.emplace_back(PiecewiseValley1D({.a_plus = p[i],
                                           .b_plus = p[i],
                                           .a_minus = -c[i] * p[i],
                                           .b_minus = -c[i] * p[i],
                                           .nu = 0.0}));
    } else {
      axes.emplace_back(SpecValley1D(
          AsymmetrySpec{.r = delta_bar[i] + l[i] + 1.0, .p = p[i], .c = c[i], .zeta = 0.0}));
    }
  }
  const std::size_t dim = embed_dim == 0 ? k : embed_dim;
  double l_norm = 0.0;
  for (double x : l) l_norm += x * x;
  SeparableValleyND valley = SeparableValleyND::embed(std::move(axes), dim, seed);
  ShiftModel model(std::move(valley), {delta_bar.begin(), delta_bar.end()}, xi, seed + 1,
                   std::sqrt(l_norm) + 1.0);
  return TheoremOneInstance{std::move(model), {l.begin(), l.end()}};
}

TheoremOneInstance random_theorem_one_instance(std::uint64_t seed, std::size_t k, double xi) {
  if (k == 0) throw std::invalid_argument("random_theorem_one_instance: k must be >= 1");
  Rng rng = Rng::substream(seed, 0x7e01);
  const bool margined = xi > 0.0 || (rng.next_u64() & 1u);

  std::vector<double> c(k), p(k), delta_bar(k), l(k);
  double min_delta = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i) {
    c[i] = rng.uniform(2.5, 8.0);
    p[i] = rng.uniform(0.05, 0.3);
    delta_bar[i] = rng.uniform(1.5, 3.0);
    min_delta = std::min(min_delta, delta_bar[i]);
  }
  const double zeta = margined ? 0.25 * min_delta : 0.0;
  std::vector<Loss1D> axes;
  axes.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    // Stay clear of the dead zone plus the perturbed minimizer's drift
    // allowance so the biased point remains on the linear sharp piece.
    const double upper = delta_bar[i] - 1.25 * zeta;
    const double lower = xi > 0.0 ? 4.0 * xi / ((c[i] - 1.0) * p[i]) : 0.05 * upper;
    if (!(lower < upper))
      throw std::logic_error("random_theorem_one_instance: infeasible bias range");
    l[i] = lower + rng.uniform(0.3, 0.9) * (upper - lower);
    if (margined) {
      axes.emplace_back(SpecValley1D(
          AsymmetrySpec{.r = delta_bar[i] + l[i] + 1.0, .p = p[i], .c = c[i], .zeta = zeta}));
    } else {
      axes.emplace_back(PiecewiseValley1D({.a_plus = p[i],
                                           .b_plus = p[i],
                                           .a_minus = -c[i] * p[i],
                                           .b_minus = -c[i] * p[i],
                                           .nu = 0.0}));
    }
  }
  const std::size_t dim = k + 2;
  double l_norm = 0.0;
  for (double x : l) l_norm += x * x;
  SeparableValleyND valley = SeparableValleyND::embed(std::move(axes), dim, mix_seed(seed, 2));
  ShiftModel model(std::move(valley), std::move(delta_bar), xi, mix_seed(seed, 3),
                   std::sqrt(l_norm) + 1.0);
  return TheoremOneInstance{std::move(model), std::move(l)};
}

}  // namespace valley::shift
