#include "valley/valley_models.hpp"

#include <cmath>
#include <stdexcept>

#include "valley/rng.hpp"

namespace valley {

namespace {

constexpr double kWobbleWavelength = 0.5;
constexpr double kTwoPi = 6.283185307179586476925286766559;

// Slope factors used when realizing an AsymmetrySpec. The definition only
// requires flat < p and sharp > c*p strictly; these factors leave enough
// margin that classification stays robustly false under the p/2 and 2c
// perturbations used by the verification suite.
constexpr double kSpecFlatFactor = 0.6;
constexpr double kSpecSharpFactor = 1.25;

void require_finite(double w) {
  if (!std::isfinite(w)) throw std::invalid_argument("1D model evaluated at non-finite position");
}

double wobble_integral(double m, double h, double w) {
  // integral_0^w of m + h*sin(2*pi*t/lambda) dt
  const double k = kTwoPi / kWobbleWavelength;
  return m * w + h * (1.0 - std::cos(k * w)) / k;
}

double wobble_grad(double m, double h, double w) {
  return m + h * std::sin(kTwoPi / kWobbleWavelength * w);
}

}  // namespace

void AsymmetrySpec::validate() const {
  if (!(p > 0.0)) throw std::invalid_argument("AsymmetrySpec: p must be > 0");
  if (!(c > 1.0)) throw std::invalid_argument("AsymmetrySpec: c must be > 1");
  if (!(zeta >= 0.0)) throw std::invalid_argument("AsymmetrySpec: zeta must be >= 0");
  if (!(r > zeta)) throw std::invalid_argument("AsymmetrySpec: r must exceed zeta");
  if (!std::isfinite(r) || !std::isfinite(p) || !std::isfinite(c) || !std::isfinite(zeta))
    throw std::invalid_argument("AsymmetrySpec: non-finite field");
}

void GradientBounds::validate() const {
  if (!(b_plus > 0.0) || !(b_plus <= a_plus))
    throw std::invalid_argument("GradientBounds: need 0 < b_plus <= a_plus");
  if (!(a_minus < 0.0) || !(b_minus <= a_minus))
    throw std::invalid_argument("GradientBounds: need b_minus <= a_minus < 0");
  if (!(nu >= 0.0) || !(nu <= a_plus))
    throw std::invalid_argument("GradientBounds: need 0 <= nu <= a_plus");
}

PiecewiseValley1D::PiecewiseValley1D(GradientBounds bounds, GradientProfile profile)
    : bounds_(bounds), profile_(profile) {
  bounds_.validate();
}

double PiecewiseValley1D::grad(double w) const {
  require_finite(w);
  if (profile_ == GradientProfile::Tight) {
    return w >= 0.0 ? bounds_.a_plus : bounds_.a_minus;
  }
  if (w >= 0.0) {
    return wobble_grad(0.5 * (bounds_.a_plus + bounds_.b_plus),
                       0.5 * (bounds_.a_plus - bounds_.b_plus), w);
  }
  return wobble_grad(0.5 * (bounds_.a_minus + bounds_.b_minus),
                     0.5 * (bounds_.a_minus - bounds_.b_minus), w);
}

double PiecewiseValley1D::loss(double w) const {
  require_finite(w);
  if (profile_ == GradientProfile::Tight) {
    return w >= 0.0 ? bounds_.a_plus * w : bounds_.a_minus * w;
  }
  if (w >= 0.0) {
    return wobble_integral(0.5 * (bounds_.a_plus + bounds_.b_plus),
                           0.5 * (bounds_.a_plus - bounds_.b_plus), w);
  }
  return wobble_integral(0.5 * (bounds_.a_minus + bounds_.b_minus),
                         0.5 * (bounds_.a_minus - bounds_.b_minus), w);
}

SpecValley1D::SpecValley1D(AsymmetrySpec spec) : spec_(spec) {
  spec_.validate();
  flat_slope_ = kSpecFlatFactor * spec_.p;
  sharp_slope_ = kSpecSharpFactor * spec_.c * spec_.p;
}

double SpecValley1D::grad(double w) const {
  require_finite(w);
  const double z = spec_.zeta;
  if (w >= 0.0) {
    if (z > 0.0 && w < z) return flat_slope_ * (w / z);
    return flat_slope_;
  }
  if (z > 0.0 && w > -z) return sharp_slope_ * (w / z);
  return -sharp_slope_;
}

double SpecValley1D::loss(double w) const {
  require_finite(w);
  const double z = spec_.zeta;
  if (w >= 0.0) {
    if (z > 0.0 && w < z) return 0.5 * flat_slope_ * w * w / z;
    const double cap = z > 0.0 ? 0.5 * flat_slope_ * z : 0.0;
    return cap + flat_slope_ * (w - z);
  }
  if (z > 0.0 && w > -z) return 0.5 * sharp_slope_ * w * w / z;
  const double cap = z > 0.0 ? 0.5 * sharp_slope_ * z : 0.0;
  return cap + sharp_slope_ * (-w - z);
}

SymmetricFunction1D::SymmetricFunction1D(Kind kind, double slope) : kind_(kind), slope_(slope) {
  if (!(slope > 0.0) || !std::isfinite(slope))
    throw std::invalid_argument("SymmetricFunction1D: slope must be positive and finite");
}

double SymmetricFunction1D::loss(double w) const {
  require_finite(w);
  return slope_ * std::abs(w);
}

double SymmetricFunction1D::grad(double w) const {
  require_finite(w);
  return w >= 0.0 ? slope_ : -slope_;
}

double loss(const Loss1D& model, double w) {
  return std::visit([w](const auto& m) { return m.loss(w); }, model);
}

double grad(const Loss1D& model, double w) {
  return std::visit([w](const auto& m) { return m.grad(w); }, model);
}

PiecewiseValley1D default_asymmetric_valley() {
  return PiecewiseValley1D({.a_plus = 0.1, .b_plus = 0.1, .a_minus = -1.0, .b_minus = -1.0, .nu = 0.0});
}

SpecValley1D build_valley_from_spec(const AsymmetrySpec& spec) { return SpecValley1D(spec); }

std::optional<GradientBounds> effective_gradient_bounds(const Loss1D& model) {
  if (const auto* pw = std::get_if<PiecewiseValley1D>(&model)) return pw->bounds();
  if (const auto* sv = std::get_if<SpecValley1D>(&model)) {
    if (sv->spec().zeta != 0.0) return std::nullopt;  // ramp inside the dead zone breaks b_plus > 0
    return GradientBounds{.a_plus = sv->flat_slope(),
                          .b_plus = sv->flat_slope(),
                          .a_minus = -sv->sharp_slope(),
                          .b_minus = -sv->sharp_slope(),
                          .nu = 0.0};
  }
  if (const auto* sym = std::get_if<SymmetricFunction1D>(&model)) {
    return GradientBounds{.a_plus = sym->slope(),
                          .b_plus = sym->slope(),
                          .a_minus = -sym->slope(),
                          .b_minus = -sym->slope(),
                          .nu = 0.0};
  }
  return std::nullopt;
}

SeparableValleyND::SeparableValleyND(std::vector<Loss1D> axes,
                                     std::vector<std::vector<double>> directions,
                                     std::vector<double> base)
    : axes_(std::move(axes)), dirs_(std::move(directions)), base_(std::move(base)) {
  if (axes_.empty()) throw std::invalid_argument("SeparableValleyND: need at least one axis");
  if (dirs_.size() != axes_.size())
    throw std::invalid_argument("SeparableValleyND: one direction per axis required");
  const std::size_t d = base_.size();
  for (const auto& u : dirs_) {
    if (u.size() != d) throw std::invalid_argument("SeparableValleyND: direction dimension mismatch");
  }
  for (std::size_t i = 0; i < dirs_.size(); ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double g = dot(dirs_[i], dirs_[j]);
      const double expect = i == j ? 1.0 : 0.0;
      if (std::abs(g - expect) > 1e-10)
        throw std::invalid_argument("SeparableValleyND: directions must be orthonormal");
    }
  }
}

SeparableValleyND SeparableValleyND::embed(std::vector<Loss1D> axes, std::size_t dim,
                                           std::uint64_t seed, std::vector<double> base) {
  const std::size_t k = axes.size();
  if (dim < k) throw std::invalid_argument("SeparableValleyND::embed: dim must be >= number of axes");
  if (base.empty()) base.assign(dim, 0.0);
  if (base.size() != dim) throw std::invalid_argument("SeparableValleyND::embed: base dimension mismatch");

  Rng rng(mix_seed(seed, 0x5eaa11));
  std::vector<std::vector<double>> dirs;
  dirs.reserve(k);
  while (dirs.size() < k) {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.gaussian();
    for (const auto& u : dirs) {
      const double g = dot(v, u);
      for (std::size_t i = 0; i < dim; ++i) v[i] -= g * u[i];
    }
    const double n = norm2(v);
    if (n < 1e-8) continue;  // essentially colinear draw, retry
    for (auto& x : v) x /= n;
    dirs.push_back(std::move(v));
  }
  SeparableValleyND out(std::move(axes), std::move(dirs), std::move(base));
  out.seed_ = seed;
  return out;
}

double SeparableValleyND::loss(std::span<const double> w) const {
  if (w.size() != base_.size()) throw std::invalid_argument("SeparableValleyND: dimension mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < axes_.size(); ++i) {
    total += valley::loss(axes_[i], axis_coordinate(w, i));
  }
  return total;
}

double SeparableValleyND::directional_grad(std::span<const double> w, std::span<const double> u,
                                           double /*h*/) const {
  double total = 0.0;
  for (std::size_t i = 0; i < axes_.size(); ++i) {
    total += valley::grad(axes_[i], axis_coordinate(w, i)) * dot(dirs_[i], u);
  }
  return total;
}

double SeparableValleyND::axis_coordinate(std::span<const double> w, std::size_t i) const {
  const auto& u = dirs_.at(i);
  double t = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) t += (w[j] - base_[j]) * u[j];
  return t;
}

std::vector<double> SeparableValleyND::point_at(std::span<const double> axis_coords) const {
  if (axis_coords.size() != axes_.size())
    throw std::invalid_argument("SeparableValleyND::point_at: coordinate count mismatch");
  std::vector<double> w = base_;
  for (std::size_t i = 0; i < axis_coords.size(); ++i) {
    for (std::size_t j = 0; j < w.size(); ++j) w[j] += axis_coords[i] * dirs_[i][j];
  }
  return w;
}

nlohmann::json to_json(const GradientBounds& b) {
  return {{"a_plus", b.a_plus}, {"b_plus", b.b_plus}, {"a_minus", b.a_minus},
          {"b_minus", b.b_minus}, {"nu", b.nu}};
}

GradientBounds bounds_from_json(const nlohmann::json& doc) {
  GradientBounds b{.a_plus = doc.at("a_plus").get<double>(),
                   .b_plus = doc.at("b_plus").get<double>(),
                   .a_minus = doc.at("a_minus").get<double>(),
                   .b_minus = doc.at("b_minus").get<double>(),
                   .nu = doc.value("nu", 0.0)};
  b.validate();
  return b;
}

nlohmann::json to_json(const Loss1D& model) {
  if (const auto* pw = std::get_if<PiecewiseValley1D>(&model)) {
    return {{"kind", "piecewise"},
            {"bounds", to_json(pw->bounds())},
            {"profile", pw->profile() == GradientProfile::Tight ? "tight" : "wobble"}};
  }
  if (const auto* sv = std::get_if<SpecValley1D>(&model)) {
    const auto& s = sv->spec();
    return {{"kind", "asymmetric_spec"}, {"spec", {s.r, s.p, s.c, s.zeta}}};
  }
  const auto& sym = std::get<SymmetricFunction1D>(model);
  return {{"kind", sym.kind() == SymmetricFunction1D::Kind::FlatSided ? "symmetric_flat"
                                                                      : "symmetric_sharp"},
          {"slope", sym.slope()}};
}

Loss1D loss1d_from_json(const nlohmann::json& doc) {
  const std::string kind = doc.at("kind").get<std::string>();
  if (kind == "piecewise") {
    const auto profile = doc.value("profile", std::string("tight")) == "wobble"
                             ? GradientProfile::Wobble
                             : GradientProfile::Tight;
    return PiecewiseValley1D(bounds_from_json(doc.at("bounds")), profile);
  }
  if (kind == "asymmetric_spec") {
    const auto arr = doc.at("spec");
    if (!arr.is_array() || arr.size() != 4)
      throw std::invalid_argument("valley json: \"spec\" must be [r, p, c, zeta]");
    return SpecValley1D(AsymmetrySpec{.r = arr[0], .p = arr[1], .c = arr[2], .zeta = arr[3]});
  }
  if (kind == "symmetric_flat" || kind == "symmetric_sharp") {
    return SymmetricFunction1D(kind == "symmetric_flat" ? SymmetricFunction1D::Kind::FlatSided
                                                        : SymmetricFunction1D::Kind::SharpSided,
                               doc.at("slope").get<double>());
  }
  throw std::invalid_argument("valley json: unknown kind \"" + kind + "\"");
}

nlohmann::json to_json(const SeparableValleyND& valley) {
  nlohmann::json axes = nlohmann::json::array();
  for (std::size_t i = 0; i < valley.num_axes(); ++i) axes.push_back(to_json(valley.axis(i)));
  return {{"kind", "separable"}, {"axes", axes}, {"dim", valley.dim()}, {"seed", valley.seed()}};
}

SeparableValleyND separable_from_json(const nlohmann::json& doc) {
  if (doc.value("kind", std::string()) != "separable")
    throw std::invalid_argument("valley json: expected kind \"separable\"");
  std::vector<Loss1D> axes;
  for (const auto& a : doc.at("axes")) axes.push_back(loss1d_from_json(a));
  return SeparableValleyND::embed(std::move(axes), doc.at("dim").get<std::size_t>(),
                                  doc.at("seed").get<std::uint64_t>());
}

}  // namespace valley
