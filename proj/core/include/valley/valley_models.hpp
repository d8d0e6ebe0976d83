#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "valley/landscape.hpp"

namespace valley {

// The (r, p, c, zeta) tuple of an asymmetric direction: gradient stays below
// p on the flat side and below -c*p on the sharp side for offsets in
// (zeta, r).
struct AsymmetrySpec {
  double r = 1.0;     // probe length along the direction, > zeta
  double p = 0.1;     // flat-side gradient bound, > 0
  double c = 2.0;     // asymmetry ratio, > 1
  double zeta = 0.0;  // dead-zone radius around the minimizer, >= 0

  void validate() const;
};

// Side-wise gradient envelopes plus the noise magnitude nu that the
// oscillation analysis pairs with them.
struct GradientBounds {
  double a_plus;   // flat-side upper bound, > 0
  double b_plus;   // flat-side lower bound, 0 < b_plus <= a_plus
  double a_minus;  // sharp-side upper bound, < 0
  double b_minus;  // sharp-side lower bound, <= a_minus
  double nu;       // noise bound, 0 <= nu <= a_plus

  void validate() const;

  // -a_minus / a_plus; the asymmetry ratio the bounds certify.
  [[nodiscard]] double asymmetry_ratio() const { return -a_minus / a_plus; }
};

enum class GradientProfile {
  Tight,   // gradient pinned to a_plus / a_minus (sharpest constants)
  Wobble,  // sinusoid inside [b, a] on each side, exercises non-tight runs
};

// 1D valley with loss(0) = 0, minimized at 0, and side-wise gradients inside
// the declared bounds. The loss is the exact integral of the gradient rule.
class PiecewiseValley1D {
 public:
  PiecewiseValley1D(GradientBounds bounds, GradientProfile profile = GradientProfile::Tight);

  [[nodiscard]] double loss(double w) const;
  [[nodiscard]] double grad(double w) const;

  [[nodiscard]] const GradientBounds& bounds() const { return bounds_; }
  [[nodiscard]] GradientProfile profile() const { return profile_; }

 private:
  GradientBounds bounds_;
  GradientProfile profile_;
};

// Valley realizing a given AsymmetrySpec: constant slopes below the spec's
// bounds outside the dead zone, and a quadratic cap inside (-zeta, zeta)
// where the definition constrains nothing.
class SpecValley1D {
 public:
  explicit SpecValley1D(AsymmetrySpec spec);

  [[nodiscard]] double loss(double w) const;
  [[nodiscard]] double grad(double w) const;

  [[nodiscard]] const AsymmetrySpec& spec() const { return spec_; }
  [[nodiscard]] double flat_slope() const { return flat_slope_; }
  [[nodiscard]] double sharp_slope() const { return sharp_slope_; }

 private:
  AsymmetrySpec spec_;
  double flat_slope_;   // < p
  double sharp_slope_;  // magnitude, > c*p
};

// loss(w) = slope * |w|; the two Appendix-style symmetric cases differ only
// in the slope magnitude, the kind tag keeps reports readable.
class SymmetricFunction1D {
 public:
  enum class Kind { FlatSided, SharpSided };

  SymmetricFunction1D(Kind kind, double slope);

  [[nodiscard]] double loss(double w) const;
  [[nodiscard]] double grad(double w) const;

  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] double slope() const { return slope_; }

 private:
  Kind kind_;
  double slope_;
};

using Loss1D = std::variant<PiecewiseValley1D, SpecValley1D, SymmetricFunction1D>;

// Evaluation through the variant; rejects non-finite input.
[[nodiscard]] double loss(const Loss1D& model, double w);
[[nodiscard]] double grad(const Loss1D& model, double w);

[[nodiscard]] PiecewiseValley1D default_asymmetric_valley();  // a+ = 0.1, a- = -1.0
[[nodiscard]] SpecValley1D build_valley_from_spec(const AsymmetrySpec& spec);

// Gradient bounds certified by a 1D model, when it can serve as a theorem
// subject (requires zeta = 0 so the bounds hold down to the minimizer).
[[nodiscard]] std::optional<GradientBounds> effective_gradient_bounds(const Loss1D& model);

// Sum of 1D losses along k orthonormal directions embedded in dimension d;
// constant along the orthogonal complement. Exactly separable, so the
// neighborhood-asymmetry assumption holds for any radius by construction.
class SeparableValleyND final : public LandscapeModel {
 public:
  SeparableValleyND(std::vector<Loss1D> axes, std::vector<std::vector<double>> directions,
                    std::vector<double> base);

  // Orthonormal directions from Gram-Schmidt on seeded Gaussian vectors.
  static SeparableValleyND embed(std::vector<Loss1D> axes, std::size_t dim, std::uint64_t seed,
                                 std::vector<double> base = {});

  [[nodiscard]] std::size_t dim() const override { return base_.size(); }
  [[nodiscard]] double loss(std::span<const double> w) const override;
  [[nodiscard]] bool has_exact_directional_grad() const override { return true; }
  [[nodiscard]] double directional_grad(std::span<const double> w, std::span<const double> u,
                                        double h) const override;

  [[nodiscard]] std::size_t num_axes() const { return axes_.size(); }
  [[nodiscard]] const Loss1D& axis(std::size_t i) const { return axes_.at(i); }
  [[nodiscard]] const std::vector<double>& direction(std::size_t i) const { return dirs_.at(i); }
  [[nodiscard]] const std::vector<double>& base() const { return base_; }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }

  [[nodiscard]] double axis_coordinate(std::span<const double> w, std::size_t i) const;
  // base + sum_i t_i * u^i
  [[nodiscard]] std::vector<double> point_at(std::span<const double> axis_coords) const;

 private:
  std::vector<Loss1D> axes_;
  std::vector<std::vector<double>> dirs_;
  std::vector<double> base_;
  std::uint64_t seed_ = 0;
};

// JSON document for 1D models: {"kind": ..., "bounds": {...}, "spec": [r,p,c,zeta], ...}
[[nodiscard]] nlohmann::json to_json(const Loss1D& model);
[[nodiscard]] Loss1D loss1d_from_json(const nlohmann::json& doc);

[[nodiscard]] nlohmann::json to_json(const GradientBounds& bounds);
[[nodiscard]] GradientBounds bounds_from_json(const nlohmann::json& doc);

[[nodiscard]] nlohmann::json to_json(const SeparableValleyND& valley);
[[nodiscard]] SeparableValleyND separable_from_json(const nlohmann::json& doc);

}  // namespace valley
