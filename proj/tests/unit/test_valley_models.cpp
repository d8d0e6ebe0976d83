#include <doctest.h>

#include <cmath>
#include <limits>

#include "valley/valley_models.hpp"

using namespace valley;

TEST_CASE("default asymmetric valley matches its closed form") {
  const PiecewiseValley1D v = default_asymmetric_valley();
  CHECK(v.loss(0.0) == 0.0);
  CHECK(v.loss(2.0) == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(v.loss(-2.0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(v.grad(1.0) == 0.1);
  CHECK(v.grad(-1.0) == -1.0);
  // w = 0 belongs to the flat side.
  CHECK(v.grad(0.0) == 0.1);
}

TEST_CASE("non-finite evaluation points are rejected") {
  const Loss1D v = default_asymmetric_valley();
  CHECK_THROWS_AS((void)loss(v, std::numeric_limits<double>::quiet_NaN()), std::invalid_argument);
  CHECK_THROWS_AS((void)grad(v, std::numeric_limits<double>::infinity()), std::invalid_argument);
}

TEST_CASE("gradient bounds and spec invariants are enforced") {
  CHECK_THROWS_AS(PiecewiseValley1D({.a_plus = 0.1, .b_plus = 0.2, .a_minus = -1, .b_minus = -1, .nu = 0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(PiecewiseValley1D({.a_plus = 0.1, .b_plus = 0.1, .a_minus = 1, .b_minus = -1, .nu = 0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(PiecewiseValley1D({.a_plus = 0.1, .b_plus = 0.1, .a_minus = -1, .b_minus = -1, .nu = 0.2}),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)build_valley_from_spec({.r = 1.0, .p = 0.1, .c = 0.5, .zeta = 0.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)build_valley_from_spec({.r = 1.0, .p = 0.1, .c = 2.0, .zeta = 1.5}),
                  std::invalid_argument);
}

TEST_CASE("spec valley realizes the reported tuple with margins") {
  const AsymmetrySpec spec{.r = 2.5, .p = 0.2, .c = 7.5, .zeta = 1.2};
  const SpecValley1D v = build_valley_from_spec(spec);
  // Flat slope strictly below p, sharp slope strictly below -c*p past zeta.
  CHECK(v.grad(2.0) < 0.2);
  CHECK(v.grad(2.0) > 0.0);
  CHECK(v.grad(-2.0) < -1.5);
  CHECK(v.loss(0.0) == 0.0);
  // Continuity across the dead-zone boundary.
  CHECK(v.loss(1.2 + 1e-9) == doctest::Approx(v.loss(1.2 - 1e-9)).epsilon(1e-6));
  CHECK(v.grad(0.0) == 0.0);
}

TEST_CASE("gradients stay inside the declared side-wise bounds") {
  const GradientBounds bounds{.a_plus = 0.3, .b_plus = 0.1, .a_minus = -0.6, .b_minus = -1.1,
                              .nu = 0.05};
  for (const auto profile : {GradientProfile::Tight, GradientProfile::Wobble}) {
    const PiecewiseValley1D v(bounds, profile);
    for (int i = -400; i <= 400; ++i) {
      const double w = 0.013 * i;
      const double g = v.grad(w);
      if (w >= 0) {
        CHECK(g >= bounds.b_plus - 1e-15);
        CHECK(g <= bounds.a_plus + 1e-15);
      } else {
        CHECK(g >= bounds.b_minus - 1e-15);
        CHECK(g <= bounds.a_minus + 1e-15);
      }
    }
  }
}

TEST_CASE("central finite differences recover the gradient") {
  const GradientBounds bounds{.a_plus = 0.3, .b_plus = 0.1, .a_minus = -0.6, .b_minus = -1.1,
                              .nu = 0.0};
  std::vector<Loss1D> models;
  models.emplace_back(PiecewiseValley1D(bounds, GradientProfile::Tight));
  models.emplace_back(PiecewiseValley1D(bounds, GradientProfile::Wobble));
  models.emplace_back(build_valley_from_spec({.r = 3.0, .p = 0.2, .c = 4.0, .zeta = 0.7}));
  models.emplace_back(SymmetricFunction1D(SymmetricFunction1D::Kind::SharpSided, 1.0));
  const double h = 1e-6;
  for (const auto& m : models) {
    for (double w : {-2.17, -1.03, -0.31, 0.29, 1.07, 2.41}) {
      const double fd = (loss(m, w + h) - loss(m, w - h)) / (2.0 * h);
      CHECK(fd == doctest::Approx(grad(m, w)).epsilon(1e-8));
    }
  }
}

TEST_CASE("losses are Lipschitz with the worst-side slope") {
  const GradientBounds bounds{.a_plus = 0.3, .b_plus = 0.1, .a_minus = -0.6, .b_minus = -1.1,
                              .nu = 0.0};
  const PiecewiseValley1D v(bounds, GradientProfile::Wobble);
  const double lip = std::max(bounds.a_plus, -bounds.b_minus);
  const double h = 1e-3;
  for (int i = -300; i <= 300; ++i) {
    const double w = 0.017 * i;
    CHECK(std::abs(v.loss(w + h) - v.loss(w)) <= lip * h * (1.0 + 1e-12));
  }
}

TEST_CASE("symmetric functions are exactly even") {
  const SymmetricFunction1D flat(SymmetricFunction1D::Kind::FlatSided, 0.05);
  const SymmetricFunction1D sharp(SymmetricFunction1D::Kind::SharpSided, 1.0);
  for (int i = 0; i <= 100; ++i) {
    const double w = 0.037 * i;
    CHECK(flat.loss(w) == flat.loss(-w));
    CHECK(sharp.loss(w) == sharp.loss(-w));
  }
}

TEST_CASE("separable valley sums its axis losses exactly") {
  std::vector<Loss1D> axes;
  axes.emplace_back(default_asymmetric_valley());
  axes.emplace_back(build_valley_from_spec({.r = 2.0, .p = 0.1, .c = 3.0, .zeta = 0.4}));
  axes.emplace_back(SymmetricFunction1D(SymmetricFunction1D::Kind::SharpSided, 0.8));
  const auto valley = SeparableValleyND::embed(axes, 7, 99);

  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const double t0 = -1.5 + 0.17 * static_cast<double>(trial);
    const double t1 = 0.9 - 0.11 * static_cast<double>(trial);
    const double t2 = -0.4 + 0.07 * static_cast<double>(trial);
    const std::vector<double> coords{t0, t1, t2};
    const auto point = valley.point_at(coords);
    const double expect = loss(axes[0], t0) + loss(axes[1], t1) + loss(axes[2], t2);
    CHECK(valley.loss(point) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("separable valley exposes exact directional gradients") {
  std::vector<Loss1D> axes;
  axes.emplace_back(default_asymmetric_valley());
  axes.emplace_back(SymmetricFunction1D(SymmetricFunction1D::Kind::FlatSided, 0.05));
  const auto valley = SeparableValleyND::embed(axes, 5, 3);
  CHECK(valley.has_exact_directional_grad());
  const auto point = valley.point_at(std::vector<double>{0.8, -0.6});
  const auto& u = valley.direction(0);
  CHECK(valley.directional_grad(point, u, 1e-6) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("valley JSON documents round-trip") {
  const Loss1D original = build_valley_from_spec({.r = 2.5, .p = 0.2, .c = 7.5, .zeta = 1.2});
  const auto doc = to_json(original);
  CHECK(doc.at("kind") == "asymmetric_spec");
  CHECK(doc.at("spec").size() == 4);
  const Loss1D restored = loss1d_from_json(doc);
  for (double w : {-2.0, -0.5, 0.0, 0.4, 1.9}) {
    CHECK(loss(original, w) == loss(restored, w));
  }

  const GradientBounds bounds{.a_plus = 0.1, .b_plus = 0.05, .a_minus = -0.9, .b_minus = -1.0,
                              .nu = 0.04};
  const auto bdoc = to_json(bounds);
  const auto back = bounds_from_json(bdoc);
  CHECK(back.a_plus == bounds.a_plus);
  CHECK(back.b_minus == bounds.b_minus);
  CHECK(back.nu == bounds.nu);

  std::vector<Loss1D> axes;
  axes.emplace_back(PiecewiseValley1D(bounds));
  const auto valley = SeparableValleyND::embed(axes, 4, 1234);
  const auto vdoc = to_json(valley);
  CHECK(vdoc.at("kind") == "separable");
  CHECK(vdoc.at("seed") == 1234);
  const auto restored_valley = separable_from_json(vdoc);
  const auto point = valley.point_at(std::vector<double>{0.7});
  CHECK(restored_valley.loss(point) == valley.loss(point));
}

TEST_CASE("effective gradient bounds per model kind") {
  CHECK(effective_gradient_bounds(Loss1D(default_asymmetric_valley())).has_value());
  const auto sym = effective_gradient_bounds(
      Loss1D(SymmetricFunction1D(SymmetricFunction1D::Kind::SharpSided, 1.0)));
  REQUIRE(sym.has_value());
  CHECK(sym->asymmetry_ratio() == 1.0);
  // Dead zone breaks the positive lower bound requirement.
  CHECK_FALSE(effective_gradient_bounds(
                  Loss1D(build_valley_from_spec({.r = 2.0, .p = 0.1, .c = 3.0, .zeta = 0.5})))
                  .has_value());
  const auto spec0 = effective_gradient_bounds(
      Loss1D(build_valley_from_spec({.r = 2.0, .p = 0.1, .c = 3.0, .zeta = 0.0})));
  REQUIRE(spec0.has_value());
  CHECK(spec0->a_plus == doctest::Approx(0.06));
}
