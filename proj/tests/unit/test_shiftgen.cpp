#include <doctest.h>

#include <cmath>

#include "valley/shiftgen.hpp"

using namespace valley;
using namespace valley::shift;

namespace {

// Closed-form gap for tight separable instances: sum_i (c_i - 1) l_i p_i / 2.
double tight_oracle(std::span<const double> c, std::span<const double> p,
                    std::span<const double> l) {
  double s = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) s += (c[i] - 1.0) * l[i] * p[i] / 2.0;
  return s;
}

}  // namespace

TEST_CASE("k=1 tight instance reproduces the hand-computed expectations") {
  const double c[] = {5.0};
  const double p[] = {0.1};
  const double delta[] = {2.0};
  const double l[] = {1.0};
  const auto inst = make_theorem_one_instance(c, p, delta, l, 0.0, 11);
  const auto gap = enumerate_expected_losses(inst.model, inst.bias);
  // Averages over the two sign patterns of the piecewise-linear valley:
  // E L(w*) = (c p d + p d)/2, E L(w* + l u) = (c p (d-l) + p (d+l))/2.
  CHECK(gap.at_minimizer == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(gap.at_biased == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(gap.gap == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(gap.bound_value == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(gap.bound.feasible());
  CHECK(gap.samples == 2);
}

TEST_CASE("zero bias gives zero gap") {
  const double c[] = {5.0};
  const double p[] = {0.1};
  const double delta[] = {2.0};
  const double l[] = {0.0};
  const auto inst = make_theorem_one_instance(c, p, delta, l, 0.0, 3);
  const auto gap = enumerate_expected_losses(inst.model, inst.bias);
  CHECK(gap.gap == doctest::Approx(0.0));
  CHECK_FALSE(gap.bound.lower_ok[0]);  // l must be strictly positive under xi = 0
}

TEST_CASE("independent axes add their gaps") {
  const double c[] = {5.0, 5.0};
  const double p[] = {0.1, 0.1};
  const double delta[] = {2.0, 2.0};
  const double l[] = {1.0, 1.0};
  const auto inst = make_theorem_one_instance(c, p, delta, l, 0.0, 5);
  const auto gap = enumerate_expected_losses(inst.model, inst.bias);
  CHECK(gap.gap == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(gap.samples == 4);
}

TEST_CASE("enumeration equals the closed form on tight instances") {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    const std::size_t k = 1 + seed % 6;
    auto inst = random_theorem_one_instance(seed, k, 0.0);
    // Only tight instances have an exact closed form; margined ones exceed it.
    const auto gap = enumerate_expected_losses(inst.model, inst.bias);
    std::vector<double> c, p;
    for (std::size_t i = 0; i < k; ++i) {
      c.push_back(inst.model.axis_info(i).c);
      p.push_back(inst.model.axis_info(i).p);
    }
    const double oracle = tight_oracle(c, p, inst.bias);
    CHECK(gap.gap >= oracle - 1e-10);
    const bool tight = inst.model.axis_info(0).flat_slope == inst.model.axis_info(0).p;
    if (tight) CHECK(gap.gap == doctest::Approx(oracle).epsilon(1e-10));
  }
}

TEST_CASE("expected-loss gap stays above the bound across the seeded battery") {
  const double xis[] = {0.0, 0.005, 0.01};
  for (std::uint64_t seed = 0; seed < 24; ++seed) {
    const std::size_t k = 1 + seed % 8;
    const double xi = xis[seed % 3];
    const auto inst = random_theorem_one_instance(seed, k, xi);
    const auto gap = enumerate_expected_losses(inst.model, inst.bias);
    CHECK(gap.bound.feasible());
    CHECK(gap.gap >= gap.bound_value - 1e-12);
  }
}

TEST_CASE("monte carlo agrees with enumeration within four standard errors") {
  for (std::uint64_t seed : {7ULL, 8ULL, 9ULL}) {
    const auto inst = random_theorem_one_instance(seed, 6, seed % 2 == 0 ? 0.01 : 0.0);
    const auto exact = enumerate_expected_losses(inst.model, inst.bias);
    const auto mc = monte_carlo_expected_losses(inst.model, inst.bias, 100000, seed + 1);
    CHECK(mc.stderr_gap > 0.0);
    CHECK(std::abs(mc.gap - exact.gap) <= 4.0 * mc.stderr_gap + 1e-12);
  }
}

TEST_CASE("monte carlo enforces its sample floor and enumeration its budget") {
  const auto inst = random_theorem_one_instance(1, 2, 0.0);
  CHECK_THROWS_AS((void)monte_carlo_expected_losses(inst.model, inst.bias, 0, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)monte_carlo_expected_losses(inst.model, inst.bias, 99, 1),
                  std::invalid_argument);

  std::vector<double> c(25, 3.0), p(25, 0.1), delta(25, 2.0), l(25, 1.0);
  const auto big = make_theorem_one_instance(c, p, delta, l, 0.0, 2);
  CHECK_THROWS_AS((void)enumerate_expected_losses(big.model, big.bias), std::invalid_argument);
  // Monte Carlo scales past the enumeration budget and stays above the bound.
  const auto mc = monte_carlo_expected_losses(big.model, big.bias, 20000, 3);
  CHECK(mc.gap >= mc.bound_value - 4.0 * mc.stderr_gap);
}

TEST_CASE("monte carlo reductions do not depend on the worker count") {
  const auto inst = random_theorem_one_instance(5, 25, 0.01);
  setenv("VALLEY_THREADS", "1", 1);
  const auto serial = monte_carlo_expected_losses(inst.model, inst.bias, 50000, 9);
  setenv("VALLEY_THREADS", "7", 1);
  const auto parallel = monte_carlo_expected_losses(inst.model, inst.bias, 50000, 9);
  unsetenv("VALLEY_THREADS");
  CHECK(serial.gap == parallel.gap);
  CHECK(serial.at_minimizer == parallel.at_minimizer);
  CHECK(serial.stderr_gap == parallel.stderr_gap);
}

TEST_CASE("bias beyond the certified range is rejected") {
  const double c[] = {5.0};
  const double p[] = {0.1};
  const double delta[] = {2.0};
  const double l[] = {2.5};  // > delta_bar
  CHECK_THROWS_AS((void)make_theorem_one_instance(c, p, delta, l, 0.0, 1), std::invalid_argument);
}

TEST_CASE("constructed pairs realize the random-shift assumption") {
  std::vector<Loss1D> axes;
  axes.emplace_back(build_valley_from_spec({.r = 4.0, .p = 0.2, .c = 5.0, .zeta = 0.5}));
  axes.emplace_back(build_valley_from_spec({.r = 4.0, .p = 0.1, .c = 8.0, .zeta = 0.5}));
  const auto valley = SeparableValleyND::embed(std::move(axes), 5, 21);

  SUBCASE("zero perturbation shifts exactly") {
    const auto model = build_shift_pair(valley, {1.5, 2.0}, 0.0, 77);
    CHECK(model.max_measured_shift_gap(1000) == doctest::Approx(0.0));
    for (std::uint32_t pattern = 0; pattern < 4; ++pattern) {
      const auto coords = model.empirical_minimizer_coords(pattern);
      CHECK(coords[0] == doctest::Approx((pattern & 1u) ? -1.5 : 1.5));
      CHECK(coords[1] == doctest::Approx((pattern & 2u) ? -2.0 : 2.0));
      // L_hat_s(x) = L(x + delta_s) exactly.
      const auto emp = model.empirical_model(pattern);
      const auto x = valley.point_at(std::vector<double>{0.3, -0.7});
      std::vector<double> shifted_coords{0.3 + ((pattern & 1u) ? 1.5 : -1.5),
                                         -0.7 + ((pattern & 2u) ? 2.0 : -2.0)};
      CHECK(emp->loss(x) ==
            doctest::Approx(valley.loss(valley.point_at(shifted_coords))).epsilon(1e-12));
    }
  }

  SUBCASE("bounded perturbation keeps the measured gap below xi") {
    const auto model = build_shift_pair(valley, {1.5, 2.0}, 0.01, 77);
    CHECK(model.max_measured_shift_gap(1000) <= 0.01 + 1e-12);
    for (std::uint32_t pattern = 0; pattern < 4; ++pattern) {
      const auto coords = model.empirical_minimizer_coords(pattern);
      // Minimizers stay inside the dead zone around the shifted center.
      CHECK(std::abs(coords[0] - ((pattern & 1u) ? -1.5 : 1.5)) <= 0.5);
      CHECK(std::abs(coords[1] - ((pattern & 2u) ? -2.0 : 2.0)) <= 0.5);
    }
  }

  SUBCASE("shift magnitudes outside [zeta, r] are rejected") {
    CHECK_THROWS_AS((void)build_shift_pair(valley, {0.1, 2.0}, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS((void)build_shift_pair(valley, {1.5, 5.0}, 0.0, 1), std::invalid_argument);
  }

  SUBCASE("tight axes cannot carry a perturbation") {
    std::vector<Loss1D> tight;
    tight.emplace_back(default_asymmetric_valley());
    const auto tight_valley = SeparableValleyND::embed(std::move(tight), 3, 5);
    CHECK_THROWS_AS((void)build_shift_pair(tight_valley, {1.0}, 0.01, 1), std::invalid_argument);
  }
}

TEST_CASE("shift gap is zero exactly at the constructed shift") {
  std::vector<Loss1D> axes;
  axes.emplace_back(build_valley_from_spec({.r = 3.0, .p = 0.2, .c = 7.5, .zeta = 0.3}));
  const auto valley = SeparableValleyND::embed(std::move(axes), 4, 9);
  const auto& u = valley.direction(0);

  std::vector<double> shift(valley.dim());
  for (std::size_t i = 0; i < shift.size(); ++i) shift[i] = 0.4 * u[i];
  const ShiftedModel shifted(valley, shift);

  const auto plan = SamplingPlan::along_direction(u, 1.0, 201);
  std::vector<double> zero(valley.dim(), 0.0);
  const auto at_shift = shift_gap(valley, shifted, valley.base(), shift, 1.0, plan, 0.0, 0.0);
  CHECK(at_shift.gap == doctest::Approx(0.0));

  const auto at_zero = shift_gap(valley, shifted, valley.base(), zero, 1.0, plan, 0.0, 0.0);
  CHECK(at_zero.gap > 0.01);

  SUBCASE("identical functions have zero gap at zero shift") {
    const auto same = shift_gap(valley, valley, valley.base(), zero, 1.0, plan, 0.0, 0.0);
    CHECK(same.gap == 0.0);
  }
}

TEST_CASE("scan recovers the planted shift") {
  std::vector<Loss1D> axes;
  axes.emplace_back(build_valley_from_spec({.r = 3.0, .p = 0.2, .c = 7.5, .zeta = 0.3}));
  const auto valley = SeparableValleyND::embed(std::move(axes), 4, 9);
  const auto& u = valley.direction(0);
  std::vector<double> shift(valley.dim());
  for (std::size_t i = 0; i < shift.size(); ++i) shift[i] = 0.4 * u[i];
  const ShiftedModel shifted(valley, shift);

  const auto scan = scan_shift(valley, shifted, valley.base(), u, -1.0, 1.0, 201, 1.0, 201, 0.0, 0.0);
  CHECK(std::abs(scan.argmin_delta - 0.4) <= 0.01);
  CHECK(scan.min_gap < 1e-9);
  CHECK_FALSE(scan.degenerate_zero_gap);
  CHECK(scan.gaps.front() > scan.min_gap);
  CHECK(scan.gaps.back() > scan.min_gap);
  // Ratio curve dips well below one at the recovered shift.
  CHECK(scan.ratios[140] < 0.05);

  SUBCASE("zero-shift pair recovers zero with a degenerate denominator") {
    const auto self = scan_shift(valley, valley, valley.base(), u, -1.0, 1.0, 201, 1.0, 201, 0.0, 0.0);
    CHECK(self.degenerate_zero_gap);
    CHECK(std::abs(self.argmin_delta) <= 0.01);
  }
}
