#include "valley/theory.hpp"

#include <algorithm>
#include <cmath>

namespace valley::theory {

namespace {

double log_2tau(double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  return std::log(2.0 * tau);
}

// Eta-free form of the flat-side descent margin at step t:
//   p_min/eta - t a_+ - sqrt(2t) nu log^{1/2}(2 tau)
double flat_margin(const GradientBounds& b, double t, double tau) {
  const double pm = -(b.a_minus + b.a_plus + 2.0 * b.nu);
  return pm - t * b.a_plus - std::sqrt(2.0 * t) * b.nu * std::sqrt(log_2tau(tau));
}

double exit_margin(const GradientBounds& b, double t, double tau) {
  const double pM = -(b.b_minus - b.nu);
  return pM - t * b.b_plus - std::sqrt(2.0 * t) * b.nu * std::sqrt(log_2tau(tau));
}

}  // namespace

std::pair<double, double> compute_p_bounds(const GradientBounds& bounds, double eta) {
  bounds.validate();
  if (!(eta > 0.0)) throw std::invalid_argument("compute_p_bounds: eta must be > 0");
  const double p_min = -eta * (bounds.a_minus + bounds.a_plus + 2.0 * bounds.nu);
  const double p_max = -eta * (bounds.b_minus - bounds.nu);
  return {p_min, p_max};
}

double compute_t_min(const GradientBounds& bounds, double tau) {
  bounds.validate();
  const double drift = bounds.a_minus + bounds.a_plus + 2.0 * bounds.nu;
  if (!(drift < 0.0))
    throw InfeasibleHypotheses("compute_t_min: a_- + a_+ + 2 nu must be negative");
  const double lg = log_2tau(tau);
  const double radicand = 2.0 * bounds.nu * bounds.nu * lg - 4.0 * bounds.a_plus * drift;
  if (radicand < 0.0) throw InfeasibleHypotheses("compute_t_min: negative radicand");
  const double root =
      (-std::sqrt(2.0) * bounds.nu * std::sqrt(lg) + std::sqrt(radicand)) / (2.0 * bounds.a_plus);
  const double t_min = root * root;
  // The concentration lemma must hold at every integer step up to t_min;
  // checking the last one suffices since the margin is decreasing in t.
  if (flat_margin(bounds, std::floor(t_min), tau) < -1e-9)
    throw InfeasibleHypotheses("compute_t_min: margin inequality failed at floor(t_min)");
  return t_min;
}

double compute_t_max(const GradientBounds& bounds, double tau) {
  bounds.validate();
  const double lg = log_2tau(tau);
  const double radicand =
      2.0 * bounds.nu * bounds.nu * lg - 4.0 * (bounds.b_minus - bounds.nu) * bounds.b_plus;
  const double root =
      (-std::sqrt(2.0) * bounds.nu * std::sqrt(lg) + std::sqrt(radicand)) / (2.0 * bounds.b_plus);
  const double t_max = root * root;
  // t_max is the exact root of the exit margin; it must not be positive
  // there, and the remark cap -(b_- - nu)/b_+ always dominates.
  if (exit_margin(bounds, t_max, tau) > 1e-9)
    throw InfeasibleHypotheses("compute_t_max: exit-margin inequality failed at t_max");
  const double remark_cap = -(bounds.b_minus - bounds.nu) / bounds.b_plus;
  if (t_max > remark_cap * (1.0 + 1e-12))
    throw InfeasibleHypotheses("compute_t_max: exceeded the -(b_- - nu)/b_+ cap");
  return t_max;
}

C0Result compute_c0(const GradientBounds& bounds, double eta, double tau) {
  if (!(eta > 0.0)) throw std::invalid_argument("compute_c0: eta must be > 0");
  C0Result res;
  res.t_min = compute_t_min(bounds, tau);
  res.t_max = compute_t_max(bounds, tau);
  res.tau = tau;
  res.c0 = res.t_min * res.t_min / (2.0 * res.t_max) * eta * bounds.a_plus;
  res.tau_condition_ok = (res.t_min + res.t_max) / tau <= 0.5;
  return res;
}

double auto_tau(const GradientBounds& bounds) {
  // tau appears inside t_min/t_max only through log(2 tau), so scan the
  // powers of two and take the first self-consistent one.
  for (int e = 1; e <= 62; ++e) {
    const double tau = std::ldexp(1.0, e);
    const double sum = compute_t_min(bounds, tau) + compute_t_max(bounds, tau);
    if (tau >= 2.0 * sum) return tau;
  }
  throw InfeasibleHypotheses("auto_tau: no power of two satisfies (t_min+t_max)/tau <= 1/2");
}

std::optional<double> tau_remark_upper_bound(const GradientBounds& bounds) {
  bounds.validate();
  if (bounds.nu == 0.0) return std::nullopt;
  const double c = bounds.asymmetry_ratio();
  const double s = (c - 3.0) * bounds.a_plus / (2.0 * bounds.nu) - 1.0;
  if (s <= 0.0) return 0.0;
  return std::exp(s * s) / 2.0;
}

TheoremTwoConstants compute_constants(const GradientBounds& bounds, double eta,
                                      std::optional<double> tau_opt) {
  const double tau = tau_opt ? *tau_opt : auto_tau(bounds);
  TheoremTwoConstants consts;
  consts.eta = eta;
  consts.tau = tau;
  std::tie(consts.p_min, consts.p_max) = compute_p_bounds(bounds, eta);
  const auto c0 = compute_c0(bounds, eta, tau);
  consts.t_min = c0.t_min;
  consts.t_max = c0.t_max;
  consts.c0 = c0.c0;
  consts.tau_condition_ok = c0.tau_condition_ok;
  return consts;
}

HypothesisReport theorem_two_hypothesis_check(const GradientBounds& bounds) {
  bounds.validate();
  HypothesisReport rep;
  rep.c = bounds.asymmetry_ratio();
  rep.c_prime = -(bounds.b_minus - bounds.nu) / bounds.b_plus;
  rep.c_prime_limit = std::exp(rep.c / 3.0) / 6.0;
  rep.asymmetric = rep.c > 1.0;
  rep.c_prime_ok = rep.c_prime < rep.c_prime_limit;
  rep.noise_ok = bounds.nu <= bounds.a_plus;
  rep.drift_ok = bounds.a_minus + bounds.a_plus + 2.0 * bounds.nu < 0.0;
  return rep;
}

bool GapBound::feasible() const {
  const bool low = std::all_of(lower_ok.begin(), lower_ok.end(), [](bool b) { return b; });
  const bool up = std::all_of(upper_ok.begin(), upper_ok.end(), [](bool b) { return b; });
  return low && up;
}

GapBound theorem_one_lower_bound(const GapBoundConfig& cfg) {
  const std::size_t k = cfg.c.size();
  if (k == 0) throw std::invalid_argument("theorem_one_lower_bound: k must be >= 1");
  if (cfg.p.size() != k || cfg.l.size() != k || cfg.delta_bar.size() != k)
    throw std::invalid_argument("theorem_one_lower_bound: c, p, l, delta_bar must share length");
  GapBound out;
  out.lower_ok.resize(k);
  out.upper_ok.resize(k);
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!(cfg.c[i] > 1.0)) throw std::invalid_argument("theorem_one_lower_bound: c_i must be > 1");
    if (!(cfg.p[i] > 0.0)) throw std::invalid_argument("theorem_one_lower_bound: p_i must be > 0");
    sum += (cfg.c[i] - 1.0) * cfg.l[i] * cfg.p[i] / 2.0;
    out.lower_ok[i] = cfg.l[i] > 4.0 * cfg.xi / ((cfg.c[i] - 1.0) * cfg.p[i]);
    out.upper_ok[i] =
        cfg.l[i] <= std::max(cfg.r - cfg.delta_bar[i], cfg.delta_bar[i] - cfg.zeta);
  }
  out.bound_value = sum - 2.0 * static_cast<double>(k) * cfg.xi;
  return out;
}

nlohmann::json to_json(const TheoremTwoConstants& c, const HypothesisReport& h) {
  return {{"p_min", c.p_min},
          {"p_max", c.p_max},
          {"t_min", c.t_min},
          {"t_max", c.t_max},
          {"c_0", c.c0},
          {"tau", c.tau},
          {"feasible",
           {{"tau_condition", c.tau_condition_ok},
            {"asymmetric", h.asymmetric},
            {"c_prime_ok", h.c_prime_ok},
            {"noise_ok", h.noise_ok},
            {"drift_ok", h.drift_ok},
            {"c", h.c},
            {"c_prime", h.c_prime},
            {"c_prime_limit", h.c_prime_limit}}}};
}

}  // namespace valley::theory
