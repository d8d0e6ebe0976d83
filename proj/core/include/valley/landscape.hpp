#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace valley {

// Minimal substrate the probes operate on: anything that maps a flat
// parameter vector to a scalar loss. Models that can do better than a
// finite-difference directional slope override directional_grad.
class LandscapeModel {
 public:
  virtual ~LandscapeModel() = default;

  [[nodiscard]] virtual std::size_t dim() const = 0;
  [[nodiscard]] virtual double loss(std::span<const double> w) const = 0;

  [[nodiscard]] virtual bool has_exact_directional_grad() const { return false; }

  // d/dt loss(w + t*u) at t = 0. Default: central difference with step h.
  [[nodiscard]] virtual double directional_grad(std::span<const double> w,
                                                std::span<const double> u,
                                                double h) const {
    std::vector<double> plus(w.begin(), w.end());
    std::vector<double> minus(w.begin(), w.end());
    for (std::size_t i = 0; i < w.size(); ++i) {
      plus[i] += h * u[i];
      minus[i] -= h * u[i];
    }
    return (loss(plus) - loss(minus)) / (2.0 * h);
  }
};

// Small dense-vector helpers shared by the geometry code.
inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline std::vector<double> axpy(std::span<const double> base, double t,
                                std::span<const double> dir) {
  std::vector<double> out(base.begin(), base.end());
  for (std::size_t i = 0; i < base.size(); ++i) out[i] += t * dir[i];
  return out;
}

// loss(w) = scale/2 * ||w - center||^2. Exact oracle for the probe tests:
// every unit ray through the center sees exactly scale*r^2/2 at radius r.
class IsotropicQuadratic final : public LandscapeModel {
 public:
  explicit IsotropicQuadratic(std::vector<double> center, double scale = 1.0)
      : center_(std::move(center)), scale_(scale) {}

  [[nodiscard]] std::size_t dim() const override { return center_.size(); }

  [[nodiscard]] double loss(std::span<const double> w) const override {
    if (w.size() != center_.size()) throw std::invalid_argument("IsotropicQuadratic: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double d = w[i] - center_[i];
      s += d * d;
    }
    return 0.5 * scale_ * s;
  }

  [[nodiscard]] bool has_exact_directional_grad() const override { return true; }

  [[nodiscard]] double directional_grad(std::span<const double> w,
                                        std::span<const double> u,
                                        double /*h*/) const override {
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += (w[i] - center_[i]) * u[i];
    return scale_ * s;
  }

 private:
  std::vector<double> center_;
  double scale_;
};

}  // namespace valley
