#pragma once

// Test-side reference implementation of the MLP forward pass: plain loops,
// no shared code with the library. Used to cross-check losses and to certify
// that a finite-difference probe stays clear of ReLU kinks.
#include <algorithm>
#include <cmath>
#include <vector>

#include "valley/nn.hpp"

namespace valley::testsupport {

struct ReferenceForward {
  double loss = 0.0;
  double min_preact_magnitude = 1e300;  // over hidden units and samples
  double min_batch_variance = 1e300;    // over BN units
};

inline ReferenceForward reference_forward(const nn::Architecture& arch, const ParamVector& params,
                                          const Eigen::MatrixXd& x, const Eigen::VectorXi& y) {
  ReferenceForward out;
  const std::size_t n = static_cast<std::size_t>(x.rows());
  const std::size_t layers = arch.num_layers();
  std::vector<std::vector<double>> act(n);
  for (std::size_t i = 0; i < n; ++i) act[i] = {x(static_cast<Eigen::Index>(i), 0), x(static_cast<Eigen::Index>(i), 1)};

  for (std::size_t layer = 0; layer < layers; ++layer) {
    const auto in = static_cast<std::size_t>(arch.widths[layer]);
    const auto width = static_cast<std::size_t>(arch.widths[layer + 1]);
    const auto w = params.tensor("layer" + std::to_string(layer) + ".weight");
    const auto b = params.tensor("layer" + std::to_string(layer) + ".bias");
    std::vector<std::vector<double>> z(n, std::vector<double>(width, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t o = 0; o < width; ++o) {
        double s = b[o];
        for (std::size_t j = 0; j < in; ++j) s += w[o * in + j] * act[i][j];
        z[i][o] = s;
      }
    }
    if (arch.batch_norm[layer]) {
      const auto gamma = params.tensor("layer" + std::to_string(layer) + ".bn_gamma");
      const auto beta = params.tensor("layer" + std::to_string(layer) + ".bn_beta");
      for (std::size_t o = 0; o < width; ++o) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += z[i][o];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (z[i][o] - mean) * (z[i][o] - mean);
        var /= static_cast<double>(n);
        out.min_batch_variance = std::min(out.min_batch_variance, var);
        const double inv = 1.0 / std::sqrt(var + arch.bn_eps);
        for (std::size_t i = 0; i < n; ++i) {
          z[i][o] = gamma[o] * (z[i][o] - mean) * inv + beta[o];
        }
      }
    }
    if (layer + 1 < layers) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t o = 0; o < width; ++o) {
          out.min_preact_magnitude = std::min(out.min_preact_magnitude, std::abs(z[i][o]));
          z[i][o] = std::max(z[i][o], 0.0);
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) act[i] = z[i];
  }

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& logits = act[i];
    const double m = *std::max_element(logits.begin(), logits.end());
    double lse = 0.0;
    for (double v : logits) lse += std::exp(v - m);
    total += m + std::log(lse) - logits[static_cast<std::size_t>(y(static_cast<Eigen::Index>(i)))];
  }
  out.loss = total / static_cast<double>(n);
  return out;
}

}  // namespace valley::testsupport
