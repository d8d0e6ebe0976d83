#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "valley/landscape.hpp"
#include "valley/param_vector.hpp"

namespace valley::nn {

// Fully connected classifier: per layer a linear map, optional batch norm on
// the pre-activations, ReLU between layers, softmax cross-entropy on top.
struct Architecture {
  std::vector<int> widths;       // e.g. {2, 16, 16, 2}
  std::vector<bool> batch_norm;  // one flag per linear layer
  double bn_eps = 1e-5;

  [[nodiscard]] static Architecture mlp(std::vector<int> widths, bool bn_hidden);
  [[nodiscard]] std::size_t num_layers() const { return widths.empty() ? 0 : widths.size() - 1; }
  void validate() const;
};

struct DatasetConfig {
  enum class Generator { TwoMoons, GaussianMixture };
  Generator generator = Generator::TwoMoons;
  std::size_t train_size = 200;
  std::size_t heldout_size = 50000;  // Monte-Carlo stand-in for the population loss
  double noise = 0.25;
  std::uint64_t seed = 1;
};

struct Dataset {
  DatasetConfig config;
  Eigen::MatrixXd train_x;  // rows are samples
  Eigen::VectorXi train_y;
  Eigen::MatrixXd heldout_x;
  Eigen::VectorXi heldout_y;
};

[[nodiscard]] Dataset generate_dataset(const DatasetConfig& config);

// Batch-norm running statistics; buffers, not parameters. Recomputed by a
// full training-set pass before evaluating averaged or probed weights.
struct BnStats {
  std::vector<Eigen::VectorXd> mean;  // one entry per layer; empty vectors where BN is off
  std::vector<Eigen::VectorXd> var;
};

struct Metrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

class Mlp {
 public:
  explicit Mlp(Architecture arch);

  [[nodiscard]] const Architecture& arch() const { return arch_; }
  [[nodiscard]] std::shared_ptr<const ParamLayout> layout() const { return layout_; }
  [[nodiscard]] bool has_bn() const;

  [[nodiscard]] ParamVector init_params(std::uint64_t seed) const;
  [[nodiscard]] BnStats init_stats() const;

  // Training-mode loss over a batch (batch statistics in the BN layers).
  [[nodiscard]] double train_mode_loss(const ParamVector& params, const Eigen::MatrixXd& x,
                                       const Eigen::VectorXi& y) const;

  // Training-mode forward + exact reverse-mode gradient, including the
  // batch-statistics terms of BN. Optionally updates running statistics with
  // the given momentum.
  double train_loss_grad(const ParamVector& params, const Eigen::MatrixXd& x,
                         const Eigen::VectorXi& y, ParamVector& grad, BnStats* running,
                         double momentum) const;

  // Eval-mode forward using the supplied running statistics.
  [[nodiscard]] Metrics evaluate(const ParamVector& params, const BnStats& stats,
                                 const Eigen::MatrixXd& x, const Eigen::VectorXi& y) const;

  // Exact gradient of the eval-mode loss (BN is a fixed affine map there).
  void eval_grad(const ParamVector& params, const BnStats& stats, const Eigen::MatrixXd& x,
                 const Eigen::VectorXi& y, ParamVector& grad) const;

  [[nodiscard]] BnStats recompute_stats(const ParamVector& params, const Eigen::MatrixXd& x) const;

  [[nodiscard]] ParamGroupMask bn_param_mask() const;
  // Coordinates whose change can move some BN layer's batch statistics.
  [[nodiscard]] ParamGroupMask bn_stats_affecting_mask() const;

 private:
  struct Workspace;
  double forward_backward(const ParamVector& params, const Eigen::MatrixXd& x,
                          const Eigen::VectorXi& y, bool training, const BnStats* stats,
                          ParamVector* grad, BnStats* running, double momentum,
                          double* accuracy) const;

  Architecture arch_;
  std::shared_ptr<const ParamLayout> layout_;
};

struct EtaSchedule {
  double eta0 = 0.1;
  double eta_final = -1.0;  // < 0 means constant at eta0

  [[nodiscard]] double at(int epoch, int total_epochs) const;
};

struct TrainConfig {
  EtaSchedule eta;
  int batch_size = 32;
  int epochs = 100;
  std::uint64_t seed = 0;
  double bn_momentum = 0.1;
};

enum class SwaGroup { All, BnOnly, NonBnMatched };

struct SwaConfig {
  int start_epoch = 0;
  int cadence = 1;  // collect a checkpoint every `cadence` epochs
  SwaGroup group = SwaGroup::All;
};

struct EpochMetrics {
  int epoch = 0;
  double eta = 0.0;
  Metrics train;
  Metrics heldout;
  bool has_swa = false;
  Metrics swa_train;
  Metrics swa_heldout;
};

struct TrainResult {
  ParamVector params;
  BnStats stats;
  std::optional<ParamVector> swa_params;
  std::optional<BnStats> swa_stats;
  std::vector<EpochMetrics> history;
  std::size_t swa_checkpoints = 0;
};

// Plain SGD over shuffled minibatches. Deterministic given the seed; with a
// SwaConfig the averaged parameters (group-restricted when requested) are
// tracked and re-evaluated per epoch with freshly recomputed BN statistics.
[[nodiscard]] TrainResult train(const Mlp& mlp, const Dataset& data, const TrainConfig& config,
                                const std::optional<SwaConfig>& swa = std::nullopt,
                                const std::optional<ParamVector>& init = std::nullopt);

// Landscape view of the training loss as a function of the flat parameters.
// Eval-mode semantics; BN running statistics are recomputed whenever the
// stats-affecting coordinates move more than the threshold in relative norm.
class MlpLossModel final : public LandscapeModel {
 public:
  MlpLossModel(const Mlp& mlp, Eigen::MatrixXd x, Eigen::VectorXi y,
               double bn_refresh_threshold = 1e-3);

  [[nodiscard]] std::size_t dim() const override;
  [[nodiscard]] double loss(std::span<const double> w) const override;
  [[nodiscard]] bool has_exact_directional_grad() const override { return true; }
  [[nodiscard]] double directional_grad(std::span<const double> w, std::span<const double> u,
                                        double h) const override;

  [[nodiscard]] std::size_t recompute_events() const { return recompute_events_; }

 private:
  void ensure_stats(std::span<const double> w) const;
  [[nodiscard]] ParamVector wrap(std::span<const double> w) const;

  const Mlp* mlp_;
  Eigen::MatrixXd x_;
  Eigen::VectorXi y_;
  double threshold_;
  std::vector<std::size_t> affecting_;
  mutable BnStats stats_;
  mutable std::vector<double> stats_anchor_;
  mutable bool have_stats_ = false;
  mutable std::size_t recompute_events_ = 0;
};

}  // namespace valley::nn
