#include "valley/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "valley/rng.hpp"

namespace valley::nn {

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using WeightMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using WeightMapMut = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

std::string tensor_name(std::size_t layer, const char* what) {
  return "layer" + std::to_string(layer) + "." + what;
}

std::shared_ptr<const ParamLayout> build_layout(const Architecture& arch) {
  std::vector<TensorRange> tensors;
  std::size_t offset = 0;
  const auto push = [&](std::string name, std::size_t size, bool is_bn) {
    tensors.push_back({std::move(name), offset, size, is_bn});
    offset += size;
  };
  for (std::size_t j = 0; j < arch.num_layers(); ++j) {
    const auto in = static_cast<std::size_t>(arch.widths[j]);
    const auto out = static_cast<std::size_t>(arch.widths[j + 1]);
    push(tensor_name(j, "weight"), in * out, false);
    push(tensor_name(j, "bias"), out, false);
    if (arch.batch_norm[j]) {
      push(tensor_name(j, "bn_gamma"), out, true);
      push(tensor_name(j, "bn_beta"), out, true);
    }
  }
  return std::make_shared<ParamLayout>(std::move(tensors));
}

}  // namespace

Architecture Architecture::mlp(std::vector<int> widths, bool bn_hidden) {
  Architecture arch;
  arch.widths = std::move(widths);
  arch.batch_norm.assign(arch.num_layers(), false);
  if (bn_hidden) {
    for (std::size_t j = 0; j + 1 < arch.num_layers(); ++j) arch.batch_norm[j] = true;
  }
  arch.validate();
  return arch;
}

void Architecture::validate() const {
  if (widths.size() < 2) throw std::invalid_argument("Architecture: need at least one layer");
  for (int w : widths) {
    if (w <= 0) throw std::invalid_argument("Architecture: widths must be positive");
  }
  if (batch_norm.size() != num_layers())
    throw std::invalid_argument("Architecture: one batch_norm flag per layer required");
  if (widths.back() < 2) throw std::invalid_argument("Architecture: need at least two classes");
  if (!(bn_eps > 0.0)) throw std::invalid_argument("Architecture: bn_eps must be positive");
}

Dataset generate_dataset(const DatasetConfig& config) {
  if (!(config.noise >= 0.0)) throw std::invalid_argument("DatasetConfig: noise must be >= 0");
  const auto fill = [&](std::size_t n, std::uint64_t stream, Mat& x, Eigen::VectorXi& y) {
    Rng rng = Rng::substream(config.seed, stream);
    x.resize(static_cast<Eigen::Index>(n), 2);
    y.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const int label = static_cast<int>(i & 1);
      double px = 0.0;
      double py = 0.0;
      if (config.generator == DatasetConfig::Generator::TwoMoons) {
        const double t = rng.uniform01() * 3.14159265358979323846;
        if (label == 0) {
          px = std::cos(t);
          py = std::sin(t);
        } else {
          px = 1.0 - std::cos(t);
          py = 0.5 - std::sin(t);
        }
        px += config.noise * rng.gaussian();
        py += config.noise * rng.gaussian();
      } else {
        const double mx = label == 0 ? -1.0 : 1.0;
        px = mx + config.noise * rng.gaussian();
        py = config.noise * rng.gaussian();
      }
      x(static_cast<Eigen::Index>(i), 0) = px;
      x(static_cast<Eigen::Index>(i), 1) = py;
      y(static_cast<Eigen::Index>(i)) = label;
    }
  };
  Dataset data;
  data.config = config;
  fill(config.train_size, 0, data.train_x, data.train_y);
  fill(config.heldout_size, 1, data.heldout_x, data.heldout_y);
  return data;
}

Mlp::Mlp(Architecture arch) : arch_(std::move(arch)) {
  arch_.validate();
  if (arch_.widths.front() != 2)
    throw std::invalid_argument("Mlp: the synthetic datasets are 2-dimensional");
  layout_ = build_layout(arch_);
}

bool Mlp::has_bn() const {
  return std::any_of(arch_.batch_norm.begin(), arch_.batch_norm.end(), [](bool b) { return b; });
}

ParamVector Mlp::init_params(std::uint64_t seed) const {
  ParamVector p;
  p.layout = layout_;
  p.values.assign(layout_->total(), 0.0);
  Rng rng = Rng::substream(seed, 0x1417);
  for (std::size_t j = 0; j < arch_.num_layers(); ++j) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(arch_.widths[j]));
    for (double& w : p.tensor(tensor_name(j, "weight"))) w = rng.uniform(-scale, scale);
    if (arch_.batch_norm[j]) {
      for (double& g : p.tensor(tensor_name(j, "bn_gamma"))) g = 1.0;
    }
  }
  return p;
}

BnStats Mlp::init_stats() const {
  BnStats stats;
  stats.mean.resize(arch_.num_layers());
  stats.var.resize(arch_.num_layers());
  for (std::size_t j = 0; j < arch_.num_layers(); ++j) {
    if (!arch_.batch_norm[j]) continue;
    stats.mean[j] = Vec::Zero(arch_.widths[j + 1]);
    stats.var[j] = Vec::Ones(arch_.widths[j + 1]);
  }
  return stats;
}

double Mlp::forward_backward(const ParamVector& params, const Eigen::MatrixXd& x,
                             const Eigen::VectorXi& y, bool training, const BnStats* stats,
                             ParamVector* grad, BnStats* running, double momentum,
                             double* accuracy) const {
  if (!(*params.layout == *layout_)) throw std::invalid_argument("Mlp: parameter layout mismatch");
  const auto n = x.rows();
  if (n == 0) throw std::invalid_argument("Mlp: empty batch");
  if (x.cols() != arch_.widths.front()) throw std::invalid_argument("Mlp: input width mismatch");
  if (y.size() != n) throw std::invalid_argument("Mlp: label count mismatch");
  if (training && has_bn() && n < 2)
    throw std::invalid_argument("Mlp: batch-norm training requires batch size >= 2");

  const std::size_t layers = arch_.num_layers();
  const bool cache = grad != nullptr;
  std::vector<Mat> inputs(cache ? layers : 0);   // A_j
  std::vector<Mat> zhat(cache ? layers : 0);     // normalized pre-activations
  std::vector<Mat> preact(cache ? layers : 0);   // Y_j, input to ReLU / logits
  std::vector<RowVec> inv_std(layers);           // 1/sqrt(var + eps) actually used

  Mat a = x;
  Mat logits;
  for (std::size_t j = 0; j < layers; ++j) {
    if (cache) inputs[j] = a;
    const auto out = arch_.widths[j + 1];
    const auto in = arch_.widths[j];
    WeightMap w(params.tensor(tensor_name(j, "weight")).data(), out, in);
    Eigen::Map<const Vec> b(params.tensor(tensor_name(j, "bias")).data(), out);
    Mat z = a * w.transpose();
    z.rowwise() += b.transpose();

    if (arch_.batch_norm[j]) {
      Eigen::Map<const Vec> gamma(params.tensor(tensor_name(j, "bn_gamma")).data(), out);
      Eigen::Map<const Vec> beta(params.tensor(tensor_name(j, "bn_beta")).data(), out);
      RowVec mu;
      RowVec var;
      if (training) {
        mu = z.colwise().mean();
        var = (z.rowwise() - mu).array().square().colwise().mean();
        if (running != nullptr) {
          running->mean[j] = (1.0 - momentum) * running->mean[j] + momentum * mu.transpose();
          running->var[j] = (1.0 - momentum) * running->var[j] + momentum * var.transpose();
        }
      } else {
        mu = stats->mean[j].transpose();
        var = stats->var[j].transpose();
      }
      inv_std[j] = (var.array() + arch_.bn_eps).sqrt().inverse().matrix();
      z = ((z.rowwise() - mu).array().rowwise() * inv_std[j].array()).matrix();
      if (cache) zhat[j] = z;
      z = ((z.array().rowwise() * gamma.transpose().array()).rowwise() +
           beta.transpose().array())
              .matrix();
    }
    if (cache) preact[j] = z;
    if (j + 1 < layers) {
      a = z.cwiseMax(0.0);
    } else {
      logits = std::move(z);
    }
  }

  // Softmax cross-entropy, averaged over the batch.
  Vec row_max = logits.rowwise().maxCoeff();
  Mat shifted = logits.colwise() - row_max;
  Mat expz = shifted.array().exp().matrix();
  Vec denom = expz.rowwise().sum();
  double label_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = y(i);
    if (label < 0 || label >= logits.cols())
      throw std::invalid_argument("Mlp: label out of range");
    label_sum += shifted(i, label);
  }
  const double loss =
      (denom.array().log().sum() - label_sum) / static_cast<double>(n);
  if (!std::isfinite(loss)) throw std::runtime_error("Mlp: non-finite loss");
  if (accuracy != nullptr) {
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index argmax = 0;
      logits.row(i).maxCoeff(&argmax);
      if (argmax == y(i)) ++correct;
    }
    *accuracy = static_cast<double>(correct) / static_cast<double>(n);
  }
  if (grad == nullptr) return loss;

  grad->layout = layout_;
  grad->values.assign(layout_->total(), 0.0);

  Mat delta = (expz.array().colwise() / denom.array()).matrix();  // softmax probabilities
  for (Eigen::Index i = 0; i < n; ++i) delta(i, y(i)) -= 1.0;
  delta /= static_cast<double>(n);  // d loss / d logits

  for (std::size_t jj = layers; jj-- > 0;) {
    if (jj + 1 < layers) {
      // Back through ReLU of the next layer input.
      delta = (delta.array() * (preact[jj].array() > 0.0).cast<double>()).matrix();
    }
    const auto out = arch_.widths[jj + 1];
    const auto in = arch_.widths[jj];
    if (arch_.batch_norm[jj]) {
      Eigen::Map<const Vec> gamma(params.tensor(tensor_name(jj, "bn_gamma")).data(), out);
      Eigen::Map<Vec> dgamma(grad->tensor(tensor_name(jj, "bn_gamma")).data(), out);
      Eigen::Map<Vec> dbeta(grad->tensor(tensor_name(jj, "bn_beta")).data(), out);
      dgamma = (delta.array() * zhat[jj].array()).colwise().sum().matrix().transpose();
      dbeta = delta.colwise().sum().transpose();
      Mat dzhat = (delta.array().rowwise() * gamma.transpose().array()).matrix();
      if (training) {
        const double nn = static_cast<double>(n);
        RowVec sum_dzhat = dzhat.colwise().sum();
        RowVec sum_dzhat_zhat = (dzhat.array() * zhat[jj].array()).colwise().sum().matrix();
        Mat term = nn * dzhat;
        term.rowwise() -= sum_dzhat;
        term -= (zhat[jj].array().rowwise() * sum_dzhat_zhat.array()).matrix();
        delta = ((term.array().rowwise() * inv_std[jj].array()) / nn).matrix();
      } else {
        delta = (dzhat.array().rowwise() * inv_std[jj].array()).matrix();
      }
    }
    WeightMap w(params.tensor(tensor_name(jj, "weight")).data(), out, in);
    WeightMapMut dw(grad->tensor(tensor_name(jj, "weight")).data(), out, in);
    Eigen::Map<Vec> db(grad->tensor(tensor_name(jj, "bias")).data(), out);
    dw = delta.transpose() * inputs[jj];
    db = delta.colwise().sum().transpose();
    if (jj > 0) delta = (delta * w).eval();
  }
  return loss;
}

double Mlp::train_mode_loss(const ParamVector& params, const Eigen::MatrixXd& x,
                            const Eigen::VectorXi& y) const {
  return forward_backward(params, x, y, true, nullptr, nullptr, nullptr, 0.0, nullptr);
}

double Mlp::train_loss_grad(const ParamVector& params, const Eigen::MatrixXd& x,
                            const Eigen::VectorXi& y, ParamVector& grad, BnStats* running,
                            double momentum) const {
  return forward_backward(params, x, y, true, nullptr, &grad, running, momentum, nullptr);
}

Metrics Mlp::evaluate(const ParamVector& params, const BnStats& stats, const Eigen::MatrixXd& x,
                      const Eigen::VectorXi& y) const {
  Metrics m;
  m.loss = forward_backward(params, x, y, false, &stats, nullptr, nullptr, 0.0, &m.accuracy);
  return m;
}

void Mlp::eval_grad(const ParamVector& params, const BnStats& stats, const Eigen::MatrixXd& x,
                    const Eigen::VectorXi& y, ParamVector& grad) const {
  forward_backward(params, x, y, false, &stats, &grad, nullptr, 0.0, nullptr);
}

BnStats Mlp::recompute_stats(const ParamVector& params, const Eigen::MatrixXd& x) const {
  // One full pass in training mode; momentum 1 overwrites the buffers with
  // the full-set statistics.
  BnStats stats = init_stats();
  if (!has_bn()) return stats;
  Eigen::VectorXi dummy = Eigen::VectorXi::Zero(x.rows());
  forward_backward(params, x, dummy, true, nullptr, nullptr, &stats, 1.0, nullptr);
  return stats;
}

ParamGroupMask Mlp::bn_param_mask() const { return bn_mask(layout_); }

ParamGroupMask Mlp::bn_stats_affecting_mask() const {
  ParamGroupMask m;
  m.layout = layout_;
  m.selected.assign(layout_->total(), 0);
  std::ptrdiff_t last_bn = -1;
  for (std::size_t j = 0; j < arch_.num_layers(); ++j) {
    if (arch_.batch_norm[j]) last_bn = static_cast<std::ptrdiff_t>(j);
  }
  if (last_bn < 0) return m;
  const auto mark = [&](const std::string& name) {
    const auto& t = layout_->find(name);
    for (std::size_t i = 0; i < t.size; ++i) m.selected[t.offset + i] = 1;
  };
  for (std::size_t j = 0; j <= static_cast<std::size_t>(last_bn); ++j) {
    mark(tensor_name(j, "weight"));
    mark(tensor_name(j, "bias"));
    if (arch_.batch_norm[j] && static_cast<std::ptrdiff_t>(j) < last_bn) {
      mark(tensor_name(j, "bn_gamma"));
      mark(tensor_name(j, "bn_beta"));
    }
  }
  return m;
}

double EtaSchedule::at(int epoch, int total_epochs) const {
  if (eta_final < 0.0 || total_epochs <= 1) return eta0;
  const double t = static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
  return eta0 + (eta_final - eta0) * t;
}

namespace {

ParamGroupMask swa_group_mask(const Mlp& mlp, SwaGroup group, std::uint64_t seed) {
  switch (group) {
    case SwaGroup::All:
      return full_mask(mlp.layout());
    case SwaGroup::BnOnly: {
      auto m = mlp.bn_param_mask();
      if (m.count() == 0) throw std::invalid_argument("train: bn-only averaging needs BN layers");
      return m;
    }
    case SwaGroup::NonBnMatched: {
      auto bn = mlp.bn_param_mask();
      const std::size_t want = bn.count();
      if (want == 0) throw std::invalid_argument("train: non-bn-matched averaging needs BN layers");
      std::vector<std::size_t> candidates;
      for (std::size_t i = 0; i < bn.selected.size(); ++i) {
        if (!bn.selected[i]) candidates.push_back(i);
      }
      if (candidates.size() < want)
        throw std::invalid_argument("train: not enough non-BN parameters to match the BN group");
      Rng rng = Rng::substream(seed, 0x90b);
      for (std::size_t i = candidates.size(); i > 1; --i) {
        std::swap(candidates[i - 1], candidates[rng.below(i)]);
      }
      ParamGroupMask m;
      m.layout = mlp.layout();
      m.selected.assign(mlp.layout()->total(), 0);
      for (std::size_t i = 0; i < want; ++i) m.selected[candidates[i]] = 1;
      return m;
    }
  }
  throw std::logic_error("train: unknown SWA group");
}

// Masked mean of the checkpoints spliced into the current iterate.
ParamVector swa_combine(const std::vector<ParamVector>& checkpoints, const ParamVector& current,
                        const ParamGroupMask& mask) {
  ParamVector mean = average_params(checkpoints, full_mask(current.layout));
  ParamVector out = current;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (mask.selected[i]) out.values[i] = mean.values[i];
  }
  return out;
}

}  // namespace

TrainResult train(const Mlp& mlp, const Dataset& data, const TrainConfig& config,
                  const std::optional<SwaConfig>& swa, const std::optional<ParamVector>& init) {
  if (config.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (config.epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (swa && (swa->start_epoch < 0 || swa->start_epoch >= std::max(config.epochs, 1)))
    throw std::invalid_argument("train: swa start epoch must lie inside the training run");
  if (swa && swa->cadence < 1) throw std::invalid_argument("train: swa cadence must be >= 1");

  TrainResult res;
  res.params = init ? *init : mlp.init_params(config.seed);
  if (!(*res.params.layout == *mlp.layout()))
    throw std::invalid_argument("train: init parameter layout mismatch");
  res.stats = mlp.recompute_stats(res.params, data.train_x);

  const auto n = static_cast<std::size_t>(data.train_x.rows());
  std::vector<std::size_t> order(n);
  ParamVector grad;
  std::vector<ParamVector> checkpoints;
  std::optional<ParamGroupMask> swa_mask;
  if (swa) swa_mask = swa_group_mask(mlp, swa->group, config.seed);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double eta = config.eta.at(epoch, config.epochs);
    Rng shuffle_rng = Rng::substream(config.seed, 0xe90c + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      const auto bsize = static_cast<Eigen::Index>(stop - start);
      if (bsize < 2 && mlp.has_bn()) continue;  // leftover too small to normalize
      Eigen::MatrixXd xb(bsize, data.train_x.cols());
      Eigen::VectorXi yb(bsize);
      for (Eigen::Index i = 0; i < bsize; ++i) {
        xb.row(i) = data.train_x.row(static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(i)]));
        yb(i) = data.train_y(static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(i)]));
      }
      mlp.train_loss_grad(res.params, xb, yb, grad, &res.stats, config.bn_momentum);
      for (std::size_t i = 0; i < res.params.values.size(); ++i) {
        res.params.values[i] -= eta * grad.values[i];
      }
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.eta = eta;
    em.train = mlp.evaluate(res.params, res.stats, data.train_x, data.train_y);
    em.heldout = mlp.evaluate(res.params, res.stats, data.heldout_x, data.heldout_y);

    if (swa && epoch >= swa->start_epoch && (epoch - swa->start_epoch) % swa->cadence == 0) {
      checkpoints.push_back(res.params);
    }
    if (!checkpoints.empty()) {
      ParamVector avg = swa_combine(checkpoints, res.params, *swa_mask);
      BnStats avg_stats = mlp.recompute_stats(avg, data.train_x);
      em.has_swa = true;
      em.swa_train = mlp.evaluate(avg, avg_stats, data.train_x, data.train_y);
      em.swa_heldout = mlp.evaluate(avg, avg_stats, data.heldout_x, data.heldout_y);
    }
    res.history.push_back(em);
  }

  if (!checkpoints.empty()) {
    res.swa_params = swa_combine(checkpoints, res.params, *swa_mask);
    res.swa_stats = mlp.recompute_stats(*res.swa_params, data.train_x);
    res.swa_checkpoints = checkpoints.size();
  }
  return res;
}

MlpLossModel::MlpLossModel(const Mlp& mlp, Eigen::MatrixXd x, Eigen::VectorXi y,
                           double bn_refresh_threshold)
    : mlp_(&mlp), x_(std::move(x)), y_(std::move(y)), threshold_(bn_refresh_threshold) {
  const auto mask = mlp_->bn_stats_affecting_mask();
  for (std::size_t i = 0; i < mask.selected.size(); ++i) {
    if (mask.selected[i]) affecting_.push_back(i);
  }
}

std::size_t MlpLossModel::dim() const { return mlp_->layout()->total(); }

ParamVector MlpLossModel::wrap(std::span<const double> w) const {
  if (w.size() != dim()) throw std::invalid_argument("MlpLossModel: dimension mismatch");
  ParamVector p;
  p.layout = mlp_->layout();
  p.values.assign(w.begin(), w.end());
  return p;
}

void MlpLossModel::ensure_stats(std::span<const double> w) const {
  if (!mlp_->has_bn()) {
    if (!have_stats_) {
      stats_ = mlp_->init_stats();
      have_stats_ = true;
    }
    return;
  }
  bool refresh = !have_stats_;
  if (!refresh) {
    double moved = 0.0;
    double base = 0.0;
    for (std::size_t idx = 0; idx < affecting_.size(); ++idx) {
      const double cur = w[affecting_[idx]];
      const double old = stats_anchor_[idx];
      moved += (cur - old) * (cur - old);
      base += old * old;
    }
    refresh = std::sqrt(moved) > threshold_ * std::max(std::sqrt(base), 1e-12);
  }
  if (refresh) {
    stats_ = mlp_->recompute_stats(wrap(w), x_);
    stats_anchor_.resize(affecting_.size());
    for (std::size_t idx = 0; idx < affecting_.size(); ++idx) {
      stats_anchor_[idx] = w[affecting_[idx]];
    }
    have_stats_ = true;
    ++recompute_events_;
  }
}

double MlpLossModel::loss(std::span<const double> w) const {
  ensure_stats(w);
  return mlp_->evaluate(wrap(w), stats_, x_, y_).loss;
}

double MlpLossModel::directional_grad(std::span<const double> w, std::span<const double> u,
                                      double /*h*/) const {
  ensure_stats(w);
  ParamVector grad;
  mlp_->eval_grad(wrap(w), stats_, x_, y_, grad);
  double s = 0.0;
  for (std::size_t i = 0; i < grad.values.size(); ++i) s += grad.values[i] * u[i];
  return s;
}

}  // namespace valley::nn
