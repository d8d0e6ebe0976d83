#include "valley/protocols.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>

#include "valley/nn.hpp"
#include "valley/probes.hpp"
#include "valley/rng.hpp"
#include "valley/sgd_sim.hpp"
#include "valley/shiftgen.hpp"
#include "valley/theory.hpp"
#include "valley/valley_models.hpp"

namespace valley::cli {

namespace {

using nlohmann::json;

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Artifacts are buffered and flushed only after the protocol succeeds; each
// file goes through a temp path and an atomic rename.
struct Context {
  const ExperimentConfig* config = nullptr;
  json metrics = json::object();
  json verdicts = json::object();
  std::vector<std::pair<std::string, std::string>> artifacts;

  void add_csv(const std::string& name, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns) {
    std::ostringstream out;
    for (std::size_t c = 0; c < header.size(); ++c) {
      out << (c ? "," : "") << header[c];
    }
    out << "\n";
    const std::size_t rows = columns.empty() ? 0 : columns.front().size();
    for (const auto& col : columns) {
      if (col.size() != rows) throw std::logic_error("csv columns must share length");
    }
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < columns.size(); ++c) {
        out << (c ? "," : "") << format_double(columns[c][r]);
      }
      out << "\n";
    }
    artifacts.emplace_back(name, out.str());
  }

  void pass_fail(const std::string& name, bool ok) { verdicts[name] = ok ? "pass" : "fail"; }
  void recorded(const std::string& name) { verdicts[name] = "recorded-only"; }
};

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

double require_number(const json& params, const std::string& key, double fallback) {
  if (!params.contains(key)) return fallback;
  if (!params.at(key).is_number()) throw ConfigError("param '" + key + "' must be a number");
  return params.at(key).get<double>();
}

std::int64_t require_int(const json& params, const std::string& key, std::int64_t fallback) {
  if (!params.contains(key)) return fallback;
  if (!params.at(key).is_number_integer())
    throw ConfigError("param '" + key + "' must be an integer");
  return params.at(key).get<std::int64_t>();
}

std::string require_string(const json& params, const std::string& key, std::string fallback) {
  if (!params.contains(key)) return fallback;
  if (!params.at(key).is_string()) throw ConfigError("param '" + key + "' must be a string");
  return params.at(key).get<std::string>();
}

std::vector<double> number_list(const json& params, const std::string& key,
                                std::vector<double> fallback) {
  if (!params.contains(key)) return fallback;
  const auto& v = params.at(key);
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array()) throw ConfigError("param '" + key + "' must be a number list");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ConfigError("param '" + key + "' must contain numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

ParamVector load_checkpoint_cfg(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
}

GradientBounds bounds_param(const json& params, const GradientBounds& fallback) {
  if (!params.contains("bounds")) return fallback;
  try {
    return bounds_from_json(params.at("bounds"));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid bounds: ") + e.what());
  }
}

// Demo configuration with asymmetry ratio 30 and room between the realized
// slopes and the declared lower bounds.
GradientBounds demo_bounds() {
  return GradientBounds{.a_plus = 0.05, .b_plus = 0.025, .a_minus = -1.5, .b_minus = -1.8,
                        .nu = 0.025};
}

sim::NoiseKind noise_kind_param(const json& params) {
  const std::string kind = require_string(params, "noise", "uniform");
  if (kind == "uniform") return sim::NoiseKind::Uniform;
  if (kind == "clipped-gaussian") return sim::NoiseKind::ClippedGaussian;
  if (kind == "zero") return sim::NoiseKind::Zero;
  throw ConfigError("unknown noise kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Model resolution for the probe protocols.

struct ResolvedModel {
  std::unique_ptr<LandscapeModel> model;
  std::unique_ptr<LandscapeModel> second;  // held-out loss for MLP models
  std::vector<double> center;
  const SeparableValleyND* valley = nullptr;  // set when the model is separable
  std::unique_ptr<nn::Mlp> mlp;
  std::unique_ptr<nn::Dataset> data;
  ParamVector checkpoint;
};

nn::DatasetConfig dataset_param(const json& doc) {
  nn::DatasetConfig cfg;
  const std::string gen = require_string(doc, "generator", "two-moons");
  if (gen == "two-moons") {
    cfg.generator = nn::DatasetConfig::Generator::TwoMoons;
  } else if (gen == "gaussian-mixture") {
    cfg.generator = nn::DatasetConfig::Generator::GaussianMixture;
  } else {
    throw ConfigError("unknown dataset generator '" + gen + "'");
  }
  cfg.train_size = static_cast<std::size_t>(require_int(doc, "train_size", 200));
  cfg.heldout_size = static_cast<std::size_t>(require_int(doc, "heldout_size", 50000));
  cfg.noise = require_number(doc, "noise", 0.25);
  cfg.seed = static_cast<std::uint64_t>(require_int(doc, "seed", 1));
  return cfg;
}

nn::Architecture arch_param(const json& params) {
  std::vector<int> widths{2, 16, 16, 2};
  if (params.contains("widths")) {
    widths.clear();
    for (const auto& w : params.at("widths")) widths.push_back(w.get<int>());
  }
  const bool bn = params.value("bn", true);
  try {
    return nn::Architecture::mlp(std::move(widths), bn);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid architecture: ") + e.what());
  }
}

ResolvedModel resolve_model(const json& doc, std::uint64_t seed) {
  if (!doc.is_object() || !doc.contains("kind")) throw ConfigError("model: expected an object with 'kind'");
  const std::string kind = doc.at("kind").get<std::string>();
  ResolvedModel rm;
  try {
    if (kind == "quadratic") {
      const auto dim = static_cast<std::size_t>(require_int(doc, "dim", 8));
      rm.center.assign(dim, 0.0);
      rm.model = std::make_unique<IsotropicQuadratic>(rm.center, require_number(doc, "scale", 1.0));
      return rm;
    }
    if (kind == "separable") {
      auto valley = std::make_unique<SeparableValleyND>(separable_from_json(doc));
      rm.center = valley->base();
      rm.valley = valley.get();
      rm.model = std::move(valley);
      return rm;
    }
    if (kind == "piecewise" || kind == "asymmetric_spec" || kind == "symmetric_flat" ||
        kind == "symmetric_sharp") {
      const auto dim = static_cast<std::size_t>(require_int(doc, "dim", 4));
      const auto embed_seed = static_cast<std::uint64_t>(
          require_int(doc, "seed", static_cast<std::int64_t>(seed)));
      std::vector<Loss1D> axes;
      axes.push_back(loss1d_from_json(doc));
      auto valley = std::make_unique<SeparableValleyND>(
          SeparableValleyND::embed(std::move(axes), std::max<std::size_t>(dim, 1), embed_seed));
      rm.center = valley->base();
      rm.valley = valley.get();
      rm.model = std::move(valley);
      return rm;
    }
    if (kind == "mlp") {
      if (!doc.contains("checkpoint")) throw ConfigError("mlp model needs a 'checkpoint' dir");
      rm.checkpoint = load_checkpoint(doc.at("checkpoint").get<std::string>());
      rm.mlp = std::make_unique<nn::Mlp>(arch_param(doc));
      if (!(*rm.mlp->layout() == *rm.checkpoint.layout))
        throw ConfigError("mlp model: checkpoint layout does not match the architecture");
      rm.data = std::make_unique<nn::Dataset>(
          nn::generate_dataset(dataset_param(doc.value("data", json::object()))));
      rm.center = rm.checkpoint.values;
      rm.model = std::make_unique<nn::MlpLossModel>(*rm.mlp, rm.data->train_x, rm.data->train_y);
      rm.second =
          std::make_unique<nn::MlpLossModel>(*rm.mlp, rm.data->heldout_x, rm.data->heldout_y);
      return rm;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  throw ConfigError("model: unknown kind '" + kind + "'");
}

probes::Direction direction_param(const json& doc, const ResolvedModel& rm, std::uint64_t seed) {
  const std::size_t dim = rm.model->dim();
  if (!doc.is_object()) throw ConfigError("direction: expected an object");
  if (doc.contains("axis")) {
    if (rm.valley == nullptr) throw ConfigError("direction: 'axis' needs a separable model");
    const auto i = doc.at("axis").get<std::size_t>();
    if (i >= rm.valley->num_axes()) throw ConfigError("direction: axis index out of range");
    probes::Direction d;
    d.v = rm.valley->direction(i);
    d.provenance = probes::DirectionKind::Custom;
    return d;
  }
  if (doc.contains("values")) {
    probes::Direction d;
    d.v = doc.at("values").get<std::vector<double>>();
    if (d.v.size() != dim) throw ConfigError("direction: values dimension mismatch");
    double n = norm2(d.v);
    if (!(n > 0.0)) throw ConfigError("direction: zero vector");
    for (double& x : d.v) x /= n;
    return d;
  }
  const std::string kind = require_string(doc, "kind", "random-0-1");
  const auto dseed = static_cast<std::uint64_t>(
      require_int(doc, "seed", static_cast<std::int64_t>(seed)));
  try {
    if (kind == "random-0-1") {
      return probes::sample_direction(probes::DirectionKind::RandomUnitInterval, dim, dseed);
    }
    if (kind == "gaussian") {
      return probes::sample_direction(probes::DirectionKind::RandomGaussian, dim, dseed);
    }
    if (kind == "bn" || kind == "non-bn") {
      if (!rm.mlp) throw ConfigError("direction: BN groups need an mlp model");
      auto mask = rm.mlp->bn_param_mask();
      if (kind == "non-bn") mask = mask.complement();
      return probes::sample_direction(probes::DirectionKind::GroupMasked, dim, dseed, &mask);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("direction: ") + e.what());
  }
  throw ConfigError("direction: unknown kind '" + kind + "'");
}

AsymmetrySpec spec_param(const json& params, AsymmetrySpec fallback) {
  if (!params.contains("spec")) return fallback;
  const auto& arr = params.at("spec");
  if (!arr.is_array() || arr.size() != 4) throw ConfigError("spec must be [r, p, c, zeta]");
  AsymmetrySpec spec{.r = arr[0], .p = arr[1], .c = arr[2], .zeta = arr[3]};
  try {
    spec.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid spec: ") + e.what());
  }
  return spec;
}

probes::FitPolicy policy_param(const json& params) {
  probes::FitPolicy policy;
  if (!params.contains("policy")) return policy;
  const auto& doc = params.at("policy");
  policy.r = require_number(doc, "r", policy.r);
  policy.zeta = require_number(doc, "zeta", policy.zeta);
  policy.grid_points = static_cast<std::size_t>(
      require_int(doc, "grid_points", static_cast<std::int64_t>(policy.grid_points)));
  policy.accept_c = require_number(doc, "accept_c", policy.accept_c);
  policy.normalize_units = doc.value("normalize_units", true);
  return policy;
}

json spec_to_json(const AsymmetrySpec& s) { return json::array({s.r, s.p, s.c, s.zeta}); }

json fitted_to_json(const probes::FittedDirection& fit) {
  return {{"fitted_spec", spec_to_json(fit.fitted)},
          {"c", fit.fitted.c},
          {"flat_max_slope", fit.verdict.flat_max_slope},
          {"sharp_min_slope_magnitude", fit.verdict.sharp_min_slope_magnitude},
          {"holds", fit.verdict.holds},
          {"method", fit.verdict.method},
          {"trial", fit.trial}};
}

// ---------------------------------------------------------------------------
// Protocol handlers.

void run_report_constants(Context& ctx) {
  const auto& params = ctx.config->params;
  const GradientBounds bounds = bounds_param(params, demo_bounds());
  const double eta = require_number(params, "eta", 0.1);
  std::optional<double> tau;
  if (params.contains("tau")) tau = require_number(params, "tau", 0.0);
  try {
    const auto constants = theory::compute_constants(bounds, eta, tau);
    const auto hypotheses = theory::theorem_two_hypothesis_check(bounds);
    ctx.metrics = theory::to_json(constants, hypotheses);
    if (const auto remark = theory::tau_remark_upper_bound(bounds)) {
      ctx.metrics["feasible"]["tau_remark_upper_bound"] = *remark;
    }
    ctx.recorded("constants");
  } catch (const theory::InfeasibleHypotheses& e) {
    throw ConfigError(std::string("infeasible constants: ") + e.what());
  }
}

void run_simulate_1d(Context& ctx) {
  const auto& params = ctx.config->params;
  Loss1D model = default_asymmetric_valley();
  if (params.contains("model")) {
    try {
      model = loss1d_from_json(params.at("model"));
    } catch (const std::exception& e) {
      throw ConfigError(std::string("invalid model: ") + e.what());
    }
  }
  sim::SGDConfig cfg;
  cfg.eta = require_number(params, "eta", 0.1);
  cfg.nu = require_number(params, "nu", 0.05);
  cfg.noise_kind = noise_kind_param(params);
  cfg.steps = require_int(params, "steps", 20000);
  cfg.seed = ctx.config->seed;
  cfg.w_init = require_number(params, "w_init", 0.05);
  if (cfg.eta <= 0 || cfg.nu < 0 || cfg.steps < 1) throw ConfigError("invalid simulate-1d parameters");
  const auto want_rounds = static_cast<std::size_t>(require_int(params, "rounds", 0));

  sim::Trajectory traj = sim::run_sgd(model, cfg);
  auto rounds = sim::segment_rounds(traj);
  for (int attempt = 0; attempt < 6 && rounds.size() < want_rounds; ++attempt) {
    cfg.steps *= 2;
    traj = sim::run_sgd(model, cfg);
    rounds = sim::segment_rounds(traj);
  }
  if (want_rounds > 0 && rounds.size() < want_rounds)
    throw ConfigError("simulate-1d: could not collect the requested rounds; raise steps");
  if (want_rounds > 0 && rounds.size() > want_rounds) rounds.resize(want_rounds);

  std::vector<double> t(traj.positions.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  std::vector<double> grads = traj.gradients;
  std::vector<double> noises = traj.noises;
  grads.push_back(std::numeric_limits<double>::quiet_NaN());  // no update after the last iterate
  noises.push_back(std::numeric_limits<double>::quiet_NaN());
  ctx.add_csv("trajectory.csv", {"t", "w", "grad", "noise"}, {t, traj.positions, grads, noises});

  std::vector<double> r_idx, r_start, r_end, r_len, r_avg, r_sharp;
  for (std::size_t i = 0; i < rounds.size(); ++i) {
    r_idx.push_back(static_cast<double>(i));
    r_start.push_back(static_cast<double>(rounds[i].start));
    r_end.push_back(static_cast<double>(rounds[i].end));
    r_len.push_back(static_cast<double>(rounds[i].length()));
    r_avg.push_back(rounds[i].average);
    r_sharp.push_back(static_cast<double>(rounds[i].sharp_dwell));
  }
  ctx.add_csv("rounds.csv", {"round", "start", "end", "length", "average", "sharp_dwell"},
              {r_idx, r_start, r_end, r_len, r_avg, r_sharp});

  const auto avg = sim::average_iterates(traj, sim::default_burn_in(traj));
  ctx.metrics["n_rounds"] = rounds.size();
  ctx.metrics["final_average"] = avg.final_average;
  ctx.metrics["burn_in"] = sim::default_burn_in(traj);
  if (rounds.size() >= 1) {
    double mean = 0.0;
    for (const auto& r : rounds) mean += r.average;
    ctx.metrics["mean_round_average"] = mean / static_cast<double>(rounds.size());
  }
  ctx.recorded("trajectory");
}

void run_theorem1_verify(Context& ctx) {
  const auto& params = ctx.config->params;
  const auto k = static_cast<std::size_t>(require_int(params, "k", 1));
  if (k < 1) throw ConfigError("theorem1-verify: k must be >= 1");
  auto broadcast = [&](const char* key, double fallback) {
    auto xs = number_list(params, key, {fallback});
    if (xs.size() == 1) xs.assign(k, xs.front());
    if (xs.size() != k) throw ConfigError(std::string("theorem1-verify: '") + key + "' needs k entries");
    return xs;
  };
  const auto c = broadcast("c", 5.0);
  const auto p = broadcast("p", 0.1);
  const auto l = broadcast("l", 1.0);
  const auto delta_bar = broadcast("delta-bar", 2.0);
  const double xi = require_number(params, "xi", 0.0);
  const std::string mode = require_string(params, "mode", "enum");
  if (mode != "enum" && mode != "mc") throw ConfigError("theorem1-verify: mode must be enum|mc");
  const auto samples = static_cast<std::size_t>(require_int(params, "samples", 100000));

  shift::TheoremOneInstance instance = [&] {
    try {
      return shift::make_theorem_one_instance(c, p, delta_bar, l, xi, ctx.config->seed);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("theorem1-verify: ") + e.what());
    }
  }();

  shift::ExpectedLossGap gap;
  if (mode == "enum") {
    if (k > 20) throw ConfigError("theorem1-verify: enumeration budget is k <= 20; use mode=mc");
    gap = shift::enumerate_expected_losses(instance.model, instance.bias);
  } else {
    gap = shift::monte_carlo_expected_losses(instance.model, instance.bias, samples,
                                             ctx.config->seed);
  }

  ctx.metrics["k"] = k;
  ctx.metrics["mode"] = mode;
  ctx.metrics["xi"] = xi;
  ctx.metrics["expected_loss_at_minimizer"] = gap.at_minimizer;
  ctx.metrics["expected_loss_at_biased"] = gap.at_biased;
  ctx.metrics["gap"] = gap.gap;
  ctx.metrics["gap_stderr"] = gap.stderr_gap;
  ctx.metrics["samples"] = gap.samples;
  ctx.metrics["bound"] = gap.bound_value;
  ctx.metrics["side_conditions_ok"] = gap.bound.feasible();
  if (k <= 10) {
    ctx.metrics["measured_shift_gap"] = instance.model.max_measured_shift_gap(1000);
  }

  const double slack = mode == "enum" ? 1e-12 : 4.0 * gap.stderr_gap;
  if (gap.bound.feasible()) {
    ctx.pass_fail("gap_above_bound", gap.gap >= gap.bound_value - slack);
  } else {
    ctx.recorded("gap_above_bound");
  }
}

void run_theorem2_verify(Context& ctx) {
  const auto& params = ctx.config->params;
  const GradientBounds bounds = bounds_param(params, demo_bounds());
  sim::SGDConfig cfg;
  cfg.eta = require_number(params, "eta", 0.1);
  cfg.nu = require_number(params, "nu", bounds.nu);
  cfg.noise_kind = noise_kind_param(params);
  cfg.seed = ctx.config->seed;
  const auto n_rounds = static_cast<std::size_t>(require_int(params, "rounds", 5000));
  const bool override_hyp = params.value("override", false);
  cfg.w_init = require_number(params, "w_init", -0.5 * cfg.eta * (bounds.b_minus - cfg.nu));

  const PiecewiseValley1D model(bounds, GradientProfile::Tight);
  sim::TheoremTwoReport rep;
  try {
    rep = sim::verify_theorem_two(model, cfg, n_rounds, override_hyp);
  } catch (const theory::InfeasibleHypotheses& e) {
    throw ConfigError(std::string("theorem2-verify: ") + e.what());
  }

  ctx.metrics["constants"] = theory::to_json(rep.constants, rep.hypotheses);
  ctx.metrics["hypothesis_override"] = rep.hypothesis_override;
  ctx.metrics["rounds"] = rep.stats.n_rounds;
  ctx.metrics["mean_round_average"] = rep.stats.mean_average;
  ctx.metrics["stderr_round_average"] = rep.stats.stderr_average;
  ctx.metrics["ci99"] = json::array({rep.ci99_low, rep.ci99_high});
  ctx.metrics["frac_flat_dwell_ge_tmin"] = rep.stats.frac_flat_dwell_ge_tmin;
  ctx.metrics["frac_exit_by_tmax"] = rep.stats.frac_exit_by_tmax;
  ctx.metrics["frac_length_le_tmax"] = rep.stats.frac_length_le_tmax;
  ctx.metrics["w0_violations"] = rep.w0_violations;
  json hist = json::object();
  for (const auto& [dwell, count] : rep.stats.sharp_dwell_histogram) {
    hist[std::to_string(dwell)] = count;
  }
  ctx.metrics["sharp_dwell_histogram"] = hist;

  ctx.pass_fail("positive_bias", rep.positive_bias);
  if (rep.constants.tau_condition_ok) {
    ctx.pass_fail("exceeds_c0", rep.exceeds_c0);
  } else {
    ctx.recorded("exceeds_c0");
  }
  ctx.pass_fail("dwell_lower_bound", rep.dwell_lower_ok);
  ctx.pass_fail("dwell_upper_bound", rep.dwell_upper_ok);
  ctx.pass_fail("round_starts_in_p_range", rep.w0_violations == 0);
}

nn::SwaGroup swa_group_param(const std::string& name) {
  if (name == "all") return nn::SwaGroup::All;
  if (name == "bn") return nn::SwaGroup::BnOnly;
  if (name == "non-bn") return nn::SwaGroup::NonBnMatched;
  throw ConfigError("train: swa-group must be all|bn|non-bn");
}

void run_train(Context& ctx) {
  const auto& params = ctx.config->params;
  const nn::Architecture arch = arch_param(params);
  const nn::Mlp mlp(arch);
  const nn::Dataset data = nn::generate_dataset(dataset_param(params.value("data", json::object())));

  nn::TrainConfig cfg;
  cfg.eta.eta0 = require_number(params, "eta", 0.1);
  cfg.eta.eta_final = require_number(params, "eta_final", -1.0);
  cfg.batch_size = static_cast<int>(require_int(params, "batch", 32));
  cfg.epochs = static_cast<int>(require_int(params, "epochs", 100));
  cfg.seed = ctx.config->seed;

  std::optional<nn::SwaConfig> swa;
  if (params.contains("swa-start")) {
    nn::SwaConfig sc;
    sc.start_epoch = static_cast<int>(require_int(params, "swa-start", 0));
    sc.cadence = static_cast<int>(require_int(params, "swa-cadence", 1));
    sc.group = swa_group_param(require_string(params, "swa-group", "all"));
    swa = sc;
  }

  std::optional<ParamVector> init;
  if (params.contains("init_checkpoint")) {
    init = load_checkpoint_cfg(require_string(params, "init_checkpoint", ""));
  }

  nn::TrainResult result;
  try {
    result = nn::train(mlp, data, cfg, swa, init);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }

  std::vector<std::string> header{"epoch", "eta", "train_loss", "train_acc",
                                  "heldout_loss", "heldout_acc"};
  std::vector<std::vector<double>> cols(6);
  const bool any_swa = result.swa_params.has_value();
  if (any_swa) {
    header.insert(header.end(), {"swa_train_loss", "swa_train_acc", "swa_heldout_loss",
                                 "swa_heldout_acc"});
    cols.resize(10);
  }
  for (const auto& em : result.history) {
    cols[0].push_back(em.epoch);
    cols[1].push_back(em.eta);
    cols[2].push_back(em.train.loss);
    cols[3].push_back(em.train.accuracy);
    cols[4].push_back(em.heldout.loss);
    cols[5].push_back(em.heldout.accuracy);
    if (any_swa) {
      const double nanv = std::numeric_limits<double>::quiet_NaN();
      cols[6].push_back(em.has_swa ? em.swa_train.loss : nanv);
      cols[7].push_back(em.has_swa ? em.swa_train.accuracy : nanv);
      cols[8].push_back(em.has_swa ? em.swa_heldout.loss : nanv);
      cols[9].push_back(em.has_swa ? em.swa_heldout.accuracy : nanv);
    }
  }
  ctx.add_csv("metrics.csv", header, cols);

  save_checkpoint(ctx.config->out_dir / "final", result.params);
  ctx.metrics["final_checkpoint"] = "final";
  if (result.swa_params) {
    save_checkpoint(ctx.config->out_dir / "swa", *result.swa_params);
    ctx.metrics["swa_checkpoint"] = "swa";
    ctx.metrics["swa_checkpoints_averaged"] = result.swa_checkpoints;
  }
  if (!result.history.empty()) {
    const auto& last = result.history.back();
    ctx.metrics["final"] = {{"train_loss", last.train.loss},
                            {"train_acc", last.train.accuracy},
                            {"heldout_loss", last.heldout.loss},
                            {"heldout_acc", last.heldout.accuracy}};
    if (last.has_swa) {
      ctx.metrics["swa"] = {{"train_loss", last.swa_train.loss},
                            {"train_acc", last.swa_train.accuracy},
                            {"heldout_loss", last.swa_heldout.loss},
                            {"heldout_acc", last.swa_heldout.accuracy}};
    }
  }
  ctx.recorded("training");
}

void run_probe_slice(Context& ctx) {
  const auto& params = ctx.config->params;
  ResolvedModel rm = resolve_model(params.value("model", json{{"kind", "quadratic"}}),
                                   ctx.config->seed);
  const probes::Direction dir =
      direction_param(params.value("direction", json::object()), rm, ctx.config->seed);
  const double lo = require_number(params, "lo", -3.0);
  const double hi = require_number(params, "hi", 3.0);
  const auto steps = static_cast<std::size_t>(require_int(params, "steps", 121));
  const auto prof = probes::slice(*rm.model, rm.center, dir.v, lo, hi, steps, rm.second.get());
  if (prof.second.empty()) {
    ctx.add_csv("slice.csv", {"l", "loss"}, {prof.offsets, prof.values});
  } else {
    ctx.add_csv("slice.csv", {"l", "loss", "second_loss"},
                {prof.offsets, prof.values, prof.second});
  }
  std::size_t finite = 0;
  for (auto f : prof.finite) finite += f;
  ctx.metrics["points"] = prof.offsets.size();
  ctx.metrics["finite_points"] = finite;
  ctx.recorded("slice");
}

void run_probe_classify(Context& ctx) {
  const auto& params = ctx.config->params;
  ResolvedModel rm = resolve_model(params.value("model", json{{"kind", "asymmetric_spec"},
                                                              {"spec", {2.5, 0.2, 7.5, 1.2}}}),
                                   ctx.config->seed);
  const AsymmetrySpec spec = spec_param(params, AsymmetrySpec{.r = 2.5, .p = 0.2, .c = 7.5, .zeta = 1.2});
  probes::Direction dir = direction_param(params.value("direction", json{{"axis", 0}}), rm,
                                          ctx.config->seed);
  const auto grid = static_cast<std::size_t>(require_int(params, "grid_points", 32));
  const auto verdict = probes::classify_direction(*rm.model, rm.center, dir.v, spec, grid);
  ctx.metrics["spec"] = spec_to_json(spec);
  ctx.metrics["holds"] = verdict.holds;
  ctx.metrics["flat_max_slope"] = verdict.flat_max_slope;
  ctx.metrics["sharp_min_slope_magnitude"] = verdict.sharp_min_slope_magnitude;
  ctx.metrics["method"] = verdict.method;
  ctx.add_csv("classify.csv", {"flat_max_slope", "sharp_min_slope_magnitude"},
              {{verdict.flat_max_slope}, {verdict.sharp_min_slope_magnitude}});
  ctx.recorded("classification");
}

void run_probe_find_asym(Context& ctx) {
  const auto& params = ctx.config->params;
  ResolvedModel rm = resolve_model(params.value("model", json{{"kind", "asymmetric_spec"},
                                                              {"spec", {3.0, 0.1, 10.0, 0.5}}}),
                                   ctx.config->seed);
  const auto trials = static_cast<std::size_t>(require_int(params, "trials", 50));
  if (trials < 1) throw ConfigError("probe.find-asym: trials must be >= 1");
  const auto policy = policy_param(params);
  const auto found =
      probes::find_asymmetric_direction(*rm.model, rm.center, policy, trials, ctx.config->seed);
  ctx.metrics["trials"] = trials;
  ctx.metrics["found"] = found.has_value();
  if (found) {
    ctx.metrics["result"] = fitted_to_json(*found);
    ctx.add_csv("find_asym.csv", {"trial", "c", "flat_max_slope", "sharp_min_slope_magnitude"},
                {{static_cast<double>(found->trial)},
                 {found->fitted.c},
                 {found->verdict.flat_max_slope},
                 {found->verdict.sharp_min_slope_magnitude}});
  } else {
    ctx.add_csv("find_asym.csv", {"trial", "c", "flat_max_slope", "sharp_min_slope_magnitude"},
                {{}, {}, {}, {}});
  }
  ctx.recorded("search");
}

void run_probe_neighborhood(Context& ctx) {
  const auto& params = ctx.config->params;
  ResolvedModel rm = resolve_model(params.value("model", json{{"kind", "asymmetric_spec"},
                                                              {"spec", {4.0, 0.1, 5.22, 2.0}},
                                                              {"dim", 8}}),
                                   ctx.config->seed);
  const AsymmetrySpec spec = spec_param(params, AsymmetrySpec{.r = 4.0, .p = 0.1, .c = 5.22, .zeta = 2.0});
  probes::Direction dir = direction_param(params.value("direction", json{{"axis", 0}}), rm,
                                          ctx.config->seed);
  const double r_prime = require_number(params, "r_prime", 25.0);
  const auto samples = static_cast<std::size_t>(require_int(params, "samples", 100));
  if (samples < 10) throw ConfigError("probe.neighborhood: need at least 10 samples");
  const auto rep = probes::verify_neighborhood_asymmetry(*rm.model, rm.center, dir.v, spec,
                                                         r_prime, samples, ctx.config->seed);
  ctx.add_csv("neighborhood.csv", {"l", "mean_loss", "variance"},
              {rep.offsets, rep.mean_profile, rep.variance_profile});
  ctx.metrics["holds_fraction"] = rep.holds_fraction;
  ctx.metrics["samples"] = rep.n_samples;
  ctx.metrics["spec"] = spec_to_json(spec);
  ctx.metrics["r_prime"] = r_prime;
  ctx.recorded("neighborhood");
}

void run_probe_interpolate(Context& ctx) {
  const auto& params = ctx.config->params;
  ResolvedModel rm = resolve_model(params.value("model", json{{"kind", "quadratic"}}),
                                   ctx.config->seed);
  std::vector<double> a, b;
  if (params.contains("checkpoint_a") && params.contains("checkpoint_b")) {
    a = load_checkpoint_cfg(require_string(params, "checkpoint_a", "")).values;
    b = load_checkpoint_cfg(require_string(params, "checkpoint_b", "")).values;
  } else {
    a = number_list(params, "point_a", std::vector<double>(rm.model->dim(), 0.0));
    b = number_list(params, "point_b", std::vector<double>(rm.model->dim(), 1.0));
  }
  if (a.size() != rm.model->dim() || b.size() != rm.model->dim())
    throw ConfigError("probe.interpolate: endpoint dimension mismatch");
  const double lo = require_number(params, "lo", -0.5);
  const double hi = require_number(params, "hi", 1.5);
  const auto steps = static_cast<std::size_t>(require_int(params, "steps", 81));
  const auto res = probes::interpolate(*rm.model, a, b, lo, hi, steps, rm.second.get());
  if (res.profile.second.empty()) {
    ctx.add_csv("interpolate.csv", {"t", "loss"}, {res.profile.offsets, res.profile.values});
  } else {
    ctx.add_csv("interpolate.csv", {"t", "loss", "second_loss"},
                {res.profile.offsets, res.profile.values, res.profile.second});
  }
  ctx.metrics["loss_at_a"] = res.end_a;
  ctx.metrics["loss_at_b"] = res.end_b;
  ctx.metrics["bump"] = res.bump;
  ctx.metrics["bump_height"] = res.bump_height;
  ctx.recorded("interpolation");
}

void run_probe_random_ray(Context& ctx) {
  const auto& params = ctx.config->params;
  ResolvedModel rm = resolve_model(params.value("model", json{{"kind", "quadratic"}}),
                                   ctx.config->seed);
  const auto rays = static_cast<std::size_t>(require_int(params, "rays", 32));
  std::vector<double> radii = number_list(params, "radii", {});
  if (radii.empty()) {
    const double rmax = require_number(params, "radius_max", 3.0);
    const auto steps = static_cast<std::size_t>(require_int(params, "radius_steps", 31));
    for (std::size_t j = 0; j < steps; ++j) {
      radii.push_back(rmax * static_cast<double>(j) / static_cast<double>(steps - 1));
    }
  }
  const auto prof = probes::random_ray_profile(*rm.model, rm.center, rays, radii,
                                               ctx.config->seed);
  ctx.add_csv("random_ray.csv", {"radius", "mean_loss", "stderr"},
              {prof.radii, prof.mean, prof.stderr_});
  ctx.metrics["rays"] = prof.n_rays;
  ctx.recorded("random_ray");
}

void run_probe_stability(Context& ctx) {
  const auto& params = ctx.config->params;
  ResolvedModel rm = resolve_model(params.value("model", json{{"kind", "quadratic"}}),
                                   ctx.config->seed);
  std::vector<std::vector<double>> checkpoints;
  if (params.contains("checkpoints")) {
    for (const auto& entry : params.at("checkpoints")) {
      if (entry.is_string()) {
        checkpoints.push_back(load_checkpoint_cfg(entry.get<std::string>()).values);
      } else {
        checkpoints.push_back(entry.get<std::vector<double>>());
      }
    }
  } else {
    // Default demo: points drifting orthogonally in a quadratic bowl.
    for (int i = 0; i < 6; ++i) {
      std::vector<double> p(rm.model->dim(), 0.0);
      p[0] = 0.2 * i;
      checkpoints.push_back(std::move(p));
    }
  }
  for (const auto& cp : checkpoints) {
    if (cp.size() != rm.model->dim())
      throw ConfigError("probe.stability: checkpoint dimension mismatch");
  }
  if (checkpoints.size() < 2) throw ConfigError("probe.stability: need at least 2 checkpoints");
  probes::Direction dir = direction_param(params.value("direction", json{{"kind", "gaussian"}}),
                                          rm, ctx.config->seed);
  const double lo = require_number(params, "lo", -3.0);
  const double hi = require_number(params, "hi", 3.0);
  const auto steps = static_cast<std::size_t>(require_int(params, "steps", 61));
  const auto rep = probes::projected_slice_stability(*rm.model, checkpoints, dir.v, lo, hi, steps);

  std::vector<std::string> header{"l"};
  std::vector<std::vector<double>> cols{rep.profiles.front().offsets};
  for (std::size_t i = 0; i < rep.profiles.size(); ++i) {
    header.push_back("checkpoint" + std::to_string(i));
    cols.push_back(rep.profiles[i].values);
  }
  ctx.add_csv("stability.csv", header, cols);
  ctx.metrics["stability_index"] = rep.stability_index;
  ctx.metrics["early_index"] = rep.early_index;
  ctx.metrics["checkpoints"] = rep.profiles.size();
  ctx.recorded("stability");
}

void run_probe_bn_compare(Context& ctx) {
  const auto& params = ctx.config->params;
  if (!params.contains("model")) throw ConfigError("probe.bn-compare: needs an mlp model");
  ResolvedModel rm = resolve_model(params.at("model"), ctx.config->seed);
  if (!rm.mlp) throw ConfigError("probe.bn-compare: needs an mlp model");
  const auto bn = rm.mlp->bn_param_mask();
  const auto non_bn = bn.complement();
  const auto cmp = probes::bn_direction_comparison(*rm.model, rm.center, bn, non_bn,
                                                   ctx.config->seed, policy_param(params));
  ctx.metrics["bn"] = fitted_to_json(cmp.bn);
  ctx.metrics["non_bn"] = fitted_to_json(cmp.non_bn);
  ctx.metrics["bn_more_asymmetric"] = cmp.bn.fitted.c > cmp.non_bn.fitted.c;
  ctx.add_csv("bn_compare.csv", {"c_bn", "c_non_bn"}, {{cmp.bn.fitted.c}, {cmp.non_bn.fitted.c}});
  ctx.recorded("bn_comparison");
}

struct ProtocolEntry {
  ProtocolInfo info;
  std::function<void(Context&)> run;
};

const std::vector<ProtocolEntry>& registry() {
  static const std::vector<ProtocolEntry> entries = [] {
    std::vector<ProtocolEntry> v;
    v.push_back({{"probe.bn-compare",
                  "Fit asymmetry along a BN-masked vs a non-BN-masked random direction.",
                  "BN/non-BN direction comparison on a trained classifier"},
                 run_probe_bn_compare});
    v.push_back({{"probe.classify",
                  "Check an (r, p, c, zeta) asymmetry tuple along a direction.",
                  "asymmetric-direction verification for reported tuples"},
                 run_probe_classify});
    v.push_back({{"probe.find-asym",
                  "Search random (0,1)-directions for one with fitted ratio above threshold.",
                  "random-direction asymmetry search at a solution"},
                 run_probe_find_asym});
    v.push_back({{"probe.interpolate",
                  "Loss along the segment between two parameter vectors, with bump detection.",
                  "averaged-vs-refined solution interpolation (no-barrier check)"},
                 run_probe_interpolate});
    v.push_back({{"probe.neighborhood",
                  "Re-check a tuple at orthogonally displaced basepoints in a ball.",
                  "neighborhood asymmetry (local-shift robustness) verification"},
                 run_probe_neighborhood});
    v.push_back({{"probe.random-ray",
                  "Mean loss vs distance along Gaussian rays from a point.",
                  "width-illusion visualization for two points of one basin"},
                 run_probe_random_ray});
    v.push_back({{"probe.slice",
                  "Loss profile along one direction through a point.",
                  "1D landscape slices through solutions"},
                 run_probe_slice});
    v.push_back({{"probe.stability",
                  "Slices along one direction through successive checkpoints.",
                  "projected-surface stability across training"},
                 run_probe_stability});
    v.push_back({{"report-constants",
                  "Closed-form oscillation constants and hypothesis checks for given bounds.",
                  "dwell-time and bias-bound constants"},
                 run_report_constants});
    v.push_back({{"simulate-1d",
                  "SGD with bounded noise on a 1D valley; trajectory and round CSVs.",
                  "one-dimensional oscillation dynamics"},
                 run_simulate_1d});
    v.push_back({{"theorem1-verify",
                  "Expected-loss gap of biased vs minimizer under enumerated sign shifts.",
                  "bias-improves-expected-loss bound verification"},
                 run_theorem1_verify});
    v.push_back({{"theorem2-verify",
                  "Empirical oscillation-bias verification against the derived constants.",
                  "averaging-bias theorem verification"},
                 run_theorem2_verify});
    v.push_back({{"train",
                  "Train the toy MLP with optional (group-restricted) weight averaging.",
                  "averaging protocols on a from-scratch classifier"},
                 run_train});
    return v;
  }();
  return entries;
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  ExperimentConfig cfg;
  if (!doc.contains("protocol") || !doc.at("protocol").is_string())
    throw ConfigError("config: 'protocol' (string) is required");
  cfg.protocol = doc.at("protocol").get<std::string>();
  if (doc.contains("params")) {
    if (!doc.at("params").is_object()) throw ConfigError("config: 'params' must be an object");
    cfg.params = doc.at("params");
  }
  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_integer()) throw ConfigError("config: 'seed' must be an integer");
    cfg.seed = doc.at("seed").get<std::uint64_t>();
  }
  cfg.out_dir = doc.value("out_dir", std::string("."));
  return cfg;
}

nlohmann::json to_json(const ExperimentConfig& config) {
  return {{"protocol", config.protocol},
          {"params", config.params},
          {"seed", config.seed},
          {"out_dir", config.out_dir.string()}};
}

std::vector<ProtocolInfo> list_protocols() {
  std::vector<ProtocolInfo> out;
  for (const auto& e : registry()) out.push_back(e.info);
  return out;
}

RunResult run_protocol(const ExperimentConfig& config) {
  const ProtocolEntry* entry = nullptr;
  for (const auto& e : registry()) {
    if (e.info.id == config.protocol) {
      entry = &e;
      break;
    }
  }
  if (entry == nullptr) throw ConfigError("unknown protocol '" + config.protocol + "'");
  if (config.out_dir.empty()) throw ConfigError("config: out_dir must not be empty");

  Context ctx;
  ctx.config = &config;
  try {
    entry->run(ctx);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  RunResult result;
  result.report["protocol"] = config.protocol;
  result.report["config"] = to_json(config);
  result.report["metrics"] = ctx.metrics;
  result.report["verdicts"] = ctx.verdicts;
  result.report["provenance"] = {
      {"toolkit", kToolkitName}, {"version", kToolkitVersion}, {"timestamp", iso_timestamp()}};

  result.exit_code = 0;
  for (const auto& [name, verdict] : ctx.verdicts.items()) {
    if (verdict.get<std::string>() == "fail") result.exit_code = 1;
  }

  std::filesystem::create_directories(config.out_dir);
  for (const auto& [name, content] : ctx.artifacts) {
    write_atomic(config.out_dir / name, content);
    result.files.push_back(name);
  }
  result.report["files"] = result.files;
  write_atomic(config.out_dir / "report.json", result.report.dump(2) + "\n");
  result.files.push_back("report.json");
  return result;
}

}  // namespace valley::cli
