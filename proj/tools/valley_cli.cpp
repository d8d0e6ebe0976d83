// Command-line entry point: every experiment protocol is dispatched through
// valley::cli::run_protocol, so a subcommand is a thin flag-to-params map.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "valley/protocols.hpp"

namespace {

using nlohmann::json;

int execute(valley::cli::ExperimentConfig config, bool quiet) {
  try {
    const auto result = valley::cli::run_protocol(config);
    if (!quiet) {
      json summary = {{"metrics", result.report["metrics"]},
                      {"verdicts", result.report["verdicts"]},
                      {"files", result.report["files"]},
                      {"out_dir", config.out_dir.string()}};
      std::cout << summary.dump(2) << "\n";
    }
    return result.exit_code;
  } catch (const valley::cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw valley::cli::ConfigError("cannot open " + path);
  return json::parse(in);
}

std::vector<int> parse_widths(const std::string& spec) {
  std::vector<int> widths;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) widths.push_back(std::stoi(tok));
  return widths;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Loss-landscape asymmetry toolkit"};
  app.require_subcommand(1);

  std::string out_dir = "out";
  std::uint64_t seed = 1;
  bool seed_given = false;
  bool quiet = false;
  auto* opt_out = app.add_option("--out", out_dir, "Output directory for reports and CSV artifacts");
  auto* opt_seed = app.add_option("--seed", seed, "Seed override (all randomness derives from it)");
  app.add_flag("--quiet", quiet, "Suppress the report summary on stdout");

  auto make_config = [&](const std::string& protocol, json params) {
    valley::cli::ExperimentConfig cfg;
    cfg.protocol = protocol;
    cfg.params = std::move(params);
    cfg.seed = seed;
    cfg.out_dir = out_dir;
    return cfg;
  };

  // ---- list ----
  auto* cmd_list = app.add_subcommand("list", "List available protocols");

  // ---- run (config file driven) ----
  auto* cmd_run = app.add_subcommand("run", "Run a protocol from a JSON config file");
  std::string config_path;
  cmd_run->add_option("--config", config_path, "Experiment config JSON")->required();

  // ---- report-constants ----
  auto* cmd_constants = app.add_subcommand(
      "report-constants", "Closed-form oscillation constants for gradient bounds");
  double a_plus = 0.05, b_plus = 0.025, a_minus = -1.5, b_minus = -1.8, nu = 0.025, eta = 0.1;
  std::optional<double> tau_opt;
  cmd_constants->add_option("--a-plus", a_plus);
  cmd_constants->add_option("--b-plus", b_plus);
  cmd_constants->add_option("--a-minus", a_minus);
  cmd_constants->add_option("--b-minus", b_minus);
  cmd_constants->add_option("--nu", nu);
  cmd_constants->add_option("--eta", eta);
  double tau_value = 0.0;
  auto* opt_tau =
      cmd_constants->add_option("--tau", tau_value, "Confidence constant (auto-picked when omitted)");

  // ---- simulate-1d ----
  auto* cmd_sim = app.add_subcommand("simulate-1d", "SGD on a 1D valley; writes trajectory/rounds CSVs");
  std::string sim_model_path;
  double sim_eta = 0.1, sim_nu = 0.05, sim_w_init = 0.05;
  std::int64_t sim_steps = 20000;
  std::string sim_noise = "uniform";
  cmd_sim->add_option("--model", sim_model_path, "Valley JSON document");
  cmd_sim->add_option("--eta", sim_eta);
  cmd_sim->add_option("--nu", sim_nu);
  cmd_sim->add_option("--steps", sim_steps);
  cmd_sim->add_option("--noise", sim_noise, "uniform|clipped-gaussian|zero");
  cmd_sim->add_option("--w-init", sim_w_init);
  std::int64_t sim_rounds = 0;
  cmd_sim->add_option("--rounds", sim_rounds, "Grow the budget until this many rounds exist");

  // ---- theorem1-verify ----
  auto* cmd_t1 = app.add_subcommand("theorem1-verify", "Expected-loss gap vs its lower bound");
  std::size_t t1_k = 1;
  std::vector<double> t1_c{5.0}, t1_p{0.1}, t1_l{1.0}, t1_delta{2.0};
  double t1_xi = 0.0;
  std::string t1_mode = "enum";
  std::size_t t1_samples = 100000;
  cmd_t1->add_option("--k", t1_k);
  cmd_t1->add_option("--c", t1_c)->expected(-1);
  cmd_t1->add_option("--p", t1_p)->expected(-1);
  cmd_t1->add_option("--l", t1_l)->expected(-1);
  cmd_t1->add_option("--delta-bar", t1_delta)->expected(-1);
  cmd_t1->add_option("--xi", t1_xi);
  cmd_t1->add_option("--mode", t1_mode, "enum|mc");
  cmd_t1->add_option("--samples", t1_samples);

  // ---- theorem2-verify ----
  auto* cmd_t2 = app.add_subcommand("theorem2-verify", "Oscillation-bias verification run");
  double t2_a_plus = 0.05, t2_b_plus = 0.025, t2_a_minus = -1.5, t2_b_minus = -1.8;
  double t2_eta = 0.1, t2_nu = 0.025;
  std::size_t t2_rounds = 5000;
  bool t2_override = false;
  cmd_t2->add_option("--a-plus", t2_a_plus);
  cmd_t2->add_option("--b-plus", t2_b_plus);
  cmd_t2->add_option("--a-minus", t2_a_minus);
  cmd_t2->add_option("--b-minus", t2_b_minus);
  cmd_t2->add_option("--eta", t2_eta);
  cmd_t2->add_option("--nu", t2_nu);
  cmd_t2->add_option("--rounds", t2_rounds);
  cmd_t2->add_flag("--override", t2_override, "Run even when the hypothesis check fails");

  // ---- train ----
  auto* cmd_train = app.add_subcommand("train", "Train the toy MLP (optional weight averaging)");
  std::string arch = "2,16,16,2";
  bool no_bn = false;
  std::string data_gen = "two-moons";
  std::size_t train_size = 200, heldout_size = 50000;
  double data_noise = 0.25;
  std::uint64_t data_seed = 1;
  int epochs = 100, batch = 32;
  double train_eta = 0.1, train_eta_final = -1.0;
  std::optional<int> swa_start;
  int swa_start_value = 0;
  std::string swa_group = "all";
  std::string init_checkpoint;
  cmd_train->add_option("--arch", arch, "Comma-separated layer widths");
  cmd_train->add_flag("--no-bn", no_bn, "Disable batch norm on hidden layers");
  cmd_train->add_option("--data", data_gen, "two-moons|gaussian-mixture");
  cmd_train->add_option("--train-size", train_size);
  cmd_train->add_option("--heldout-size", heldout_size);
  cmd_train->add_option("--data-noise", data_noise);
  cmd_train->add_option("--data-seed", data_seed);
  cmd_train->add_option("--epochs", epochs);
  cmd_train->add_option("--batch", batch);
  cmd_train->add_option("--eta", train_eta);
  cmd_train->add_option("--eta-final", train_eta_final, "Linear schedule endpoint (< 0: constant)");
  auto* opt_swa_start =
      cmd_train->add_option("--swa-start", swa_start_value, "First epoch included in the average");
  cmd_train->add_option("--swa-group", swa_group, "all|bn|non-bn");
  cmd_train->add_option("--init-checkpoint", init_checkpoint, "Continue from a saved checkpoint");

  // ---- probe ----
  auto* cmd_probe = app.add_subcommand("probe", "Landscape probes (CSV + JSON verdict sidecar)");
  cmd_probe->require_subcommand(1);
  std::string probe_model_path;
  std::string probe_params_path;
  std::vector<CLI::App*> probe_subs;
  for (const char* name : {"slice", "classify", "find-asym", "neighborhood", "interpolate",
                           "random-ray", "stability", "bn-compare"}) {
    auto* sub = cmd_probe->add_subcommand(name);
    probe_subs.push_back(sub);
  }
  cmd_probe->add_option("--model", probe_model_path, "Model JSON document (valley/quadratic/mlp)");
  cmd_probe->add_option("--params", probe_params_path, "Extra probe parameters as a JSON file");

  // Let --out/--seed/--quiet appear after the subcommand name as well.
  for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
    sub->fallthrough();
    for (CLI::App* nested : sub->get_subcommands([](const CLI::App*) { return true; })) {
      nested->fallthrough();
    }
  }

  CLI11_PARSE(app, argc, argv);

  seed_given = opt_seed->count() > 0;
  if (opt_tau->count() > 0) tau_opt = tau_value;
  if (opt_swa_start->count() > 0) swa_start = swa_start_value;

  if (cmd_list->parsed()) {
    json out = json::array();
    for (const auto& info : valley::cli::list_protocols()) {
      out.push_back({{"id", info.id}, {"summary", info.summary}, {"reproduces", info.demo}});
    }
    std::cout << out.dump(2) << "\n";
    return 0;
  }

  try {
    if (cmd_run->parsed()) {
      auto cfg = valley::cli::config_from_json(load_json_file(config_path));
      if (seed_given) cfg.seed = seed;
      if (opt_out->count() > 0) cfg.out_dir = out_dir;
      return execute(std::move(cfg), quiet);
    }
    if (cmd_constants->parsed()) {
      json params = {{"bounds",
                      {{"a_plus", a_plus}, {"b_plus", b_plus}, {"a_minus", a_minus},
                       {"b_minus", b_minus}, {"nu", nu}}},
                     {"eta", eta}};
      if (tau_opt) params["tau"] = *tau_opt;
      return execute(make_config("report-constants", std::move(params)), quiet);
    }
    if (cmd_sim->parsed()) {
      json params = {{"eta", sim_eta}, {"nu", sim_nu}, {"steps", sim_steps},
                     {"noise", sim_noise}, {"w_init", sim_w_init}, {"rounds", sim_rounds}};
      if (!sim_model_path.empty()) params["model"] = load_json_file(sim_model_path);
      return execute(make_config("simulate-1d", std::move(params)), quiet);
    }
    if (cmd_t1->parsed()) {
      json params = {{"k", t1_k},     {"c", t1_c},          {"p", t1_p},
                     {"l", t1_l},     {"delta-bar", t1_delta}, {"xi", t1_xi},
                     {"mode", t1_mode}, {"samples", t1_samples}};
      return execute(make_config("theorem1-verify", std::move(params)), quiet);
    }
    if (cmd_t2->parsed()) {
      json params = {{"bounds",
                      {{"a_plus", t2_a_plus}, {"b_plus", t2_b_plus}, {"a_minus", t2_a_minus},
                       {"b_minus", t2_b_minus}, {"nu", t2_nu}}},
                     {"eta", t2_eta},
                     {"nu", t2_nu},
                     {"rounds", t2_rounds},
                     {"override", t2_override}};
      return execute(make_config("theorem2-verify", std::move(params)), quiet);
    }
    if (cmd_train->parsed()) {
      json params = {{"widths", parse_widths(arch)},
                     {"bn", !no_bn},
                     {"data",
                      {{"generator", data_gen}, {"train_size", train_size},
                       {"heldout_size", heldout_size}, {"noise", data_noise},
                       {"seed", data_seed}}},
                     {"epochs", epochs},
                     {"batch", batch},
                     {"eta", train_eta},
                     {"eta_final", train_eta_final}};
      if (swa_start) {
        params["swa-start"] = *swa_start;
        params["swa-group"] = swa_group;
      }
      if (!init_checkpoint.empty()) params["init_checkpoint"] = init_checkpoint;
      return execute(make_config("train", std::move(params)), quiet);
    }
    if (cmd_probe->parsed()) {
      json params = probe_params_path.empty() ? json::object() : load_json_file(probe_params_path);
      if (!probe_model_path.empty()) params["model"] = load_json_file(probe_model_path);
      for (auto* sub : probe_subs) {
        if (sub->parsed()) {
          return execute(make_config(std::string("probe.") + sub->get_name(), std::move(params)),
                         quiet);
        }
      }
    }
  } catch (const valley::cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::cerr << "no subcommand executed\n";
  return 2;
}
