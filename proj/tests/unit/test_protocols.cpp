#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "valley/protocols.hpp"

using namespace valley::cli;
using nlohmann::json;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "valley_proto_tests" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

ExperimentConfig make_config(const std::string& protocol, json params,
                             const std::filesystem::path& out, std::uint64_t seed = 1) {
  ExperimentConfig cfg;
  cfg.protocol = protocol;
  cfg.params = std::move(params);
  cfg.seed = seed;
  cfg.out_dir = out;
  return cfg;
}

}  // namespace

TEST_CASE("the protocol catalog is sorted and complete") {
  const auto catalog = list_protocols();
  REQUIRE(!catalog.empty());
  for (std::size_t i = 1; i < catalog.size(); ++i) {
    CHECK(catalog[i - 1].id < catalog[i].id);
  }
  const char* required[] = {"theorem1-verify", "theorem2-verify", "simulate-1d",
                            "train", "report-constants", "probe.interpolate",
                            "probe.slice", "probe.bn-compare"};
  for (const char* id : required) {
    const bool present = std::any_of(catalog.begin(), catalog.end(),
                                     [&](const ProtocolInfo& p) { return p.id == id; });
    CHECK_MESSAGE(present, id);
  }
  for (const auto& info : catalog) {
    CHECK(!info.summary.empty());
    CHECK(!info.demo.empty());
  }
}

TEST_CASE("config parsing validates the schema") {
  CHECK_THROWS_AS((void)config_from_json(json::array()), ConfigError);
  CHECK_THROWS_AS((void)config_from_json(json{{"params", json::object()}}), ConfigError);
  CHECK_THROWS_AS((void)config_from_json(json{{"protocol", "x"}, {"seed", "not-int"}}),
                  ConfigError);
  const auto cfg = config_from_json(
      json{{"protocol", "theorem1-verify"}, {"seed", 9}, {"out_dir", "/tmp/x"}});
  CHECK(cfg.protocol == "theorem1-verify");
  CHECK(cfg.seed == 9);
}

TEST_CASE("unknown protocols and malformed params leave no outputs") {
  const auto dir = fresh_dir("malformed");
  CHECK_THROWS_AS((void)run_protocol(make_config("no-such-protocol", json::object(), dir)),
                  ConfigError);
  CHECK_THROWS_AS(
      (void)run_protocol(make_config("theorem1-verify", json{{"mode", "bogus"}}, dir)),
      ConfigError);
  CHECK_THROWS_AS(
      (void)run_protocol(make_config("theorem1-verify", json{{"c", "not-a-list"}}, dir)),
      ConfigError);
  CHECK_FALSE(std::filesystem::exists(dir / "report.json"));
}

TEST_CASE("the default expected-loss verification reproduces the exact gap") {
  const auto dir = fresh_dir("theorem1");
  const auto result = run_protocol(make_config("theorem1-verify", json::object(), dir));
  CHECK(result.exit_code == 0);
  CHECK(result.report["metrics"]["gap"].get<double>() == doctest::Approx(0.2).epsilon(1e-10));
  CHECK(result.report["verdicts"]["gap_above_bound"] == "pass");
  CHECK(std::filesystem::exists(dir / "report.json"));

  // Reports embed their full config and are metric-deterministic.
  const auto again = run_protocol(make_config("theorem1-verify", json::object(), dir));
  CHECK(again.report["metrics"].dump() == result.report["metrics"].dump());
  CHECK(result.report["config"]["protocol"] == "theorem1-verify");
}

TEST_CASE("constants report carries the documented fields") {
  const auto dir = fresh_dir("constants");
  const auto result = run_protocol(make_config("report-constants", json::object(), dir));
  CHECK(result.exit_code == 0);
  for (const char* key : {"p_min", "p_max", "t_min", "t_max", "c_0", "tau", "feasible"}) {
    CHECK_MESSAGE(result.report["metrics"].contains(key), key);
  }
  CHECK(result.report["metrics"]["feasible"]["tau_condition"].get<bool>());
}

TEST_CASE("1D simulation writes trajectory and round CSVs") {
  const auto dir = fresh_dir("simulate");
  auto cfg = make_config("simulate-1d", json{{"steps", 5000}}, dir, 3);
  const auto result = run_protocol(cfg);
  CHECK(result.exit_code == 0);
  std::ifstream traj(dir / "trajectory.csv");
  REQUIRE(traj.good());
  std::string header;
  std::getline(traj, header);
  CHECK(header == "t,w,grad,noise");
  std::ifstream rounds(dir / "rounds.csv");
  REQUIRE(rounds.good());
  std::getline(rounds, header);
  CHECK(header == "round,start,end,length,average,sharp_dwell");
  CHECK(result.report["metrics"]["n_rounds"].get<std::size_t>() > 10);
}

TEST_CASE("oscillation verification passes on the demo configuration") {
  const auto dir = fresh_dir("theorem2");
  const auto result =
      run_protocol(make_config("theorem2-verify", json{{"rounds", 800}}, dir, 5));
  CHECK(result.exit_code == 0);
  CHECK(result.report["verdicts"]["positive_bias"] == "pass");
  CHECK(result.report["verdicts"]["exceeds_c0"] == "pass");
  CHECK(result.report["verdicts"]["dwell_upper_bound"] == "pass");
}

TEST_CASE("tight declared bounds expose the dwell-bound failure honestly") {
  // With b par equal to the realized slopes, typical flat dwells exceed the
  // dwell ceiling and the verdict must report the failure (exit code 1).
  const auto dir = fresh_dir("theorem2_tight");
  json params = {{"bounds",
                  {{"a_plus", 0.1}, {"b_plus", 0.1}, {"a_minus", -3.0}, {"b_minus", -3.0},
                   {"nu", 0.1}}},
                 {"nu", 0.1},
                 {"rounds", 300}};
  const auto result = run_protocol(make_config("theorem2-verify", params, dir, 7));
  CHECK(result.exit_code == 1);
  CHECK(result.report["verdicts"]["dwell_upper_bound"] == "fail");
  CHECK(result.report["verdicts"]["positive_bias"] == "pass");
}

TEST_CASE("training writes metrics and checkpoints") {
  const auto dir = fresh_dir("train");
  json params = {{"widths", {2, 8, 2}},
                 {"bn", true},
                 {"data", {{"train_size", 64}, {"heldout_size", 500}, {"seed", 2}}},
                 {"epochs", 6},
                 {"batch", 16},
                 {"eta", 0.1},
                 {"swa-start", 3}};
  const auto result = run_protocol(make_config("train", params, dir, 2));
  CHECK(result.exit_code == 0);
  CHECK(std::filesystem::exists(dir / "metrics.csv"));
  CHECK(std::filesystem::exists(dir / "final" / "params.bin"));
  CHECK(std::filesystem::exists(dir / "swa" / "params.bin"));
  CHECK(result.report["metrics"]["swa_checkpoints_averaged"].get<int>() == 3);
}

TEST_CASE("mlp-backed probes run off a trained checkpoint") {
  const auto train_dir = fresh_dir("probe_mlp_train");
  json train_params = {{"widths", {2, 8, 8, 2}},
                       {"bn", true},
                       {"data", {{"train_size", 96}, {"heldout_size", 2000}, {"seed", 3}}},
                       {"epochs", 8},
                       {"batch", 16},
                       {"eta", 0.1}};
  const auto trained = run_protocol(make_config("train", train_params, train_dir, 4));
  REQUIRE(trained.exit_code == 0);

  const json model = {{"kind", "mlp"},
                      {"checkpoint", (train_dir / "final").string()},
                      {"widths", {2, 8, 8, 2}},
                      {"bn", true},
                      {"data", {{"train_size", 96}, {"heldout_size", 2000}, {"seed", 3}}}};

  SUBCASE("slice along a random (0,1) direction is finite and two-series") {
    const auto dir = fresh_dir("probe_mlp_slice");
    const auto result = run_protocol(make_config(
        "probe.slice", json{{"model", model}, {"lo", -3.0}, {"hi", 3.0}, {"steps", 31}}, dir));
    CHECK(result.exit_code == 0);
    CHECK(result.report["metrics"]["finite_points"].get<std::size_t>() == 31);
    std::ifstream csv(dir / "slice.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "l,loss,second_loss");
  }

  SUBCASE("bn-compare pairs the two masked directions") {
    const auto dir = fresh_dir("probe_mlp_bn");
    const auto result =
        run_protocol(make_config("probe.bn-compare", json{{"model", model}}, dir));
    CHECK(result.exit_code == 0);
    CHECK(result.report["metrics"].contains("bn"));
    CHECK(result.report["metrics"].contains("non_bn"));
    CHECK(std::filesystem::exists(dir / "bn_compare.csv"));
  }

  SUBCASE("find-asym reports fitted tuples without asserting an outcome") {
    const auto dir = fresh_dir("probe_mlp_find");
    const auto result = run_protocol(
        make_config("probe.find-asym", json{{"model", model}, {"trials", 8}}, dir));
    CHECK(result.exit_code == 0);
    CHECK(result.report["metrics"].contains("found"));
  }

  SUBCASE("interpolate between the final and a later checkpoint") {
    const auto cont_dir = fresh_dir("probe_mlp_cont");
    json cont = train_params;
    cont["init_checkpoint"] = (train_dir / "final").string();
    cont["epochs"] = 4;
    cont["eta"] = 0.02;
    REQUIRE(run_protocol(make_config("train", cont, cont_dir, 9)).exit_code == 0);
    const auto dir = fresh_dir("probe_mlp_interp");
    const auto result = run_protocol(make_config(
        "probe.interpolate",
        json{{"model", model},
             {"checkpoint_a", (train_dir / "final").string()},
             {"checkpoint_b", (cont_dir / "final").string()}},
        dir));
    CHECK(result.exit_code == 0);
    CHECK(std::filesystem::exists(dir / "interpolate.csv"));
  }
}

TEST_CASE("probe protocols emit CSV plus verdict sidecar") {
  SUBCASE("classify") {
    const auto dir = fresh_dir("probe_classify");
    const auto result = run_protocol(make_config("probe.classify", json::object(), dir));
    CHECK(result.exit_code == 0);
    CHECK(result.report["metrics"]["holds"].get<bool>());
    CHECK(std::filesystem::exists(dir / "classify.csv"));
  }
  SUBCASE("slice on a quadratic is symmetric") {
    const auto dir = fresh_dir("probe_slice");
    const auto result = run_protocol(
        make_config("probe.slice", json{{"model", {{"kind", "quadratic"}, {"dim", 6}}}}, dir));
    CHECK(result.exit_code == 0);
    CHECK(std::filesystem::exists(dir / "slice.csv"));
  }
  SUBCASE("random-ray") {
    const auto dir = fresh_dir("probe_ray");
    const auto result = run_protocol(make_config(
        "probe.random-ray", json{{"model", {{"kind", "quadratic"}, {"dim", 6}}}, {"rays", 8}},
        dir));
    CHECK(result.exit_code == 0);
    CHECK(std::filesystem::exists(dir / "random_ray.csv"));
  }
  SUBCASE("interpolate") {
    const auto dir = fresh_dir("probe_interp");
    const auto result = run_protocol(make_config(
        "probe.interpolate",
        json{{"model", {{"kind", "quadratic"}, {"dim", 3}}},
             {"point_a", {1.0, 0.0, 0.0}},
             {"point_b", {0.0, 1.0, 0.0}}},
        dir));
    CHECK(result.exit_code == 0);
    CHECK_FALSE(result.report["metrics"]["bump"].get<bool>());
  }
  SUBCASE("neighborhood") {
    const auto dir = fresh_dir("probe_neigh");
    const auto result = run_protocol(
        make_config("probe.neighborhood", json{{"samples", 12}, {"r_prime", 5.0}}, dir));
    CHECK(result.exit_code == 0);
    CHECK(result.report["metrics"]["holds_fraction"].get<double>() == 1.0);
  }
  SUBCASE("find-asym") {
    const auto dir = fresh_dir("probe_find");
    const auto result = run_protocol(make_config("probe.find-asym", json::object(), dir));
    CHECK(result.exit_code == 0);
    CHECK(result.report["metrics"]["found"].get<bool>());
  }
  SUBCASE("stability") {
    const auto dir = fresh_dir("probe_stab");
    const auto result = run_protocol(make_config("probe.stability", json::object(), dir));
    CHECK(result.exit_code == 0);
    CHECK(std::filesystem::exists(dir / "stability.csv"));
  }
}
