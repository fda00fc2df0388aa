#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "cxbridge/errors.hpp"
#include "cxbridge/instance.hpp"
#include "cxbridge/pipeline.hpp"

using namespace cxbridge;
using nlohmann::json;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("cxbridge_test_" + name)).string();
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

Instance two_point(double a) {
  return parse_instance(json{{"dim", 1}, {"atoms", {{-a}, {a}}}, {"weights", {1, 1}}});
}

PipelineOptions small_run(const std::string& stages) {
  PipelineOptions o;
  o.stages = parse_stages(stages);
  ConfigLayer flags;
  flags.sample_count = 400;
  flags.decompose_count = 400;
  flags.steps = 256;
  flags.seed = 5;
  o.config = config_resolve(flags, {}, {});
  return o;
}

}  // namespace

TEST(Instance, ParsesAndNormalizes) {
  const auto inst = parse_instance(json::parse(R"({"dim": 1, "atoms": [[0], [1], [1e-14]], "weights": [1, 2, 1],
      "scale": 0.8, "slack": 0.1, "fit": {"max_iters": 50, "accuracy": "standard"},
      "decompose": {"steps": 512}, "comb": {"ground": 4, "family": [[0, 1], "0x8"], "q": 3}})"));
  EXPECT_EQ(inst.measure.size(), 2u);
  EXPECT_EQ(inst.merged_atoms, 1u);
  EXPECT_DOUBLE_EQ(inst.weight_correction, 3.0);
  EXPECT_DOUBLE_EQ(inst.measure.weight(0), 0.5);
  EXPECT_DOUBLE_EQ(inst.scale, 0.8);
  EXPECT_DOUBLE_EQ(inst.fit.slack, 0.1);
  EXPECT_EQ(inst.fit.max_iters, 50u);
  EXPECT_TRUE(inst.fit_accuracy_set);
  ASSERT_TRUE(inst.decompose);
  EXPECT_EQ(*inst.decompose->steps, 512u);
  ASSERT_TRUE(inst.comb);
  EXPECT_EQ(inst.comb->family.members(), (std::vector<combin::Mask>{0b0011, 0b1000}));
  EXPECT_EQ(inst.comb->q, 3u);
}

TEST(Instance, RejectsBadDocuments) {
  const char* bad[] = {
      R"({"dim": 1, "atoms": [[0]], "weights": [1], "extra": 0})",
      R"({"dim": 1, "atoms": [[0]], "weights": [1], "fit": {"tol": 1}})",
      R"({"dim": 1, "atoms": [[0]]})",
      R"({"dim": 1, "atoms": [[0]], "weights": ["1"]})",
      R"({"dim": 2, "atoms": [[0]], "weights": [1]})",
      R"({"dim": 1, "atoms": [[0]], "weights": [-1]})",
      R"({"dim": 1, "atoms": [[0]], "weights": [1], "scale": 1.5})",
      R"({"dim": 1, "atoms": [[0]], "weights": [1], "slack": 0})",
      R"({"dim": 1, "atoms": [[0]], "weights": [1], "fit": {"accuracy": "best"}})",
      R"({"dim": 1, "atoms": [[0]], "weights": [1], "comb": {"ground": 3, "family": [[3]]}})",
      R"({"dim": 1, "atoms": [[0]], "weights": [1], "comb": {"ground": 3, "family": ["0x10"]}})",
      R"({"dim": 1, "atoms": [[0]], "weights": [1], "comb": {"ground": 3, "family": ["zz"]}})",
      R"({"dim": 0, "atoms": [], "weights": []})",
  };
  for (const char* doc : bad) EXPECT_THROW(parse_instance(json::parse(doc)), InputError) << doc;
  EXPECT_THROW(load_instance("/nonexistent/instance.json"), InputError);
}

TEST(Instance, PotentialsRoundTrip) {
  const auto mu = DiscreteMeasure::from_rows({{0.1, 0.0}, {-0.1, 0.0}}, {0.5, 0.5});
  DualPotentials pot{2, 2, {0.25, -0.25}, {1.0, 2.0, -1.0, -2.0}};
  const auto back = parse_potentials(json::parse(potentials_json(pot).dump()), mu);
  EXPECT_EQ(back.U, pot.U);
  EXPECT_EQ(back.V, pot.V);
  EXPECT_THROW(parse_potentials(json::parse(R"({"U": [0], "V": [[0, 0]]})"), mu), InputError);
}

TEST(Config, Precedence) {
  const auto defaults = config_resolve({}, {}, {});
  EXPECT_EQ(defaults.values.seed, 0u);
  EXPECT_EQ(defaults.values.threads, 1u);
  EXPECT_EQ(defaults.values.steps, 4096u);
  EXPECT_EQ(defaults.values.accuracy, Accuracy::high);
  EXPECT_EQ(defaults.source.at("seed"), "default");

  ConfigLayer file, env, flags;
  file.seed = 1;
  file.steps = 512;
  env.seed = 2;
  flags.steps = 1024;
  const auto r = config_resolve(flags, env, file);
  EXPECT_EQ(r.values.seed, 2u);
  EXPECT_EQ(r.source.at("seed"), "env");
  EXPECT_EQ(r.values.steps, 1024u);
  EXPECT_EQ(r.source.at("steps"), "flag");
  flags.seed = 3;
  EXPECT_EQ(config_resolve(flags, env, file).values.seed, 3u);
  EXPECT_EQ(r.to_json()["source"]["steps"], "flag");
}

TEST(Config, Environment) {
  std::map<std::string, std::string> vars{{"CXBRIDGE_SEED", "42"}, {"CXBRIDGE_THREADS", "3"}};
  auto lookup = [&](const char* k) -> const char* {
    const auto it = vars.find(k);
    return it == vars.end() ? nullptr : it->second.c_str();
  };
  const auto layer = env_layer(lookup);
  EXPECT_EQ(*layer.seed, 42u);
  EXPECT_EQ(*layer.threads, 3u);
  vars["CXBRIDGE_SEED"] = "-1";
  EXPECT_THROW(env_layer(lookup), InputError);
  vars["CXBRIDGE_SEED"] = "1";
  vars["CXBRIDGE_THREADS"] = "0";
  EXPECT_THROW(env_layer(lookup), InputError);
  vars.clear();
  EXPECT_FALSE(env_layer(lookup).seed);
}

TEST(Config, FileLayer) {
  const auto inst = parse_instance(json::parse(
      R"({"dim": 1, "atoms": [[0]], "weights": [1], "decompose": {"seed": 9, "count": 77}, "fit": {"accuracy": "fast"}})"));
  const auto layer = file_layer(inst);
  EXPECT_EQ(*layer.seed, 9u);
  EXPECT_EQ(*layer.decompose_count, 77u);
  EXPECT_EQ(*layer.accuracy, Accuracy::fast);
  EXPECT_FALSE(layer.steps);
}

TEST(EmitSamples, RoundTrip) {
  const auto path = temp_path("rt.csv");
  EXPECT_EQ(emit_samples(path, {"a", "b"}, {}), 0u);
  EXPECT_EQ(read_csv(path).size(), 1u);

  std::vector<double> values;
  for (int k = 0; k < 20; ++k) values.push_back(std::ldexp(1.0 + 1e-15 * k, k - 10) * (k % 2 ? -1 : 1) / 3.0);
  values[3] = 0.1;
  values[4] = 5e-324;
  EXPECT_EQ(emit_samples(path, {"a", "b"}, values), 10u);
  const auto rows = read_csv(path);
  ASSERT_EQ(rows.size(), 11u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"a", "b"}));
  for (std::size_t r = 0; r < 10; ++r)
    for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(std::strtod(rows[r + 1][c].c_str(), nullptr), values[r * 2 + c]);
  EXPECT_THROW(emit_samples(path, {"a", "b"}, {1.0}), InputError);
  EXPECT_THROW(emit_samples("/nonexistent/dir/x.csv", {"a"}, {1.0}), IoError);
  std::filesystem::remove(path);
}

TEST(Stages, ParseAddsPrerequisites) {
  EXPECT_EQ(parse_stages("sample"), (std::vector<Stage>{Stage::check, Stage::fit, Stage::sample}));
  EXPECT_EQ(parse_stages("comb,check"), (std::vector<Stage>{Stage::check, Stage::comb}));
  EXPECT_EQ(parse_stages("all").size(), 5u);
  EXPECT_THROW(parse_stages("check,plot"), InputError);
  EXPECT_EQ(worse_exit(0, 3), 3);
  EXPECT_EQ(worse_exit(3, 1), 1);
  EXPECT_EQ(worse_exit(2, 1), 2);
}

TEST(Pipeline, DiracIsAllGreen) {
  const auto inst = parse_instance(json::parse(R"({"dim": 1, "atoms": [[0]], "weights": [1],
      "comb": {"ground": 4, "family": ["0xf"], "q": 1}})"));
  const auto rep = run_pipeline(inst, small_run("all"));
  EXPECT_EQ(rep.exit, 0);
  for (const char* s : {"check", "fit", "sample", "decompose", "comb"})
    EXPECT_EQ(rep.report["stages"][s]["exit_code"], 0) << s;
  EXPECT_EQ(rep.report["stages"]["check"]["status"], "dominated");
  EXPECT_EQ(rep.report["stages"]["check"]["scale"], 0.0);
  EXPECT_EQ(rep.report["stages"]["comb"]["status"], "certified");
}

TEST(Pipeline, NotDominatedSkipsLaterStages) {
  const auto rep = run_pipeline(two_point(1.0), small_run("decompose"));
  EXPECT_EQ(rep.exit, 1);
  const auto& st = rep.report["stages"];
  EXPECT_EQ(st["check"]["status"], "not_dominated");
  EXPECT_FALSE(st["check"]["witness"].is_null());
  EXPECT_LT(st["check"]["witness"]["gap"].get<double>(), 0.0);
  EXPECT_EQ(st["fit"]["status"], "skipped");
  EXPECT_EQ(st["decompose"]["status"], "skipped");
}

TEST(Pipeline, GateBlocksTightInstances) {
  // threshold 0.7 sqrt(pi / 2) ~ 0.877 exceeds (1 - 0.2) * 1
  auto inst = two_point(0.7);
  inst.slack = 0.2;
  inst.fit.slack = 0.2;
  auto run = small_run("fit");
  auto rep = run_pipeline(inst, run);
  EXPECT_EQ(rep.report["stages"]["check"]["status"], "dominated");
  EXPECT_EQ(rep.report["stages"]["fit"]["status"], "gated");
  EXPECT_EQ(rep.exit, 1);
  run.force_fit = true;
  rep = run_pipeline(inst, run);
  EXPECT_EQ(rep.report["stages"]["fit"]["status"], "converged");
  EXPECT_EQ(rep.exit, 0);
}

TEST(Pipeline, HalfTwoPointReportIsPopulatedAndReproducible) {
  const auto inst = two_point(0.5);
  auto opts = small_run("all");
  opts.decompose_csv = temp_path("dec.csv");
  auto a = run_pipeline(inst, opts);
  const auto& dec = a.report["stages"]["decompose"];
  EXPECT_EQ(dec["status"], "ok");
  for (const char* k : {"y", "z", "s"}) {
    EXPECT_EQ(dec["ks"][k]["count"], 400);
    EXPECT_EQ(dec["ks"][k]["seed"], 5);
  }
  EXPECT_EQ(dec["csv"]["rows"], 400);
  EXPECT_EQ(read_csv(*opts.decompose_csv).size(), 401u);
  EXPECT_LE(a.report["stages"]["fit"]["residuals"]["max_mean"].get<double>(), 1e-6);

  opts.config.values.threads = 3;
  auto b = run_pipeline(inst, opts);
  a.report.erase("timing");
  b.report.erase("timing");
  a.report["config"].erase("threads");
  b.report["config"].erase("threads");
  EXPECT_EQ(a.report.dump(), b.report.dump());
  std::filesystem::remove(*opts.decompose_csv);
}

TEST(Pipeline, PlanarInstanceSkipsDecomposition) {
  const auto inst = parse_instance(json::parse(
      R"({"dim": 2, "atoms": [[0.3, 0], [-0.15, 0.2], [-0.15, -0.2]], "weights": [1, 1, 1]})"));
  auto opts = small_run("all");
  opts.config.values.accuracy = Accuracy::standard;
  const auto rep = run_pipeline(inst, opts);
  EXPECT_EQ(rep.exit, 0);
  EXPECT_EQ(rep.report["stages"]["fit"]["status"], "converged");
  EXPECT_EQ(rep.report["stages"]["decompose"]["status"], "skipped");
}

TEST(Pipeline, InputErrorsAreRecorded) {
  auto inst = parse_instance(json::parse(R"({"dim": 3, "atoms": [[0, 0, 0.1], [0, 0, -0.1]], "weights": [1, 1]})"));
  const auto rep = run_pipeline(inst, small_run("check"));  // three-dimensional high-accuracy rule is refused
  EXPECT_EQ(rep.exit, 2);
  EXPECT_EQ(rep.report["stages"]["check"]["status"], "input_error");
}
