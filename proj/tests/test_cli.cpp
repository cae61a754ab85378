// End-to-end checks of the hgs binary: command idempotence, the graph
// pipeline, train/evaluate flow and ingestion. The binary path comes from
// HGS_CLI_PATH; a scratch directory is created under the build tree.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

#ifndef HGS_CLI_PATH
#define HGS_CLI_PATH "./hgs"
#endif
#ifndef HGS_REPO_DIR
#define HGS_REPO_DIR "."
#endif

namespace {

const std::string kWork = "cli_work";

int run(const std::string& args) {
  std::filesystem::create_directories(kWork);
  std::string cmd = std::string(HGS_CLI_PATH) + " " + args + " 2>" + kWork + "/stderr.txt";
  return std::system(cmd.c_str());
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  REQUIRE_MESSAGE(bool(f), "missing file: " << path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
}

}  // namespace

TEST_CASE("gen-data is idempotent and shapes follow the generator") {
  REQUIRE(run("gen-data --size 4 --seed 7 --out " + kWork + "/a.jsonl") == 0);
  REQUIRE(run("gen-data --size 4 --seed 7 --out " + kWork + "/b.jsonl") == 0);
  CHECK(slurp(kWork + "/a.jsonl") == slurp(kWork + "/b.jsonl"));

  REQUIRE(run("gen-data --regime quasi --graph comprehensive --size 2 --seed 3 --out " + kWork +
              "/c.jsonl") == 0);
  std::istringstream ss(slurp(kWork + "/c.jsonl"));
  std::string header;
  std::getline(ss, header);
  auto j = nlohmann::json::parse(header);
  CHECK(j["input_channels"].size() == 8);  // 7 inputs + appended noise channel

  // missing --out is a usage error with a nonzero exit
  CHECK(run("gen-data --size 2") != 0);
}

TEST_CASE("graph pipeline: uva | condense | augment produces an RDAG graph file") {
  REQUIRE(run("graph uva --out " + kWork + "/uva.json") == 0);
  REQUIRE(run("graph condense --in " + kWork + "/uva.json --out " + kWork + "/uva_c.json") == 0);
  REQUIRE(run("graph augment --in " + kWork + "/uva_c.json --out " + kWork + "/uva_a.json") == 0);
  auto j = nlohmann::json::parse(slurp(kWork + "/uva_a.json"));
  CHECK(j["nodes"].size() == 16);  // 13 state super-nodes + 3 inputs
  bool has_shortcut = false;
  for (auto it = j["provenance"].begin(); it != j["provenance"].end(); ++it)
    has_shortcut |= it.value() == "shortcut";
  CHECK(has_shortcut);

  // condensing an already-relaxed graph is the identity up to the sc_ prefix
  REQUIRE(run("graph condense --in " + kWork + "/uva_c.json... --out -") != 0);  // bad path errors
}

TEST_CASE("synthetic graph matches the golden file") {
  REQUIRE(run("graph synthetic --kind refined --out " + kWork + "/refined.json") == 0);
  CHECK(slurp(kWork + "/refined.json") ==
        slurp(std::string(HGS_REPO_DIR) + "/tests/golden/refined_graph.json"));
}

TEST_CASE("train then evaluate round-trips through files") {
  REQUIRE(run("gen-data --size 12 --seed 11 --out " + kWork + "/train.jsonl") == 0);
  REQUIRE(run("gen-data --size 6 --seed 12 --out " + kWork + "/test.jsonl") == 0);
  REQUIRE(run("graph synthetic --kind refined --out " + kWork + "/g.json") == 0);
  nlohmann::json cfg{{"dataset", kWork + "/train.jsonl"},
                     {"graph", kWork + "/g.json"},
                     {"method", "HGS"},
                     {"grid", {{"lambda1", {1e-6}}, {"lambda2", {1e-6}}, {"lr", {1e-2}}}},
                     {"K", 4},
                     {"epochs", 12},
                     {"out_model", kWork + "/model.json"},
                     {"out_results", kWork + "/results.json"}};
  spit(kWork + "/exp.json", cfg.dump(2));
  REQUIRE(run("train --config " + kWork + "/exp.json") == 0);

  auto results = nlohmann::json::parse(slurp(kWork + "/results.json"));
  CHECK(results["method"] == "HGS");
  CHECK(results["enp"].get<int>() > 0);

  REQUIRE(run("evaluate --model " + kWork + "/model.json --data " + kWork + "/test.jsonl --out " +
              kWork + "/report") == 0);
  auto csv = slurp(kWork + "/report.csv");
  CHECK(csv.find("enp") != std::string::npos);  // report includes ENP at 1e-3
  CHECK(csv.find("HGS") != std::string::npos);

  // identical model, identical report
  REQUIRE(run("evaluate --model " + kWork + "/model.json --data " + kWork + "/test.jsonl --out " +
              kWork + "/report2") == 0);
  CHECK(slurp(kWork + "/report2.csv") == csv);

  // invalid method errors out listing the valid ones
  cfg["method"] = "WAT";
  spit(kWork + "/exp_bad.json", cfg.dump());
  CHECK(run("train --config " + kWork + "/exp_bad.json") != 0);
  CHECK(slurp(kWork + "/stderr.txt").find("HGS") != std::string::npos);
}

TEST_CASE("reproduce: unknown preset errors; paper preset declares 40 repetitions") {
  CHECK(run("reproduce --preset no-such-preset") != 0);
  auto paper = nlohmann::json::parse(
      slurp(std::string(HGS_REPO_DIR) + "/configs/presets/synthetic-paper.json"));
  CHECK(paper["repetitions"] == 40);
  CHECK(paper["variants"].size() == 8);
  auto small = nlohmann::json::parse(
      slurp(std::string(HGS_REPO_DIR) + "/configs/presets/synthetic-small.json"));
  CHECK(small["repetitions"] == 5);
  CHECK(small["test_size"] == 10000);
}

TEST_CASE("ingest: event CSV to a windowed instance") {
  std::string csv = "stream,time,value\n";
  for (int i = 0; i < 54; ++i)
    csv += "cgm," + std::to_string(i * 5.0) + "," + std::to_string(110 + i) + "\n";
  csv += "basal,0,1.2\nbolus,30,2.5\ncarbs,60,40\nheart_rate,0,72\nsteps,0,100\n";
  spit(kWork + "/events.csv", csv);
  REQUIRE(run("ingest --csv " + kWork + "/events.csv --out " + kWork + "/case.jsonl") == 0);
  std::istringstream ss(slurp(kWork + "/case.jsonl"));
  std::string header, line;
  std::getline(ss, header);
  std::getline(ss, line);
  auto inst = nlohmann::json::parse(line);
  CHECK(inst["past_obs"].size() == 42);
  CHECK(inst["future_obs"].size() == 12);
  CHECK(inst["future_inputs"][0].size() == 4);

  // a CGM gap is rejected
  spit(kWork + "/gap.csv", "cgm,0,100\ncgm,10,100\n");
  CHECK(run("ingest --csv " + kWork + "/gap.csv --out " + kWork + "/gap.jsonl") != 0);
}

TEST_CASE("stability command prints the report") {
  REQUIRE(run("stability --a -1 --b 0.9 --c 0.9 --d -1 --step 1 > " + kWork + "/stab.json") == 0);
  auto j = nlohmann::json::parse(slurp(kWork + "/stab.json"));
  CHECK(j["kappa"].get<double>() == doctest::Approx(19.0));
  CHECK(j["blow_up"] == false);
}
