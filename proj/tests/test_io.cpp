#include <doctest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "gdln/dataset.hpp"
#include "gdln/dynamics.hpp"
#include "gdln/io.hpp"

using namespace gdln;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path dir;
  TempDir() {
    dir = fs::temp_directory_path() /
          ("gdln_io_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~TempDir() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const {
    return (dir / name).string();
  }
};

}  // namespace

TEST_CASE("graph text round-trips nodes, widths and edges") {
  RoutingOptions ro;
  ro.M = 3;
  ro.K = 2;
  ro.hidden_width = 5;
  RoutingTask task = make_routing_dataset(ro);

  std::string text = format_graph(task.graph);
  ArchitectureGraph g2 = parse_graph(text);
  REQUIRE(g2.num_nodes() == task.graph.num_nodes());
  REQUIRE(g2.num_edges() == task.graph.num_edges());
  for (int v = 0; v < g2.num_nodes(); ++v) {
    CHECK(g2.node(v).name == task.graph.node(v).name);
    CHECK(g2.node(v).width == task.graph.node(v).width);
    CHECK(g2.node(v).kind == task.graph.node(v).kind);
  }
  for (int e = 0; e < g2.num_edges(); ++e) {
    CHECK(g2.edge(e).name == task.graph.edge(e).name);
    CHECK(g2.edge(e).source == task.graph.edge(e).source);
    CHECK(g2.edge(e).target == task.graph.edge(e).target);
  }

  TempDir tmp;
  save_graph(tmp / "g.graph", task.graph);
  ArchitectureGraph g3 = load_graph(tmp / "g.graph");
  CHECK(format_graph(g3) == text);

  try {
    parse_graph("node in\nedge broken");
    FAIL("garbage accepted");
  } catch (const GdlnError& e) {
    CHECK(e.code() == Errc::ParseError);
  }
}

TEST_CASE("dataset files reload to the same examples and gates") {
  TaskBundle t = make_xor_dataset({});
  TempDir tmp;
  save_dataset(tmp / "xor", t.graph, t.train, {1, 2});
  GatedDataset back = load_dataset(tmp / "xor", t.graph);

  REQUIRE(back.examples.size() == t.train.examples.size());
  for (std::size_t i = 0; i < back.examples.size(); ++i) {
    const auto& a = t.train.examples[i];
    const auto& b = back.examples[i];
    CHECK(a.weight == b.weight);
    for (std::size_t k = 0; k < a.inputs.size(); ++k)
      CHECK(a.inputs[k] == b.inputs[k]);
    for (std::size_t k = 0; k < a.targets.size(); ++k)
      CHECK(a.targets[k] == b.targets[k]);
    for (int v = 0; v < t.graph.num_nodes(); ++v)
      CHECK(a.gates.node_gate(v) == b.gates.node_gate(v));
    for (int e = 0; e < t.graph.num_edges(); ++e)
      CHECK(a.gates.edge_gate(e) == b.gates.edge_gate(e));
  }

  RoutingOptions ro;
  ro.M = 3;
  ro.K = 2;
  RoutingTask task = make_routing_dataset(ro);
  save_dataset(tmp / "routes", task.graph, task.train);
  GatedDataset rback = load_dataset(tmp / "routes", task.graph);
  CHECK(rback.route_mask == task.train.route_mask);
}

TEST_CASE("weights survive a save/load round trip bit for bit") {
  TaskBundle t = make_xor_dataset({});
  InitScheme init;
  init.kind = InitKind::SmallRandom;
  init.scale = 0.37;
  WeightState w = init_weights(t.graph, init, 77);
  w.time = 12.5;

  TempDir tmp;
  save_weights(tmp / "w.tsv", t.graph, w);
  WeightState back = load_weights(tmp / "w.tsv", t.graph);
  CHECK(back.time == w.time);
  for (int e = 0; e < t.graph.num_edges(); ++e)
    CHECK(back.weights[e] == w.weights[e]);
}

TEST_CASE("trajectory CSV carries the logged columns") {
  RoutingOptions ro;
  ro.M = 3;
  ro.K = 2;
  ro.hidden_width = 4;
  RoutingTask task = make_routing_dataset(ro);
  TrainConfig tc;
  tc.step = 0.02;
  tc.steps = 40;
  tc.log_every = 20;
  tc.sv_log_every = 20;
  tc.seed = 1;
  tc.init.kind = InitKind::FixedSingular;
  tc.init.scale = 0.2;
  Trajectory traj = train(task.graph, task.tables, task.train, tc);

  TempDir tmp;
  save_trajectory_csv(tmp / "traj.csv", traj, task.graph);
  std::ifstream in(tmp / "traj.csv");
  std::string header;
  REQUIRE(std::getline(in, header));
  CHECK(header.find("time") != std::string::npos);
  CHECK(header.find("loss") != std::string::npos);
  CHECK(header.find("sv_top:") != std::string::npos);
  int rows = 0;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) ++rows;
  CHECK(rows == 3);  // steps 0, 20, 40
}

TEST_CASE("config lookups honor aliases, types and fallbacks") {
  ConfigFile cfg = ConfigFile::from_text(R"({
    "N_h": 64,
    "lambda": 0.05,
    "transform": "rotate",
    "sigma0_grid": [0.1, 0.5, 2.0],
    "seeds": [1, 2, 3]
  })");

  CHECK(cfg.integer({"hidden_width", "N_h"}, 0) == 64);
  CHECK(cfg.number({"eta", "lambda"}, 0.0) == doctest::Approx(0.05));
  CHECK(cfg.text({"transform"}, "permute") == "rotate");
  CHECK(cfg.grid({"sigma0_grid"}, {}).size() == 3);
  CHECK(cfg.seeds({"seeds"}, {9}).size() == 3);
  CHECK(cfg.seeds({"absent"}, {9}) == std::vector<std::uint64_t>{9});
  CHECK(cfg.number({"missing"}, 1.5) == 1.5);
  CHECK(cfg.has({"N_h"}));
  CHECK_FALSE(cfg.has({"nope"}));

  try {
    ConfigFile::from_text("{not json");
    FAIL("garbage config accepted");
  } catch (const GdlnError& e) {
    CHECK(e.code() == Errc::ParseError);
  }
}

TEST_CASE("run manifests list every artifact") {
  RunManifest m;
  m.experiment = "demo";
  m.config_echo = "{\"k\": 1}";
  m.seeds = {4, 5};
  m.add_file("a.csv");
  m.add_file("b.csv");
  m.wall_time_s = 1.25;

  TempDir tmp;
  m.save(tmp / "manifest.json");
  std::ifstream in(tmp / "manifest.json");
  nlohmann::json j = nlohmann::json::parse(in);
  CHECK(j["experiment"] == "demo");
  CHECK(j["files"].size() == 2);
  CHECK(j["seeds"].size() == 2);
  CHECK(j["status"] == "ok");
  CHECK(j["config"]["k"] == 1);
}
