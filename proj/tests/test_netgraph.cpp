#include <doctest.h>

#include <algorithm>

#include "gdln/dataset.hpp"
#include "gdln/dynamics.hpp"
#include "gdln/graph.hpp"
#include "gdln/rng.hpp"

using namespace gdln;

namespace {

ArchitectureGraph chain_graph() {
  ArchitectureGraph g;
  g.add_node("in", 2);
  g.add_node("h", 3);
  g.add_node("out", 2);
  g.add_edge("in-h", "in", "h");
  g.add_edge("h-out", "h", "out");
  g.validate();
  return g;
}

}  // namespace

TEST_CASE("validation classifies nodes and orders them topologically") {
  ArchitectureGraph g = chain_graph();
  CHECK(g.node(g.node_index("in")).kind == NodeKind::Input);
  CHECK(g.node(g.node_index("h")).kind == NodeKind::Hidden);
  CHECK(g.node(g.node_index("out")).kind == NodeKind::Output);
  CHECK(g.input_nodes() == std::vector<int>{g.node_index("in")});
  CHECK(g.output_nodes() == std::vector<int>{g.node_index("out")});

  const auto& order = g.topo_order();
  std::vector<int> pos(g.num_nodes());
  for (int i = 0; i < g.num_nodes(); ++i) pos[order[i]] = i;
  for (int e = 0; e < g.num_edges(); ++e)
    CHECK(pos[g.edge(e).source] < pos[g.edge(e).target]);

  CHECK(g.edge_rows(g.edge_index("in-h")) == 3);
  CHECK(g.edge_cols(g.edge_index("in-h")) == 2);
}

TEST_CASE("malformed graphs raise their documented codes") {
  SUBCASE("cycle") {
    ArchitectureGraph g;
    g.add_node("a", 2);
    g.add_node("b", 2);
    g.add_edge("ab", "a", "b");
    g.add_edge("ba", "b", "a");
    try {
      g.validate();
      FAIL("cycle accepted");
    } catch (const GdlnError& e) {
      CHECK(e.code() == Errc::CycleDetected);
    }
  }
  SUBCASE("dangling edge") {
    ArchitectureGraph g;
    g.add_node("a", 2);
    try {
      g.add_edge("ax", "a", "nope");
      FAIL("unknown endpoint accepted");
    } catch (const GdlnError& e) {
      CHECK(e.code() == Errc::DanglingEdge);
    }
  }
  SUBCASE("empty graph") {
    ArchitectureGraph g;
    try {
      g.validate();
      FAIL("empty graph accepted");
    } catch (const GdlnError& e) {
      CHECK(e.code() == Errc::NoInputOrOutput);
    }
  }
  SUBCASE("isolated node") {
    ArchitectureGraph g;
    g.add_node("a", 2);
    g.add_node("b", 2);
    g.add_node("island", 2);
    g.add_edge("ab", "a", "b");
    try {
      g.validate();
      FAIL("isolated node accepted");
    } catch (const GdlnError& e) {
      CHECK(e.code() == Errc::UnreachableNode);
    }
  }
  SUBCASE("duplicate names") {
    ArchitectureGraph g;
    g.add_node("a", 2);
    CHECK_THROWS_AS(g.add_node("a", 3), GdlnError);
  }
}

TEST_CASE("path enumeration covers the route grid exactly once") {
  RoutingOptions ro;
  ro.M = 2;
  ro.K = 1;
  ro.hidden_width = 4;
  RoutingTask task = make_routing_dataset(ro);
  const auto& t = task.tables;

  CHECK(t.num_paths() == 4);
  for (const Path& p : t.paths) {
    CHECK(p.edges.size() == 3);
    CHECK(task.graph.node(p.source).kind == NodeKind::Input);
    CHECK(task.graph.node(p.target).kind == NodeKind::Output);
  }
  // Each (input, output) pair appears exactly once.
  std::vector<std::pair<int, int>> ends;
  for (const Path& p : t.paths) ends.emplace_back(p.source, p.target);
  std::sort(ends.begin(), ends.end());
  CHECK(std::unique(ends.begin(), ends.end()) == ends.end());

  // into_node indexes every path by its target.
  for (int p = 0; p < t.num_paths(); ++p) {
    const auto& into = t.into_node[t.paths[p].target];
    CHECK(std::find(into.begin(), into.end(), p) != into.end());
  }
}

TEST_CASE("enumeration caps runaway path counts") {
  RoutingOptions ro;
  ro.M = 3;
  ro.K = 2;
  RoutingTask task = make_routing_dataset(ro);
  try {
    enumerate_paths(task.graph, 2);
    FAIL("cap ignored");
  } catch (const GdlnError& e) {
    CHECK(e.code() == Errc::PathExplosion);
  }
}

TEST_CASE("splitting a path at an edge off the path is rejected") {
  ArchitectureGraph g = chain_graph();
  PathTables t = enumerate_paths(g);
  ArchitectureGraph g2 = chain_graph();  // same shape, different instance
  REQUIRE(t.num_paths() == 1);
  Path p = t.paths[0];
  // Remove the last edge from the path, then ask to split there.
  Path shorter = p;
  shorter.edges.pop_back();
  shorter.target = g.edge(shorter.edges.back()).target;
  try {
    split_path(g, shorter, g.edge_index("h-out"));
    FAIL("edge off the path accepted");
  } catch (const GdlnError& e) {
    CHECK(e.code() == Errc::EdgeNotOnPath);
  }
  (void)g2;
}

TEST_CASE("subpath products rebuild full path products") {
  RoutingOptions ro;
  ro.M = 3;
  ro.K = 2;
  ro.hidden_width = 5;
  RoutingTask task = make_routing_dataset(ro);
  const auto& g = task.graph;
  const auto& t = task.tables;

  InitScheme init;
  init.kind = InitKind::SmallRandom;
  init.scale = 0.8;
  WeightState w = init_weights(g, init, 99);

  auto prods = eval_subpath_products(g, t, w.weights);
  for (int p = 0; p < t.num_paths(); ++p) {
    Matrix whole = path_weight_product(g, t.paths[p], w.weights);
    CHECK((prods[t.whole[p]] - whole).cwiseAbs().maxCoeff() <= 1e-13);
    for (std::size_t k = 0; k < t.paths[p].edges.size(); ++k) {
      const PathSplit& sp = t.splits[p][k];
      Matrix rebuilt =
          prods[sp.after] * w.weights[t.paths[p].edges[k]] * prods[sp.before];
      CHECK((rebuilt - whole).cwiseAbs().maxCoeff() <= 1e-13);
    }
  }
}

TEST_CASE("masked in-place products only touch the requested closure") {
  RoutingOptions ro;
  ro.M = 3;
  ro.K = 2;
  ro.hidden_width = 5;
  RoutingTask task = make_routing_dataset(ro);
  const auto& g = task.graph;
  const auto& t = task.tables;

  InitScheme init;
  init.kind = InitKind::SmallRandom;
  init.scale = 0.8;
  WeightState w = init_weights(g, init, 100);

  auto full = eval_subpath_products(g, t, w.weights);
  std::vector<char> needed = subpath_closure(t, {t.whole[0]});
  std::vector<Matrix> sparse;
  eval_subpath_products(g, t, w.weights, sparse, &needed);

  CHECK((sparse[t.whole[0]] - full[t.whole[0]]).cwiseAbs().maxCoeff() == 0.0);
  // Parents of the requested root are in the closure.
  for (int i = t.whole[0]; i >= 0; i = t.subpaths[i].parent)
    CHECK(needed[i] == 1);
  // Some other path's product is outside the closure and stays untouched.
  bool found_untouched = false;
  for (int p = 1; p < t.num_paths(); ++p)
    if (!needed[t.whole[p]]) {
      CHECK(sparse[t.whole[p]].size() == 0);
      found_untouched = true;
    }
  CHECK(found_untouched);
}

TEST_CASE("random seeds drive reproducible orthonormal frames") {
  Rng a(42), b(42), c(43);
  Matrix qa = a.orthonormal(6, 3), qb = b.orthonormal(6, 3);
  CHECK(qa == qb);
  CHECK(qa != c.orthonormal(6, 3));
  CHECK((qa.transpose() * qa - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() <=
        1e-12);
}
