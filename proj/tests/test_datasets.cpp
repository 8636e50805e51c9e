#include <doctest.h>

#include <cmath>
#include <set>

#include "gdln/dataset.hpp"

using namespace gdln;

TEST_CASE("parity corners carry one-hot hidden gates and parity labels") {
  TaskBundle t = make_xor_dataset({});
  REQUIRE(t.train.examples.size() == 4);
  CHECK(t.train.total_weight() == doctest::Approx(1.0).epsilon(1e-14));

  for (const GatedExample& ex : t.train.examples) {
    const Vector& x = ex.inputs[0];
    CHECK(std::abs(std::abs(x[0]) - 1.0) <= 1e-15);
    CHECK(std::abs(std::abs(x[1]) - 1.0) <= 1e-15);
    // Default label convention: +1 when the signs differ.
    double want = x[0] * x[1] > 0 ? -1.0 : 1.0;
    CHECK(ex.targets[0][0] == want);
    // Exactly one hidden pathway open per corner.
    int open = 0;
    for (int v = 0; v < t.graph.num_nodes(); ++v)
      if (t.graph.node(v).kind == NodeKind::Hidden &&
          ex.gates.node_gate(v) == 1.0)
        ++open;
    CHECK(open == 1);
  }

  XorOptions flipped;
  flipped.positive_diagonal = true;
  TaskBundle tf = make_xor_dataset(flipped);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(tf.train.examples[i].targets[0][0] ==
          -t.train.examples[i].targets[0][0]);
}

TEST_CASE("parity pathway statistics separate cleanly") {
  XorOptions xo;
  xo.positive_diagonal = true;
  TaskBundle t = make_xor_dataset(xo);
  auto corr = compute_pathway_correlations(t.graph, t.tables, t.train);

  CHECK(corr.half_target_sq == doctest::Approx(0.5).epsilon(1e-14));
  int active = 0;
  for (int p = 0; p < t.tables.num_paths(); ++p) {
    if (!corr.active[p]) continue;
    ++active;
    // Every open pathway sees one corner: rank-one stats with the documented
    // scale.
    REQUIRE(corr.has_yx(p));
    CHECK(corr.sigma_yx[p].cwiseAbs().maxCoeff() ==
          doctest::Approx(0.25).epsilon(1e-14));
    const Matrix& sx = corr.sigma_x.at({p, p});
    CHECK(sx(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(std::abs(sx(0, 1)) == doctest::Approx(0.25).epsilon(1e-14));
    for (int q = 0; q < t.tables.num_paths(); ++q)
      if (q != p) CHECK(corr.sigma_x.find({p, q}) == corr.sigma_x.end());
  }
  CHECK(active == 4);
}

TEST_CASE("contextual population is exact at zero samples") {
  TaskBundle t = make_contextual_dataset({});
  REQUIRE(t.train.examples.size() == 8);
  const double a = 1.0 / std::sqrt(3.0);
  for (const GatedExample& ex : t.train.examples) {
    CHECK(ex.weight == doctest::Approx(0.125).epsilon(1e-15));
    CHECK(std::abs(ex.inputs[0][0]) == doctest::Approx(a).epsilon(1e-15));
    CHECK(std::abs(ex.inputs[0][1]) == doctest::Approx(a).epsilon(1e-15));
    // The target copies the attended coordinate.
    bool matches_first = ex.targets[0][0] == ex.inputs[0][0];
    bool matches_second = ex.targets[0][0] == ex.inputs[0][1];
    CHECK((matches_first || matches_second));
  }

  ContextualOptions sampled;
  sampled.samples = 32;
  sampled.seed = 3;
  TaskBundle ts = make_contextual_dataset(sampled);
  CHECK(ts.train.examples.size() == 32);
  CHECK(ts.train.total_weight() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("hierarchy features follow the documented tree") {
  HierarchyData h = make_hierarchy_dataset(5);
  CHECK((h.X.transpose() * h.X - Matrix::Identity(4, 4))
            .cwiseAbs()
            .maxCoeff() <= 1e-12);
  // Every item has the root feature; siblings share their branch feature.
  for (int j = 0; j < 4; ++j) CHECK(h.Y(0, j) == 1.0);
  CHECK(h.Y.col(0).sum() == 3.0);  // root + branch + leaf
  HierarchyData h2 = make_hierarchy_dataset(6);
  CHECK(h.Y == h2.Y);  // features are fixed; only the item code is seeded
  CHECK(h.X != h2.X);
}

TEST_CASE("route masks have exact row and column sums") {
  for (RouteRule rule : {RouteRule::CyclicBand, RouteRule::RandomBalanced}) {
    for (int k : {1, 3, 7}) {
      Eigen::MatrixXi mask = make_route_mask(7, k, rule, 11);
      for (int i = 0; i < 7; ++i) {
        int row = 0, col = 0;
        for (int j = 0; j < 7; ++j) {
          row += mask(i, j);
          col += mask(j, i);
        }
        CHECK(row == k);
        CHECK(col == k);
      }
    }
  }
  CHECK(make_route_mask(5, 2, RouteRule::RandomBalanced, 7) ==
        make_route_mask(5, 2, RouteRule::RandomBalanced, 7));
  try {
    make_route_mask(4, 0, RouteRule::CyclicBand);
    FAIL("K=0 accepted");
  } catch (const GdlnError& e) {
    CHECK(e.code() == Errc::InvalidK);
  }
}

TEST_CASE("routing examples gate exactly one route") {
  RoutingOptions ro;
  ro.M = 3;
  ro.K = 2;
  ro.hidden_width = 5;
  RoutingTask task = make_routing_dataset(ro);
  CHECK(task.train.examples.size() == 3 * 2 * 4);

  for (const GatedExample& ex : task.train.examples) {
    int open_edges = 0;
    for (int e = 0; e < task.graph.num_edges(); ++e)
      if (ex.gates.edge_gate(e) == 1.0) ++open_edges;
    CHECK(open_edges == 3);  // in -> shared -> shared -> out
  }

  // route_examples(i, j) opens exactly the i -> j pathway.
  auto exs = task.route_examples(1, 2);
  CHECK(exs.size() == 4);
  int live = 0;
  for (int p = 0; p < task.tables.num_paths(); ++p)
    if (path_gate(task.graph, task.tables.paths[p], exs[0].gates) == 1.0)
      ++live;
  CHECK(live == 1);
}

TEST_CASE("routing statistics scale with the trained-route count") {
  RoutingOptions ro;
  ro.M = 3;
  ro.K = 2;
  RoutingTask task = make_routing_dataset(ro);
  auto corr = compute_pathway_correlations(task.graph, task.tables, task.train);
  Matrix want = 0.25 * task.base.Y * task.base.X.transpose() / 6.0;
  int active = 0;
  for (int p = 0; p < task.tables.num_paths(); ++p) {
    if (!corr.has_yx(p)) continue;
    ++active;
    CHECK((corr.sigma_yx[p] - want).cwiseAbs().maxCoeff() <= 1e-13);
    CHECK((corr.sigma_x.at({p, p}) - 0.25 * Matrix::Identity(4, 4) / 6.0)
              .cwiseAbs()
              .maxCoeff() <= 1e-13);
  }
  CHECK(active == 6);
}

TEST_CASE("race gating tiles routes into shared blocks") {
  RaceOptions ro;
  ro.M = 4;
  ro.P = 4;
  RaceTask task = make_race_gating(ro);
  // g = sqrt(P) = 2 routes share each block side; M^2/P blocks... each block
  // serves g x g routes.
  std::set<int> blocks;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) blocks.insert(task.block_of_route(i, j));
  CHECK(static_cast<int>(blocks.size()) == 4);
  for (int i = 0; i < 4; ++i)
    CHECK(task.block_of_route(i, i) == task.block_of_route(i, i));
  CHECK(task.block_of_route(0, 0) == task.block_of_route(1, 1));
  CHECK(task.block_of_route(0, 0) != task.block_of_route(0, 2));

  try {
    RaceOptions bad;
    bad.M = 4;
    bad.P = 3;
    make_race_gating(bad);
    FAIL("non-square P accepted");
  } catch (const GdlnError& e) {
    CHECK(e.code() == Errc::InvalidP);
  }
  try {
    RaceOptions bad;
    bad.M = 6;
    bad.P = 16;  // g = 4 does not divide M = 6
    make_race_gating(bad);
    FAIL("non-divisor grouping accepted");
  } catch (const GdlnError& e) {
    CHECK(e.code() == Errc::InvalidP);
  }
}

TEST_CASE("transform bench keeps domain zero canonical") {
  TransformOptions to;
  to.M = 3;
  to.K = 2;
  to.n_classes = 4;
  to.input_dim = 8;
  to.hidden_width = 6;
  to.train_per_class = 6;
  to.eval_per_class = 3;
  to.seed = 9;
  TransformTask task = make_transform_bench(to);

  CHECK(task.train.total_weight() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((task.in_op[0] - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff() == 0.0);
  for (int c = 0; c < 4; ++c) CHECK(task.routed_label(0, c) == c);
  // Output permutations are bijections.
  for (int j = 0; j < 3; ++j) {
    std::set<int> seen;
    for (int c = 0; c < 4; ++c) seen.insert(task.routed_label(j, c));
    CHECK(static_cast<int>(seen.size()) == 4);
  }
  // Class prototypes are orthonormal.
  CHECK((task.prototypes.transpose() * task.prototypes -
         Matrix::Identity(4, 4))
            .cwiseAbs()
            .maxCoeff() <= 1e-12);
  // Evaluation probes exist for every route and carry permuted labels.
  auto exs = task.route_examples(1, 2);
  CHECK(exs.size() == task.eval_labels.size());
}

TEST_CASE("dataset validation rejects shape mismatches") {
  TaskBundle t = make_xor_dataset({});
  t.train.examples[0].inputs[0] = Vector::Zero(3);  // graph expects width 2
  try {
    t.train.validate(t.graph);
    FAIL("bad input width accepted");
  } catch (const GdlnError& e) {
    CHECK(e.code() == Errc::DimensionMismatch);
  }
}
