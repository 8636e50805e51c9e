#include <doctest.h>

#include <cmath>

#include "gdln/analysis.hpp"
#include "gdln/dataset.hpp"
#include "gdln/dynamics.hpp"

using namespace gdln;

TEST_CASE("hidden kernel reduces to the input Gram under identity maps") {
  ArchitectureGraph g;
  g.add_node("in", 2);
  g.add_node("h", 2);
  g.add_node("out", 1);
  g.add_edge("in-h", "in", "h");
  g.add_edge("h-out", "h", "out");
  g.validate();

  WeightState w;
  w.weights = {Matrix::Identity(2, 2), Matrix::Ones(1, 2)};

  std::vector<Probe> probes;
  std::vector<Vector> xs;
  Vector x0(2), x1(2), x2(2);
  x0 << 1, 0;
  x1 << 0, 1;
  x2 << 1, 1;
  xs = {x0, x1, x2};
  for (int i = 0; i < 3; ++i) {
    GatedExample ex;
    ex.inputs = {xs[i]};
    ex.targets = {Vector::Zero(1)};
    probes.push_back({ex, i, 0});
  }

  KernelMatrix k = hidden_rsm(g, w, probes, g.node_index("h"));
  REQUIRE(k.k.rows() == 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(k.k(i, j) == doctest::Approx(xs[i].dot(xs[j])).epsilon(1e-14));
}

TEST_CASE("edge singular values are sorted and sized per edge") {
  RoutingOptions ro;
  ro.M = 3;
  ro.K = 2;
  ro.hidden_width = 5;
  RoutingTask task = make_routing_dataset(ro);
  InitScheme init;
  init.kind = InitKind::SmallRandom;
  init.scale = 0.5;
  WeightState w = init_weights(task.graph, init, 21);

  auto svs = edge_singular_values(w);
  REQUIRE(svs.size() == static_cast<std::size_t>(task.graph.num_edges()));
  for (int e = 0; e < task.graph.num_edges(); ++e) {
    CHECK(svs[e].size() == std::min(task.graph.edge_rows(e),
                                    task.graph.edge_cols(e)));
    for (int i = 0; i + 1 < svs[e].size(); ++i)
      CHECK(svs[e][i] >= svs[e][i + 1]);
    CHECK(svs[e][0] >= 0.0);
  }
}

TEST_CASE("sharing index separates aligned from orthogonal domains") {
  // Two domains, two items each; kernel blocks encode the hidden geometry.
  KernelMatrix aligned;
  aligned.k = Matrix::Ones(4, 4);
  aligned.labels = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  CHECK(sharing_index(aligned) == doctest::Approx(1.0).epsilon(1e-12));

  KernelMatrix disjoint;
  disjoint.k = Matrix::Zero(4, 4);
  disjoint.k.block(0, 0, 2, 2) = Matrix::Ones(2, 2);
  disjoint.k.block(2, 2, 2, 2) = Matrix::Ones(2, 2);
  disjoint.labels = aligned.labels;
  CHECK(sharing_index(disjoint) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("route error report averages trained and untrained routes") {
  RoutingOptions ro;
  ro.M = 3;
  ro.K = 2;
  ro.hidden_width = 6;
  ro.seed = 23;
  RoutingTask task = make_routing_dataset(ro);
  TrainConfig tc;
  tc.step = 0.02;
  tc.steps = 1500;
  tc.log_every = 1500;
  tc.seed = 23;
  tc.init.kind = InitKind::FixedSingular;
  tc.init.scale = 0.2;
  Trajectory traj = train(task.graph, task.tables, task.train, tc);

  auto rep = route_error_report(
      task.graph, traj.final_state,
      [&task](int i, int j) { return task.route_examples(i, j); },
      task.route_mask, false);

  REQUIRE(rep.route_loss.rows() == 3);
  CHECK(rep.has_untrained);
  double total = 0.0;
  int n_tr = 0, n_un = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      total += rep.route_loss(i, j);
      (task.route_mask(i, j) ? n_tr : n_un) += 1;
    }
  CHECK(rep.trained_loss * n_tr + rep.untrained_loss * n_un ==
        doctest::Approx(total).epsilon(1e-12));
  CHECK(rep.trained_loss < rep.untrained_loss);
}

TEST_CASE("classification accuracy is exact on a solved toy transform") {
  TransformOptions to;
  to.M = 2;
  to.K = 2;  // every route trained: report covers the trained block only
  to.n_classes = 3;
  to.input_dim = 6;
  to.hidden_width = 8;
  to.noise = 0.05;
  to.train_per_class = 8;
  to.eval_per_class = 4;
  to.seed = 31;
  TransformTask task = make_transform_bench(to);

  TrainConfig tc;
  tc.step = 0.05;
  tc.steps = 6000;
  tc.log_every = 6000;
  tc.seed = 31;
  tc.init.kind = InitKind::FixedSingular;
  tc.init.scale = 0.2;
  Trajectory traj = train(task.graph, task.tables, task.train, tc);

  auto rep = route_error_report(
      task.graph, traj.final_state,
      [&task](int i, int j) { return task.route_examples(i, j); },
      task.route_mask, true);
  CHECK_FALSE(rep.has_untrained);
  CHECK(rep.trained_accuracy == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.route_accuracy.minCoeff() == doctest::Approx(1.0).epsilon(1e-12));
}
