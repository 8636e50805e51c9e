#include <doctest.h>

#include <cmath>

#include "gdln/dataset.hpp"
#include "gdln/dynamics.hpp"

using namespace gdln;

namespace {

TaskBundle tiny_routing(std::uint64_t seed) {
  RoutingOptions ro;
  ro.M = 3;
  ro.K = 2;
  ro.hidden_width = 5;
  ro.seed = seed;
  RoutingTask task = make_routing_dataset(ro);
  return TaskBundle{std::move(task.graph), std::move(task.tables),
                    std::move(task.train)};
}

}  // namespace

TEST_CASE("forward clamps inputs and multiplies gated maps") {
  ArchitectureGraph g;
  g.add_node("in", 2);
  g.add_node("h", 2);
  g.add_node("out", 1);
  g.add_edge("in-h", "in", "h");
  g.add_edge("h-out", "h", "out");
  g.validate();

  WeightState w;
  w.weights.resize(2);
  Matrix w1(2, 2), w2(1, 2);
  w1 << 1, 2, 3, 4;
  w2 << 5, 6;
  w.weights[g.edge_index("in-h")] = w1;
  w.weights[g.edge_index("h-out")] = w2;

  GatedExample ex;
  ex.inputs = {Vector(2)};
  ex.inputs[0] << 1, -1;
  ex.targets = {Vector::Zero(1)};

  auto acts = forward(g, w, ex);
  Vector h = w1 * ex.inputs[0];
  CHECK((acts[g.node_index("h")] - h).cwiseAbs().maxCoeff() == 0.0);
  CHECK(acts[g.node_index("out")][0] == doctest::Approx((w2 * h)[0]));

  // Closing the hidden node gate silences the output.
  ex.gates.node_gates = Vector::Ones(3);
  ex.gates.node_gates[g.node_index("h")] = 0.0;
  auto gated = forward(g, w, ex);
  CHECK(gated[g.node_index("out")][0] == 0.0);

  double loss = examples_loss(g, w, {ex});
  CHECK(loss == doctest::Approx(0.0));
}

TEST_CASE("statistic loss, example loss and the gradient oracle agree") {
  TaskBundle t = tiny_routing(3);
  auto corr = compute_pathway_correlations(t.graph, t.tables, t.train);

  InitScheme init;
  init.kind = InitKind::SmallRandom;
  init.scale = 0.6;
  WeightState w = init_weights(t.graph, init, 3);

  double lc = correlation_loss(t.graph, t.tables, corr, w.weights);
  double ld = dataset_loss(t.graph, w, t.train);
  CHECK(lc == doctest::Approx(ld).epsilon(1e-12));

  auto an = analytic_gradient(t.graph, w, corr, t.tables);
  auto fd = finite_difference_gradient(t.graph, w, t.train, 1e-5);
  for (int e = 0; e < t.graph.num_edges(); ++e) {
    double denom = std::max(fd[e].cwiseAbs().maxCoeff(), 1e-12);
    CHECK((an[e] - fd[e]).cwiseAbs().maxCoeff() / denom <= 1e-6);
  }
}

TEST_CASE("initialization schemes have their documented shapes") {
  TaskBundle t = tiny_routing(4);

  SUBCASE("small random scales with fan") {
    InitScheme init;
    init.kind = InitKind::SmallRandom;
    init.scale = 0.3;
    WeightState w = init_weights(t.graph, init, 4);
    WeightState w2 = init_weights(t.graph, init, 4);
    for (int e = 0; e < t.graph.num_edges(); ++e) {
      CHECK(w.weights[e] == w2.weights[e]);
      CHECK(w.weights[e].rows() == t.graph.edge_rows(e));
      CHECK(w.weights[e].cols() == t.graph.edge_cols(e));
    }
  }

  SUBCASE("fixed singular puts every singular value at the scale") {
    InitScheme init;
    init.kind = InitKind::FixedSingular;
    init.scale = 0.25;
    WeightState w = init_weights(t.graph, init, 5);
    for (int e = 0; e < t.graph.num_edges(); ++e) {
      Eigen::JacobiSVD<Matrix> svd(w.weights[e]);
      int r = std::min(w.weights[e].rows(), w.weights[e].cols());
      for (int i = 0; i < r; ++i)
        CHECK(svd.singularValues()[i] == doctest::Approx(0.25).epsilon(1e-12));
    }
  }
}

TEST_CASE("training logs on the configured grids and descends") {
  TaskBundle t = tiny_routing(5);
  TrainConfig tc;
  tc.step = 0.02;
  tc.steps = 100;
  tc.log_every = 10;
  tc.sv_log_every = 50;
  tc.conserved_log_every = 25;
  tc.seed = 5;
  tc.init.kind = InitKind::FixedSingular;
  tc.init.scale = 0.2;

  Trajectory traj = train(t.graph, t.tables, t.train, tc);
  CHECK(traj.times.size() == 11);  // 0, 10, ..., 100
  CHECK(traj.losses.size() == 11);
  CHECK(traj.sv_times.size() == 3);        // 0, 50, 100
  CHECK(traj.conserved_times.size() == 5);  // 0, 25, 50, 75, 100
  CHECK(traj.times.front() == 0.0);
  CHECK(traj.times.back() == doctest::Approx(100 * 0.02));
  CHECK(traj.losses.back() < traj.losses.front());
  for (const auto& row : traj.edge_top_sv)
    CHECK(static_cast<int>(row.size()) == t.graph.num_edges());
  // Interior balance stays near its initial value under small steps.
  for (const auto& row : traj.conserved_drift)
    for (double v : row) CHECK(v <= 1e-3);
}

TEST_CASE("time advances by the raw step even when tau rescales the flow") {
  TaskBundle t = tiny_routing(6);
  TrainConfig fast;
  fast.tau = 1.0;
  fast.step = 0.01;
  fast.steps = 200;
  fast.log_every = 200;
  fast.seed = 6;
  fast.init.kind = InitKind::FixedSingular;
  fast.init.scale = 0.2;
  TrainConfig slow = fast;
  slow.tau = 2.0;

  Trajectory a = train(t.graph, t.tables, t.train, fast);
  Trajectory b = train(t.graph, t.tables, t.train, slow);
  CHECK(a.times.back() == b.times.back());
  // Larger tau means slower progress at equal time.
  CHECK(b.losses.back() > a.losses.back());
}

TEST_CASE("divergence raises instead of returning garbage") {
  TaskBundle t = tiny_routing(7);
  TrainConfig tc;
  tc.step = 50.0;  // absurd step height forces blow-up
  tc.steps = 200;
  tc.log_every = 10;
  tc.seed = 7;
  tc.init.kind = InitKind::FixedSingular;
  tc.init.scale = 0.5;
  try {
    train(t.graph, t.tables, t.train, tc);
    FAIL("divergence not detected");
  } catch (const GdlnError& e) {
    CHECK(e.code() == Errc::Diverged);
  }
}

TEST_CASE("gradient perturbation knob moves the analytic flow off the oracle") {
  TaskBundle t = tiny_routing(8);
  auto corr = compute_pathway_correlations(t.graph, t.tables, t.train);
  InitScheme init;
  init.kind = InitKind::SmallRandom;
  init.scale = 0.6;
  WeightState w = init_weights(t.graph, init, 8);

  auto clean = analytic_gradient(t.graph, w, corr, t.tables);
  set_gradient_perturbation(0.05);
  auto bent = analytic_gradient(t.graph, w, corr, t.tables);
  set_gradient_perturbation(0.0);
  CHECK(gradient_perturbation() == 0.0);

  double delta = 0.0;
  for (int e = 0; e < t.graph.num_edges(); ++e)
    delta = std::max(
        delta, (bent[e] - clean[e] - 0.05 * w.weights[e]).cwiseAbs().maxCoeff());
  CHECK(delta <= 1e-14);
}

TEST_CASE("positive-part reference trains to negligible loss") {
  ReluConfig rc;
  rc.hidden_width = 32;
  rc.steps = 3000;
  rc.seed = 1;
  ReluResult res = relu_reference_train(rc);
  CHECK(res.losses.size() == static_cast<std::size_t>(rc.steps) + 1);
  CHECK(res.losses.front() == doctest::Approx(0.5).epsilon(0.05));
  CHECK(res.losses.back() <= 1e-3);
  CHECK(res.w1.rows() == 32);
  CHECK(res.w1.cols() == 2);
  CHECK(res.w2.rows() == 1);
  CHECK(res.w2.cols() == 32);
}
