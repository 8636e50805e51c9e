#include <doctest.h>

#include <cmath>

#include "gdln/dataset.hpp"
#include "gdln/dynamics.hpp"
#include "gdln/reduction.hpp"
#include "gdln/rng.hpp"

using namespace gdln;

TEST_CASE("signed SVD reconstructs with a deterministic sign convention") {
  Rng rng(12);
  Matrix m = rng.gaussian_matrix(5, 3, 1.0);
  SignedSvd a = signed_svd(m);
  SignedSvd b = signed_svd(m);
  CHECK(a.u == b.u);
  CHECK(a.v == b.v);

  Matrix rebuilt = a.u * a.s.asDiagonal() * a.v.transpose();
  CHECK((rebuilt - m).cwiseAbs().maxCoeff() <= 1e-12);
  for (int j = 0; j + 1 < a.s.size(); ++j) CHECK(a.s[j] >= a.s[j + 1]);
  // Sign fix: the largest-magnitude entry of each left vector is positive.
  for (int j = 0; j < a.u.cols(); ++j) {
    Eigen::Index imax;
    a.u.col(j).cwiseAbs().maxCoeff(&imax);
    CHECK(a.u(imax, j) > 0.0);
  }
}

TEST_CASE("parity statistics diagonalize to the documented mode constants") {
  XorOptions xo;
  xo.hidden_width = 4;
  TaskBundle t = make_xor_dataset(xo);
  auto corr = compute_pathway_correlations(t.graph, t.tables, t.train);
  auto stats = diagonalize_stats(t.graph, t.tables, corr);

  CHECK(stats.modes == 1);
  CHECK(stats.half_target_sq == doctest::Approx(0.5).epsilon(1e-14));
  const double s_want = std::sqrt(2.0) / 4.0;
  for (int p = 0; p < t.tables.num_paths(); ++p) {
    if (!stats.active[p]) continue;
    CHECK(stats.s[p][0] == doctest::Approx(s_want).epsilon(1e-14));
    CHECK(stats.d.at({p, p})[0] == doctest::Approx(0.5).epsilon(1e-14));
  }
  CHECK(stats.residual <= 1e-14);
}

TEST_CASE("decoupled bases lift and restrict losslessly") {
  XorOptions xo;
  xo.hidden_width = 4;
  TaskBundle t = make_xor_dataset(xo);
  auto corr = compute_pathway_correlations(t.graph, t.tables, t.train);
  auto stats = diagonalize_stats(t.graph, t.tables, corr);
  auto bases = make_decoupled_bases(t.graph, t.tables, stats, 2);

  ReducedState b;
  b.b.resize(t.graph.num_edges());
  Rng rng(2);
  for (int e = 0; e < t.graph.num_edges(); ++e) {
    b.b[e] = Vector(stats.modes);
    for (int m = 0; m < stats.modes; ++m) b.b[e][m] = 0.2 + rng.uniform();
  }

  WeightState w = lift(t.graph, bases, b);
  CHECK(manifold_leakage(t.graph, bases, w) <= 1e-12);
  ReducedState back = restrict_weights(t.graph, bases, w);
  for (int e = 0; e < t.graph.num_edges(); ++e)
    CHECK((back.b[e] - b.b[e]).cwiseAbs().maxCoeff() <= 1e-12);

  double lr = reduced_loss(t.tables, stats, b.b);
  double lf = correlation_loss(t.graph, t.tables, corr, w.weights);
  CHECK(lr == doctest::Approx(lf).epsilon(1e-12));

  InitScheme generic;
  generic.kind = InitKind::SmallRandom;
  generic.scale = 0.5;
  WeightState off = init_weights(t.graph, generic, 2);
  try {
    restrict_weights(t.graph, bases, off);
    FAIL("off-manifold weights accepted");
  } catch (const GdlnError& e) {
    CHECK(e.code() == Errc::OffManifold);
  }
}

TEST_CASE("reduced integration matches the full network on the manifold") {
  XorOptions xo;
  xo.hidden_width = 4;
  TaskBundle t = make_xor_dataset(xo);
  auto corr = compute_pathway_correlations(t.graph, t.tables, t.train);
  auto stats = diagonalize_stats(t.graph, t.tables, corr);
  auto bases = make_decoupled_bases(t.graph, t.tables, stats, 11);

  InitScheme init;
  init.kind = InitKind::Decoupled;
  init.scale = 0.3;
  init.bases = &bases;
  WeightState w0 = init_weights(t.graph, init, 11);
  ReducedState b0 = restrict_weights(t.graph, bases, w0);

  TrainConfig tc;
  tc.step = 1e-2;
  tc.steps = 300;
  tc.log_every = 1;
  Trajectory full = train_from(t.graph, t.tables, corr, w0, tc);

  OdeConfig oc;
  oc.step = 1e-2;
  oc.steps = 300;
  oc.log_every = 1;
  ReducedTrajectory red = reduced_train(t.graph, t.tables, stats, b0, oc);

  REQUIRE(full.losses.size() == red.losses.size());
  for (std::size_t k = 0; k < full.losses.size(); ++k)
    CHECK(full.losses[k] == doctest::Approx(red.losses[k]).epsilon(1e-10));
}

TEST_CASE("sigmoidal closed form fixes its own constants") {
  // Fixed point s/d, rate 2s/tau, and an exactly-zero asymptotic loss.
  const double a0 = 0.04, tau = 2.5;
  XorAnalytic ana = xor_analytic(a0, tau, {0.0, 1.0, 1e7});
  CHECK(ana.a[0] == doctest::Approx(a0).epsilon(1e-14));
  CHECK(ana.a[2] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
  CHECK(ana.loss[2] == 0.0);

  double astar = std::sqrt(0.5);
  for (std::size_t k = 0; k < ana.a.size(); ++k)
    CHECK(ana.loss[k] ==
          doctest::Approx((ana.a[k] - astar) * (ana.a[k] - astar))
              .epsilon(1e-14));

  SUBCASE("time inverse") {
    for (double a : {0.05, 0.2, 0.5, 0.7}) {
      double tt = xor_time_to_reach(a, a0, tau);
      CHECK(xor_analytic(a0, tau, {tt}).a[0] == doctest::Approx(a).epsilon(1e-12));
    }
  }
  SUBCASE("width additivity and tau scaling") {
    double w1 = xor_transition_width(a0, 1.0, 0.9, 0.1);
    double w2 = xor_transition_width(a0, 2.0, 0.9, 0.1);
    CHECK(w2 == doctest::Approx(2.0 * w1).epsilon(1e-12));
    double split = xor_transition_width(a0, 1.0, 0.9, 0.5) +
                   xor_transition_width(a0, 1.0, 0.5, 0.1);
    CHECK(split == doctest::Approx(w1).epsilon(1e-12));
  }
  SUBCASE("domain errors") {
    try {
      xor_analytic(0.0, tau, {0.0});
      FAIL("zero start accepted");
    } catch (const GdlnError& e) {
      CHECK(e.code() == Errc::InvalidA0);
    }
    try {
      xor_time_to_reach(0.9, a0, tau);  // beyond the fixed point
      FAIL("unreachable target accepted");
    } catch (const GdlnError& e) {
      CHECK(e.code() == Errc::InvalidArgument);
    }
  }
}

TEST_CASE("three-variable routing reduction conserves its invariant") {
  HierarchyData h = make_hierarchy_dataset(0);
  SignedSvd svd = signed_svd(0.25 * h.Y * h.X.transpose());
  Vector d = (svd.v.transpose() * (0.25 * h.X * h.X.transpose()) * svd.v)
                 .diagonal();

  Vector s_want(4);
  s_want << std::sqrt(7.0) / 4.0, std::sqrt(3.0) / 4.0, 0.25, 0.25;
  CHECK((svd.s - s_want).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((d - Vector::Constant(4, 0.25)).cwiseAbs().maxCoeff() <= 1e-12);

  RoutingReducedInit init;
  init.b1 = Vector::Constant(4, 0.1);
  init.b2 = Vector::Constant(4, 0.1);
  init.b3 = Vector::Constant(4, 0.1);
  OdeConfig oc;
  oc.step = 1e-3;
  oc.steps = 4000;
  oc.log_every = 40;
  oc.integrator = Integrator::RK4;
  auto traj = routing_reduced_train(svd.s, d, 7, 4, init, oc);
  CHECK(conserved_quantity(traj, 7).max_rel_drift <= 1e-10);

  // Euler drifts more than RK4 but stays small at this step height.
  oc.integrator = Integrator::Euler;
  auto euler = routing_reduced_train(svd.s, d, 7, 4, init, oc);
  double drift = conserved_quantity(euler, 7).max_rel_drift;
  CHECK(drift <= 1e-4);
  CHECK(drift > conserved_quantity(traj, 7).max_rel_drift);
}

TEST_CASE("scalar form reproduces the three-variable trajectory") {
  HierarchyData h = make_hierarchy_dataset(0);
  SignedSvd svd = signed_svd(0.25 * h.Y * h.X.transpose());
  Vector d = (svd.v.transpose() * (0.25 * h.X * h.X.transpose()) * svd.v)
                 .diagonal();
  const int m = 7;
  const double b0 = 0.2;

  OdeConfig oc;
  oc.step = 1e-3;
  oc.steps = 20000;
  oc.log_every = 200;
  oc.integrator = Integrator::RK4;
  RoutingReducedInit init;
  init.b1 = Vector::Constant(4, b0);
  init.b2 = Vector::Constant(4, b0);
  init.b3 = Vector::Constant(4, b0);
  auto full = routing_reduced_train(svd.s, d, m, 4, init, oc);
  Vector c0 = Vector::Constant(4, (m - 1.0) * b0 * b0);
  auto scalar = scalar_routing_ode(svd.s, d, m, c0, Vector::Constant(4, b0), oc);

  REQUIRE(full.b2.size() == scalar.b2.size());
  for (std::size_t k = 0; k < full.b2.size(); ++k)
    CHECK((full.b2[k] - scalar.b2[k]).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("race reduction approaches the quarter-power ratio") {
  CHECK(steady_state_ratio(10, 16.0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(steady_state_ratio(9, 81.0) == doctest::Approx(3.0).epsilon(1e-14));

  HierarchyData h = make_hierarchy_dataset(0);
  SignedSvd svd = signed_svd(0.25 * h.Y * h.X.transpose());
  Vector d = (svd.v.transpose() * (0.25 * h.X * h.X.transpose()) * svd.v)
                 .diagonal();
  OdeConfig oc;
  oc.step = 1.0;
  oc.steps = 200000;
  oc.log_every = 200000;
  auto race = race_reduced_train(svd.s, d, 10, 16.0, Vector::Constant(4, 0.01),
                                 Vector::Constant(4, 0.01), oc);
  for (int m = 0; m < 4; ++m)
    CHECK(race.b2.back()[m] / race.b1.back()[m] ==
          doctest::Approx(2.0).epsilon(5e-3));
}
