// Python module exposing the main operations: task factories, gradient-flow
// training, the gradient oracle, closed forms and the reduced ODE
// integrators. Weights cross the boundary as lists of numpy arrays ordered
// by edge index.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <utility>

#include "gdln/analysis.hpp"
#include "gdln/dataset.hpp"
#include "gdln/dynamics.hpp"
#include "gdln/experiments.hpp"
#include "gdln/reduction.hpp"

namespace py = pybind11;
using namespace gdln;

namespace {

struct PyTask {
  TaskBundle bundle;
  Eigen::MatrixXi route_mask;  // 0x0 unless the task has a route grid

  int num_paths() const { return bundle.tables.num_paths(); }
  int num_nodes() const { return bundle.graph.num_nodes(); }
  int num_edges() const { return bundle.graph.num_edges(); }
  double total_weight() const { return bundle.train.total_weight(); }
  std::vector<std::string> edge_names() const {
    std::vector<std::string> out;
    for (int e = 0; e < bundle.graph.num_edges(); ++e)
      out.push_back(bundle.graph.edge(e).name);
    return out;
  }
};

PyTask make_xor(int hidden_width, bool positive_diagonal) {
  XorOptions xo;
  xo.hidden_width = hidden_width;
  xo.positive_diagonal = positive_diagonal;
  return PyTask{make_xor_dataset(xo), {}};
}

PyTask make_contextual(const std::string& scheme, int hidden_width,
                       int samples, std::uint64_t seed) {
  ContextualOptions co;
  if (scheme == "always_on")
    co.scheme = ContextScheme::AlwaysOn;
  else if (scheme == "gated")
    co.scheme = ContextScheme::ContextGated;
  else
    fail(Errc::InvalidArgument,
         "scheme must be 'gated' or 'always_on', got '" + scheme + "'");
  co.hidden_width = hidden_width;
  co.samples = samples;
  co.seed = seed;
  return PyTask{make_contextual_dataset(co), {}};
}

PyTask make_routing(int M, int K, int hidden_width, std::uint64_t seed) {
  RoutingOptions ro;
  ro.M = M;
  ro.K = K;
  ro.hidden_width = hidden_width;
  ro.seed = seed;
  RoutingTask task = make_routing_dataset(ro);
  Eigen::MatrixXi mask = task.route_mask;
  return PyTask{TaskBundle{std::move(task.graph), std::move(task.tables),
                           std::move(task.train)},
                std::move(mask)};
}

// Numeric series cross the boundary as Eigen vectors so they arrive as
// numpy arrays rather than lists.
Vector to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

InitScheme parse_init(const std::string& init, double scale) {
  InitScheme scheme;
  scheme.scale = scale;
  if (init == "small_random")
    scheme.kind = InitKind::SmallRandom;
  else if (init == "fixed_singular")
    scheme.kind = InitKind::FixedSingular;
  else if (init == "decoupled")
    scheme.kind = InitKind::Decoupled;
  else
    fail(Errc::InvalidArgument,
         "init must be 'small_random', 'fixed_singular' or 'decoupled', "
         "got '" + init + "'");
  return scheme;
}

py::dict run_train(const PyTask& task, double tau, double step, long steps,
                   int log_every, const std::string& init, double scale,
                   std::uint64_t seed) {
  TrainConfig tc;
  tc.tau = tau;
  tc.step = step;
  tc.steps = steps;
  tc.log_every = log_every;
  tc.seed = seed;
  tc.init = parse_init(init, scale);

  Trajectory traj;
  if (tc.init.kind == InitKind::Decoupled) {
    auto corr = compute_pathway_correlations(task.bundle.graph,
                                             task.bundle.tables,
                                             task.bundle.train);
    auto stats = diagonalize_stats(task.bundle.graph, task.bundle.tables, corr);
    auto bases =
        make_decoupled_bases(task.bundle.graph, task.bundle.tables, stats, seed);
    tc.init.bases = &bases;
    WeightState w0 = init_weights(task.bundle.graph, tc.init, seed);
    traj = train_from(task.bundle.graph, task.bundle.tables, corr, w0, tc);
  } else {
    traj = train(task.bundle.graph, task.bundle.tables, task.bundle.train, tc);
  }

  py::dict out;
  out["times"] = to_vec(traj.times);
  out["losses"] = to_vec(traj.losses);
  py::list weights;
  for (const Matrix& w : traj.final_state.weights) weights.append(w);
  out["weights"] = std::move(weights);
  return out;
}

double run_loss(const PyTask& task, const std::vector<Matrix>& weights) {
  WeightState w;
  w.weights = weights;
  return dataset_loss(task.bundle.graph, w, task.bundle.train);
}

double gradient_gap(const PyTask& task, std::uint64_t seed, double scale) {
  auto corr = compute_pathway_correlations(task.bundle.graph,
                                           task.bundle.tables,
                                           task.bundle.train);
  InitScheme init;
  init.kind = InitKind::SmallRandom;
  init.scale = scale;
  WeightState w = init_weights(task.bundle.graph, init, seed);
  auto an = analytic_gradient(task.bundle.graph, w, corr, task.bundle.tables);
  auto fd =
      finite_difference_gradient(task.bundle.graph, w, task.bundle.train, 1e-5);
  double worst = 0.0;
  for (int e = 0; e < task.bundle.graph.num_edges(); ++e) {
    double denom = std::max(fd[e].cwiseAbs().maxCoeff(), 1e-12);
    worst = std::max(worst, (an[e] - fd[e]).cwiseAbs().maxCoeff() / denom);
  }
  return worst;
}

std::pair<Vector, Vector> py_xor_analytic(
    double a0, double tau, const std::vector<double>& times) {
  XorAnalytic ana = xor_analytic(a0, tau, times);
  return {to_vec(ana.a), to_vec(ana.loss)};
}

std::pair<Vector, Vector> py_hierarchy_spectrum(std::uint64_t seed) {
  HierarchySpectrum hs = hierarchy_raw_stats(seed);
  return {hs.S, hs.D};
}

Matrix stack(const std::vector<Vector>& rows) {
  Matrix out(static_cast<int>(rows.size()), rows.front().size());
  for (std::size_t k = 0; k < rows.size(); ++k)
    out.row(static_cast<int>(k)) = rows[k].transpose();
  return out;
}

py::dict py_routing_ode(const Vector& S, const Vector& D, int M, int K,
                        double b0, double step, long steps, int log_every) {
  RoutingReducedInit init;
  init.b1 = Vector::Constant(S.size(), b0);
  init.b2 = Vector::Constant(S.size(), b0);
  init.b3 = Vector::Constant(S.size(), b0);
  OdeConfig oc;
  oc.step = step;
  oc.steps = steps;
  oc.log_every = log_every;
  auto traj = routing_reduced_train(S, D, M, K, init, oc);
  py::dict out;
  out["times"] = to_vec(traj.times);
  out["b1"] = stack(traj.b1);
  out["b2"] = stack(traj.b2);
  out["b3"] = stack(traj.b3);
  return out;
}

py::dict py_race_ode(const Vector& S, const Vector& D, int M, double P,
                     double b0, double step, long steps, int log_every) {
  OdeConfig oc;
  oc.step = step;
  oc.steps = steps;
  oc.log_every = log_every;
  auto traj = race_reduced_train(S, D, M, P, Vector::Constant(S.size(), b0),
                                 Vector::Constant(S.size(), b0), oc);
  py::dict out;
  out["times"] = to_vec(traj.times);
  out["b1"] = stack(traj.b1);
  out["b2"] = stack(traj.b2);
  return out;
}

py::tuple py_verify(bool quick) {
  std::ostringstream os;
  std::vector<CheckResult> results;
  bool ok = run_verify(quick, os, &results);
  py::list items;
  for (const auto& r : results)
    items.append(py::make_tuple(r.name, r.pass, r.detail));
  return py::make_tuple(ok, items);
}

}  // namespace

PYBIND11_MODULE(_gdln, m) {
  m.doc() = "Gated deep linear network laboratory";

  py::register_exception<GdlnError>(m, "GdlnError");

  py::class_<PyTask>(m, "Task")
      .def("num_paths", &PyTask::num_paths)
      .def("num_nodes", &PyTask::num_nodes)
      .def("num_edges", &PyTask::num_edges)
      .def("total_weight", &PyTask::total_weight)
      .def("edge_names", &PyTask::edge_names)
      .def_property_readonly(
          "route_mask", [](const PyTask& t) { return t.route_mask; });

  m.def("xor_task", &make_xor, py::arg("hidden_width") = 2,
        py::arg("positive_diagonal") = false,
        "Four-pathway parity task with one-hot corner gates");
  m.def("contextual_task", &make_contextual, py::arg("scheme") = "gated",
        py::arg("hidden_width") = 4, py::arg("samples") = 0,
        py::arg("seed") = 0,
        "Attend-to-one-coordinate task; samples=0 uses the exact population");
  m.def("routing_task", &make_routing, py::arg("M") = 7, py::arg("K") = 4,
        py::arg("hidden_width") = 64, py::arg("seed") = 0,
        "Multi-domain routing over a shared two-layer chain");

  m.def("train", &run_train, py::arg("task"), py::arg("tau") = 1.0,
        py::arg("step") = 1e-2, py::arg("steps") = 1000,
        py::arg("log_every") = 1, py::arg("init") = "small_random",
        py::arg("scale") = 0.2, py::arg("seed") = 0,
        "Euler-integrate the gradient flow; returns times, losses and final "
        "weights");
  m.def("loss", &run_loss, py::arg("task"), py::arg("weights"),
        "Weight-averaged half squared error of the given edge maps");
  m.def("gradient_gap", &gradient_gap, py::arg("task"), py::arg("seed") = 0,
        py::arg("scale") = 0.5,
        "Worst per-edge relative gap between the analytic flow and central "
        "differences");

  m.def("xor_analytic", &py_xor_analytic, py::arg("a0"), py::arg("tau"),
        py::arg("times"),
        "Closed-form pathway strength and loss on a time grid");
  m.def("xor_time_to_reach", &xor_time_to_reach, py::arg("a_target"),
        py::arg("a0"), py::arg("tau"));
  m.def("xor_transition_width", &xor_transition_width, py::arg("a0"),
        py::arg("tau"), py::arg("hi") = 0.9, py::arg("lo") = 0.1);

  m.def("hierarchy_spectrum", &py_hierarchy_spectrum, py::arg("seed") = 0,
        "Singular values and conjugated input variances of the hierarchy "
        "task");
  m.def("routing_ode", &py_routing_ode, py::arg("S"), py::arg("D"),
        py::arg("M"), py::arg("K"), py::arg("b0") = 0.02,
        py::arg("step") = 1e-3, py::arg("steps") = 10000,
        py::arg("log_every") = 10,
        "Three-variable reduced routing dynamics from a balanced start");
  m.def("race_ode", &py_race_ode, py::arg("S"), py::arg("D"), py::arg("M"),
        py::arg("P"), py::arg("b0") = 0.01, py::arg("step") = 1.0,
        py::arg("steps") = 100000, py::arg("log_every") = 1000,
        "Two-variable shared-path race dynamics");
  m.def("steady_state_ratio", &steady_state_ratio, py::arg("M"), py::arg("P"),
        "Asymptotic hidden-to-outer singular value ratio P^(1/4)");

  m.def("verify", &py_verify, py::arg("quick") = true,
        "Run the invariant suite; returns (ok, [(name, pass, detail), ...])");
}
