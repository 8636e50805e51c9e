#include "gdln/experiments.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "gdln/rng.hpp"

namespace gdln {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3e", x);
  return buf;
}

std::string fix(double x, int digits = 3) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, x);
  return buf;
}

std::vector<double> geomspace(double lo, double hi, int n) {
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i)
    out[i] = lo * std::pow(hi / lo, n == 1 ? 0.0 : double(i) / (n - 1));
  return out;
}

// First time the series drops to `level`, linearly interpolated on a uniform
// grid with spacing dt; negative when the level is never reached.
double crossing_time(const std::vector<double>& series, double level,
                     double dt) {
  for (std::size_t k = 0; k < series.size(); ++k) {
    if (series[k] > level) continue;
    if (k == 0) return 0.0;
    double frac = (series[k - 1] - level) / (series[k - 1] - series[k]);
    return (static_cast<double>(k - 1) + frac) * dt;
  }
  return -1.0;
}

double max_abs_gap(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), Errc::VerificationFailed,
          "trajectories have different lengths: " + std::to_string(a.size()) +
              " vs " + std::to_string(b.size()));
  double gap = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    gap = std::max(gap, std::abs(a[k] - b[k]));
  return gap;
}

// Mean top singular value of hidden-to-hidden maps over the mean top
// singular value of input-side maps.
double hidden_input_sv_ratio(const ArchitectureGraph& g,
                             const WeightState& w) {
  auto svs = edge_singular_values(w);
  double hsum = 0.0, isum = 0.0;
  int hn = 0, in = 0;
  for (int e = 0; e < g.num_edges(); ++e) {
    NodeKind src = g.node(g.edge(e).source).kind;
    NodeKind tgt = g.node(g.edge(e).target).kind;
    if (src == NodeKind::Hidden && tgt == NodeKind::Hidden) {
      hsum += svs[e][0];
      ++hn;
    } else if (src == NodeKind::Input) {
      isum += svs[e][0];
      ++in;
    }
  }
  require(hn > 0 && in > 0, Errc::InvalidArgument,
          "graph lacks hidden-to-hidden or input-side edges");
  return (hsum / hn) / (isum / in);
}

}  // namespace

HierarchySpectrum hierarchy_raw_stats(std::uint64_t seed) {
  HierarchyData h = make_hierarchy_dataset(seed);
  SignedSvd svd = signed_svd(0.25 * h.Y * h.X.transpose());
  HierarchySpectrum out;
  out.S = svd.s;
  out.U = svd.u;
  out.V = svd.v;
  Matrix dx = svd.v.transpose() * (0.25 * h.X * h.X.transpose()) * svd.v;
  out.D = dx.diagonal();
  return out;
}

RoutingAnalysis analyze_routing(const RoutingTask& task, const WeightState& w) {
  RoutingAnalysis a;
  const ArchitectureGraph& g = task.graph;
  const int M = static_cast<int>(task.route_mask.rows());
  a.sv_ratio = hidden_input_sv_ratio(g, w);

  std::vector<Probe> probes;
  for (int i = 0; i < M; ++i) {
    int j = 0;
    while (j < M && !task.route_mask(i, j)) ++j;
    require(j < M, Errc::InvalidArgument, "domain without trained routes");
    auto exs = task.route_examples(i, j);
    for (std::size_t item = 0; item < exs.size(); ++item)
      probes.push_back({exs[item], i, static_cast<int>(item)});
  }
  a.rsm = hidden_rsm(g, w, probes, g.node_index("h1"));
  a.sharing = sharing_index(a.rsm);
  a.report = route_error_report(
      g, w, [&task](int i, int j) { return task.route_examples(i, j); },
      task.route_mask, false);
  return a;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex mu;
  std::exception_ptr first;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first) first = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

// ---------------------------------------------------------------------------
// Pinned checks.

CheckResult check_reduction_exactness() {
  CheckResult r{"reduction exactness (routing M=7 K=4, decoupled B0=0.2)"};
  auto t0 = Clock::now();
  RoutingOptions ro;
  ro.M = 7;
  ro.K = 4;
  ro.hidden_width = 64;
  ro.seed = 1;
  RoutingTask task = make_routing_dataset(ro);
  auto corr = compute_pathway_correlations(task.graph, task.tables, task.train);
  auto stats = diagonalize_stats(task.graph, task.tables, corr);
  auto bases = make_decoupled_bases(task.graph, task.tables, stats, 1);

  InitScheme init;
  init.kind = InitKind::Decoupled;
  init.scale = 0.2;
  init.bases = &bases;
  WeightState w0 = init_weights(task.graph, init, 1);
  ReducedState b0 = restrict_weights(task.graph, bases, w0);

  TrainConfig tc;
  tc.tau = 1.0;
  tc.step = 1e-2;
  tc.steps = 10000;
  tc.log_every = 1;
  Trajectory full = train_from(task.graph, task.tables, corr, w0, tc);

  OdeConfig oc;
  oc.tau = 1.0;
  oc.step = 1e-2;
  oc.steps = 10000;
  oc.log_every = 1;
  ReducedTrajectory red = reduced_train(task.graph, task.tables, stats, b0, oc);

  double gap = max_abs_gap(full.losses, red.losses);
  double secs = seconds_since(t0);
  r.pass = gap <= 1e-8 && secs < 30.0;
  r.detail = "max loss-trajectory gap " + sci(gap) + " (tol 1e-8), final loss " +
             sci(full.losses.back()) + ", " + fix(secs, 1) + "s (cap 30s)";
  return r;
}

CheckResult check_gradient_oracle() {
  CheckResult r{"gradient oracle (analytic vs central differences, 20 settings)"};
  const double eps = 1e-5, tol = 1e-6;
  double worst = 0.0;
  std::string worst_at = "none";

  auto probe = [&](const TaskBundle& task, double scale, std::uint64_t seed,
                   const std::string& label) {
    auto corr =
        compute_pathway_correlations(task.graph, task.tables, task.train);
    InitScheme init;
    init.kind = InitKind::SmallRandom;
    init.scale = scale;
    WeightState w = init_weights(task.graph, init, seed);
    auto an = analytic_gradient(task.graph, w, corr, task.tables);
    auto fd = finite_difference_gradient(task.graph, w, task.train, eps);
    for (int e = 0; e < task.graph.num_edges(); ++e) {
      double denom = std::max(fd[e].cwiseAbs().maxCoeff(), 1e-12);
      double rel = (an[e] - fd[e]).cwiseAbs().maxCoeff() / denom;
      if (rel > worst) {
        worst = rel;
        worst_at = label + " seed " + std::to_string(seed) + " edge " +
                   task.graph.edge(e).name;
      }
    }
  };

  for (std::uint64_t s = 0; s < 7; ++s) {
    XorOptions xo;
    xo.hidden_width = 3;
    probe(make_xor_dataset(xo), 0.7, s, "parity");
  }
  for (std::uint64_t s = 0; s < 7; ++s) {
    ContextualOptions co;
    co.scheme = s % 2 == 0 ? ContextScheme::ContextGated
                           : ContextScheme::AlwaysOn;
    co.hidden_width = 4;
    probe(make_contextual_dataset(co), 0.7, s, "contextual");
  }
  for (std::uint64_t s = 0; s < 6; ++s) {
    RoutingOptions ro;
    ro.M = 3;
    ro.K = 2;
    ro.hidden_width = 5;
    ro.seed = s;
    RoutingTask task = make_routing_dataset(ro);
    TaskBundle tb{std::move(task.graph), std::move(task.tables),
                  std::move(task.train)};
    probe(tb, 0.5, s, "routing");
  }

  r.pass = worst <= tol;
  r.detail = "worst per-edge relative error " + sci(worst) + " (tol 1e-6) at " +
             worst_at;
  return r;
}

CheckResult check_conservation() {
  CheckResult r{"conserved quantity drift (M*B1^2 - B2^2, Euler eta/tau=1e-3)"};
  HierarchySpectrum hs = hierarchy_raw_stats(0);
  OdeConfig oc;
  oc.tau = 1.0;
  oc.step = 1e-3;
  oc.steps = 10000;
  oc.log_every = 1;

  auto drift_at = [&](double b0) {
    RoutingReducedInit init;
    init.b1 = Vector::Constant(4, b0);
    init.b2 = Vector::Constant(4, b0);
    init.b3 = Vector::Constant(4, b0);
    auto traj = routing_reduced_train(hs.S, hs.D, 7, 4, init, oc);
    return conserved_quantity(traj, 7).max_rel_drift;
  };

  double drift_small = drift_at(0.02);
  double drift_large = drift_at(0.2);
  r.pass = drift_small <= 1e-6;
  r.detail = "max relative drift " + sci(drift_small) +
             " at B0=0.02 over 1e4 steps (tol 1e-6); B0=0.2 gives " +
             sci(drift_large) + " for comparison";
  return r;
}

CheckResult check_singular_value_ratios() {
  CheckResult r{"singular value ratios (sqrt(M) routing, P^(1/4) race)"};
  const double sqrt7 = std::sqrt(7.0);

  RoutingOptions ro;
  ro.M = 7;
  ro.K = 4;
  ro.hidden_width = 64;
  ro.seed = 2;
  RoutingTask task = make_routing_dataset(ro);
  TrainConfig tc;
  tc.step = 0.02;
  tc.steps = 10000;
  tc.log_every = 1000;
  tc.seed = 2;
  tc.init.kind = InitKind::FixedSingular;
  tc.init.scale = 0.2;
  Trajectory traj = train(task.graph, task.tables, task.train, tc);
  double ratio = hidden_input_sv_ratio(task.graph, traj.final_state);
  bool routing_ok = ratio >= 0.9 * sqrt7 && ratio <= 1.1 * sqrt7;

  HierarchySpectrum hs = hierarchy_raw_stats(0);
  OdeConfig oc;
  oc.step = 1.0;
  oc.steps = 200000;
  oc.log_every = 200000;
  double worst_race = 0.0;
  for (double p : {1.0, 4.0, 16.0, 100.0}) {
    auto race = race_reduced_train(hs.S, hs.D, 10, p,
                                   Vector::Constant(4, 0.01),
                                   Vector::Constant(4, 0.01), oc);
    const Vector& b1 = race.b1.back();
    const Vector& b2 = race.b2.back();
    double target = steady_state_ratio(10, p);
    for (int m = 0; m < 4; ++m) {
      double dev = std::abs(b2[m] / b1[m] / target - 1.0);
      worst_race = std::max(worst_race, dev);
    }
  }
  bool race_ok = worst_race <= 0.05;

  r.pass = routing_ok && race_ok;
  r.detail = "hidden/input ratio " + fix(ratio) + " vs sqrt(7)=" + fix(sqrt7) +
             " (window [" + fix(0.9 * sqrt7) + ", " + fix(1.1 * sqrt7) +
             "]); race B2/B1 off P^(1/4) by at most " + sci(worst_race) +
             " (tol 0.05) for P in {1,4,16,100}";
  return r;
}

CheckResult check_xor_closed_form() {
  CheckResult r{"parity closed form (sim vs sigmoid; positive-part envelope)"};

  // Part A: decoupled simulation against the closed-form loss, a0 = B0^2.
  XorOptions xo;
  xo.hidden_width = 8;
  TaskBundle task = make_xor_dataset(xo);
  auto corr = compute_pathway_correlations(task.graph, task.tables, task.train);
  auto stats = diagonalize_stats(task.graph, task.tables, corr);
  auto bases = make_decoupled_bases(task.graph, task.tables, stats, 3);
  InitScheme init;
  init.kind = InitKind::Decoupled;
  init.scale = 0.2;
  init.bases = &bases;
  WeightState w0 = init_weights(task.graph, init, 3);

  TrainConfig tc;
  tc.tau = 1.0;
  tc.step = 1e-5;
  tc.steps = 1200000;
  tc.log_every = 100;
  Trajectory traj = train_from(task.graph, task.tables, corr, w0, tc);
  XorAnalytic ana = xor_analytic(0.04, 1.0, traj.times);
  double gap = max_abs_gap(traj.losses, ana.loss);
  bool sim_ok = gap <= 1e-6;

  bool zero_ok = xor_analytic(0.04, 1.0, {1e6}).loss[0] == 0.0;

  // Part B: positive-part reference stays inside a 25% time-dilation
  // envelope of the sigmoidal curve.  Reference-net flow time is the
  // accumulated step size (k * eta); in those units the 90%->10% loss-drop
  // width must match the tau=1 analytic width within 25% (widths are
  // translation-invariant, so the plateau length drops out), the two
  // sub-widths must match under that same per-seed dilation, and the ten
  // seeds must agree with each other.
  const double w_full = xor_transition_width(1e-3, 1.0, 0.9, 0.1);
  const double w_hi = xor_transition_width(1e-3, 1.0, 0.9, 0.5);
  const double w_lo = xor_transition_width(1e-3, 1.0, 0.5, 0.1);
  double a_min = 1e300, a_max = 0.0, worst_final = 0.0, worst_sub = 0.0;
  bool relu_ok = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ReluConfig rc;
    rc.seed = seed;
    ReluResult res = relu_reference_train(rc);
    worst_final = std::max(worst_final, res.losses.back());
    const double l0 = res.losses.front();
    double t9 = crossing_time(res.losses, 0.9 * l0, rc.eta);
    double t5 = crossing_time(res.losses, 0.5 * l0, rc.eta);
    double t1 = crossing_time(res.losses, 0.1 * l0, rc.eta);
    if (t9 < 0.0 || t5 < 0.0 || t1 < 0.0) {
      relu_ok = false;
      continue;
    }
    double alpha = (t1 - t9) / w_full;
    a_min = std::min(a_min, alpha);
    a_max = std::max(a_max, alpha);
    double dev_hi = std::abs((t5 - t9) / (alpha * w_hi) - 1.0);
    double dev_lo = std::abs((t1 - t5) / (alpha * w_lo) - 1.0);
    worst_sub = std::max({worst_sub, dev_hi, dev_lo});
  }
  double seed_spread = a_max / a_min - 1.0;
  relu_ok = relu_ok && worst_final <= 1e-3 && a_min >= 0.75 &&
            a_max <= 1.25 && worst_sub <= 0.25 && seed_spread <= 0.25;

  r.pass = sim_ok && zero_ok && relu_ok;
  r.detail = "sim-vs-formula gap " + sci(gap) +
             " (tol 1e-6); asymptotic loss exactly zero: " +
             (zero_ok ? "yes" : "NO") + "; width dilation [" + fix(a_min) +
             ", " + fix(a_max) + "] (window [0.75, 1.25]), sub-width " +
             "deviation " + fix(worst_sub) + " (tol 0.25), cross-seed " +
             "spread " + fix(seed_spread) + " (tol 0.25), worst final " +
             "loss " + sci(worst_final) + " (tol 1e-3)";
  return r;
}

CheckResult check_contextual_convergence() {
  CheckResult r{"contextual convergence (always-on and context-gated maps)"};

  auto train_scheme = [](ContextScheme scheme) {
    ContextualOptions co;
    co.scheme = scheme;
    co.hidden_width = 3;
    TaskBundle task = make_contextual_dataset(co);
    TrainConfig tc;
    tc.step = 0.01;
    tc.steps = 8000;
    tc.log_every = 1000;
    tc.seed = 0;
    tc.init.kind = InitKind::FixedSingular;
    tc.init.scale = 0.01;
    Trajectory traj = train(task.graph, task.tables, task.train, tc);
    return std::make_pair(std::move(task), std::move(traj));
  };

  auto [task_a, traj_a] = train_scheme(ContextScheme::AlwaysOn);
  Matrix total = traj_a.final_state.weights[task_a.graph.edge_index("h-out")] *
                 traj_a.final_state.weights[task_a.graph.edge_index("in-h")];
  double dev_a = std::max(std::abs(total(0, 0) - 0.5),
                          std::abs(total(0, 1) - 0.5));

  auto [task_c, traj_c] = train_scheme(ContextScheme::ContextGated);
  auto pathway_map = [&](const std::string& h) {
    return traj_c.final_state.weights[task_c.graph.edge_index(h + "-out")] *
           traj_c.final_state.weights[task_c.graph.edge_index("in-" + h)];
  };
  Matrix m0 = pathway_map("h0"), m1 = pathway_map("h1");
  double dev_c = std::max({std::abs(m0(0, 0) - 1.0), std::abs(m0(0, 1)),
                           std::abs(m1(0, 0)), std::abs(m1(0, 1) - 1.0)});
  double final_loss = traj_c.losses.back();

  r.pass = dev_a <= 1e-3 && dev_c <= 1e-3 && final_loss <= 1e-6;
  r.detail = "always-on map off [1/2,1/2] by " + sci(dev_a) +
             "; gated maps off [1,0]/[0,1] by " + sci(dev_c) +
             " (tol 1e-3); gated final loss " + sci(final_loss) + " (tol 1e-6)";
  return r;
}

CheckResult check_zero_shot_threshold() {
  CheckResult r{"zero-shot threshold (M=10 trained-route fraction sweep)"};
  const int M = 10;
  std::vector<double> trained(M + 1, 0.0), untrained(M + 1, 0.0);
  std::vector<bool> has_untrained(M + 1, false);

  std::ostringstream table;
  for (int K = 1; K <= M; ++K) {
    RoutingOptions ro;
    ro.M = M;
    ro.K = K;
    ro.hidden_width = 32;
    ro.seed = 3;
    RoutingTask task = make_routing_dataset(ro);
    TrainConfig tc;
    tc.step = 0.05 / K;
    tc.steps = 8000L * K;
    tc.log_every = static_cast<int>(tc.steps);
    tc.seed = 3;
    tc.init.kind = InitKind::FixedSingular;
    tc.init.scale = 0.2;
    Trajectory traj = train(task.graph, task.tables, task.train, tc);
    RoutingAnalysis an = analyze_routing(task, traj.final_state);
    trained[K] = an.report.trained_loss;
    untrained[K] = an.report.untrained_loss;
    has_untrained[K] = an.report.has_untrained;
    table << " K=" << K << ": trained " << sci(trained[K]);
    if (has_untrained[K]) table << ", untrained " << sci(untrained[K]);
    table << ";";
  }

  bool high_ok = true;
  for (int K = 5; K <= M; ++K)
    if (has_untrained[K] && untrained[K] > 1e-2) high_ok = false;
  double low_ratio = untrained[1] / std::max(trained[1], 1e-300);
  bool low_ok = low_ratio >= 10.0;

  r.pass = high_ok && low_ok;
  r.detail = "untrained-route loss <= 1e-2 for K/M >= 0.5: " +
             std::string(high_ok ? "yes" : "NO") +
             "; untrained/trained at K/M=0.1: " + sci(low_ratio) +
             " (need >= 10);" + table.str();
  return r;
}

CheckResult check_rich_lazy_transition() {
  CheckResult r{"rich-to-lazy transition (init-scale sweep endpoints)"};
  RoutingOptions ro;
  ro.M = 7;
  ro.K = 4;
  ro.hidden_width = 64;
  ro.seed = 4;
  RoutingTask task = make_routing_dataset(ro);

  const std::vector<double> scales = geomspace(0.05, 2.0, 6);
  const double horizons[6] = {1000, 800, 600, 400, 200, 120};
  std::vector<double> trained(6), untrained(6), sharing(6);

  std::ostringstream table;
  for (int i = 0; i < 6; ++i) {
    double eta = 0.02 / (1.0 + scales[i] * scales[i]);
    TrainConfig tc;
    tc.step = eta;
    tc.steps = std::lround(horizons[i] / eta);
    tc.log_every = static_cast<int>(tc.steps);
    tc.seed = 4;
    tc.init.kind = InitKind::FixedSingular;
    tc.init.scale = scales[i];
    Trajectory traj = train(task.graph, task.tables, task.train, tc);
    RoutingAnalysis an = analyze_routing(task, traj.final_state);
    trained[i] = an.report.trained_loss;
    untrained[i] = an.report.untrained_loss;
    sharing[i] = an.sharing;
    table << " s0=" << fix(scales[i], 3) << ": trained " << sci(trained[i])
          << ", untrained " << sci(untrained[i]) << ", sharing "
          << fix(sharing[i]) << ";";
  }

  bool trained_ok =
      *std::max_element(trained.begin(), trained.end()) <= 1e-2;
  bool sharing_ok = sharing.front() >= 0.95 && sharing.back() <= 0.2;
  bool untrained_ok = untrained.front() < untrained.back();

  r.pass = trained_ok && sharing_ok && untrained_ok;
  r.detail = "trained <= 1e-2 at every scale: " +
             std::string(trained_ok ? "yes" : "NO") + "; sharing " +
             fix(sharing.front()) + " -> " + fix(sharing.back()) +
             " (need >= 0.95 and <= 0.2); untrained rises across endpoints: " +
             std::string(untrained_ok ? "yes" : "NO") + ";" + table.str();
  return r;
}

CheckResult check_transform_bench() {
  CheckResult r{"transform bench (classification transfer vs init scale)"};
  auto t0 = Clock::now();
  TransformOptions to;
  to.M = 10;
  to.K = 4;
  to.n_classes = 10;
  to.input_dim = 20;
  to.hidden_width = 32;
  to.noise = 0.1;
  to.seed = 5;
  TransformTask task = make_transform_bench(to);
  auto factory = [&task](int i, int j) { return task.route_examples(i, j); };

  auto run = [&](double sigma0, double eta, long steps, std::uint64_t seed) {
    TrainConfig tc;
    tc.step = eta;
    tc.steps = steps;
    tc.log_every = static_cast<int>(steps);
    tc.seed = seed;
    tc.init.kind = InitKind::FixedSingular;
    tc.init.scale = sigma0;
    Trajectory traj = train(task.graph, task.tables, task.train, tc);
    return route_error_report(task.graph, traj.final_state, factory,
                              task.route_mask, true);
  };

  GeneralizationReport small = run(0.2, 0.05, 30000, 5);
  GeneralizationReport large = run(3.0, 0.003, 90000, 6);
  double secs = seconds_since(t0);

  bool small_ok =
      small.untrained_accuracy >= 0.95 * small.trained_accuracy;
  bool large_ok = large.untrained_accuracy <= 0.5 * large.trained_accuracy;
  r.pass = small_ok && large_ok && secs < 300.0;
  r.detail = "small init accuracy trained " + fix(small.trained_accuracy) +
             " / untrained " + fix(small.untrained_accuracy) +
             " (need >= 0.95x); large init " + fix(large.trained_accuracy) +
             " / " + fix(large.untrained_accuracy) + " (need <= 0.5x); " +
             fix(secs, 1) + "s (cap 300s)";
  return r;
}

// ---------------------------------------------------------------------------
// Invariant suite.

namespace {

void expect(bool cond, const std::string& what) {
  require(cond, Errc::VerificationFailed, what);
}

TaskBundle small_routing_bundle(std::uint64_t seed) {
  RoutingOptions ro;
  ro.M = 3;
  ro.K = 2;
  ro.hidden_width = 5;
  ro.seed = seed;
  RoutingTask task = make_routing_dataset(ro);
  return TaskBundle{std::move(task.graph), std::move(task.tables),
                    std::move(task.train)};
}

// Parity pathways plus one always-on shortcut: the input statistics of the
// shortcut overlap every gated pathway, so no shared frame diagonalizes them.
TaskBundle mixed_gating_bundle() {
  TaskBundle t;
  t.graph.add_node("in", 2);
  t.graph.add_node("ha", 2);
  t.graph.add_node("h0", 2);
  t.graph.add_node("h1", 2);
  t.graph.add_node("out", 1);
  t.graph.add_edge("in-ha", "in", "ha");
  t.graph.add_edge("in-h0", "in", "h0");
  t.graph.add_edge("in-h1", "in", "h1");
  t.graph.add_edge("ha-out", "ha", "out");
  t.graph.add_edge("h0-out", "h0", "out");
  t.graph.add_edge("h1-out", "h1", "out");
  t.graph.validate();
  t.tables = enumerate_paths(t.graph);
  const double a = 1.0 / std::sqrt(3.0);
  for (int context = 0; context < 2; ++context)
    for (int s1 : {-1, 1})
      for (int s2 : {-1, 1}) {
        GatedExample ex;
        Vector x(2);
        x << a * s1, a * s2;
        ex.inputs = {x};
        ex.targets = {Vector::Constant(1, x[context])};
        ex.weight = 0.125;
        ex.gates.node_gates = Vector::Ones(t.graph.num_nodes());
        ex.gates.node_gates[t.graph.node_index("h0")] = context == 0 ? 1.0 : 0.0;
        ex.gates.node_gates[t.graph.node_index("h1")] = context == 1 ? 1.0 : 0.0;
        t.train.examples.push_back(std::move(ex));
      }
  return t;
}

}  // namespace

std::vector<CheckResult> invariant_suite() {
  std::vector<CheckResult> out;
  auto add = [&](const std::string& name,
                 const std::function<std::string()>& body) {
    CheckResult r;
    r.name = "invariant: " + name;
    try {
      r.detail = body();
      r.pass = true;
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = e.what();
    }
    out.push_back(std::move(r));
  };

  add("path split product identity", [] {
    TaskBundle t = small_routing_bundle(7);
    InitScheme init;
    init.kind = InitKind::SmallRandom;
    init.scale = 0.7;
    WeightState w = init_weights(t.graph, init, 7);
    auto prods = eval_subpath_products(t.graph, t.tables, w.weights);
    double worst = 0.0;
    for (int p = 0; p < t.tables.num_paths(); ++p) {
      const Path& path = t.tables.paths[p];
      Matrix whole = path_weight_product(t.graph, path, w.weights);
      worst = std::max(
          worst, (prods[t.tables.whole[p]] - whole).cwiseAbs().maxCoeff());
      for (std::size_t k = 0; k < path.edges.size(); ++k) {
        const PathSplit& sp = t.tables.splits[p][k];
        Matrix rebuilt = prods[sp.after] * w.weights[path.edges[k]] *
                         prods[sp.before];
        worst = std::max(worst, (rebuilt - whole).cwiseAbs().maxCoeff());
      }
    }
    expect(worst <= 1e-12, "split product mismatch " + sci(worst));
    return "after * W_e * before rebuilds every path product (gap " +
           sci(worst) + ")";
  });

  add("path enumeration deterministic and complete", [] {
    RoutingOptions ro;
    ro.M = 2;
    ro.K = 1;
    ro.hidden_width = 4;
    RoutingTask a = make_routing_dataset(ro);
    RoutingTask b = make_routing_dataset(ro);
    expect(a.tables.num_paths() == b.tables.num_paths(), "path count differs");
    for (int p = 0; p < a.tables.num_paths(); ++p) {
      expect(a.tables.paths[p].edges == b.tables.paths[p].edges,
             "path order differs between identical builds");
      if (p > 0)
        expect(a.tables.paths[p - 1].edges < a.tables.paths[p].edges,
               "paths not in lexicographic order");
    }
    for (int e = 0; e < a.graph.num_edges(); ++e)
      for (int p : a.tables.through_edge[e]) {
        const auto& edges = a.tables.paths[p].edges;
        expect(std::find(edges.begin(), edges.end(), e) != edges.end(),
               "through_edge lists a path that skips the edge");
      }
    int through_hidden = static_cast<int>(
        a.tables.through_edge[a.graph.edge_index("h1-h2")].size());
    int through_in0 = static_cast<int>(
        a.tables.through_edge[a.graph.edge_index("in0-h1")].size());
    expect(through_hidden == 4 && through_in0 == 2,
           "M=2 route grid should put 4 paths through the shared map and 2 "
           "through each input map");
    return "two builds agree; 4/2 paths through shared/input maps at M=2";
  });

  add("factory weights form a probability mass", [] {
    std::vector<GatedDataset> sets;
    sets.push_back(make_xor_dataset({}).train);
    sets.push_back(make_contextual_dataset({}).train);
    ContextualOptions ao;
    ao.scheme = ContextScheme::AlwaysOn;
    sets.push_back(make_contextual_dataset(ao).train);
    RoutingOptions ro;
    ro.M = 3;
    ro.K = 2;
    sets.push_back(make_routing_dataset(ro).train);
    RaceOptions rc;
    rc.M = 4;
    rc.P = 4;
    sets.push_back(make_race_gating(rc).train);
    TransformOptions to;
    to.M = 3;
    to.K = 2;
    to.train_per_class = 4;
    to.eval_per_class = 2;
    sets.push_back(make_transform_bench(to).train);
    double worst = 0.0;
    for (const auto& d : sets)
      worst = std::max(worst, std::abs(d.total_weight() - 1.0));
    expect(worst <= 1e-12, "total weight off unity by " + sci(worst));
    return "six factories, total weight within " + sci(worst) + " of 1";
  });

  add("parity pathway statistics", [] {
    XorOptions xo;
    xo.positive_diagonal = true;
    TaskBundle t = make_xor_dataset(xo);
    auto corr = compute_pathway_correlations(t.graph, t.tables, t.train);
    Matrix syx_expect(1, 2);
    syx_expect << 0.25, 0.25;
    Matrix sx_expect(2, 2);
    sx_expect << 0.25, 0.25, 0.25, 0.25;
    expect(corr.has_yx(0), "first pathway has no target statistic");
    expect((corr.sigma_yx[0] - syx_expect).cwiseAbs().maxCoeff() <= 1e-15,
           "target correlation of the (+,+) pathway is not (1/4)[1 1]");
    auto it = corr.sigma_x.find({0, 0});
    expect(it != corr.sigma_x.end(), "missing same-path input statistic");
    expect((it->second - sx_expect).cwiseAbs().maxCoeff() <= 1e-15,
           "input correlation of the (+,+) pathway is not (1/4)[[1,1],[1,1]]");
    expect(corr.sigma_x.find({0, 1}) == corr.sigma_x.end(),
           "pathways with disjoint gates must have no cross statistic");
    return "corner pathway stats equal (1/4)[1 1] and (1/4) ones; no cross "
           "terms";
  });

  add("contextual population statistics", [] {
    ContextualOptions ao;
    ao.scheme = ContextScheme::AlwaysOn;
    TaskBundle ta = make_contextual_dataset(ao);
    auto ca = compute_pathway_correlations(ta.graph, ta.tables, ta.train);
    Matrix syx_a(1, 2);
    syx_a << 1.0 / 6.0, 1.0 / 6.0;
    expect((ca.sigma_yx[0] - syx_a).cwiseAbs().maxCoeff() <= 1e-15,
           "always-on target correlation is not [1/6, 1/6]");
    Matrix sx_a = ca.sigma_x.at({0, 0});
    expect((sx_a - Matrix::Identity(2, 2) / 3.0).cwiseAbs().maxCoeff() <=
               1e-15,
           "always-on input correlation is not I/3");

    TaskBundle tc = make_contextual_dataset({});
    auto cc = compute_pathway_correlations(tc.graph, tc.tables, tc.train);
    Matrix syx_c(1, 2);
    syx_c << 1.0 / 6.0, 0.0;
    expect((cc.sigma_yx[0] - syx_c).cwiseAbs().maxCoeff() <= 1e-15,
           "context-gated target correlation is not [1/6, 0]");
    expect((cc.sigma_x.at({0, 0}) - Matrix::Identity(2, 2) / 6.0)
               .cwiseAbs()
               .maxCoeff() <= 1e-15,
           "context-gated input correlation is not I/6");
    expect(cc.sigma_x.find({0, 1}) == cc.sigma_x.end(),
           "context-gated pathways must have no cross statistic");
    return "always-on [1/6,1/6] with I/3; gated [1/6,0] with I/6, no cross";
  });

  add("hierarchy dataset statistics", [] {
    HierarchyData h = make_hierarchy_dataset(0);
    expect((h.X.transpose() * h.X - Matrix::Identity(4, 4))
               .cwiseAbs()
               .maxCoeff() <= 1e-12,
           "item vectors are not orthonormal");
    Vector item0(7);
    item0 << 1, 1, 0, 1, 0, 0, 0;
    expect((h.Y.col(0) - item0).cwiseAbs().maxCoeff() == 0.0,
           "first item features are not the documented tree column");
    HierarchySpectrum hs = hierarchy_raw_stats(0);
    Vector s_expect(4);
    s_expect << std::sqrt(7.0) / 4.0, std::sqrt(3.0) / 4.0, 0.25, 0.25;
    expect((hs.S - s_expect).cwiseAbs().maxCoeff() <= 1e-12,
           "hierarchy spectrum is not [sqrt(7), sqrt(3), 1, 1]/4");
    expect((hs.D - Vector::Constant(4, 0.25)).cwiseAbs().maxCoeff() <= 1e-12,
           "conjugated input variance is not 1/4 per mode");

    RoutingOptions ro;
    ro.M = 3;
    ro.K = 2;
    RoutingTask task = make_routing_dataset(ro);
    auto corr =
        compute_pathway_correlations(task.graph, task.tables, task.train);
    Matrix expect_yx = 0.25 * task.base.Y * task.base.X.transpose() / 6.0;
    double worst = 0.0;
    int active = 0;
    for (int p = 0; p < task.tables.num_paths(); ++p)
      if (corr.has_yx(p)) {
        ++active;
        worst = std::max(
            worst, (corr.sigma_yx[p] - expect_yx).cwiseAbs().maxCoeff());
      }
    expect(active == 6, "route grid should activate K*M = 6 pathways");
    expect(worst <= 1e-12, "per-route target correlation off by " + sci(worst));
    return "spectrum [sqrt(7),sqrt(3),1,1]/4, D=1/4; route stats scaled by "
           "1/(KM)";
  });

  add("correlation loss equals example loss", [] {
    double worst = 0.0;
    auto compare = [&worst](const TaskBundle& t, std::uint64_t seed) {
      InitScheme init;
      init.kind = InitKind::SmallRandom;
      init.scale = 0.6;
      WeightState w = init_weights(t.graph, init, seed);
      auto corr = compute_pathway_correlations(t.graph, t.tables, t.train);
      double lc = correlation_loss(t.graph, t.tables, corr, w.weights);
      double ld = dataset_loss(t.graph, w, t.train);
      worst = std::max(worst, std::abs(lc - ld) / std::max(1.0, std::abs(ld)));
    };
    compare(make_xor_dataset({}), 11);
    compare(make_contextual_dataset({}), 12);
    compare(small_routing_bundle(13), 13);
    expect(worst <= 1e-12, "loss mismatch " + sci(worst));
    return "statistic-based loss matches example averages (gap " + sci(worst) +
           ")";
  });

  add("analytic flow descends", [] {
    TaskBundle t = small_routing_bundle(17);
    auto corr = compute_pathway_correlations(t.graph, t.tables, t.train);
    InitScheme init;
    init.kind = InitKind::SmallRandom;
    init.scale = 0.6;
    WeightState w = init_weights(t.graph, init, 17);
    double before = correlation_loss(t.graph, t.tables, corr, w.weights);
    auto grad = analytic_gradient(t.graph, w, corr, t.tables);
    for (int e = 0; e < t.graph.num_edges(); ++e)
      w.weights[e] += 1e-4 * grad[e];
    double after = correlation_loss(t.graph, t.tables, corr, w.weights);
    expect(after < before, "loss rose from " + sci(before) + " to " +
                               sci(after) + " along the flow");
    return "one small step along the flow lowers the loss (" + sci(before) +
           " -> " + sci(after) + ")";
  });

  add("interior balance conserved along training", [] {
    TaskBundle t = small_routing_bundle(19);
    TrainConfig tc;
    tc.step = 1e-3;
    tc.steps = 1000;
    tc.log_every = 1000;
    tc.conserved_log_every = 1000;
    tc.seed = 19;
    tc.init.kind = InitKind::FixedSingular;
    tc.init.scale = 0.2;
    Trajectory traj = train(t.graph, t.tables, t.train, tc);
    double worst = 0.0;
    for (const auto& row : traj.conserved_drift)
      for (double v : row) worst = std::max(worst, v);
    expect(worst <= 1e-4,
           "balance drifted by " + sci(worst) + " under a small-step Euler");
    return "out-minus-in weight balance drift " + sci(worst) +
           " over 1e3 small steps";
  });

  add("decoupled reduction round-trips", [] {
    XorOptions xo;
    xo.hidden_width = 4;
    TaskBundle t = make_xor_dataset(xo);
    auto corr = compute_pathway_correlations(t.graph, t.tables, t.train);
    auto stats = diagonalize_stats(t.graph, t.tables, corr);
    auto bases = make_decoupled_bases(t.graph, t.tables, stats, 23);
    Rng rng(23);
    ReducedState b;
    b.b.resize(t.graph.num_edges());
    for (int e = 0; e < t.graph.num_edges(); ++e) {
      b.b[e] = Vector(stats.modes);
      for (int m = 0; m < stats.modes; ++m)
        b.b[e][m] = 0.1 + 0.9 * rng.uniform();
    }
    WeightState w = lift(t.graph, bases, b);
    expect(manifold_leakage(t.graph, bases, w) <= 1e-12,
           "lifted weights leak off the manifold");
    ReducedState back = restrict_weights(t.graph, bases, w);
    double worst = 0.0;
    for (int e = 0; e < t.graph.num_edges(); ++e)
      worst = std::max(worst, (back.b[e] - b.b[e]).cwiseAbs().maxCoeff());
    expect(worst <= 1e-12, "restrict(lift(b)) differs by " + sci(worst));
    double lr = reduced_loss(t.tables, stats, b.b);
    double lf = correlation_loss(t.graph, t.tables, corr, w.weights);
    expect(std::abs(lr - lf) <= 1e-12,
           "reduced loss differs from lifted full loss by " +
               sci(std::abs(lr - lf)));
    InitScheme off;
    off.kind = InitKind::SmallRandom;
    off.scale = 0.5;
    WeightState wr = init_weights(t.graph, off, 23);
    bool threw = false;
    try {
      restrict_weights(t.graph, bases, wr);
    } catch (const GdlnError& e) {
      threw = e.code() == Errc::OffManifold;
    }
    expect(threw, "restricting generic weights must report OffManifold");
    return "lift/restrict identity, loss agreement, off-manifold rejection";
  });

  add("reduced dynamics equals full on the manifold", [] {
    XorOptions xo;
    xo.hidden_width = 4;
    TaskBundle t = make_xor_dataset(xo);
    auto corr = compute_pathway_correlations(t.graph, t.tables, t.train);
    auto stats = diagonalize_stats(t.graph, t.tables, corr);
    auto bases = make_decoupled_bases(t.graph, t.tables, stats, 29);
    InitScheme init;
    init.kind = InitKind::Decoupled;
    init.scale = 0.3;
    init.bases = &bases;
    WeightState w0 = init_weights(t.graph, init, 29);
    ReducedState b0 = restrict_weights(t.graph, bases, w0);
    TrainConfig tc;
    tc.step = 1e-2;
    tc.steps = 200;
    tc.log_every = 1;
    Trajectory full = train_from(t.graph, t.tables, corr, w0, tc);
    OdeConfig oc;
    oc.step = 1e-2;
    oc.steps = 200;
    oc.log_every = 1;
    ReducedTrajectory red = reduced_train(t.graph, t.tables, stats, b0, oc);
    double gap = max_abs_gap(full.losses, red.losses);
    expect(gap <= 1e-10, "loss trajectories differ by " + sci(gap));
    return "200 Euler steps agree to " + sci(gap);
  });

  add("race ratio ordered in P", [] {
    double prev = 0.0;
    for (double p : {1.0, 4.0, 16.0, 100.0}) {
      double s = steady_state_ratio(10, p);
      expect(s > prev, "steady ratio not increasing at P=" + fix(p, 0));
      prev = s;
    }
    HierarchySpectrum hs = hierarchy_raw_stats(0);
    OdeConfig oc;
    oc.step = 1.0;
    oc.steps = 30000;
    oc.log_every = 30000;
    prev = 0.0;
    for (double p : {1.0, 4.0, 16.0, 100.0}) {
      auto race = race_reduced_train(hs.S, hs.D, 10, p,
                                     Vector::Constant(4, 0.01),
                                     Vector::Constant(4, 0.01), oc);
      double ratio = race.b2.back()[0] / race.b1.back()[0];
      expect(ratio > prev, "mid-training ratio not ordered at P=" + fix(p, 0));
      prev = ratio;
    }
    return "hidden/outer ratio increases with path sharing P";
  });

  add("scalar reduction matches three-variable form", [] {
    HierarchySpectrum hs = hierarchy_raw_stats(0);
    const double b0 = 0.2;
    const int m = 7;
    OdeConfig oc;
    oc.step = 1e-3;
    oc.steps = 40000;
    oc.log_every = 100;
    oc.integrator = Integrator::RK4;
    RoutingReducedInit init;
    init.b1 = Vector::Constant(4, b0);
    init.b2 = Vector::Constant(4, b0);
    init.b3 = Vector::Constant(4, b0);
    auto full = routing_reduced_train(hs.S, hs.D, m, 4, init, oc);
    Vector c0 = Vector::Constant(4, (m - 1.0) * b0 * b0);
    auto scalar =
        scalar_routing_ode(hs.S, hs.D, m, c0, Vector::Constant(4, b0), oc);
    double worst = 0.0;
    for (std::size_t k = 0; k < full.b2.size(); ++k) {
      worst = std::max(worst,
                       (full.b2[k] - scalar.b2[k]).cwiseAbs().maxCoeff());
      Vector b1_rec =
          ((scalar.b2[k].array().square() + c0.array()) / m).sqrt();
      worst = std::max(worst,
                       (full.b1[k] - b1_rec.matrix()).cwiseAbs().maxCoeff());
    }
    expect(worst <= 1e-8, "scalar and 3-variable forms differ by " +
                              sci(worst));
    double drift = conserved_quantity(full, m).max_rel_drift;
    expect(drift <= 1e-10, "RK4 conserved drift " + sci(drift));
    return "forms agree to " + sci(worst) + "; RK4 drift " + sci(drift);
  });

  add("sigmoidal solution self-consistent", [] {
    const double a0 = 0.04, tau = 2.5;
    double worst = 0.0;
    for (double a = 0.05; a < 0.7; a += 0.05) {
      double t = xor_time_to_reach(a, a0, tau);
      double back = xor_analytic(a0, tau, {t}).a[0];
      worst = std::max(worst, std::abs(back - a));
    }
    expect(worst <= 1e-9, "a(t(a)) round-trip off by " + sci(worst));
    double w_full = xor_transition_width(a0, tau, 0.9, 0.1);
    double w_sum = xor_transition_width(a0, tau, 0.9, 0.5) +
                   xor_transition_width(a0, tau, 0.5, 0.1);
    expect(w_full > 0.0, "transition width must be positive");
    expect(std::abs(w_full - w_sum) <= 1e-12, "widths are not additive");
    return "inverse map round-trips (gap " + sci(worst) +
           "); widths positive and additive";
  });

  add("training is bitwise reproducible", [] {
    TaskBundle t = small_routing_bundle(31);
    TrainConfig tc;
    tc.step = 0.02;
    tc.steps = 50;
    tc.log_every = 10;
    tc.seed = 31;
    tc.init.kind = InitKind::SmallRandom;
    tc.init.scale = 0.4;
    Trajectory a = train(t.graph, t.tables, t.train, tc);
    Trajectory b = train(t.graph, t.tables, t.train, tc);
    for (int e = 0; e < t.graph.num_edges(); ++e)
      expect(a.final_state.weights[e] == b.final_state.weights[e],
             "re-running the same config changed the weights");
    expect(a.losses == b.losses, "re-running changed the loss log");
    return "same config and seed reproduce weights and losses exactly";
  });

  add("representation kernel properties", [] {
    RoutingOptions ro;
    ro.M = 3;
    ro.K = 2;
    ro.hidden_width = 6;
    ro.seed = 37;
    RoutingTask task = make_routing_dataset(ro);
    TrainConfig tc;
    tc.step = 0.02;
    tc.steps = 2000;
    tc.log_every = 500;
    tc.seed = 37;
    tc.init.kind = InitKind::FixedSingular;
    tc.init.scale = 0.2;
    Trajectory traj = train(task.graph, task.tables, task.train, tc);
    RoutingAnalysis an = analyze_routing(task, traj.final_state);

    Matrix sym = an.rsm.k - an.rsm.k.transpose();
    expect(sym.cwiseAbs().maxCoeff() <= 1e-12, "kernel is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(an.rsm.k);
    expect(eig.eigenvalues().minCoeff() >= -1e-8,
           "kernel eigenvalue " + sci(eig.eigenvalues().minCoeff()));

    WeightState scaled = traj.final_state;
    for (int i = 0; i < 3; ++i)
      scaled.weights[task.graph.edge_index("in" + std::to_string(i) + "-h1")] *=
          3.0;
    RoutingAnalysis an2 = analyze_routing(task, scaled);
    expect(std::abs(an.sharing - an2.sharing) <= 1e-12,
           "sharing index is not scale invariant");

    const auto& rep = an.report;
    int n_tr = 0, n_un = 0;
    double total = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        total += rep.route_loss(i, j);
        (task.route_mask(i, j) ? n_tr : n_un) += 1;
      }
    double rebuilt = rep.trained_loss * n_tr + rep.untrained_loss * n_un;
    expect(std::abs(total - rebuilt) <= 1e-12 * std::max(1.0, total),
           "per-route losses do not sum to the reported means");
    return "kernel PSD and symmetric; sharing scale-invariant; route means "
           "consistent";
  });

  add("mixed always-on and gated pathways are only approximately reducible",
      [] {
        TaskBundle t = mixed_gating_bundle();
        auto corr = compute_pathway_correlations(t.graph, t.tables, t.train);
        bool threw = false;
        try {
          diagonalize_stats(t.graph, t.tables, corr);
        } catch (const GdlnError& e) {
          threw = e.code() == Errc::NotDiagonalizable;
        }
        expect(threw, "exact mode must reject overlapping input statistics");
        auto stats = diagonalize_stats(t.graph, t.tables, corr,
                                       DiagMode::Approximate);
        // The shared input statistic (1/6)I leaks outside the gated frame
        // [1,0] against the always-on frame [1,1]/sqrt(2); the worst leak
        // coefficient is (1/6)/sqrt(2).
        const double want = 1.0 / (6.0 * std::sqrt(2.0));
        expect(std::abs(stats.residual - want) <= 1e-12,
               "cross-pathway leak should be sqrt(2)/12, got " +
                   sci(stats.residual));
        return "exact mode rejects; approximate mode reports leak sqrt(2)/12";
      });

  add("serialization round-trips", [] {
    TaskBundle t = small_routing_bundle(41);
    ArchitectureGraph g2 = parse_graph(format_graph(t.graph));
    expect(g2.num_nodes() == t.graph.num_nodes() &&
               g2.num_edges() == t.graph.num_edges(),
           "graph text round-trip changed the shape");
    for (int v = 0; v < g2.num_nodes(); ++v)
      expect(g2.node(v).name == t.graph.node(v).name &&
                 g2.node(v).width == t.graph.node(v).width &&
                 g2.node(v).kind == t.graph.node(v).kind,
             "graph text round-trip changed node " + t.graph.node(v).name);

    ConfigFile cfg = ConfigFile::from_text(
        "{\"N_h\": 64, \"grid\": [1, 2.5], \"seeds\": [3, 4]}");
    expect(cfg.integer({"hidden_width", "N_h"}, 0) == 64,
           "alias lookup failed");
    expect(cfg.grid({"grid"}, {}).size() == 2 &&
               cfg.seeds({"seeds"}, {}).size() == 2,
           "grid/seed parsing failed");
    expect(cfg.number({"absent"}, 7.5) == 7.5, "fallback ignored");
    return "graph text and config parsing round-trip";
  });

  add("documented failure modes raise their codes", [] {
    auto code_of = [](const std::function<void()>& f) {
      try {
        f();
      } catch (const GdlnError& e) {
        return e.code();
      }
      return Errc::VerificationFailed;
    };
    expect(code_of([] {
             ArchitectureGraph g;
             g.add_node("a", 2);
             g.add_node("b", 2);
             g.add_edge("ab", "a", "b");
             g.add_edge("ba", "b", "a");
             g.validate();
           }) == Errc::CycleDetected,
           "cycle not detected");
    expect(code_of([] { make_route_mask(4, 5, RouteRule::CyclicBand); }) ==
               Errc::InvalidK,
           "K > M accepted");
    expect(code_of([] {
             RaceOptions ro;
             ro.M = 4;
             ro.P = 3;
             make_race_gating(ro);
           }) == Errc::InvalidP,
           "non-square sharing accepted");
    expect(code_of([] { xor_analytic(-1.0, 1.0, {0.0}); }) == Errc::InvalidA0,
           "negative a0 accepted");
    expect(code_of([] {
             RoutingOptions ro;
             ro.M = 3;
             ro.K = 2;
             RoutingTask t = make_routing_dataset(ro);
             enumerate_paths(t.graph, 2);
           }) == Errc::PathExplosion,
           "path cap not enforced");
    return "cycle, K, P, a0 and path-cap failures carry their codes";
  });

  return out;
}

// ---------------------------------------------------------------------------

bool run_verify(bool quick, std::ostream& os,
                std::vector<CheckResult>* results) {
  std::vector<CheckResult> all = invariant_suite();

  using Pinned = std::pair<const char*, CheckResult (*)()>;
  std::vector<Pinned> pinned = {
      {"gradient oracle", &check_gradient_oracle},
      {"conserved quantity drift", &check_conservation},
  };
  if (!quick) {
    pinned.insert(pinned.begin(),
                  {"reduction exactness", &check_reduction_exactness});
    pinned.push_back(
        {"singular value ratios", &check_singular_value_ratios});
    pinned.push_back({"parity closed form", &check_xor_closed_form});
    pinned.push_back(
        {"contextual convergence", &check_contextual_convergence});
  }
  for (const auto& [label, fn] : pinned) {
    CheckResult r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r.name = label;
      r.pass = false;
      r.detail = std::string("aborted: ") + e.what();
    }
    all.push_back(std::move(r));
  }

  int passed = 0;
  for (const auto& r : all) {
    os << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << " — " << r.detail
       << "\n";
    if (r.pass) ++passed;
  }
  os << "verify: " << passed << "/" << all.size() << " checks passed"
     << (quick ? " (quick mode)" : "") << "\n";
  if (results) *results = all;
  return passed == static_cast<int>(all.size());
}

// ---------------------------------------------------------------------------
// CLI subcommands.

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

ConfigFile load_config(const CliOptions& opt) {
  if (opt.config_path.empty()) return ConfigFile::from_text("{}");
  return ConfigFile(opt.config_path);
}

// One run directory with its manifest; add_file both registers and resolves.
struct RunScope {
  std::string dir;
  RunManifest manifest;
  Clock::time_point t0 = Clock::now();

  RunScope(const CliOptions& opt, const std::string& name) {
    dir = (fs::path(opt.out_dir) / name).string();
    fs::create_directories(dir);
    manifest.experiment = name;
  }
  std::string file(const std::string& basename) {
    manifest.add_file(basename);
    return (fs::path(dir) / basename).string();
  }
  void finish(const json& echo, const std::vector<std::uint64_t>& seeds) {
    manifest.config_echo = echo.dump(2);
    manifest.seeds = seeds;
    manifest.wall_time_s = seconds_since(t0);
    manifest.save((fs::path(dir) / "manifest.json").string());
    std::cout << manifest.experiment << ": " << manifest.files.size()
              << " files in " << dir << " (" << fix(manifest.wall_time_s, 1)
              << "s)\n";
  }
};

std::vector<std::uint64_t> pick_seeds(const CliOptions& opt,
                                      const ConfigFile& cfg,
                                      std::vector<std::uint64_t> fallback,
                                      std::size_t quick_count = 2) {
  std::vector<std::uint64_t> seeds =
      opt.seeds.empty() ? cfg.seeds({"seeds"}, fallback) : opt.seeds;
  if (opt.quick && seeds.size() > quick_count) seeds.resize(quick_count);
  return seeds;
}

void save_race_csv(const std::string& path, const RaceTrajectory& traj) {
  std::vector<std::string> cols = {"time"};
  std::vector<std::vector<double>> series = {traj.times};
  const int modes = static_cast<int>(traj.b1.front().size());
  for (int m = 0; m < modes; ++m) {
    cols.push_back("b1:mode" + std::to_string(m));
    std::vector<double> v(traj.b1.size());
    for (std::size_t k = 0; k < traj.b1.size(); ++k) v[k] = traj.b1[k][m];
    series.push_back(std::move(v));
  }
  for (int m = 0; m < modes; ++m) {
    cols.push_back("b2:mode" + std::to_string(m));
    std::vector<double> v(traj.b2.size());
    for (std::size_t k = 0; k < traj.b2.size(); ++k) v[k] = traj.b2[k][m];
    series.push_back(std::move(v));
  }
  save_series_csv(path, cols, series);
}

void save_scalar_csv(const std::string& path, const ScalarTrajectory& traj) {
  std::vector<std::string> cols = {"time"};
  std::vector<std::vector<double>> series = {traj.times};
  const int modes = static_cast<int>(traj.b2.front().size());
  for (int m = 0; m < modes; ++m) {
    cols.push_back("b2:mode" + std::to_string(m));
    std::vector<double> v(traj.b2.size());
    for (std::size_t k = 0; k < traj.b2.size(); ++k) v[k] = traj.b2[k][m];
    series.push_back(std::move(v));
  }
  save_series_csv(path, cols, series);
}

std::vector<std::string> domain_labels(const std::string& stem, int n) {
  std::vector<std::string> out(n);
  for (int i = 0; i < n; ++i) out[i] = stem + std::to_string(i);
  return out;
}

}  // namespace

int cmd_xor(const CliOptions& opt) {
  ConfigFile cfg = load_config(opt);
  const int nh = static_cast<int>(cfg.integer({"N_h", "hidden_width"}, 128));
  const double tau = cfg.number({"tau"}, 2.5);
  const double sigma0 = cfg.number({"sigma0", "init_scale"}, 2e-4);
  const double b0 = cfg.number({"B0", "decoupled_scale"}, 0.2);
  const double eta = cfg.number({"lambda", "eta", "learning_rate"}, 0.01);
  long steps = cfg.integer({"steps"}, 15000);
  const double relu_eta = cfg.number({"relu_eta"}, 0.1);
  long relu_steps = cfg.integer({"relu_steps"}, 6000);
  auto seeds = pick_seeds(opt, cfg, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  if (opt.quick) {
    steps = std::min(steps, 4000L);
    relu_steps = std::min(relu_steps, 2000L);
  }

  RunScope run(opt, "xor");
  XorOptions xo;
  xo.hidden_width = nh;
  TaskBundle task = make_xor_dataset(xo);
  auto corr = compute_pathway_correlations(task.graph, task.tables, task.train);
  auto stats = diagonalize_stats(task.graph, task.tables, corr);
  auto bases = make_decoupled_bases(task.graph, task.tables, stats, seeds[0]);

  TrainConfig tc;
  tc.tau = tau;
  tc.step = eta;
  tc.steps = steps;
  tc.log_every = 10;

  // The decoupled run doubles as the Euler-exactness trace against the
  // closed form, so it integrates at eta/tau = 1e-5 over twelve time
  // constants instead of the display step used for the random seeds.
  TrainConfig fine = tc;
  fine.step = tau * 1e-5;
  fine.steps = opt.quick ? 120000 : 1200000;
  fine.log_every = 1000;

  InitScheme dec;
  dec.kind = InitKind::Decoupled;
  dec.scale = b0;
  dec.bases = &bases;
  WeightState w0 = init_weights(task.graph, dec, seeds[0]);
  Trajectory decoupled = train_from(task.graph, task.tables, corr, w0, fine);
  save_trajectory_csv(run.file("gdln_decoupled.csv"), decoupled, task.graph);

  XorAnalytic ana = xor_analytic(b0 * b0, tau, decoupled.times);
  save_series_csv(run.file("analytic.csv"), {"time", "a", "loss"},
                  {decoupled.times, ana.a, ana.loss});
  double gap = max_abs_gap(decoupled.losses, ana.loss);
  std::cout << "xor: analytic vs decoupled max loss gap " << sci(gap) << "\n";

  for (std::uint64_t s : seeds) {
    TrainConfig rc = tc;
    rc.seed = s;
    rc.init.kind = InitKind::SmallRandom;
    rc.init.scale = sigma0;
    Trajectory traj = train(task.graph, task.tables, task.train, rc);
    save_trajectory_csv(run.file("gdln_random_seed" + std::to_string(s) +
                                 ".csv"),
                        traj, task.graph);
  }

  for (std::uint64_t s : seeds) {
    ReluConfig rc;
    rc.hidden_width = nh;
    rc.sigma0 = sigma0;
    rc.eta = relu_eta;
    rc.steps = relu_steps;
    rc.seed = s;
    ReluResult res = relu_reference_train(rc);
    std::vector<double> times(res.losses.size());
    for (std::size_t k = 0; k < times.size(); ++k) times[k] = k * relu_eta;
    save_series_csv(run.file("relu_seed" + std::to_string(s) + ".csv"),
                    {"time", "loss"}, {times, res.losses});
  }

  run.finish(json{{"N_h", nh},
                  {"tau", tau},
                  {"sigma0", sigma0},
                  {"B0", b0},
                  {"lambda", eta},
                  {"steps", steps},
                  {"decoupled_step", fine.step},
                  {"decoupled_steps", fine.steps},
                  {"relu_eta", relu_eta},
                  {"relu_steps", relu_steps},
                  {"analytic_vs_decoupled_gap", gap},
                  {"quick", opt.quick}},
             seeds);
  return 0;
}

int cmd_routing(const CliOptions& opt) {
  ConfigFile cfg = load_config(opt);
  const int m = static_cast<int>(cfg.integer({"M"}, 7));
  const int k = static_cast<int>(cfg.integer({"K"}, 4));
  const int nh = static_cast<int>(cfg.integer({"N_h", "hidden_width"}, 64));
  const double eta = cfg.number({"lambda", "eta", "learning_rate"}, 0.02);
  const double sigma0 = cfg.number({"sigma0", "init_scale"}, 0.2);
  const double b0 = cfg.number({"B0", "decoupled_scale"}, 0.2);
  long steps = cfg.integer({"steps"}, 10000);
  auto seeds = pick_seeds(opt, cfg, {2}, 1);
  if (opt.quick) steps = std::min(steps, 2000L);

  RunScope run(opt, "routing");
  RoutingOptions ro;
  ro.M = m;
  ro.K = k;
  ro.hidden_width = nh;
  ro.seed = seeds[0];
  RoutingTask task = make_routing_dataset(ro);
  auto corr = compute_pathway_correlations(task.graph, task.tables, task.train);

  // Generic initialization: loss, per-edge singular values, end-state RSM
  // and per-route error grid.
  TrainConfig tc;
  tc.step = eta;
  tc.steps = steps;
  tc.log_every = 50;
  tc.sv_log_every = 50;
  tc.conserved_log_every = 50;
  tc.seed = seeds[0];
  tc.init.kind = InitKind::FixedSingular;
  tc.init.scale = sigma0;
  Trajectory random_traj = train(task.graph, task.tables, task.train, tc);
  save_trajectory_csv(run.file("full_random.csv"), random_traj, task.graph);
  RoutingAnalysis an = analyze_routing(task, random_traj.final_state);
  save_kernel_csv(run.file("rsm.csv"), an.rsm);
  save_matrix_csv(run.file("route_error.csv"), an.report.route_loss,
                  domain_labels("in", m), domain_labels("out", m));
  std::cout << "routing: hidden/input SV ratio " << fix(an.sv_ratio)
            << " (sqrt(M) = " << fix(std::sqrt(double(m))) << "), sharing "
            << fix(an.sharing) << "\n";

  // Decoupled initialization and its reduced-coordinate integration.
  auto stats = diagonalize_stats(task.graph, task.tables, corr);
  auto bases = make_decoupled_bases(task.graph, task.tables, stats, seeds[0]);
  InitScheme dec;
  dec.kind = InitKind::Decoupled;
  dec.scale = b0;
  dec.bases = &bases;
  WeightState w0 = init_weights(task.graph, dec, seeds[0]);
  ReducedState r0 = restrict_weights(task.graph, bases, w0);
  TrainConfig td = tc;
  td.sv_log_every = 0;
  td.conserved_log_every = 0;
  td.log_every = 10;
  Trajectory dec_traj = train_from(task.graph, task.tables, corr, w0, td);
  save_trajectory_csv(run.file("full_decoupled.csv"), dec_traj, task.graph);
  OdeConfig oc;
  oc.step = eta;
  oc.steps = steps;
  oc.log_every = 10;
  ReducedTrajectory red = reduced_train(task.graph, task.tables, stats, r0, oc);
  save_reduced_csv(run.file("reduced.csv"), red, task.graph);
  double gap = max_abs_gap(dec_traj.losses, red.losses);
  std::cout << "routing: decoupled vs reduced max loss gap " << sci(gap)
            << "\n";

  // Mode-level pictures: three coupled singular values and the scalar form.
  HierarchySpectrum hs = hierarchy_raw_stats(seeds[0]);
  RoutingReducedInit ri;
  ri.b1 = Vector::Constant(4, b0);
  ri.b2 = Vector::Constant(4, b0);
  ri.b3 = Vector::Constant(4, b0);
  auto ode = routing_reduced_train(hs.S, hs.D, m, k, ri, oc);
  save_routing_csv(run.file("routing_ode.csv"), ode);
  Vector c0 = Vector::Constant(4, (m - 1.0) * b0 * b0);
  auto scalar = scalar_routing_ode(hs.S, hs.D, m, c0,
                                   Vector::Constant(4, b0), oc);
  save_scalar_csv(run.file("scalar_ode.csv"), scalar);

  run.finish(json{{"M", m},
                  {"K", k},
                  {"N_h", nh},
                  {"lambda", eta},
                  {"sigma0", sigma0},
                  {"B0", b0},
                  {"steps", steps},
                  {"sv_ratio", an.sv_ratio},
                  {"sharing", an.sharing},
                  {"decoupled_vs_reduced_gap", gap},
                  {"quick", opt.quick}},
             seeds);
  return 0;
}

int cmd_race(const CliOptions& opt) {
  ConfigFile cfg = load_config(opt);
  const int m = static_cast<int>(cfg.integer({"M"}, 10));
  const double sigma0 = cfg.number({"sigma0", "init_scale"}, 0.2);
  int nh = static_cast<int>(cfg.integer({"N_h", "hidden_width"}, 64));
  std::vector<double> p_grid = cfg.grid({"P_grid", "P"}, {1, 4, 16, 100});
  long ode_steps = cfg.integer({"ode_steps"}, 200000);
  double horizon = cfg.number({"T", "horizon"}, 400.0);
  auto seeds = pick_seeds(opt, cfg, {3}, 1);
  std::vector<double> k_grid = cfg.grid({"K_grid"}, {});
  if (k_grid.empty())
    for (int k = 1; k <= m; ++k) k_grid.push_back(k);
  if (opt.quick) {
    ode_steps = std::min(ode_steps, 40000L);
    horizon = std::min(horizon, 150.0);
    nh = std::min(nh, 32);
    k_grid = {1, 2, 5, static_cast<double>(m)};
  }

  RunScope run(opt, "race");
  HierarchySpectrum hs = hierarchy_raw_stats(seeds[0]);

  // Shared-path ODE curves: one file per P, ordered hidden/outer growth.
  for (double p : p_grid) {
    OdeConfig oc;
    oc.step = 1.0;
    oc.steps = ode_steps;
    oc.log_every = static_cast<int>(std::max(1L, ode_steps / 400));
    auto race = race_reduced_train(hs.S, hs.D, m, p,
                                   Vector::Constant(4, 0.01),
                                   Vector::Constant(4, 0.01), oc);
    save_race_csv(run.file("race_ode_P" + std::to_string(int(p)) + ".csv"),
                  race);
    double ratio = race.b2.back()[0] / race.b1.back()[0];
    std::cout << "race: P=" << int(p) << " hidden/outer ratio " << fix(ratio)
              << " vs P^(1/4)=" << fix(steady_state_ratio(m, p)) << "\n";
  }

  // Gated realization cross-check at a divisor-friendly M.
  if (!opt.quick) {
    for (int p : {1, 4, 16}) {
      RaceOptions rc;
      rc.M = 4;
      rc.P = p;
      rc.hidden_width = 16;
      rc.seed = seeds[0];
      RaceTask task = make_race_gating(rc);
      TrainConfig tg;
      tg.step = 0.05;
      tg.steps = 8000;
      tg.log_every = 50;
      tg.sv_log_every = 50;
      tg.seed = seeds[0];
      tg.init.kind = InitKind::FixedSingular;
      tg.init.scale = sigma0;
      Trajectory traj = train(task.graph, task.tables, task.train, tg);
      save_trajectory_csv(
          run.file("race_gating_M4_P" + std::to_string(p) + ".csv"), traj,
          task.graph);
      double ratio = hidden_input_sv_ratio(task.graph, traj.final_state);
      std::cout << "race: gated M=4 P=" << p << " end ratio " << fix(ratio)
                << " vs P^(1/4)=" << fix(steady_state_ratio(4, p)) << "\n";
    }
  }

  // Trained-route fraction sweep on the full network.
  std::vector<double> col_k, col_tr, col_un, col_sh;
  std::mutex mu;
  std::vector<std::array<double, 4>> rows(k_grid.size());
  parallel_for(static_cast<int>(k_grid.size()), opt.parallel, [&](int idx) {
    int k = static_cast<int>(k_grid[idx]);
    RoutingOptions ro;
    ro.M = m;
    ro.K = k;
    ro.hidden_width = nh;
    ro.seed = seeds[0];
    RoutingTask task = make_routing_dataset(ro);
    double eta = cfg.number({"lambda", "eta", "learning_rate"}, 0.05) / k;
    TrainConfig tc;
    tc.step = eta;
    tc.steps = std::lround(horizon / eta);
    tc.log_every = static_cast<int>(tc.steps);
    tc.seed = seeds[0];
    tc.init.kind = InitKind::FixedSingular;
    tc.init.scale = sigma0;
    Trajectory traj = train(task.graph, task.tables, task.train, tc);
    RoutingAnalysis an = analyze_routing(task, traj.final_state);
    std::lock_guard<std::mutex> lock(mu);
    rows[idx] = {double(k), an.report.trained_loss,
                 an.report.has_untrained ? an.report.untrained_loss : -1.0,
                 an.sharing};
  });
  for (const auto& row : rows) {
    col_k.push_back(row[0]);
    col_tr.push_back(row[1]);
    col_un.push_back(row[2]);
    col_sh.push_back(row[3]);
  }
  save_series_csv(run.file("route_error_vs_k.csv"),
                  {"K", "trained_loss", "untrained_loss", "sharing"},
                  {col_k, col_tr, col_un, col_sh});

  run.finish(json{{"M", m},
                  {"N_h", nh},
                  {"sigma0", sigma0},
                  {"P_grid", p_grid},
                  {"K_grid", k_grid},
                  {"ode_steps", ode_steps},
                  {"T", horizon},
                  {"quick", opt.quick}},
             seeds);
  return 0;
}

int cmd_init_sweep(const CliOptions& opt) {
  ConfigFile cfg = load_config(opt);
  const int m = static_cast<int>(cfg.integer({"M"}, 7));
  const int k = static_cast<int>(cfg.integer({"K"}, 4));
  const int nh = static_cast<int>(cfg.integer({"N_h", "hidden_width"}, 64));
  std::vector<double> scales =
      cfg.grid({"sigma0_grid", "init_scales"}, geomspace(0.05, 2.0, 6));
  std::vector<double> horizons =
      cfg.grid({"T_grid", "horizons"}, {1000, 800, 600, 400, 200, 120});
  auto seeds = pick_seeds(opt, cfg, {4}, 1);
  double step_scale = 1.0;
  if (opt.quick) {
    scales = {scales.front(), scales[scales.size() / 2], scales.back()};
    horizons = {horizons.front(), horizons[horizons.size() / 2],
                horizons.back()};
    step_scale = 0.25;
  }
  require(scales.size() == horizons.size(), Errc::InvalidArgument,
          "init sweep needs one horizon per scale");

  RunScope run(opt, "init-sweep");
  RoutingOptions ro;
  ro.M = m;
  ro.K = k;
  ro.hidden_width = nh;
  ro.seed = seeds[0];
  RoutingTask task = make_routing_dataset(ro);

  const int n = static_cast<int>(scales.size());
  std::vector<Trajectory> trajs(n);
  std::vector<RoutingAnalysis> ans(n);
  std::vector<double> etas(n);
  parallel_for(n, opt.parallel, [&](int i) {
    double eta = 0.02 / (1.0 + scales[i] * scales[i]);
    etas[i] = eta;
    TrainConfig tc;
    tc.step = eta;
    tc.steps = std::lround(step_scale * horizons[i] / eta);
    tc.log_every = 100;
    tc.seed = seeds[0];
    tc.init.kind = InitKind::FixedSingular;
    tc.init.scale = scales[i];
    trajs[i] = train(task.graph, task.tables, task.train, tc);
    ans[i] = analyze_routing(task, trajs[i].final_state);
  });

  std::vector<double> col_s, col_eta, col_tr, col_un, col_sh, col_ratio;
  for (int i = 0; i < n; ++i) {
    save_trajectory_csv(run.file("loss_scale" + std::to_string(i) + ".csv"),
                        trajs[i], task.graph);
    col_s.push_back(scales[i]);
    col_eta.push_back(etas[i]);
    col_tr.push_back(ans[i].report.trained_loss);
    col_un.push_back(ans[i].report.untrained_loss);
    col_sh.push_back(ans[i].sharing);
    col_ratio.push_back(ans[i].sv_ratio);
  }
  save_series_csv(run.file("summary.csv"),
                  {"sigma0", "lambda", "trained_loss", "untrained_loss",
                   "sharing", "sv_ratio"},
                  {col_s, col_eta, col_tr, col_un, col_sh, col_ratio});

  // Kernel and route-error snapshots at the smallest, middle, largest scale.
  std::vector<int> snaps = {0, n / 2, n - 1};
  const char* tags[3] = {"small", "mid", "large"};
  for (int t = 0; t < 3; ++t) {
    int i = snaps[t];
    save_kernel_csv(
        run.file(std::string("rsm_") + tags[t] + ".csv"), ans[i].rsm);
    save_matrix_csv(
        run.file(std::string("route_error_") + tags[t] + ".csv"),
        ans[i].report.route_loss, domain_labels("in", m),
        domain_labels("out", m));
  }

  run.finish(json{{"M", m},
                  {"K", k},
                  {"N_h", nh},
                  {"sigma0_grid", scales},
                  {"T_grid", horizons},
                  {"quick", opt.quick}},
             seeds);
  return 0;
}

int cmd_transform_bench(const CliOptions& opt) {
  ConfigFile cfg = load_config(opt);
  TransformOptions to;
  to.M = static_cast<int>(cfg.integer({"M"}, 10));
  to.n_classes = static_cast<int>(cfg.integer({"classes", "C"}, 10));
  to.input_dim = static_cast<int>(cfg.integer({"input_dim", "d"}, 20));
  to.hidden_width = static_cast<int>(cfg.integer({"N_h", "hidden_width"}, 32));
  to.noise = cfg.number({"noise"}, 0.1);
  to.kind = cfg.text({"transform"}, "permute") == "rotate"
                ? TransformKind::RotateInput
                : TransformKind::PermuteInput;
  auto seeds = pick_seeds(opt, cfg, {5}, 1);
  to.seed = seeds[0];

  std::vector<double> k_grid = cfg.grid({"K_grid"}, {1, 2, 4, 7, 10});
  std::vector<double> scale_grid =
      cfg.grid({"sigma0_grid", "init_scales"}, {0.2, 1.0, 3.0});
  double step_scale = 1.0;
  if (opt.quick) {
    k_grid = {2, 4};
    scale_grid = {0.2, 3.0};
    step_scale = 0.2;
  }

  RunScope run(opt, "transform-bench");

  struct Row {
    double k, sigma0, eta, steps, tr_acc, un_acc, tr_loss, un_loss, secs;
  };
  std::vector<Row> grid;
  for (double kv : k_grid) grid.push_back({kv, 0.2, 0, 0, 0, 0, 0, 0, 0});
  for (double sv : scale_grid)
    if (sv != 0.2 || k_grid.empty())
      grid.push_back({4, sv, 0, 0, 0, 0, 0, 0, 0});

  GeneralizationReport small_ref, large_ref;
  std::mutex mu;
  parallel_for(static_cast<int>(grid.size()), opt.parallel, [&](int idx) {
    Row& row = grid[idx];
    auto t0 = Clock::now();
    TransformOptions topt = to;
    topt.K = static_cast<int>(row.k);
    TransformTask task = make_transform_bench(topt);
    // Lazy-regime runs need a smaller step and a longer horizon.
    bool lazy = row.sigma0 > 0.5;
    row.eta = lazy ? 0.003 : 0.05;
    row.steps = std::lround(step_scale * (lazy ? 90000 : 30000));
    TrainConfig tc;
    tc.step = row.eta;
    tc.steps = static_cast<long>(row.steps);
    tc.log_every = static_cast<int>(tc.steps);
    tc.seed = seeds[0] + idx;
    tc.init.kind = InitKind::FixedSingular;
    tc.init.scale = row.sigma0;
    Trajectory traj = train(task.graph, task.tables, task.train, tc);
    auto rep = route_error_report(
        task.graph, traj.final_state,
        [&task](int i, int j) { return task.route_examples(i, j); },
        task.route_mask, true);
    row.tr_acc = rep.trained_accuracy;
    row.un_acc = rep.has_untrained ? rep.untrained_accuracy : -1.0;
    row.tr_loss = rep.trained_loss;
    row.un_loss = rep.has_untrained ? rep.untrained_loss : -1.0;
    row.secs = seconds_since(t0);
    std::lock_guard<std::mutex> lock(mu);
    if (row.k == 4 && row.sigma0 == 0.2) small_ref = rep;
    if (row.k == 4 && row.sigma0 == scale_grid.back()) large_ref = rep;
    std::cout << "transform: K=" << row.k << " sigma0=" << row.sigma0
              << " -> trained acc " << fix(row.tr_acc) << ", untrained "
              << fix(row.un_acc) << " (" << fix(row.secs, 1) << "s)\n";
  });

  std::vector<std::vector<double>> cols(9);
  for (const Row& r : grid) {
    cols[0].push_back(r.k);
    cols[1].push_back(r.sigma0);
    cols[2].push_back(r.eta);
    cols[3].push_back(r.steps);
    cols[4].push_back(r.tr_acc);
    cols[5].push_back(r.un_acc);
    cols[6].push_back(r.tr_loss);
    cols[7].push_back(r.un_loss);
    cols[8].push_back(r.secs);
  }
  save_series_csv(run.file("summary.csv"),
                  {"K", "sigma0", "lambda", "steps", "trained_acc",
                   "untrained_acc", "trained_loss", "untrained_loss",
                   "seconds"},
                  cols);
  if (small_ref.route_accuracy.size() > 0)
    save_matrix_csv(run.file("accuracy_small_init.csv"),
                    small_ref.route_accuracy, domain_labels("in", to.M),
                    domain_labels("out", to.M));
  if (large_ref.route_accuracy.size() > 0)
    save_matrix_csv(run.file("accuracy_large_init.csv"),
                    large_ref.route_accuracy, domain_labels("in", to.M),
                    domain_labels("out", to.M));

  run.finish(json{{"M", to.M},
                  {"classes", to.n_classes},
                  {"input_dim", to.input_dim},
                  {"N_h", to.hidden_width},
                  {"noise", to.noise},
                  {"K_grid", k_grid},
                  {"sigma0_grid", scale_grid},
                  {"quick", opt.quick}},
             seeds);
  return 0;
}

int cmd_verify(const CliOptions& opt) {
  std::vector<CheckResult> results;
  bool ok = run_verify(opt.quick, std::cout, &results);

  RunScope run(opt, "verify");
  json report = json::array();
  for (const auto& r : results)
    report.push_back({{"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
  {
    std::ofstream out(run.file("report.json"));
    out << report.dump(2) << "\n";
  }
  run.manifest.status = ok ? "ok" : "failed";
  run.finish(json{{"quick", opt.quick}, {"all_passed", ok}}, {});

  if (!ok) {
    std::string names;
    for (const auto& r : results)
      if (!r.pass) names += (names.empty() ? "" : ", ") + r.name;
    std::cerr << "VerificationFailed: " << names << "\n";
    return 1;
  }
  return 0;
}

}  // namespace gdln
