#include "gdln/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "gdln/rng.hpp"

namespace gdln {

namespace {
double g_gradient_perturbation = 0.0;
}

void set_gradient_perturbation(double knob) { g_gradient_perturbation = knob; }
double gradient_perturbation() { return g_gradient_perturbation; }

WeightState init_weights(const ArchitectureGraph& g, const InitScheme& scheme,
                         std::uint64_t seed) {
  require(g.validated(), Errc::InvalidArgument, "graph not validated");
  Rng rng(seed);
  WeightState w;
  w.weights.resize(g.num_edges());
  for (int e = 0; e < g.num_edges(); ++e) {
    const int nt = g.edge_rows(e), ns = g.edge_cols(e);
    switch (scheme.kind) {
      case InitKind::SmallRandom: {
        double std = scheme.scale * std::sqrt(2.0 / (nt + ns));
        w.weights[e] = rng.gaussian_matrix(nt, ns, std);
        break;
      }
      case InitKind::FixedSingular: {
        int r = std::min(nt, ns);
        w.weights[e] =
            scheme.scale * rng.orthonormal(nt, r) * rng.orthonormal(ns, r).transpose();
        break;
      }
      case InitKind::Decoupled: {
        require(scheme.bases != nullptr, Errc::InvalidArgument,
                "decoupled init needs bases");
        const auto& b = *scheme.bases;
        require(static_cast<int>(b.target_frame.size()) == g.num_edges(),
                Errc::DimensionMismatch, "bases do not match graph");
        w.weights[e] = scheme.scale * b.target_frame[e] *
                       b.source_frame[e].transpose();
        break;
      }
    }
  }
  return w;
}

std::vector<Vector> forward(const ArchitectureGraph& g, const WeightState& w,
                            const GatedExample& ex) {
  require(static_cast<int>(w.weights.size()) == g.num_edges(),
          Errc::DimensionMismatch, "one weight matrix per edge required");
  std::vector<Vector> h(g.num_nodes());
  std::vector<int> input_pos(g.num_nodes(), -1);
  for (std::size_t k = 0; k < g.input_nodes().size(); ++k)
    input_pos[g.input_nodes()[k]] = static_cast<int>(k);
  for (int v : g.topo_order()) {
    if (g.node(v).kind == NodeKind::Input) {
      require(ex.inputs[input_pos[v]].size() == g.node(v).width,
              Errc::DimensionMismatch, "input width mismatch");
      h[v] = ex.inputs[input_pos[v]];
      continue;
    }
    Vector acc = Vector::Zero(g.node(v).width);
    for (int e : g.in_edges(v)) {
      double ge = ex.gates.edge_gate(e);
      if (ge == 0.0) continue;
      acc.noalias() += ge * (w.weights[e] * h[g.edge(e).source]);
    }
    h[v] = ex.gates.node_gate(v) * acc;
  }
  return h;
}

double examples_loss(const ArchitectureGraph& g, const WeightState& w,
                     const std::vector<GatedExample>& examples) {
  require(!examples.empty(), Errc::InvalidArgument, "no examples");
  double total = 0.0, mass = 0.0;
  for (const auto& ex : examples) {
    auto h = forward(g, w, ex);
    double sq = 0.0;
    for (std::size_t k = 0; k < g.output_nodes().size(); ++k)
      sq += (ex.targets[k] - h[g.output_nodes()[k]]).squaredNorm();
    total += 0.5 * ex.weight * sq;
    mass += ex.weight;
  }
  return total / mass;
}

double dataset_loss(const ArchitectureGraph& g, const WeightState& w,
                    const GatedDataset& data) {
  data.validate(g);
  return examples_loss(g, w, data.examples);
}

namespace {

// tr(A * B^T) for same-shaped matrices.
double dot(const Matrix& a, const Matrix& b) {
  return (a.array() * b.array()).sum();
}

// Reusable buffers for the training loop; every step writes into the same
// storage so the hot path performs no heap allocation once shapes settle.
struct Scratch {
  std::vector<Matrix> prods;
  std::vector<Matrix> grad;
  Matrix err, left, tmp;
};

double correlation_loss_impl(const PathwayCorrelations& corr,
                             const PathTables& tables,
                             const std::vector<Matrix>& prods, Matrix& tmp) {
  double loss = corr.half_target_sq;
  for (int p = 0; p < tables.num_paths(); ++p)
    if (corr.has_yx(p)) loss -= dot(prods[tables.whole[p]], corr.sigma_yx[p]);
  // (1/2) sum over ordered same-target pairs of tr(W_j^T W_p sigma_x(p, j));
  // the map stores both orders, so iterating it covers the full sum.
  for (const auto& [key, sx] : corr.sigma_x) {
    const Matrix& wj = prods[tables.whole[key.first]];
    const Matrix& wp = prods[tables.whole[key.second]];
    tmp.noalias() = wj * sx;
    loss += 0.5 * dot(tmp, wp);
  }
  return loss;
}

void gradient_impl(const ArchitectureGraph& g, const PathwayCorrelations& corr,
                   const PathTables& tables, const std::vector<Matrix>& prods,
                   const std::vector<Matrix>& weights, Scratch& ws) {
  if (ws.grad.size() != weights.size()) {
    ws.grad.resize(weights.size());
    for (int e = 0; e < g.num_edges(); ++e)
      ws.grad[e] = Matrix::Zero(g.edge_rows(e), g.edge_cols(e));
  } else {
    for (auto& m : ws.grad) m.setZero();
  }

  for (int p = 0; p < tables.num_paths(); ++p) {
    if (!corr.active[p]) continue;
    const Path& path = tables.paths[p];
    // Error term: target correlation minus what all sibling paths into the
    // same output currently explain.
    if (corr.has_yx(p))
      ws.err = corr.sigma_yx[p];
    else
      ws.err = Matrix::Zero(g.node(path.target).width,
                            g.node(path.source).width);
    for (const auto& [j, sx] : corr.x_terms[p])
      ws.err.noalias() -= prods[tables.whole[j]] * (*sx);

    for (std::size_t k = 0; k < path.edges.size(); ++k) {
      const PathSplit& sp = tables.splits[p][k];
      ws.left.noalias() = prods[sp.after].transpose() * ws.err;
      ws.grad[path.edges[k]].noalias() +=
          ws.left * prods[sp.before].transpose();
    }
  }

  if (g_gradient_perturbation != 0.0)
    for (int e = 0; e < g.num_edges(); ++e)
      ws.grad[e] += g_gradient_perturbation * weights[e];
}

// Subpaths actually referenced by the loss and gradient of the active paths;
// products of the remaining entries never need to be formed.
std::vector<char> needed_subpaths(const PathTables& tables,
                                  const PathwayCorrelations& corr) {
  std::vector<int> roots;
  for (int p = 0; p < tables.num_paths(); ++p) {
    if (corr.has_yx(p)) roots.push_back(tables.whole[p]);
    if (!corr.active[p]) continue;
    roots.push_back(tables.whole[p]);
    for (const PathSplit& sp : tables.splits[p]) {
      roots.push_back(sp.after);
      roots.push_back(sp.before);
    }
    for (const auto& [j, sx] : corr.x_terms[p]) roots.push_back(tables.whole[j]);
  }
  for (const auto& [key, sx] : corr.sigma_x) {
    roots.push_back(tables.whole[key.first]);
    roots.push_back(tables.whole[key.second]);
  }
  return subpath_closure(tables, roots);
}

}  // namespace

double correlation_loss(const ArchitectureGraph& g, const PathTables& tables,
                        const PathwayCorrelations& corr,
                        const std::vector<Matrix>& weights) {
  auto prods = eval_subpath_products(g, tables, weights);
  Matrix tmp;
  return correlation_loss_impl(corr, tables, prods, tmp);
}

std::vector<Matrix> analytic_gradient(const ArchitectureGraph& g,
                                      const WeightState& w,
                                      const PathwayCorrelations& corr,
                                      const PathTables& tables) {
  Scratch ws;
  eval_subpath_products(g, tables, w.weights, ws.prods);
  gradient_impl(g, corr, tables, ws.prods, w.weights, ws);
  return std::move(ws.grad);
}

std::vector<Matrix> finite_difference_gradient(const ArchitectureGraph& g,
                                               const WeightState& w,
                                               const GatedDataset& data,
                                               double epsilon) {
  require(epsilon > 0.0, Errc::InvalidArgument, "epsilon > 0");
  WeightState probe = w;
  std::vector<Matrix> grad(g.num_edges());
  for (int e = 0; e < g.num_edges(); ++e) {
    grad[e].resize(g.edge_rows(e), g.edge_cols(e));
    for (int r = 0; r < g.edge_rows(e); ++r)
      for (int c = 0; c < g.edge_cols(e); ++c) {
        const double saved = probe.weights[e](r, c);
        probe.weights[e](r, c) = saved + epsilon;
        double lp = dataset_loss(g, probe, data);
        probe.weights[e](r, c) = saved - epsilon;
        double lm = dataset_loss(g, probe, data);
        probe.weights[e](r, c) = saved;
        // Flow convention: descent direction, so the sign flips.
        grad[e](r, c) = -(lp - lm) / (2.0 * epsilon);
      }
  }
  return grad;
}

namespace {

// Balance between outgoing and incoming squared weights at an interior
// node; the gradient flow preserves it exactly, the Euler scheme nearly.
Matrix node_balance(const ArchitectureGraph& g, const std::vector<Matrix>& w,
                    int v) {
  const int n = g.node(v).width;
  Matrix q = Matrix::Zero(n, n);
  for (int e : g.out_edges(v)) q += w[e].transpose() * w[e];
  for (int e : g.in_edges(v)) q -= w[e] * w[e].transpose();
  return q;
}

}  // namespace

Trajectory train_from(const ArchitectureGraph& g, const PathTables& tables,
                      const PathwayCorrelations& corr, WeightState w,
                      const TrainConfig& cfg) {
  require(cfg.tau > 0.0 && cfg.step > 0.0 && cfg.steps >= 0,
          Errc::InvalidArgument, "need tau > 0, step > 0, steps >= 0");
  if (cfg.step / cfg.tau > 0.1)
    std::cerr << "train: step/tau = " << cfg.step / cfg.tau
              << " exceeds the documented stability guideline (0.1)\n";

  Trajectory traj;
  std::vector<int> interior;
  for (int v = 0; v < g.num_nodes(); ++v)
    if (g.node(v).kind == NodeKind::Hidden) interior.push_back(v);
  traj.conserved_nodes = interior;
  std::vector<Matrix> balance0;
  if (cfg.conserved_log_every > 0)
    for (int v : interior) balance0.push_back(node_balance(g, w.weights, v));

  const double rate = cfg.step / cfg.tau;
  const std::vector<char> needed = needed_subpaths(tables, corr);
  Scratch ws;
  double initial_loss = 0.0;
  for (long k = 0; k <= cfg.steps; ++k) {
    eval_subpath_products(g, tables, w.weights, ws.prods, &needed);
    const double loss = correlation_loss_impl(corr, tables, ws.prods, ws.tmp);
    if (k == 0) initial_loss = loss;
    if (!std::isfinite(loss) ||
        loss > cfg.diverge_factor * std::max(initial_loss, 1e-300))
      fail(Errc::Diverged, "loss " + std::to_string(loss) + " at step " +
                               std::to_string(k));
    if (cfg.log_every > 0 && (k % cfg.log_every == 0 || k == cfg.steps)) {
      traj.times.push_back(w.time);
      traj.losses.push_back(loss);
    }
    if (cfg.sv_log_every > 0 && (k % cfg.sv_log_every == 0 || k == cfg.steps)) {
      traj.sv_times.push_back(w.time);
      std::vector<double> svs(g.num_edges());
      for (int e = 0; e < g.num_edges(); ++e)
        svs[e] = w.weights[e].jacobiSvd().singularValues()(0);
      traj.edge_top_sv.push_back(std::move(svs));
    }
    if (cfg.conserved_log_every > 0 &&
        (k % cfg.conserved_log_every == 0 || k == cfg.steps)) {
      traj.conserved_times.push_back(w.time);
      std::vector<double> drift(interior.size());
      for (std::size_t i = 0; i < interior.size(); ++i)
        drift[i] =
            (node_balance(g, w.weights, interior[i]) - balance0[i]).norm();
      traj.conserved_drift.push_back(std::move(drift));
    }
    if (k == cfg.steps) break;

    gradient_impl(g, corr, tables, ws.prods, w.weights, ws);
    for (int e = 0; e < g.num_edges(); ++e)
      w.weights[e].noalias() += rate * ws.grad[e];
    w.time += cfg.step;
  }
  traj.final_state = std::move(w);
  return traj;
}

Trajectory train(const ArchitectureGraph& g, const PathTables& tables,
                 const GatedDataset& data, const TrainConfig& cfg) {
  data.validate(g);
  auto corr = compute_pathway_correlations(g, tables, data);
  auto w = init_weights(g, cfg.init, cfg.seed);
  return train_from(g, tables, corr, std::move(w), cfg);
}

ReluResult relu_reference_train(const ReluConfig& cfg) {
  require(cfg.hidden_width >= 4, Errc::InvalidArgument, "hidden_width >= 4");
  const double xs[4][2] = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  Eigen::Matrix<double, 2, 4> x;
  Eigen::Matrix<double, 1, 4> y;
  for (int k = 0; k < 4; ++k) {
    x(0, k) = xs[k][0];
    x(1, k) = xs[k][1];
    double parity = xs[k][0] * xs[k][1];
    y(0, k) = cfg.positive_diagonal ? parity : -parity;
  }

  Rng rng(cfg.seed);
  ReluResult res;
  res.w1 = rng.gaussian_matrix(cfg.hidden_width, 2, cfg.sigma0);
  res.w2 = rng.gaussian_matrix(1, cfg.hidden_width, cfg.sigma0);
  res.losses.reserve(cfg.steps + 1);

  double initial_loss = 0.0;
  for (long k = 0; k <= cfg.steps; ++k) {
    Matrix h = (res.w1 * x).cwiseMax(0.0);              // hidden x 4
    Eigen::Matrix<double, 1, 4> err = res.w2 * h - y;
    const double loss = 0.25 * 0.5 * err.squaredNorm();
    res.losses.push_back(loss);
    if (k == 0) initial_loss = loss;
    if (!std::isfinite(loss) ||
        loss > cfg.diverge_factor * std::max(initial_loss, 1e-300))
      fail(Errc::Diverged, "relu loss " + std::to_string(loss) + " at step " +
                               std::to_string(k));
    if (k == cfg.steps) break;

    Eigen::Matrix<double, 1, 4> dout = 0.25 * err;
    Matrix dw2 = dout * h.transpose();
    Matrix dh = (res.w2.transpose() * dout).cwiseProduct(
        (h.array() > 0.0).cast<double>().matrix());
    Matrix dw1 = dh * x.transpose();
    res.w1 -= cfg.eta * dw1;
    res.w2 -= cfg.eta * dw2;
  }
  return res;
}

}  // namespace gdln
