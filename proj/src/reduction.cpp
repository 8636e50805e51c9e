#include "gdln/reduction.hpp"

#include <algorithm>
#include <cmath>

#include "gdln/rng.hpp"

namespace gdln {

SignedSvd signed_svd(const Matrix& m, int r) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const int full = static_cast<int>(svd.singularValues().size());
  if (r < 0) r = full;
  require(r <= full, Errc::InvalidArgument, "rank exceeds min dimension");
  SignedSvd out;
  out.u = svd.matrixU().leftCols(r);
  out.v = svd.matrixV().leftCols(r);
  out.s = svd.singularValues().head(r);
  for (int j = 0; j < r; ++j) {
    Eigen::Index imax;
    out.u.col(j).cwiseAbs().maxCoeff(&imax);
    if (out.u(imax, j) < 0.0) {
      out.u.col(j) = -out.u.col(j);
      out.v.col(j) = -out.v.col(j);
    }
  }
  return out;
}

namespace {

// Frame pool with exact-match dedup; correlations built from identical bits
// produce identical SVDs.
int intern_frame(std::vector<Matrix>& pool, const Matrix& f) {
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (pool[i].rows() == f.rows() && pool[i].cols() == f.cols() &&
        (pool[i] - f).cwiseAbs().maxCoeff() <= 1e-12)
      return static_cast<int>(i);
  pool.push_back(f);
  return static_cast<int>(pool.size()) - 1;
}

double offdiag_mass(const Matrix& m) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (i != j) worst = std::max(worst, std::abs(m(i, j)));
  return worst;
}

}  // namespace

DiagonalizedStats diagonalize_stats(const ArchitectureGraph& g,
                                    const PathTables& tables,
                                    const PathwayCorrelations& corr,
                                    DiagMode mode, double tol) {
  const int np = tables.num_paths();
  DiagonalizedStats out;
  out.left_frame.assign(np, -1);
  out.right_frame.assign(np, -1);
  out.s.resize(np);
  out.active = corr.active;
  out.half_target_sq = corr.half_target_sq;

  // Mode count must agree across active paths for products to make sense.
  out.modes = 0;
  for (int p = 0; p < np; ++p) {
    if (!corr.active[p]) continue;
    int r = std::min(g.node(tables.paths[p].target).width,
                     g.node(tables.paths[p].source).width);
    if (out.modes == 0) out.modes = r;
    if (out.modes != r)
      fail(Errc::NotDiagonalizable,
           "paths disagree on mode count (" + std::to_string(out.modes) +
               " vs " + std::to_string(r) + ")");
  }
  require(out.modes > 0, Errc::InvalidArgument, "no active paths");

  for (int p = 0; p < np; ++p) {
    if (!corr.active[p]) continue;
    require(corr.has_yx(p), Errc::NotDiagonalizable,
            "active path without target correlation has no frame anchor");
    SignedSvd svd = signed_svd(corr.sigma_yx[p], out.modes);
    out.left_frame[p] = intern_frame(out.frames, svd.u);
    out.right_frame[p] = intern_frame(out.frames, svd.v);
    out.s[p] = svd.s;
  }

  double residual = 0.0;
  for (const auto& [key, sx] : corr.sigma_x) {
    const auto [j, p] = key;
    const Matrix& vj = out.frames[out.right_frame[j]];
    const Matrix& vp = out.frames[out.right_frame[p]];
    Matrix conj = vj.transpose() * sx * vp;
    out.d[key] = conj.diagonal();
    residual = std::max(residual, offdiag_mass(conj));
    // Mass outside the frames would drag the dynamics off the manifold.
    Matrix leak_r = sx * vp - vj * conj;
    Matrix leak_l = vj.transpose() * sx - conj * vp.transpose();
    if (leak_r.size() > 0)
      residual = std::max(residual, leak_r.cwiseAbs().maxCoeff());
    if (leak_l.size() > 0)
      residual = std::max(residual, leak_l.cwiseAbs().maxCoeff());
    // Cross terms additionally require a shared target frame.
    if (j != p)
      residual = std::max(
          residual, (out.frames[out.left_frame[j]] - out.frames[out.left_frame[p]])
                        .cwiseAbs()
                        .maxCoeff());
  }
  out.residual = residual;
  if (mode == DiagMode::Exact && residual > tol)
    fail(Errc::NotDiagonalizable,
         "off-diagonal residual " + std::to_string(residual) +
             " exceeds tolerance " + std::to_string(tol));

  out.d_terms.assign(np, {});
  for (const auto& [key, dv] : out.d)
    out.d_terms[key.second].emplace_back(key.first, &dv);

  // Node-level frames where every path touching the node agrees.
  out.node_frame.assign(g.num_nodes(), -1);
  for (int p = 0; p < np; ++p) {
    if (!corr.active[p]) continue;
    auto merge = [&](int v, int f) {
      if (out.node_frame[v] == -1)
        out.node_frame[v] = f;
      else if (out.node_frame[v] != f)
        out.node_frame[v] = -2;  // conflict
    };
    merge(tables.paths[p].source, out.right_frame[p]);
    merge(tables.paths[p].target, out.left_frame[p]);
  }
  for (auto& f : out.node_frame)
    if (f == -2) f = -1;
  return out;
}

DecoupledBases make_decoupled_bases(const ArchitectureGraph& g,
                                    const PathTables& tables,
                                    const DiagonalizedStats& stats,
                                    std::uint64_t seed) {
  Rng rng(seed);
  DecoupledBases bases;
  bases.modes = stats.modes;
  bases.target_frame.resize(g.num_edges());
  bases.source_frame.resize(g.num_edges());

  // One random frame per interior node, drawn in node order.
  std::vector<Matrix> interior(g.num_nodes());
  for (int v = 0; v < g.num_nodes(); ++v) {
    if (g.node(v).kind != NodeKind::Hidden) continue;
    require(g.node(v).width >= stats.modes, Errc::OffManifold,
            "node '" + g.node(v).name + "' narrower than the mode count");
    interior[v] = rng.orthonormal(g.node(v).width, stats.modes);
  }

  // Endpoint frames come from the data; every path through an edge must
  // agree on the frame at both cut points.
  std::vector<int> tgt_id(g.num_edges(), -1), src_id(g.num_edges(), -1);
  for (int p = 0; p < tables.num_paths(); ++p) {
    if (!stats.active[p]) continue;
    const Path& path = tables.paths[p];
    for (std::size_t k = 0; k < path.edges.size(); ++k) {
      int e = path.edges[k];
      bool last = (k + 1 == path.edges.size());
      bool first = (k == 0);
      if (last) {
        int want = stats.left_frame[p];
        if (tgt_id[e] == -1) tgt_id[e] = want;
        require(tgt_id[e] == want, Errc::OffManifold,
                "paths through edge '" + g.edge(e).name +
                    "' disagree on the target frame");
      }
      if (first) {
        int want = stats.right_frame[p];
        if (src_id[e] == -1) src_id[e] = want;
        require(src_id[e] == want, Errc::OffManifold,
                "paths through edge '" + g.edge(e).name +
                    "' disagree on the source frame");
      }
    }
  }

  for (int e = 0; e < g.num_edges(); ++e) {
    const int vt = g.edge(e).target, vs = g.edge(e).source;
    if (g.node(vt).kind == NodeKind::Hidden) {
      bases.target_frame[e] = interior[vt];
    } else {
      require(tgt_id[e] >= 0, Errc::OffManifold,
              "edge '" + g.edge(e).name + "' has no data frame at its target");
      bases.target_frame[e] = stats.frames[tgt_id[e]];
    }
    if (g.node(vs).kind == NodeKind::Hidden) {
      bases.source_frame[e] = interior[vs];
    } else {
      require(src_id[e] >= 0, Errc::OffManifold,
              "edge '" + g.edge(e).name + "' has no data frame at its source");
      bases.source_frame[e] = stats.frames[src_id[e]];
    }
  }
  return bases;
}

double manifold_leakage(const ArchitectureGraph& g, const DecoupledBases& bases,
                        const WeightState& w) {
  require(static_cast<int>(w.weights.size()) == g.num_edges(),
          Errc::DimensionMismatch, "one weight matrix per edge required");
  double leak = 0.0;
  for (int e = 0; e < g.num_edges(); ++e) {
    const Matrix& rt = bases.target_frame[e];
    const Matrix& rs = bases.source_frame[e];
    Matrix conj = rt.transpose() * w.weights[e] * rs;
    leak = std::max(leak, offdiag_mass(conj));
    Matrix recon = rt * conj * rs.transpose();
    leak = std::max(leak, (w.weights[e] - recon).cwiseAbs().maxCoeff());
  }
  return leak;
}

ReducedState restrict_weights(const ArchitectureGraph& g,
                              const DecoupledBases& bases, const WeightState& w,
                              double tol) {
  double leak = manifold_leakage(g, bases, w);
  if (leak > tol)
    fail(Errc::OffManifold, "weights leave the decoupled manifold by " +
                                std::to_string(leak));
  ReducedState r;
  r.time = w.time;
  r.b.resize(g.num_edges());
  for (int e = 0; e < g.num_edges(); ++e)
    r.b[e] = (bases.target_frame[e].transpose() * w.weights[e] *
              bases.source_frame[e])
                 .diagonal();
  return r;
}

WeightState lift(const ArchitectureGraph& g, const DecoupledBases& bases,
                 const ReducedState& r) {
  require(static_cast<int>(r.b.size()) == g.num_edges(),
          Errc::DimensionMismatch, "one mode vector per edge required");
  WeightState w;
  w.time = r.time;
  w.weights.resize(g.num_edges());
  for (int e = 0; e < g.num_edges(); ++e)
    w.weights[e] = bases.target_frame[e] * r.b[e].asDiagonal() *
                   bases.source_frame[e].transpose();
  return w;
}

namespace {

// Elementwise mode products along every subpath, same incremental scheme as
// the matrix version.
std::vector<Vector> eval_subpath_modeprods(const PathTables& tables,
                                           const std::vector<Vector>& b,
                                           int modes) {
  std::vector<Vector> out(tables.subpaths.size());
  for (std::size_t i = 0; i < tables.subpaths.size(); ++i) {
    const Subpath& s = tables.subpaths[i];
    if (s.parent < 0)
      out[i] = Vector::Ones(modes);
    else
      out[i] = out[s.parent].cwiseProduct(b[s.grow_edge]);
  }
  return out;
}

std::vector<Vector> reduced_rhs(const PathTables& tables,
                                const DiagonalizedStats& stats,
                                const std::vector<Vector>& b) {
  const int ne = static_cast<int>(b.size());
  auto prods = eval_subpath_modeprods(tables, b, stats.modes);
  std::vector<Vector> grad(ne, Vector::Zero(stats.modes));
  for (int p = 0; p < tables.num_paths(); ++p) {
    if (!stats.active[p]) continue;
    Vector err = stats.s[p].size() > 0 ? stats.s[p]
                                       : Vector::Zero(stats.modes).eval();
    for (const auto& [j, dv] : stats.d_terms[p])
      err -= prods[tables.whole[j]].cwiseProduct(*dv);
    const Path& path = tables.paths[p];
    for (std::size_t k = 0; k < path.edges.size(); ++k) {
      const PathSplit& sp = tables.splits[p][k];
      grad[path.edges[k]] +=
          prods[sp.after].cwiseProduct(err).cwiseProduct(prods[sp.before]);
    }
  }
  return grad;
}

}  // namespace

double reduced_loss(const PathTables& tables, const DiagonalizedStats& stats,
                    const std::vector<Vector>& b) {
  auto prods = eval_subpath_modeprods(tables, b, stats.modes);
  double loss = stats.half_target_sq;
  for (int p = 0; p < tables.num_paths(); ++p)
    if (stats.active[p] && stats.s[p].size() > 0)
      loss -= stats.s[p].dot(prods[tables.whole[p]]);
  for (const auto& [key, dv] : stats.d)
    loss += 0.5 * prods[tables.whole[key.first]]
                      .cwiseProduct(prods[tables.whole[key.second]])
                      .dot(dv);
  return loss;
}

ReducedTrajectory reduced_train(const ArchitectureGraph& g,
                                const PathTables& tables,
                                const DiagonalizedStats& stats,
                                const ReducedState& init,
                                const OdeConfig& cfg) {
  require(static_cast<int>(init.b.size()) == g.num_edges(),
          Errc::DimensionMismatch, "one mode vector per edge required");
  ReducedTrajectory traj;
  std::vector<Vector> b = init.b;
  double time = init.time;
  const double rate = cfg.step / cfg.tau;
  double initial_loss = 0.0;

  for (long k = 0; k <= cfg.steps; ++k) {
    const double loss = reduced_loss(tables, stats, b);
    if (k == 0) initial_loss = loss;
    if (!std::isfinite(loss) || loss > 10.0 * std::max(initial_loss, 1e-300))
      fail(Errc::Diverged,
           "reduced loss " + std::to_string(loss) + " at step " +
               std::to_string(k));
    if (cfg.log_every > 0 && (k % cfg.log_every == 0 || k == cfg.steps)) {
      traj.times.push_back(time);
      traj.losses.push_back(loss);
      traj.b_log.push_back(b);
    }
    if (k == cfg.steps) break;

    if (cfg.integrator == Integrator::Euler) {
      auto g1 = reduced_rhs(tables, stats, b);
      for (std::size_t e = 0; e < b.size(); ++e) b[e] += rate * g1[e];
    } else {
      auto add = [&](const std::vector<Vector>& x,
                     const std::vector<Vector>& k_, double f) {
        std::vector<Vector> y(x.size());
        for (std::size_t e = 0; e < x.size(); ++e) y[e] = x[e] + f * k_[e];
        return y;
      };
      auto k1 = reduced_rhs(tables, stats, b);
      auto k2 = reduced_rhs(tables, stats, add(b, k1, rate / 2));
      auto k3 = reduced_rhs(tables, stats, add(b, k2, rate / 2));
      auto k4 = reduced_rhs(tables, stats, add(b, k3, rate));
      for (std::size_t e = 0; e < b.size(); ++e)
        b[e] += (rate / 6.0) * (k1[e] + 2.0 * k2[e] + 2.0 * k3[e] + k4[e]);
    }
    time += cfg.step;
  }
  traj.final_state.b = std::move(b);
  traj.final_state.time = time;
  return traj;
}

// ---------------------------------------------------------------------------
// Routing-family scalar systems. S and D are the raw base-task diagonals;
// route-count factors appear explicitly in the equations.

namespace {

template <typename State, typename Rhs>
void integrate(State& y, double& time, const OdeConfig& cfg, const Rhs& rhs,
               const std::function<void(double, const State&)>& log) {
  const double h = cfg.step / cfg.tau;
  for (long k = 0; k <= cfg.steps; ++k) {
    if (cfg.log_every > 0 && (k % cfg.log_every == 0 || k == cfg.steps))
      log(time, y);
    if (k == cfg.steps) break;
    if (cfg.integrator == Integrator::Euler) {
      State k1 = rhs(y);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += h * k1[i];
    } else {
      auto add = [&](const State& x, const State& k_, double f) {
        State out = x;
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + f * k_[i];
        return out;
      };
      State k1 = rhs(y);
      State k2 = rhs(add(y, k1, h / 2));
      State k3 = rhs(add(y, k2, h / 2));
      State k4 = rhs(add(y, k3, h));
      for (std::size_t i = 0; i < y.size(); ++i)
        y[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    time += cfg.step;
  }
}

}  // namespace

RoutingTrajectory routing_reduced_train(const Vector& S, const Vector& D,
                                        int M, int K,
                                        const RoutingReducedInit& init,
                                        const OdeConfig& cfg, bool balanced) {
  require(M >= 1 && K >= 1 && K <= M, Errc::InvalidK, "need 1 <= K <= M");
  require(S.size() == D.size() && S.size() == init.b1.size() &&
              init.b1.size() == init.b2.size() &&
              init.b2.size() == init.b3.size(),
          Errc::DimensionMismatch, "mode vectors must agree");
  if (balanced)
    require((init.b1 - init.b3).cwiseAbs().maxCoeff() == 0.0,
            Errc::InvalidArgument, "balanced mode requires B1 = B3");

  using State = std::vector<Vector>;
  State y = {init.b1, init.b2, init.b3};
  auto rhs = [&](const State& x) {
    const Vector &b1 = x[0], &b2 = x[1], &b3 = x[2];
    Vector err = S - b3.cwiseProduct(b2).cwiseProduct(b1).cwiseProduct(D);
    State g(3);
    g[0] = (1.0 / M) * b3.cwiseProduct(b2).cwiseProduct(err);
    g[1] = b3.cwiseProduct(b1).cwiseProduct(err);
    g[2] = (1.0 / M) * b2.cwiseProduct(b1).cwiseProduct(err);
    if (balanced) g[2] = g[0];  // keeps the symmetry exact in floating point
    return g;
  };
  RoutingTrajectory traj;
  double time = 0.0;
  integrate<State>(y, time, cfg, rhs, [&](double t, const State& x) {
    traj.times.push_back(t);
    traj.b1.push_back(x[0]);
    traj.b2.push_back(x[1]);
    traj.b3.push_back(x[2]);
  });
  return traj;
}

ScalarTrajectory scalar_routing_ode(const Vector& S, const Vector& D, int M,
                                    const Vector& C, const Vector& b2_init,
                                    const OdeConfig& cfg) {
  require(S.size() == D.size() && S.size() == C.size() &&
              C.size() == b2_init.size(),
          Errc::DimensionMismatch, "mode vectors must agree");
  using State = std::vector<Vector>;
  State y = {b2_init};
  auto rhs = [&](const State& x) {
    const Vector& b2 = x[0];
    Vector sq = b2.cwiseProduct(b2) + C;
    Vector err = S - (1.0 / M) * b2.cwiseProduct(sq).cwiseProduct(D);
    State g(1);
    g[0] = (1.0 / M) * sq.cwiseProduct(err);
    return g;
  };
  ScalarTrajectory traj;
  double time = 0.0;
  integrate<State>(y, time, cfg, rhs, [&](double t, const State& x) {
    traj.times.push_back(t);
    traj.b2.push_back(x[0]);
  });
  return traj;
}

RaceTrajectory race_reduced_train(const Vector& S, const Vector& D, int M,
                                  double P, const Vector& b1_init,
                                  const Vector& b2_init, const OdeConfig& cfg) {
  require(P >= 1.0, Errc::InvalidP, "need P >= 1");
  require(S.size() == D.size() && S.size() == b1_init.size() &&
              b1_init.size() == b2_init.size(),
          Errc::DimensionMismatch, "mode vectors must agree");
  const double m2 = static_cast<double>(M) * M;
  using State = std::vector<Vector>;
  State y = {b1_init, b2_init};
  auto rhs = [&](const State& x) {
    const Vector &b1 = x[0], &b2 = x[1];
    Vector err =
        S - b2.cwiseProduct(b1).cwiseProduct(b1).cwiseProduct(D);
    State g(2);
    g[0] = (std::sqrt(P) / m2) * b2.cwiseProduct(b1).cwiseProduct(err);
    g[1] = (P / m2) * b1.cwiseProduct(b1).cwiseProduct(err);
    return g;
  };
  RaceTrajectory traj;
  double time = 0.0;
  integrate<State>(y, time, cfg, rhs, [&](double t, const State& x) {
    traj.times.push_back(t);
    traj.b1.push_back(x[0]);
    traj.b2.push_back(x[1]);
  });
  return traj;
}

double steady_state_ratio(int M, double P) {
  require(M >= 1, Errc::InvalidArgument, "M >= 1");
  require(P >= 1.0, Errc::InvalidP, "need P >= 1");
  return std::pow(P, 0.25);
}

namespace {
constexpr double kXorS = 0.35355339059327376220;  // sqrt(2)/4
constexpr double kXorD = 0.5;
}  // namespace

XorAnalytic xor_analytic(double a0, double tau,
                         const std::vector<double>& t_grid) {
  require(a0 > 0.0, Errc::InvalidA0, "formula is singular at a0 <= 0");
  require(tau > 0.0, Errc::InvalidArgument, "tau > 0");
  const double ratio = kXorS / kXorD;
  XorAnalytic out;
  out.a.reserve(t_grid.size());
  out.loss.reserve(t_grid.size());
  for (double t : t_grid) {
    double a =
        ratio / (1.0 - (1.0 - ratio / a0) * std::exp(-2.0 * kXorS * t / tau));
    out.a.push_back(a);
    // L(a) = (a - a*)^2 with a* = s/d = sqrt(1/2); this form reaches exactly
    // zero in floating point as a -> a*.
    const double astar = std::sqrt(0.5);
    out.loss.push_back((a - astar) * (a - astar));
  }
  return out;
}

double xor_time_to_reach(double a_target, double a0, double tau) {
  require(a0 > 0.0, Errc::InvalidA0, "formula is singular at a0 <= 0");
  const double ratio = kXorS / kXorD;
  require(a0 != ratio, Errc::InvalidA0, "a0 sits at the fixed point");
  const double lo = std::min(a0, ratio), hi = std::max(a0, ratio);
  require(a_target > lo && a_target < hi, Errc::InvalidArgument,
          "target outside the reachable range");
  double num = ratio / a_target - 1.0;
  double den = ratio / a0 - 1.0;
  return -(tau / (2.0 * kXorS)) * std::log(num / den);
}

double xor_transition_width(double a0, double tau, double hi_frac,
                            double lo_frac) {
  require(a0 > 0.0 && a0 < kXorS / kXorD, Errc::InvalidA0,
          "width defined for a0 below the fixed point");
  require(hi_frac > lo_frac && hi_frac < 1.0 && lo_frac > 0.0,
          Errc::InvalidArgument, "need 0 < lo < hi < 1");
  // L(a) = (a - a*)^2, so the loss fraction f is crossed at
  // a = a* - sqrt(f) * (a* - a0).
  const double astar = kXorS / kXorD;
  double a_hi = astar - std::sqrt(hi_frac) * (astar - a0);
  double a_lo = astar - std::sqrt(lo_frac) * (astar - a0);
  return xor_time_to_reach(a_lo, a0, tau) - xor_time_to_reach(a_hi, a0, tau);
}

ConservedReport conserved_quantity(const RoutingTrajectory& traj, int M) {
  require(!traj.b1.empty() && traj.b1.size() == traj.b2.size(),
          Errc::InvalidArgument, "trajectory is empty or ragged");
  ConservedReport rep;
  rep.series.reserve(traj.b1.size());
  for (std::size_t k = 0; k < traj.b1.size(); ++k)
    rep.series.push_back(M * traj.b1[k].cwiseProduct(traj.b1[k]) -
                         traj.b2[k].cwiseProduct(traj.b2[k]));
  const Vector& c0 = rep.series.front();
  for (const auto& c : rep.series)
    for (Eigen::Index m = 0; m < c.size(); ++m) {
      double denom = std::max(std::abs(c0[m]), 1e-300);
      rep.max_rel_drift =
          std::max(rep.max_rel_drift, std::abs(c[m] - c0[m]) / denom);
    }
  return rep;
}

}  // namespace gdln
