#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "gdln/dataset.hpp"
#include "gdln/dynamics.hpp"
#include "gdln/graph.hpp"

namespace gdln {

// Deterministic SVD: singular values descending, sign fixed by making the
// largest-magnitude entry of each left singular vector positive.
struct SignedSvd {
  Matrix u;  // rows x r
  Vector s;  // r
  Matrix v;  // cols x r
};
SignedSvd signed_svd(const Matrix& m, int r = -1);  // r < 0: min(rows, cols)

enum class DiagMode { Exact, Approximate };

// Correlation statistics rotated into per-path singular-value coordinates.
// Frames are deduplicated across paths; tasks whose paths share one frame per
// node (the routing family) expose it through node_frame. Tasks like the
// four-pathway parity net keep genuinely different input frames per path.
struct DiagonalizedStats {
  int modes = 0;
  std::vector<Matrix> frames;                // orthonormal columns, dedup pool
  std::vector<int> left_frame, right_frame;  // per path; -1 when inactive
  std::vector<Vector> s;                     // per path; empty if no target stat
  std::map<std::pair<int, int>, Vector> d;   // same-target pair -> diagonal
  // d_terms[p]: the (j, d(j, p)) list entering path p's reduced error term.
  std::vector<std::vector<std::pair<int, const Vector*>>> d_terms;
  std::vector<char> active;
  std::vector<int> node_frame;  // per node; -1 when ambiguous or interior
  double residual = 0.0;        // worst off-diagonal / out-of-frame mass
  double half_target_sq = 0.0;
};

// Fixes frames by SVD of each path's target correlation and reads off every
// stored statistic by conjugation. Exact mode rejects residual > tol.
DiagonalizedStats diagonalize_stats(const ArchitectureGraph& g,
                                    const PathTables& tables,
                                    const PathwayCorrelations& corr,
                                    DiagMode mode = DiagMode::Exact,
                                    double tol = 1e-8);

// Per-edge frames realizing the decoupled manifold: data frames at the
// endpoints, one random orthonormal frame per interior node. Throws
// OffManifold when paths through an edge demand conflicting frames.
DecoupledBases make_decoupled_bases(const ArchitectureGraph& g,
                                    const PathTables& tables,
                                    const DiagonalizedStats& stats,
                                    std::uint64_t seed);

struct ReducedState {
  std::vector<Vector> b;  // per edge, one value per mode
  double time = 0.0;
};

// Largest entry of W outside the span of the frames, plus off-diagonal mass
// inside it.
double manifold_leakage(const ArchitectureGraph& g, const DecoupledBases& bases,
                        const WeightState& w);

// Projects weights onto the decoupled coordinates; OffManifold above tol.
ReducedState restrict_weights(const ArchitectureGraph& g,
                              const DecoupledBases& bases, const WeightState& w,
                              double tol = 1e-8);
WeightState lift(const ArchitectureGraph& g, const DecoupledBases& bases,
                 const ReducedState& r);

enum class Integrator { Euler, RK4 };

struct OdeConfig {
  double tau = 1.0;
  double step = 1e-2;
  long steps = 1000;
  int log_every = 1;
  Integrator integrator = Integrator::Euler;
};

struct ReducedTrajectory {
  std::vector<double> times, losses;
  std::vector<std::vector<Vector>> b_log;  // [log index][edge]
  ReducedState final_state;
};

// Mode-wise dynamics on the decoupled manifold, one value per (edge, mode):
// tau db_e = sum over paths through e of b_{rest of path} *
// [s(p) - sum_j b_{path j} d(j, p)], all products elementwise.
ReducedTrajectory reduced_train(const ArchitectureGraph& g,
                                const PathTables& tables,
                                const DiagonalizedStats& stats,
                                const ReducedState& init,
                                const OdeConfig& cfg);

// Loss reconstructed from reduced coordinates; equals the full-network loss
// of the lifted weights when the residual vanishes.
double reduced_loss(const PathTables& tables, const DiagonalizedStats& stats,
                    const std::vector<Vector>& b);

// Three coupled singular values per mode for the routing family, driven by
// the raw base-task spectrum (S, D). The trained-route count cancels out of
// these equations; K is carried for bookkeeping only.
struct RoutingReducedInit {
  Vector b1, b2, b3;  // input, hidden, output; one entry per mode
};
struct RoutingTrajectory {
  std::vector<double> times;
  std::vector<Vector> b1, b2, b3;
};
RoutingTrajectory routing_reduced_train(const Vector& S, const Vector& D,
                                        int M, int K,
                                        const RoutingReducedInit& init,
                                        const OdeConfig& cfg,
                                        bool balanced = false);

// Single-variable form per mode along the conserved manifold
// C = M*B1(0)^2 - B2(0)^2.
struct ScalarTrajectory {
  std::vector<double> times;
  std::vector<Vector> b2;
};
ScalarTrajectory scalar_routing_ode(const Vector& S, const Vector& D, int M,
                                    const Vector& C, const Vector& b2_init,
                                    const OdeConfig& cfg);

// Two-variable reduction when P paths share each hidden weight matrix and
// all M^2 routes are trained.
struct RaceTrajectory {
  std::vector<double> times;
  std::vector<Vector> b1, b2;
};
RaceTrajectory race_reduced_train(const Vector& S, const Vector& D, int M,
                                  double P, const Vector& b1_init,
                                  const Vector& b2_init, const OdeConfig& cfg);

// Late-time hidden-to-outer singular value ratio; the fully shared routing
// network corresponds to P = M^2.
double steady_state_ratio(int M, double P);

// Closed-form single-pathway solution of the parity task: effective singular
// value a(t) and total loss.
struct XorAnalytic {
  std::vector<double> a, loss;
};
XorAnalytic xor_analytic(double a0, double tau,
                         const std::vector<double>& t_grid);
// Inverse map: time at which a(t) = a_target. Needs a_target strictly
// between a0 and the fixed point.
double xor_time_to_reach(double a_target, double a0, double tau);
// Duration between the loss crossing hi_frac*L(0) and lo_frac*L(0).
double xor_transition_width(double a0, double tau, double hi_frac = 0.9,
                            double lo_frac = 0.1);

// M*B1^2 - B2^2 per mode along a routing trajectory, with its worst drift
// relative to the initial value.
struct ConservedReport {
  std::vector<Vector> series;
  double max_rel_drift = 0.0;
};
ConservedReport conserved_quantity(const RoutingTrajectory& traj, int M);

}  // namespace gdln
