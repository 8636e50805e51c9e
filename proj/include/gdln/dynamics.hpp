#pragma once

#include <cstdint>
#include <vector>

#include "gdln/dataset.hpp"
#include "gdln/graph.hpp"

namespace gdln {

struct WeightState {
  std::vector<Matrix> weights;  // one per edge, n_{t(e)} x n_{s(e)}
  double time = 0.0;
};

// Orthonormal frames for building and reading decoupled weights:
// W_e = target_frame[e] * diag(b_e) * source_frame[e]^T.
struct DecoupledBases {
  std::vector<Matrix> target_frame, source_frame;  // n x modes each
  int modes = 0;
};

enum class InitKind { SmallRandom, FixedSingular, Decoupled };
struct InitScheme {
  InitKind kind = InitKind::FixedSingular;
  // SmallRandom: entrywise Gaussian with std = scale * sqrt(2/(fan_in+fan_out)).
  // FixedSingular: all min(n_t, n_s) singular values equal scale, random frames.
  // Decoupled: scale on every shared mode of the supplied bases.
  double scale = 0.2;
  const DecoupledBases* bases = nullptr;
};

WeightState init_weights(const ArchitectureGraph& g, const InitScheme& scheme,
                         std::uint64_t seed);

struct TrainConfig {
  double tau = 1.0;
  double step = 1e-2;  // eta; weights move by (eta/tau) * flow, time by eta
  long steps = 1000;
  std::uint64_t seed = 0;
  InitScheme init;
  int log_every = 1;
  int sv_log_every = 0;         // 0 disables singular value logging
  int conserved_log_every = 0;  // 0 disables balance logging
  double diverge_factor = 10.0;
};

struct Trajectory {
  std::vector<double> times, losses;
  std::vector<double> sv_times;
  std::vector<std::vector<double>> edge_top_sv;  // [sv log index][edge]
  std::vector<double> conserved_times;
  // Frobenius drift of the per-interior-node weight balance from its
  // initial value; one column per interior node in topo order.
  std::vector<std::vector<double>> conserved_drift;
  std::vector<int> conserved_nodes;
  WeightState final_state;
};

// Activations for one example, indexed by node. Input nodes are clamped to
// the example inputs; every other node applies its node gate to the gated
// sum of incoming edge maps.
std::vector<Vector> forward(const ArchitectureGraph& g, const WeightState& w,
                            const GatedExample& ex);

// Weight-averaged half squared error over every output node.
double dataset_loss(const ArchitectureGraph& g, const WeightState& w,
                    const GatedDataset& data);
double examples_loss(const ArchitectureGraph& g, const WeightState& w,
                     const std::vector<GatedExample>& examples);

// Right-hand side of the gradient flow scaled by tau: descending along it
// decreases the loss. One matrix per edge.
std::vector<Matrix> analytic_gradient(const ArchitectureGraph& g,
                                      const WeightState& w,
                                      const PathwayCorrelations& corr,
                                      const PathTables& tables);

// Central-difference estimate of the same flow, entry by entry.
std::vector<Matrix> finite_difference_gradient(const ArchitectureGraph& g,
                                               const WeightState& w,
                                               const GatedDataset& data,
                                               double epsilon);

// Loss evaluated through the correlation statistics; equals dataset_loss for
// linear propagation and is what training logs each step.
double correlation_loss(const ArchitectureGraph& g, const PathTables& tables,
                        const PathwayCorrelations& corr,
                        const std::vector<Matrix>& weights);

// Explicit Euler on the gradient flow with correlations precomputed once.
// Throws Diverged past diverge_factor times the initial loss.
Trajectory train(const ArchitectureGraph& g, const PathTables& tables,
                 const GatedDataset& data, const TrainConfig& cfg);
Trajectory train_from(const ArchitectureGraph& g, const PathTables& tables,
                      const PathwayCorrelations& corr, WeightState w,
                      const TrainConfig& cfg);

// Fault injection for verification plumbing: adds knob * W_e to every
// analytic gradient so downstream checks must notice a corrupted flow.
void set_gradient_perturbation(double knob);
double gradient_perturbation();

// Standard two-layer positive-part network trained by full-batch gradient
// descent on the same parity data, as a nonlinear reference. Loss is the
// example-averaged half squared error; both layers init entrywise
// N(0, sigma0^2).
struct ReluConfig {
  int hidden_width = 128;
  double sigma0 = 2e-4;
  double eta = 0.1;
  long steps = 6000;
  std::uint64_t seed = 0;
  bool positive_diagonal = false;
  double diverge_factor = 10.0;
};
struct ReluResult {
  std::vector<double> losses;  // per step, including initial
  Matrix w1;                   // hidden x 2
  Matrix w2;                   // 1 x hidden
};
ReluResult relu_reference_train(const ReluConfig& cfg);

}  // namespace gdln
