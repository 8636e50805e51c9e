#pragma once

#include <map>
#include <utility>
#include <vector>

#include "gdln/common.hpp"
#include "gdln/graph.hpp"

namespace gdln {

// Gates are part of the data. Empty vectors mean "all ones". Input nodes
// carry no node gate; their entries are ignored.
struct GateAssignment {
  Vector node_gates;
  Vector edge_gates;

  double node_gate(int v) const {
    return node_gates.size() == 0 ? 1.0 : node_gates[v];
  }
  double edge_gate(int e) const {
    return edge_gates.size() == 0 ? 1.0 : edge_gates[e];
  }
};

struct GatedExample {
  std::vector<Vector> inputs;   // aligned with graph.input_nodes()
  std::vector<Vector> targets;  // aligned with graph.output_nodes()
  GateAssignment gates;
  double weight = 1.0;
};

struct GatedDataset {
  std::vector<GatedExample> examples;
  // Trained input/output domain pairs for route-grid tasks; 0x0 otherwise.
  Eigen::MatrixXi route_mask;

  double total_weight() const;  // compensated summation
  // Rescales weights to form a probability mass.
  void normalize_weights();
  // Dimension, gate-size and weight-mass checks against the graph.
  void validate(const ArchitectureGraph& g) const;
};

// Product of edge gates along the path and node gates of every path node
// except the source.
double path_gate(const ArchitectureGraph& g, const Path& p,
                 const GateAssignment& gates);

// Gate-weighted second moments driving the gradient flow. All averages are
// weight-normalized. sigma_yx[p] is empty when path p never fires against a
// target; sigma_x holds every ordered same-target pair (j, p) whose
// correlation is not identically zero, so structurally gated-off pairs cost
// nothing downstream.
struct PathwayCorrelations {
  std::vector<Matrix> sigma_yx;
  std::map<std::pair<int, int>, Matrix> sigma_x;
  // x_terms[p]: the (j, sigma_x(j, p)) list entering path p's error term.
  std::vector<std::vector<std::pair<int, const Matrix*>>> x_terms;
  double half_target_sq = 0.0;  // <(1/2) sum over outputs of ||y||^2>

  bool has_yx(int p) const { return sigma_yx[p].size() > 0; }
  // Paths with no stored statistics at all can be skipped entirely.
  std::vector<char> active;
};

PathwayCorrelations compute_pathway_correlations(const ArchitectureGraph& g,
                                                 const PathTables& tables,
                                                 const GatedDataset& data);

// ---------------------------------------------------------------------------
// Task factories. Each bundles the graph, its path tables, and the training
// set; tasks with an evaluation protocol also expose per-route examples.

struct TaskBundle {
  ArchitectureGraph graph;
  PathTables tables;
  GatedDataset train;
};

// Two-bit parity with inputs at the four corners (+-1, +-1). By default the
// target is +1 for mixed signs; positive_diagonal flips the labeling.
enum class XorScheme { FourPathway, SinglePathway };
struct XorOptions {
  XorScheme scheme = XorScheme::FourPathway;
  int hidden_width = 2;
  bool positive_diagonal = false;
};
TaskBundle make_xor_dataset(const XorOptions& opt);

// Two contexts; the target copies the input coordinate named by the context.
// samples == 0 builds the exact population: 8 weighted corner points at
// +-1/sqrt(3) whose second moments equal those of the uniform distribution
// on [-1, 1]^2.
enum class ContextScheme { AlwaysOn, ContextGated };
struct ContextualOptions {
  ContextScheme scheme = ContextScheme::ContextGated;
  int hidden_width = 4;
  int samples = 0;
  std::uint64_t seed = 0;
};
TaskBundle make_contextual_dataset(const ContextualOptions& opt);

// Four items, seven target features arranged in a binary tree: one shared by
// all items, two shared by pairs, four item-specific. Items are random
// orthonormal vectors. Columns are items.
struct HierarchyData {
  Matrix X;  // 4 x 4
  Matrix Y;  // 7 x 4
};
HierarchyData make_hierarchy_dataset(std::uint64_t seed = 0);

enum class RouteRule { CyclicBand, RandomBalanced };
// K x K doubly-balanced 0/1 mask over an M x M route grid.
Eigen::MatrixXi make_route_mask(int M, int K, RouteRule rule,
                                std::uint64_t seed = 0);

// M input domains, M output domains, a shared two-layer hidden chain, and a
// balanced subset of K*M trained routes. Every route sees the same four-item
// hierarchy.
struct RoutingOptions {
  int M = 7;
  int K = 4;
  int hidden_width = 64;
  RouteRule rule = RouteRule::CyclicBand;
  std::uint64_t seed = 0;
};
struct RoutingTask {
  ArchitectureGraph graph;
  PathTables tables;
  GatedDataset train;
  HierarchyData base;
  Eigen::MatrixXi route_mask;

  std::vector<GatedExample> route_examples(int i, int j) const;
};
RoutingTask make_routing_dataset(const RoutingOptions& opt);

// All M^2 routes trained, but hidden chains are split into parallel blocks so
// exactly P routes flow through each hidden weight matrix. Blocks tile the
// route grid in sqrt(P) x sqrt(P) squares, so P must be g^2 with g dividing M.
struct RaceOptions {
  int M = 10;
  int P = 1;
  int hidden_width = 16;
  std::uint64_t seed = 0;
};
struct RaceTask {
  ArchitectureGraph graph;
  PathTables tables;
  GatedDataset train;
  HierarchyData base;
  int group = 1;  // sqrt(P)

  int block_of_route(int i, int j) const;
};
RaceTask make_race_gating(const RaceOptions& opt);

// Classification benchmark: orthonormal class prototypes plus Gaussian noise,
// routed through per-domain input transformations (coordinate permutations or
// planar rotations over a fixed schedule of disjoint 2-planes) and output
// label permutations. Evaluation examples share one base sample set across
// routes.
enum class TransformKind { PermuteInput, RotateInput };
struct TransformOptions {
  int M = 10;
  int K = 4;
  int n_classes = 10;
  int input_dim = 20;
  int hidden_width = 32;
  TransformKind kind = TransformKind::PermuteInput;
  double noise = 0.1;
  int train_per_class = 64;
  int eval_per_class = 16;
  RouteRule rule = RouteRule::CyclicBand;
  std::uint64_t seed = 0;
};
struct TransformTask {
  ArchitectureGraph graph;
  PathTables tables;
  GatedDataset train;
  Eigen::MatrixXi route_mask;
  Matrix prototypes;                       // input_dim x n_classes
  std::vector<Matrix> in_op;               // orthogonal map per input domain
  std::vector<std::vector<int>> out_perm;  // label map per output domain
  Matrix eval_base;                        // input_dim x (n_classes * eval_per_class)
  std::vector<int> eval_labels;

  std::vector<GatedExample> route_examples(int i, int j) const;
  // Transformed label a correct prediction must hit for base class c in
  // output domain j.
  int routed_label(int j, int c) const { return out_perm[j][c]; }
};
TransformTask make_transform_bench(const TransformOptions& opt);

}  // namespace gdln
