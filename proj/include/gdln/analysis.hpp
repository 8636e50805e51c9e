#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "gdln/common.hpp"
#include "gdln/dataset.hpp"
#include "gdln/dynamics.hpp"
#include "gdln/graph.hpp"

namespace gdln {

// One probe stimulus: a gated example tagged with the (domain, item) pair it
// presents, so kernel rows can be grouped by domain.
struct Probe {
  GatedExample example;
  int domain = 0;
  int item = 0;
};

// Gram matrix of hidden activations across probes. Symmetric and positive
// semi-definite by construction.
struct KernelMatrix {
  Matrix k;
  std::vector<std::pair<int, int>> labels;  // (domain, item) per row
};

// K[(i,a),(j,b)] = h(item a on domain i) . h(item b on domain j), where h is
// the activation of `node` under each probe's gates.
KernelMatrix hidden_rsm(const ArchitectureGraph& g, const WeightState& w,
                        const std::vector<Probe>& probes, int node);

// Descending singular values of every edge map, indexed by edge.
std::vector<Vector> edge_singular_values(const WeightState& w);

// Route-resolved evaluation of a routed task. `factory(i, j)` must synthesize
// evaluation examples for any route, trained or not.
struct GeneralizationReport {
  Matrix route_loss;            // M x M mean loss per route
  double trained_loss = 0.0;    // mean over mask-on routes
  double untrained_loss = 0.0;  // mean over mask-off routes
  bool has_untrained = false;   // false when the mask trains every route
  Matrix route_accuracy;        // filled only when classify is set (else 0x0)
  double trained_accuracy = 0.0;
  double untrained_accuracy = 0.0;
};

using RouteFactory =
    std::function<std::vector<GatedExample>(int domain, int item_or_class)>;

// When `classify` is set, accuracy compares argmax of the network output
// against argmax of the target at the single output node the route activates.
GeneralizationReport route_error_report(const ArchitectureGraph& g,
                                        const WeightState& w,
                                        const RouteFactory& factory,
                                        const Eigen::MatrixXi& route_mask,
                                        bool classify = false);

// Mean cosine similarity between same-item activations on different domains;
// 1 for perfectly shared representations, near 0 for independent ones.
double sharing_index(const KernelMatrix& kernel);

}  // namespace gdln
