#include "gdln/analysis.hpp"

#include <cmath>
#include <map>

namespace gdln {

KernelMatrix hidden_rsm(const ArchitectureGraph& g, const WeightState& w,
                        const std::vector<Probe>& probes, int node) {
  require(node >= 0 && node < g.num_nodes(), Errc::InvalidArgument,
          "probe node out of range");
  require(!probes.empty(), Errc::InvalidArgument, "empty probe set");
  const int n = static_cast<int>(probes.size());
  Matrix h(n, g.node(node).width);
  KernelMatrix out;
  out.labels.reserve(probes.size());
  for (int i = 0; i < n; ++i) {
    h.row(i) = forward(g, w, probes[i].example)[node].transpose();
    out.labels.emplace_back(probes[i].domain, probes[i].item);
  }
  out.k = h * h.transpose();
  return out;
}

std::vector<Vector> edge_singular_values(const WeightState& w) {
  std::vector<Vector> out;
  out.reserve(w.weights.size());
  for (const auto& m : w.weights)
    out.push_back(Eigen::JacobiSVD<Matrix>(m).singularValues());
  return out;
}

GeneralizationReport route_error_report(const ArchitectureGraph& g,
                                        const WeightState& w,
                                        const RouteFactory& factory,
                                        const Eigen::MatrixXi& route_mask,
                                        bool classify) {
  const int rows = static_cast<int>(route_mask.rows());
  const int cols = static_cast<int>(route_mask.cols());
  require(rows > 0 && cols > 0, Errc::InvalidArgument, "empty route mask");

  GeneralizationReport rep;
  rep.route_loss.setZero(rows, cols);
  if (classify) rep.route_accuracy.setZero(rows, cols);

  double tr_loss = 0.0, un_loss = 0.0, tr_acc = 0.0, un_acc = 0.0;
  int tr_n = 0, un_n = 0;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      auto examples = factory(i, j);
      require(!examples.empty(), Errc::InvalidArgument,
              "route factory returned no examples");
      double loss = 0.0, correct = 0.0;
      for (const auto& ex : examples) {
        auto acts = forward(g, w, ex);
        double l = 0.0;
        int live_out = -1;
        for (std::size_t t = 0; t < g.output_nodes().size(); ++t) {
          int v = g.output_nodes()[t];
          const Vector& target = ex.targets[t];
          l += 0.5 * (acts[v] - target).squaredNorm();
          if (classify && target.cwiseAbs().maxCoeff() > 0.0) live_out = static_cast<int>(t);
        }
        loss += l;
        if (classify) {
          require(live_out >= 0, Errc::InvalidArgument,
                  "classification probe has an all-zero target");
          int v = g.output_nodes()[live_out];
          Eigen::Index got, want;
          acts[v].maxCoeff(&got);
          ex.targets[live_out].maxCoeff(&want);
          correct += (got == want) ? 1.0 : 0.0;
        }
      }
      loss /= static_cast<double>(examples.size());
      rep.route_loss(i, j) = loss;
      if (classify) rep.route_accuracy(i, j) = correct / examples.size();
      if (route_mask(i, j) != 0) {
        tr_loss += loss;
        tr_acc += classify ? rep.route_accuracy(i, j) : 0.0;
        ++tr_n;
      } else {
        un_loss += loss;
        un_acc += classify ? rep.route_accuracy(i, j) : 0.0;
        ++un_n;
      }
    }
  }
  require(tr_n > 0, Errc::InvalidArgument, "route mask trains no routes");
  rep.trained_loss = tr_loss / tr_n;
  rep.has_untrained = un_n > 0;
  rep.untrained_loss = rep.has_untrained ? un_loss / un_n : 0.0;
  if (classify) {
    rep.trained_accuracy = tr_acc / tr_n;
    rep.untrained_accuracy = rep.has_untrained ? un_acc / un_n : 0.0;
  }
  return rep;
}

double sharing_index(const KernelMatrix& kernel) {
  const int n = static_cast<int>(kernel.labels.size());
  require(kernel.k.rows() == n && kernel.k.cols() == n, Errc::DimensionMismatch,
          "kernel/label size mismatch");
  int domains = 0;
  for (const auto& [d, item] : kernel.labels) domains = std::max(domains, d + 1);
  require(domains >= 2, Errc::InvalidArgument,
          "sharing index needs probes from at least two domains");

  double acc = 0.0;
  int count = 0;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (kernel.labels[a].first == kernel.labels[b].first) continue;
      if (kernel.labels[a].second != kernel.labels[b].second) continue;
      double denom = std::sqrt(kernel.k(a, a) * kernel.k(b, b));
      acc += denom > 0.0 ? kernel.k(a, b) / denom : 0.0;
      ++count;
    }
  }
  require(count > 0, Errc::InvalidArgument,
          "no same-item cross-domain probe pairs");
  return acc / count;
}

}  // namespace gdln
