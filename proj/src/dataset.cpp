#include "gdln/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gdln/rng.hpp"

namespace gdln {

double GatedDataset::total_weight() const {
  // Kahan summation keeps the probability-mass invariant tight even for
  // tens of thousands of examples.
  double sum = 0.0, comp = 0.0;
  for (const auto& ex : examples) {
    double y = ex.weight - comp;
    double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return sum;
}

void GatedDataset::normalize_weights() {
  double total = total_weight();
  require(total > 0.0, Errc::InvalidArgument, "zero total weight");
  for (auto& ex : examples) ex.weight /= total;
}

void GatedDataset::validate(const ArchitectureGraph& g) const {
  require(g.validated(), Errc::InvalidArgument, "graph not validated");
  require(!examples.empty(), Errc::InvalidArgument, "dataset is empty");
  const auto& ins = g.input_nodes();
  const auto& outs = g.output_nodes();
  for (const auto& ex : examples) {
    require(ex.weight >= 0.0, Errc::InvalidArgument, "negative example weight");
    require(ex.inputs.size() == ins.size() && ex.targets.size() == outs.size(),
            Errc::DimensionMismatch, "example has wrong number of terminals");
    for (std::size_t k = 0; k < ins.size(); ++k)
      require(ex.inputs[k].size() == g.node(ins[k]).width,
              Errc::DimensionMismatch, "input width mismatch");
    for (std::size_t k = 0; k < outs.size(); ++k)
      require(ex.targets[k].size() == g.node(outs[k]).width,
              Errc::DimensionMismatch, "target width mismatch");
    require(ex.gates.node_gates.size() == 0 ||
                ex.gates.node_gates.size() == g.num_nodes(),
            Errc::DimensionMismatch, "node gate vector size mismatch");
    require(ex.gates.edge_gates.size() == 0 ||
                ex.gates.edge_gates.size() == g.num_edges(),
            Errc::DimensionMismatch, "edge gate vector size mismatch");
  }
  require(std::abs(total_weight() - 1.0) <= 1e-12, Errc::InvalidArgument,
          "example weights must form a probability mass");
}

double path_gate(const ArchitectureGraph& g, const Path& p,
                 const GateAssignment& gates) {
  double acc = 1.0;
  for (int e : p.edges)
    acc *= gates.edge_gate(e) * gates.node_gate(g.edge(e).target);
  return acc;
}

PathwayCorrelations compute_pathway_correlations(const ArchitectureGraph& g,
                                                 const PathTables& tables,
                                                 const GatedDataset& data) {
  data.validate(g);
  const int np = tables.num_paths();
  PathwayCorrelations c;
  c.sigma_yx.assign(np, Matrix());
  std::vector<Matrix> yx_acc(np);
  std::map<std::pair<int, int>, Matrix> x_acc;

  std::vector<int> input_pos(g.num_nodes(), -1), output_pos(g.num_nodes(), -1);
  for (std::size_t k = 0; k < g.input_nodes().size(); ++k)
    input_pos[g.input_nodes()[k]] = static_cast<int>(k);
  for (std::size_t k = 0; k < g.output_nodes().size(); ++k)
    output_pos[g.output_nodes()[k]] = static_cast<int>(k);

  std::vector<double> gate(np);
  std::vector<int> live;
  for (const auto& ex : data.examples) {
    if (ex.weight == 0.0) continue;
    live.clear();
    for (int p = 0; p < np; ++p) {
      gate[p] = path_gate(g, tables.paths[p], ex.gates);
      if (gate[p] != 0.0) live.push_back(p);
    }
    for (int p : live) {
      const Path& path = tables.paths[p];
      const Vector& x = ex.inputs[input_pos[path.source]];
      const Vector& y = ex.targets[output_pos[path.target]];
      Matrix term = (ex.weight * gate[p]) * (y * x.transpose());
      if (yx_acc[p].size() == 0)
        yx_acc[p] = std::move(term);
      else
        yx_acc[p] += term;
    }
    // Same-target pairs; stored once per unordered pair, mirrored later.
    for (std::size_t a = 0; a < live.size(); ++a) {
      for (std::size_t b = a; b < live.size(); ++b) {
        int j = live[a], p = live[b];
        if (tables.paths[j].target != tables.paths[p].target) continue;
        const Vector& xj = ex.inputs[input_pos[tables.paths[j].source]];
        const Vector& xp = ex.inputs[input_pos[tables.paths[p].source]];
        Matrix term =
            (ex.weight * gate[j] * gate[p]) * (xj * xp.transpose());
        auto key = std::make_pair(j, p);
        auto it = x_acc.find(key);
        if (it == x_acc.end())
          x_acc.emplace(key, std::move(term));
        else
          it->second += term;
      }
    }
    double sq = 0.0;
    for (const auto& y : ex.targets) sq += y.squaredNorm();
    c.half_target_sq += 0.5 * ex.weight * sq;
  }

  const double total = data.total_weight();
  c.half_target_sq /= total;
  for (int p = 0; p < np; ++p) {
    if (yx_acc[p].size() == 0) continue;
    yx_acc[p] /= total;
    if (yx_acc[p].cwiseAbs().maxCoeff() == 0.0) continue;  // exact zero: omit
    c.sigma_yx[p] = std::move(yx_acc[p]);
  }
  for (auto& [key, m] : x_acc) {
    m /= total;
    if (m.cwiseAbs().maxCoeff() == 0.0) continue;
    c.sigma_x[key] = m;
    if (key.first != key.second)
      c.sigma_x[{key.second, key.first}] = m.transpose();
  }

  c.x_terms.assign(np, {});
  for (const auto& [key, m] : c.sigma_x)
    c.x_terms[key.second].emplace_back(key.first, &m);
  c.active.assign(np, 0);
  for (int p = 0; p < np; ++p)
    if (c.has_yx(p) || !c.x_terms[p].empty()) c.active[p] = 1;
  return c;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.uniform() * (i + 1));
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

Vector onehot(int n, int k) {
  Vector v = Vector::Zero(n);
  v[k] = 1.0;
  return v;
}

}  // namespace

TaskBundle make_xor_dataset(const XorOptions& opt) {
  require(opt.hidden_width >= 1, Errc::InvalidArgument, "hidden_width >= 1");
  TaskBundle t;
  t.graph.add_node("in", 2);
  const int n_hidden = opt.scheme == XorScheme::FourPathway ? 4 : 1;
  for (int k = 0; k < n_hidden; ++k) {
    std::string h = n_hidden == 1 ? "h" : "h" + std::to_string(k);
    t.graph.add_node(h, opt.hidden_width);
    t.graph.add_edge("in-" + h, "in", h);
  }
  t.graph.add_node("out", 1);
  for (int k = 0; k < n_hidden; ++k) {
    std::string h = n_hidden == 1 ? "h" : "h" + std::to_string(k);
    t.graph.add_edge(h + "-out", h, "out");
  }
  t.graph.validate();
  t.tables = enumerate_paths(t.graph);

  const double corners[4][2] = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  for (int k = 0; k < 4; ++k) {
    GatedExample ex;
    Vector x(2);
    x << corners[k][0], corners[k][1];
    double parity = corners[k][0] * corners[k][1];  // +1 on the diagonal
    double y = opt.positive_diagonal ? parity : -parity;
    ex.inputs = {x};
    ex.targets = {Vector::Constant(1, y)};
    if (opt.scheme == XorScheme::FourPathway) {
      ex.gates.node_gates = Vector::Ones(t.graph.num_nodes());
      for (int m = 0; m < 4; ++m)
        ex.gates.node_gates[t.graph.node_index("h" + std::to_string(m))] =
            m == k ? 1.0 : 0.0;
    }
    t.train.examples.push_back(std::move(ex));
  }
  t.train.normalize_weights();
  return t;
}

TaskBundle make_contextual_dataset(const ContextualOptions& opt) {
  require(opt.hidden_width >= 1, Errc::InvalidArgument, "hidden_width >= 1");
  require(opt.samples >= 0, Errc::InvalidArgument, "samples >= 0");
  TaskBundle t;
  t.graph.add_node("in", 2);
  const int n_hidden = opt.scheme == ContextScheme::ContextGated ? 2 : 1;
  for (int c = 0; c < n_hidden; ++c) {
    std::string h = n_hidden == 1 ? "h" : "h" + std::to_string(c);
    t.graph.add_node(h, opt.hidden_width);
    t.graph.add_edge("in-" + h, "in", h);
  }
  t.graph.add_node("out", 1);
  for (int c = 0; c < n_hidden; ++c) {
    std::string h = n_hidden == 1 ? "h" : "h" + std::to_string(c);
    t.graph.add_edge(h + "-out", h, "out");
  }
  t.graph.validate();
  t.tables = enumerate_paths(t.graph);

  auto add_example = [&](int context, const Vector& x, double w) {
    GatedExample ex;
    ex.inputs = {x};
    ex.targets = {Vector::Constant(1, x[context])};
    ex.weight = w;
    if (opt.scheme == ContextScheme::ContextGated) {
      ex.gates.node_gates = Vector::Ones(t.graph.num_nodes());
      ex.gates.node_gates[t.graph.node_index("h0")] = context == 0 ? 1.0 : 0.0;
      ex.gates.node_gates[t.graph.node_index("h1")] = context == 1 ? 1.0 : 0.0;
    }
    t.train.examples.push_back(std::move(ex));
  };

  if (opt.samples == 0) {
    // Corner masses matching the moments of x ~ U[-1, 1]^2.
    const double a = 1.0 / std::sqrt(3.0);
    for (int context = 0; context < 2; ++context)
      for (int s1 : {-1, 1})
        for (int s2 : {-1, 1}) {
          Vector x(2);
          x << a * s1, a * s2;
          add_example(context, x, 0.125);
        }
  } else {
    Rng rng(opt.seed);
    for (int i = 0; i < opt.samples; ++i) {
      int context = rng.uniform() < 0.5 ? 0 : 1;
      Vector x(2);
      x << 2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0;
      add_example(context, x, 1.0);
    }
  }
  t.train.normalize_weights();
  return t;
}

HierarchyData make_hierarchy_dataset(std::uint64_t seed) {
  HierarchyData h;
  h.Y.resize(7, 4);
  // Rows: one feature common to all items, two pair features, four
  // item-specific features. Columns are items.
  h.Y << 1, 1, 1, 1,
         1, 1, 0, 0,
         0, 0, 1, 1,
         1, 0, 0, 0,
         0, 1, 0, 0,
         0, 0, 1, 0,
         0, 0, 0, 1;
  Rng rng(seed);
  h.X = rng.orthonormal(4, 4);
  return h;
}

Eigen::MatrixXi make_route_mask(int M, int K, RouteRule rule,
                                std::uint64_t seed) {
  require(M >= 1, Errc::InvalidArgument, "M >= 1");
  require(K >= 1 && K <= M, Errc::InvalidK,
          "K must lie in [1, M], got K=" + std::to_string(K) +
              " M=" + std::to_string(M));
  Eigen::MatrixXi mask(M, M);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j) mask(i, j) = ((j - i + M) % M) < K ? 1 : 0;
  if (rule == RouteRule::RandomBalanced) {
    // Permuting rows and columns preserves the K-per-row/column balance.
    Rng rng(seed);
    auto pr = random_permutation(M, rng);
    auto pc = random_permutation(M, rng);
    Eigen::MatrixXi shuffled(M, M);
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < M; ++j) shuffled(pr[i], pc[j]) = mask(i, j);
    mask = shuffled;
  }
  return mask;
}

namespace {

// Shared builder for the route-grid tasks: M input domains feeding hidden
// blocks feeding M output domains.
void add_route_example(std::vector<GatedExample>& out,
                       const ArchitectureGraph& g, int M, const Vector& x,
                       const Vector& y, int i, int j,
                       const std::string& h1_name,
                       const std::string& h2_name) {
  GatedExample ex;
  const int in_w = g.node(g.node_index("in0")).width;
  const int out_w = g.node(g.node_index("out0")).width;
  ex.inputs.assign(M, Vector::Zero(in_w));
  ex.targets.assign(M, Vector::Zero(out_w));
  ex.inputs[i] = x;
  ex.targets[j] = y;
  ex.gates.edge_gates = Vector::Zero(g.num_edges());
  ex.gates.edge_gates[g.edge_index("in" + std::to_string(i) + "-" + h1_name)] = 1.0;
  ex.gates.edge_gates[g.edge_index(h1_name + "-" + h2_name)] = 1.0;
  ex.gates.edge_gates[g.edge_index(h2_name + "-out" + std::to_string(j))] = 1.0;
  out.push_back(std::move(ex));
}

}  // namespace

RoutingTask make_routing_dataset(const RoutingOptions& opt) {
  require(opt.hidden_width >= 4, Errc::InvalidArgument,
          "hidden_width must cover the four item modes");
  RoutingTask t;
  t.base = make_hierarchy_dataset(opt.seed);
  t.route_mask = make_route_mask(opt.M, opt.K, opt.rule, opt.seed);

  for (int i = 0; i < opt.M; ++i)
    t.graph.add_node("in" + std::to_string(i), 4);
  t.graph.add_node("h1", opt.hidden_width);
  t.graph.add_node("h2", opt.hidden_width);
  for (int j = 0; j < opt.M; ++j)
    t.graph.add_node("out" + std::to_string(j), 7);
  for (int i = 0; i < opt.M; ++i)
    t.graph.add_edge("in" + std::to_string(i) + "-h1",
                     "in" + std::to_string(i), "h1");
  t.graph.add_edge("h1-h2", "h1", "h2");
  for (int j = 0; j < opt.M; ++j)
    t.graph.add_edge("h2-out" + std::to_string(j), "h2",
                     "out" + std::to_string(j));
  t.graph.validate();
  t.tables = enumerate_paths(t.graph);

  for (int i = 0; i < opt.M; ++i)
    for (int j = 0; j < opt.M; ++j) {
      if (!t.route_mask(i, j)) continue;
      for (int a = 0; a < 4; ++a)
        add_route_example(t.train.examples, t.graph, opt.M, t.base.X.col(a),
                          t.base.Y.col(a), i, j, "h1", "h2");
    }
  t.train.route_mask = t.route_mask;
  t.train.normalize_weights();
  return t;
}

std::vector<GatedExample> RoutingTask::route_examples(int i, int j) const {
  const int M = static_cast<int>(route_mask.rows());
  require(i >= 0 && i < M && j >= 0 && j < M, Errc::InvalidArgument,
          "route index out of range");
  std::vector<GatedExample> out;
  for (int a = 0; a < 4; ++a)
    add_route_example(out, graph, M, base.X.col(a), base.Y.col(a), i, j, "h1",
                      "h2");
  return out;
}

int RaceTask::block_of_route(int i, int j) const {
  const int M = static_cast<int>(graph.input_nodes().size());
  const int nb = M / group;
  return (i / group) * nb + (j / group);
}

RaceTask make_race_gating(const RaceOptions& opt) {
  int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(opt.P))));
  require(opt.P >= 1 && g * g == opt.P && opt.M % g == 0, Errc::InvalidP,
          "P must be g^2 with g dividing M, got P=" + std::to_string(opt.P) +
              " M=" + std::to_string(opt.M));
  require(opt.hidden_width >= 4, Errc::InvalidArgument,
          "hidden_width must cover the four item modes");
  RaceTask t;
  t.group = g;
  t.base = make_hierarchy_dataset(opt.seed);

  const int nb = opt.M / g;
  for (int i = 0; i < opt.M; ++i)
    t.graph.add_node("in" + std::to_string(i), 4);
  for (int b = 0; b < nb * nb; ++b) {
    t.graph.add_node("h1b" + std::to_string(b), opt.hidden_width);
    t.graph.add_node("h2b" + std::to_string(b), opt.hidden_width);
  }
  for (int j = 0; j < opt.M; ++j)
    t.graph.add_node("out" + std::to_string(j), 7);
  for (int r = 0; r < nb; ++r)
    for (int c = 0; c < nb; ++c) {
      int b = r * nb + c;
      std::string h1 = "h1b" + std::to_string(b);
      std::string h2 = "h2b" + std::to_string(b);
      for (int u = 0; u < g; ++u)
        t.graph.add_edge("in" + std::to_string(r * g + u) + "-" + h1,
                         "in" + std::to_string(r * g + u), h1);
      t.graph.add_edge(h1 + "-" + h2, h1, h2);
      for (int u = 0; u < g; ++u)
        t.graph.add_edge(h2 + "-out" + std::to_string(c * g + u), h2,
                         "out" + std::to_string(c * g + u));
    }
  t.graph.validate();
  t.tables = enumerate_paths(t.graph);

  for (int i = 0; i < opt.M; ++i)
    for (int j = 0; j < opt.M; ++j) {
      int b = t.block_of_route(i, j);
      for (int a = 0; a < 4; ++a)
        add_route_example(t.train.examples, t.graph, opt.M, t.base.X.col(a),
                          t.base.Y.col(a), i, j, "h1b" + std::to_string(b),
                          "h2b" + std::to_string(b));
    }
  t.train.route_mask = Eigen::MatrixXi::Ones(opt.M, opt.M);
  t.train.normalize_weights();
  return t;
}

namespace {

// Rotation by theta applied to every 2-plane in the fixed schedule
// (0,1), (2,3), ...; an odd trailing coordinate stays put.
Matrix planar_rotation(int dim, double theta) {
  Matrix r = Matrix::Identity(dim, dim);
  for (int d = 0; d + 1 < dim; d += 2) {
    r(d, d) = std::cos(theta);
    r(d, d + 1) = -std::sin(theta);
    r(d + 1, d) = std::sin(theta);
    r(d + 1, d + 1) = std::cos(theta);
  }
  return r;
}

Matrix permutation_matrix(const std::vector<int>& perm) {
  const int n = static_cast<int>(perm.size());
  Matrix p = Matrix::Zero(n, n);
  for (int d = 0; d < n; ++d) p(perm[d], d) = 1.0;
  return p;
}

}  // namespace

TransformTask make_transform_bench(const TransformOptions& opt) {
  require(opt.n_classes >= 2 && opt.input_dim >= opt.n_classes,
          Errc::InvalidArgument, "need input_dim >= n_classes >= 2");
  require(opt.hidden_width >= opt.n_classes, Errc::InvalidArgument,
          "hidden_width must cover the class modes");
  TransformTask t;
  t.route_mask = make_route_mask(opt.M, opt.K, opt.rule, opt.seed);
  Rng rng(opt.seed);
  t.prototypes = rng.orthonormal(opt.input_dim, opt.n_classes);

  t.in_op.resize(opt.M);
  t.out_perm.resize(opt.M);
  for (int m = 0; m < opt.M; ++m) {
    if (opt.kind == TransformKind::RotateInput) {
      t.in_op[m] = planar_rotation(
          opt.input_dim, 3.14159265358979323846 * m / opt.M);
    } else if (m == 0) {
      // Domain 0 is the untransformed reference.
      t.in_op[m] = Matrix::Identity(opt.input_dim, opt.input_dim);
    } else {
      t.in_op[m] = permutation_matrix(random_permutation(opt.input_dim, rng));
    }
    if (m == 0) {
      t.out_perm[m].resize(opt.n_classes);
      for (int c = 0; c < opt.n_classes; ++c) t.out_perm[m][c] = c;
    } else {
      t.out_perm[m] = random_permutation(opt.n_classes, rng);
    }
  }

  for (int i = 0; i < opt.M; ++i)
    t.graph.add_node("in" + std::to_string(i), opt.input_dim);
  t.graph.add_node("h1", opt.hidden_width);
  t.graph.add_node("h2", opt.hidden_width);
  for (int j = 0; j < opt.M; ++j)
    t.graph.add_node("out" + std::to_string(j), opt.n_classes);
  for (int i = 0; i < opt.M; ++i)
    t.graph.add_edge("in" + std::to_string(i) + "-h1",
                     "in" + std::to_string(i), "h1");
  t.graph.add_edge("h1-h2", "h1", "h2");
  for (int j = 0; j < opt.M; ++j)
    t.graph.add_edge("h2-out" + std::to_string(j), "h2",
                     "out" + std::to_string(j));
  t.graph.validate();
  t.tables = enumerate_paths(t.graph);

  const int n_eval = opt.n_classes * opt.eval_per_class;
  t.eval_base.resize(opt.input_dim, n_eval);
  t.eval_labels.resize(n_eval);
  for (int c = 0; c < opt.n_classes; ++c)
    for (int s = 0; s < opt.eval_per_class; ++s) {
      int col = c * opt.eval_per_class + s;
      t.eval_base.col(col) =
          t.prototypes.col(c) + rng.gaussian_matrix(opt.input_dim, 1, opt.noise);
      t.eval_labels[col] = c;
    }

  for (int i = 0; i < opt.M; ++i)
    for (int j = 0; j < opt.M; ++j) {
      if (!t.route_mask(i, j)) continue;
      for (int c = 0; c < opt.n_classes; ++c)
        for (int s = 0; s < opt.train_per_class; ++s) {
          Vector base = t.prototypes.col(c) +
                        rng.gaussian_matrix(opt.input_dim, 1, opt.noise);
          add_route_example(t.train.examples, t.graph, opt.M, t.in_op[i] * base,
                            onehot(opt.n_classes, t.out_perm[j][c]), i, j,
                            "h1", "h2");
        }
    }
  t.train.route_mask = t.route_mask;
  t.train.normalize_weights();
  return t;
}

std::vector<GatedExample> TransformTask::route_examples(int i, int j) const {
  const int M = static_cast<int>(route_mask.rows());
  require(i >= 0 && i < M && j >= 0 && j < M, Errc::InvalidArgument,
          "route index out of range");
  const int n_cls = static_cast<int>(out_perm[j].size());
  std::vector<GatedExample> out;
  for (int col = 0; col < eval_base.cols(); ++col) {
    add_route_example(out, graph, M, in_op[i] * eval_base.col(col),
                      onehot(n_cls, out_perm[j][eval_labels[col]]), i, j, "h1",
                      "h2");
  }
  return out;
}

}  // namespace gdln
