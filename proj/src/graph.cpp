#include "gdln/graph.hpp"

#include <algorithm>
#include <map>

namespace gdln {

int ArchitectureGraph::add_node(const std::string& name, int width) {
  require(!name.empty(), Errc::InvalidArgument, "node name must be nonempty");
  require(width >= 1, Errc::InvalidArgument,
          "node '" + name + "' needs width >= 1");
  for (const auto& n : nodes_)
    require(n.name != name, Errc::InvalidArgument,
            "duplicate node name '" + name + "'");
  nodes_.push_back({name, width, NodeKind::Hidden});
  in_edges_.emplace_back();
  out_edges_.emplace_back();
  validated_ = false;
  return num_nodes() - 1;
}

int ArchitectureGraph::add_edge(const std::string& name,
                                const std::string& source,
                                const std::string& target) {
  int s = -1, t = -1;
  for (int v = 0; v < num_nodes(); ++v) {
    if (nodes_[v].name == source) s = v;
    if (nodes_[v].name == target) t = v;
  }
  if (s < 0) fail(Errc::DanglingEdge, "edge '" + name + "' references unknown node '" + source + "'");
  if (t < 0) fail(Errc::DanglingEdge, "edge '" + name + "' references unknown node '" + target + "'");
  return add_edge(name, s, t);
}

int ArchitectureGraph::add_edge(const std::string& name, int source, int target) {
  require(!name.empty(), Errc::InvalidArgument, "edge name must be nonempty");
  if (source < 0 || source >= num_nodes() || target < 0 || target >= num_nodes())
    fail(Errc::DanglingEdge, "edge '" + name + "' endpoint out of range");
  for (const auto& e : edges_)
    require(e.name != name, Errc::InvalidArgument,
            "duplicate edge name '" + name + "'");
  edges_.push_back({name, source, target});
  out_edges_[source].push_back(num_edges() - 1);
  in_edges_[target].push_back(num_edges() - 1);
  validated_ = false;
  return num_edges() - 1;
}

int ArchitectureGraph::node_index(const std::string& name) const {
  for (int v = 0; v < num_nodes(); ++v)
    if (nodes_[v].name == name) return v;
  fail(Errc::InvalidArgument, "unknown node '" + name + "'");
}

int ArchitectureGraph::edge_index(const std::string& name) const {
  for (int e = 0; e < num_edges(); ++e)
    if (edges_[e].name == name) return e;
  fail(Errc::InvalidArgument, "unknown edge '" + name + "'");
}

void ArchitectureGraph::validate() {
  require(num_nodes() > 0, Errc::NoInputOrOutput, "graph has no nodes");

  // Kahn's algorithm; leftover nodes sit on a cycle.
  std::vector<int> indeg(num_nodes(), 0);
  for (const auto& e : edges_) ++indeg[e.target];
  topo_.clear();
  std::vector<int> queue;
  for (int v = 0; v < num_nodes(); ++v)
    if (indeg[v] == 0) queue.push_back(v);
  while (!queue.empty()) {
    int v = queue.front();
    queue.erase(queue.begin());
    topo_.push_back(v);
    for (int e : out_edges_[v])
      if (--indeg[edges_[e].target] == 0) queue.push_back(edges_[e].target);
  }
  if (static_cast<int>(topo_.size()) != num_nodes()) {
    for (int v = 0; v < num_nodes(); ++v)
      if (indeg[v] > 0)
        fail(Errc::CycleDetected, "cycle through node '" + nodes_[v].name + "'");
  }

  inputs_.clear();
  outputs_.clear();
  for (int v = 0; v < num_nodes(); ++v) {
    bool in = in_edges_[v].empty();
    bool out = out_edges_[v].empty();
    if (in && out)
      fail(Errc::UnreachableNode, "node '" + nodes_[v].name + "' is isolated");
    nodes_[v].kind = in ? NodeKind::Input : (out ? NodeKind::Output : NodeKind::Hidden);
    if (in) inputs_.push_back(v);
    if (out) outputs_.push_back(v);
  }
  require(!inputs_.empty() && !outputs_.empty(), Errc::NoInputOrOutput,
          "graph needs at least one input and one output node");

  // Forward closure of inputs and backward closure of outputs; membership in
  // both means the node lies on some input-to-output path.
  std::vector<char> fwd(num_nodes(), 0), bwd(num_nodes(), 0);
  for (int v : inputs_) fwd[v] = 1;
  for (int v : topo_)
    if (fwd[v])
      for (int e : out_edges_[v]) fwd[edges_[e].target] = 1;
  for (int v : outputs_) bwd[v] = 1;
  for (auto it = topo_.rbegin(); it != topo_.rend(); ++it)
    if (bwd[*it])
      for (int e : in_edges_[*it]) bwd[edges_[e].source] = 1;
  for (int v = 0; v < num_nodes(); ++v)
    if (!fwd[v] || !bwd[v])
      fail(Errc::UnreachableNode,
           "node '" + nodes_[v].name + "' lies on no input-to-output path");

  validated_ = true;
}

const std::vector<int>& ArchitectureGraph::topo_order() const {
  require(validated_, Errc::InvalidArgument, "graph not validated");
  return topo_;
}
const std::vector<int>& ArchitectureGraph::input_nodes() const {
  require(validated_, Errc::InvalidArgument, "graph not validated");
  return inputs_;
}
const std::vector<int>& ArchitectureGraph::output_nodes() const {
  require(validated_, Errc::InvalidArgument, "graph not validated");
  return outputs_;
}

SplitPath split_path(const ArchitectureGraph& g, const Path& p, int edge) {
  auto it = std::find(p.edges.begin(), p.edges.end(), edge);
  if (it == p.edges.end())
    fail(Errc::EdgeNotOnPath,
         "edge '" + g.edge(edge).name + "' is not on the path");
  SplitPath out;
  out.before.source = p.source;
  out.before.target = g.edge(edge).source;
  out.before.edges.assign(p.edges.begin(), it);
  out.after.source = g.edge(edge).target;
  out.after.target = p.target;
  out.after.edges.assign(it + 1, p.edges.end());
  return out;
}

Matrix path_weight_product(const ArchitectureGraph& g, const Path& p,
                           const std::vector<Matrix>& weights) {
  require(static_cast<int>(weights.size()) == g.num_edges(),
          Errc::DimensionMismatch, "one weight matrix per edge required");
  if (p.empty()) {
    require(p.source == p.target && p.source >= 0, Errc::InvalidArgument,
            "empty path needs a single anchor node");
    return Matrix::Identity(g.node(p.source).width, g.node(p.source).width);
  }
  Matrix acc = weights[p.edges.front()];
  int at = g.edge(p.edges.front()).target;
  for (std::size_t i = 1; i < p.edges.size(); ++i) {
    int e = p.edges[i];
    require(g.edge(e).source == at, Errc::InvalidArgument,
            "path edges are not contiguous");
    acc = weights[e] * acc;
    at = g.edge(e).target;
  }
  return acc;
}

namespace {

// Deduplicates subpaths by edge sequence (empty ones by anchor node) and
// guarantees parents get smaller ids than children.
struct SubpathBuilder {
  const ArchitectureGraph& g;
  std::vector<Subpath> table;
  std::map<std::vector<int>, int> by_edges;
  std::map<int, int> empty_by_node;

  int empty_at(int node) {
    auto it = empty_by_node.find(node);
    if (it != empty_by_node.end()) return it->second;
    Subpath s;
    s.source = s.target = node;
    table.push_back(std::move(s));
    int id = static_cast<int>(table.size()) - 1;
    empty_by_node[node] = id;
    return id;
  }

  int prefix(const Path& p, int len) {
    if (len == 0) return empty_at(p.source);
    std::vector<int> key(p.edges.begin(), p.edges.begin() + len);
    auto it = by_edges.find(key);
    if (it != by_edges.end()) return it->second;
    int par = prefix(p, len - 1);
    Subpath s;
    s.edges = key;
    s.source = p.source;
    s.target = g.edge(key.back()).target;
    s.parent = par;
    s.grow_edge = key.back();
    s.grow_left = true;
    table.push_back(std::move(s));
    int id = static_cast<int>(table.size()) - 1;
    by_edges[table[id].edges] = id;
    return id;
  }

  int suffix(const Path& p, int start) {
    int len = static_cast<int>(p.edges.size());
    if (start == len) return empty_at(p.target);
    std::vector<int> key(p.edges.begin() + start, p.edges.end());
    auto it = by_edges.find(key);
    if (it != by_edges.end()) return it->second;
    int par = suffix(p, start + 1);
    Subpath s;
    s.edges = key;
    s.source = g.edge(key.front()).source;
    s.target = p.target;
    s.parent = par;
    s.grow_edge = key.front();
    s.grow_left = false;
    table.push_back(std::move(s));
    int id = static_cast<int>(table.size()) - 1;
    by_edges[table[id].edges] = id;
    return id;
  }
};

void dfs_paths(const ArchitectureGraph& g, int at, Path& cur,
               std::vector<Path>& out, std::size_t max_paths) {
  if (g.node(at).kind == NodeKind::Output) {
    if (out.size() >= max_paths)
      fail(Errc::PathExplosion,
           "more than " + std::to_string(max_paths) + " paths");
    cur.target = at;
    out.push_back(cur);
    return;
  }
  std::vector<int> edges = g.out_edges(at);
  std::sort(edges.begin(), edges.end());
  for (int e : edges) {
    cur.edges.push_back(e);
    dfs_paths(g, g.edge(e).target, cur, out, max_paths);
    cur.edges.pop_back();
  }
}

}  // namespace

PathTables enumerate_paths(const ArchitectureGraph& g, std::size_t max_paths) {
  require(g.validated(), Errc::InvalidArgument,
          "enumerate_paths needs a validated graph");
  PathTables t;
  for (int v : g.input_nodes()) {
    Path cur;
    cur.source = v;
    dfs_paths(g, v, cur, t.paths, max_paths);
  }

  t.through_edge.assign(g.num_edges(), {});
  t.into_node.assign(g.num_nodes(), {});
  for (int p = 0; p < t.num_paths(); ++p) {
    for (int e : t.paths[p].edges) t.through_edge[e].push_back(p);
    t.into_node[t.paths[p].target].push_back(p);
  }

  SubpathBuilder b{g, {}, {}, {}};
  t.splits.resize(t.paths.size());
  t.whole.resize(t.paths.size());
  for (int p = 0; p < t.num_paths(); ++p) {
    const Path& path = t.paths[p];
    int len = static_cast<int>(path.edges.size());
    t.splits[p].resize(len);
    for (int k = 0; k < len; ++k) {
      t.splits[p][k].before = b.prefix(path, k);
      t.splits[p][k].after = b.suffix(path, k + 1);
    }
    t.whole[p] = b.prefix(path, len);
  }
  t.subpaths = std::move(b.table);
  return t;
}

std::vector<Matrix> eval_subpath_products(const ArchitectureGraph& g,
                                          const PathTables& tables,
                                          const std::vector<Matrix>& weights) {
  std::vector<Matrix> out;
  eval_subpath_products(g, tables, weights, out);
  return out;
}

void eval_subpath_products(const ArchitectureGraph& g, const PathTables& tables,
                           const std::vector<Matrix>& weights,
                           std::vector<Matrix>& out,
                           const std::vector<char>* needed) {
  require(static_cast<int>(weights.size()) == g.num_edges(),
          Errc::DimensionMismatch, "one weight matrix per edge required");
  out.resize(tables.subpaths.size());
  for (std::size_t i = 0; i < tables.subpaths.size(); ++i) {
    if (needed != nullptr && !(*needed)[i]) continue;
    const Subpath& s = tables.subpaths[i];
    if (s.parent < 0) {
      const int w = g.node(s.source).width;
      if (out[i].rows() != w || out[i].cols() != w)
        out[i] = Matrix::Identity(w, w);
    } else if (s.grow_left) {
      out[i].noalias() = weights[s.grow_edge] * out[s.parent];
    } else {
      out[i].noalias() = out[s.parent] * weights[s.grow_edge];
    }
  }
}

std::vector<char> subpath_closure(const PathTables& tables,
                                  const std::vector<int>& roots) {
  std::vector<char> needed(tables.subpaths.size(), 0);
  for (int r : roots) {
    for (int i = r; i >= 0 && !needed[i]; i = tables.subpaths[i].parent)
      needed[i] = 1;
  }
  return needed;
}

}  // namespace gdln
