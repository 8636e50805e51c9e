#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "gdln/common.hpp"

namespace gdln {

enum class NodeKind { Input, Hidden, Output };

struct NodeSpec {
  std::string name;
  int width = 0;
  NodeKind kind = NodeKind::Hidden;  // derived by validate()
};

struct EdgeSpec {
  std::string name;
  int source = -1;
  int target = -1;
};

// Directed acyclic multigraph of weight matrices between activity nodes.
// Roles are structural: nodes without incoming edges are inputs, nodes
// without outgoing edges are outputs.
class ArchitectureGraph {
 public:
  int add_node(const std::string& name, int width);
  int add_edge(const std::string& name, const std::string& source,
               const std::string& target);
  int add_edge(const std::string& name, int source, int target);

  // Checks acyclicity, presence of inputs and outputs, and that every node
  // lies on some input-to-output path. Must be called before traversal.
  void validate();
  bool validated() const { return validated_; }

  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int num_edges() const { return static_cast<int>(edges_.size()); }
  const NodeSpec& node(int v) const { return nodes_.at(v); }
  const EdgeSpec& edge(int e) const { return edges_.at(e); }
  int node_index(const std::string& name) const;
  int edge_index(const std::string& name) const;

  int edge_rows(int e) const { return nodes_[edges_[e].target].width; }
  int edge_cols(int e) const { return nodes_[edges_[e].source].width; }

  const std::vector<int>& in_edges(int v) const { return in_edges_.at(v); }
  const std::vector<int>& out_edges(int v) const { return out_edges_.at(v); }
  const std::vector<int>& topo_order() const;  // nodes, ancestors first
  const std::vector<int>& input_nodes() const;
  const std::vector<int>& output_nodes() const;

 private:
  std::vector<NodeSpec> nodes_;
  std::vector<EdgeSpec> edges_;
  std::vector<std::vector<int>> in_edges_, out_edges_;
  std::vector<int> topo_, inputs_, outputs_;
  bool validated_ = false;
};

inline void validate_graph(ArchitectureGraph& g) { g.validate(); }

// Contiguous edge sequence. Covers full input-to-output paths as well as the
// pieces a path splits into; an empty sequence anchors at a single node.
struct Path {
  std::vector<int> edges;
  int source = -1;
  int target = -1;
  bool empty() const { return edges.empty(); }
};

struct SplitPath {
  Path after;   // edges past the split edge, ends at the path target
  Path before;  // edges ahead of the split edge, starts at the path source
};

SplitPath split_path(const ArchitectureGraph& g, const Path& p, int edge);

// Product of edge weights along the path, later edges on the left. Empty
// paths give the identity on their anchor node.
Matrix path_weight_product(const ArchitectureGraph& g, const Path& p,
                           const std::vector<Matrix>& weights);

// A distinct edge sequence shared by one or more (path, position) splits.
// Products are evaluated incrementally: each subpath extends its parent by
// one edge, so the whole table costs one matrix product per entry.
struct Subpath {
  std::vector<int> edges;
  int source = -1;
  int target = -1;
  int parent = -1;     // -1 marks an empty subpath (identity)
  int grow_edge = -1;
  bool grow_left = false;  // true: W[grow_edge] * parent, false: parent * W[grow_edge]
};

struct PathSplit {
  int after = -1;   // subpath id
  int before = -1;  // subpath id
};

struct PathTables {
  std::vector<Path> paths;                     // lexicographic by edge indices
  std::vector<std::vector<int>> through_edge;  // edge -> paths containing it
  std::vector<std::vector<int>> into_node;     // node -> paths ending there
  std::vector<Subpath> subpaths;               // parents precede children
  std::vector<std::vector<PathSplit>> splits;  // [path][position in path]
  std::vector<int> whole;                      // path -> subpath spanning it

  int num_paths() const { return static_cast<int>(paths.size()); }
};

// Enumerates every input-to-output path and the deduplicated split table.
// Throws PathExplosion beyond max_paths.
PathTables enumerate_paths(const ArchitectureGraph& g,
                           std::size_t max_paths = 100000);

// Products for all subpaths, indexed like tables.subpaths.
std::vector<Matrix> eval_subpath_products(const ArchitectureGraph& g,
                                          const PathTables& tables,
                                          const std::vector<Matrix>& weights);

// In-place variant for tight loops: reuses the storage in `out` across calls.
// When `needed` is given, entries with needed[i] == 0 are left untouched
// (their parents must be marked too; see subpath_closure).
void eval_subpath_products(const ArchitectureGraph& g, const PathTables& tables,
                           const std::vector<Matrix>& weights,
                           std::vector<Matrix>& out,
                           const std::vector<char>* needed = nullptr);

// Marks the subpaths reachable from `roots` through parent links, i.e. the
// minimal set eval_subpath_products must compute to make the roots valid.
std::vector<char> subpath_closure(const PathTables& tables,
                                  const std::vector<int>& roots);

}  // namespace gdln
