#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gdln/analysis.hpp"
#include "gdln/common.hpp"
#include "gdln/dataset.hpp"
#include "gdln/dynamics.hpp"
#include "gdln/graph.hpp"
#include "gdln/reduction.hpp"

namespace gdln {

// ---------------------------------------------------------------------------
// Graph text format (round-trips through save/load):
//   # comment
//   node <name> <width>
//   edge <name> <source> <target>
// Node kinds are derived from connectivity, so they are not stored.

ArchitectureGraph load_graph(const std::string& path);
ArchitectureGraph parse_graph(const std::string& text);
void save_graph(const std::string& path, const ArchitectureGraph& g);
std::string format_graph(const ArchitectureGraph& g);

// ---------------------------------------------------------------------------
// Dataset columnar text format. `prefix` names a file stem; three data files
// plus a manifest are written:
//   <prefix>.examples.tsv   weight, inputs per input node, targets per output
//   <prefix>.gates.tsv      node gates then edge gates, one row per example
//   <prefix>.routes.tsv     route mask (omitted when the dataset has none)
//   <prefix>.manifest.json  graph reference, column layout, seeds
// Gate rows list every node/edge even where gates default to 1, so the files
// stand alone.

void save_dataset(const std::string& prefix, const ArchitectureGraph& g,
                  const GatedDataset& data,
                  const std::vector<std::uint64_t>& seeds = {});
GatedDataset load_dataset(const std::string& prefix,
                          const ArchitectureGraph& g);

// ---------------------------------------------------------------------------
// Trajectory CSV. Always writes time and loss columns; appends per-edge top
// singular values when they were logged on the same grid as the losses, and
// conserved-balance drift columns likewise.

void save_trajectory_csv(const std::string& path, const Trajectory& traj,
                         const ArchitectureGraph& g);
void save_reduced_csv(const std::string& path, const ReducedTrajectory& traj,
                      const ArchitectureGraph& g);
void save_routing_csv(const std::string& path, const RoutingTrajectory& traj);
void save_series_csv(const std::string& path,
                     const std::vector<std::string>& columns,
                     const std::vector<std::vector<double>>& series);

// Labeled-header matrix CSV (kernels, per-route error grids).
void save_matrix_csv(const std::string& path, const Matrix& m,
                     const std::vector<std::string>& row_labels,
                     const std::vector<std::string>& col_labels);
void save_kernel_csv(const std::string& path, const KernelMatrix& kernel);

// ---------------------------------------------------------------------------
// Weight snapshots in a binary-free text format:
//   time <t>
//   matrix <edge_name> <rows> <cols>
//   <rows lines of cols values>

void save_weights(const std::string& path, const ArchitectureGraph& g,
                  const WeightState& w);
WeightState load_weights(const std::string& path, const ArchitectureGraph& g);

// ---------------------------------------------------------------------------
// Experiment configs are JSON. Values may appear under any of the listed
// aliases (caption names and descriptive names are both accepted); the first
// key present wins. Missing keys fall back to the default.

struct ConfigFile {
  explicit ConfigFile(const std::string& path);   // loads and parses
  static ConfigFile from_text(const std::string& text);

  double number(const std::vector<std::string>& aliases, double fallback) const;
  long integer(const std::vector<std::string>& aliases, long fallback) const;
  std::string text(const std::vector<std::string>& aliases,
                   const std::string& fallback) const;
  std::vector<double> grid(const std::vector<std::string>& aliases,
                           const std::vector<double>& fallback) const;
  std::vector<std::uint64_t> seeds(const std::vector<std::string>& aliases,
                                   const std::vector<std::uint64_t>& fallback)
      const;
  bool has(const std::vector<std::string>& aliases) const;

  const std::string& raw() const { return raw_; }

 private:
  ConfigFile() = default;
  std::string raw_;
  std::shared_ptr<const void> parsed_;  // nlohmann::json behind the scenes
};

// ---------------------------------------------------------------------------
// Run manifest: every emitted file is listed, with the config echo and seeds.

struct RunManifest {
  std::string experiment;
  std::string config_echo;  // JSON text of the resolved parameters
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> files;
  double wall_time_s = 0.0;
  std::string status = "ok";

  void add_file(const std::string& path);
  void save(const std::string& path) const;
};

}  // namespace gdln
