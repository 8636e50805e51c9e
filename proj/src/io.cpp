#include "gdln/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace gdln {

namespace {

using nlohmann::json;

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(Errc::IoError, "cannot open '" + path + "' for writing");
  out << std::setprecision(17);
  return out;
}

std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> toks;
  std::string t;
  while (ss >> t) {
    if (t[0] == '#') break;
    toks.push_back(t);
  }
  return toks;
}

double parse_number(const std::string& tok, int lineno) {
  try {
    std::size_t used = 0;
    double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    fail(Errc::ParseError,
         "line " + std::to_string(lineno) + ": expected a number, got '" +
             tok + "'");
  }
}

int parse_int(const std::string& tok, int lineno) {
  double v = parse_number(tok, lineno);
  int i = static_cast<int>(v);
  if (static_cast<double>(i) != v)
    fail(Errc::ParseError,
         "line " + std::to_string(lineno) + ": expected an integer, got '" +
             tok + "'");
  return i;
}

}  // namespace

// --------------------------------------------------------------- graph text

ArchitectureGraph parse_graph(const std::string& text) {
  ArchitectureGraph g;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = tokenize(line);
    if (toks.empty()) continue;
    if (toks[0] == "node") {
      if (toks.size() != 3)
        fail(Errc::ParseError, "line " + std::to_string(lineno) +
                                   ": expected 'node <name> <width>'");
      g.add_node(toks[1], parse_int(toks[2], lineno));
    } else if (toks[0] == "edge") {
      if (toks.size() != 4)
        fail(Errc::ParseError,
             "line " + std::to_string(lineno) +
                 ": expected 'edge <name> <source> <target>'");
      g.add_edge(toks[1], toks[2], toks[3]);
    } else {
      fail(Errc::ParseError, "line " + std::to_string(lineno) +
                                 ": unknown directive '" + toks[0] + "'");
    }
  }
  g.validate();
  return g;
}

ArchitectureGraph load_graph(const std::string& path) {
  return parse_graph(slurp(path));
}

std::string format_graph(const ArchitectureGraph& g) {
  std::ostringstream out;
  out << "# nodes: name width (kinds are derived from connectivity)\n";
  for (int v = 0; v < g.num_nodes(); ++v)
    out << "node " << g.node(v).name << " " << g.node(v).width << "\n";
  out << "# edges: name source target\n";
  for (int e = 0; e < g.num_edges(); ++e)
    out << "edge " << g.edge(e).name << " " << g.node(g.edge(e).source).name
        << " " << g.node(g.edge(e).target).name << "\n";
  return out.str();
}

void save_graph(const std::string& path, const ArchitectureGraph& g) {
  open_out(path) << format_graph(g);
}

// ------------------------------------------------------------ dataset files

void save_dataset(const std::string& prefix, const ArchitectureGraph& g,
                  const GatedDataset& data,
                  const std::vector<std::uint64_t>& seeds) {
  {
    auto out = open_out(prefix + ".examples.tsv");
    for (const auto& ex : data.examples) {
      out << ex.weight;
      for (const auto& x : ex.inputs)
        for (Eigen::Index i = 0; i < x.size(); ++i) out << "\t" << x[i];
      for (const auto& y : ex.targets)
        for (Eigen::Index i = 0; i < y.size(); ++i) out << "\t" << y[i];
      out << "\n";
    }
  }
  {
    auto out = open_out(prefix + ".gates.tsv");
    for (const auto& ex : data.examples) {
      bool first = true;
      auto emit = [&](double v) {
        if (!first) out << "\t";
        out << v;
        first = false;
      };
      for (int v = 0; v < g.num_nodes(); ++v)
        emit(ex.gates.node_gate(v));
      for (int e = 0; e < g.num_edges(); ++e)
        emit(ex.gates.edge_gate(e));
      out << "\n";
    }
  }
  if (data.route_mask.size() > 0) {
    auto out = open_out(prefix + ".routes.tsv");
    for (Eigen::Index i = 0; i < data.route_mask.rows(); ++i) {
      for (Eigen::Index j = 0; j < data.route_mask.cols(); ++j)
        out << (j ? "\t" : "") << data.route_mask(i, j);
      out << "\n";
    }
  }
  json manifest;
  manifest["format"] = "gdln-dataset-v1";
  manifest["examples"] = data.examples.size();
  manifest["seeds"] = seeds;
  json inputs = json::array(), outputs = json::array();
  for (int v : g.input_nodes())
    inputs.push_back({{"node", g.node(v).name}, {"width", g.node(v).width}});
  for (int v : g.output_nodes())
    outputs.push_back({{"node", g.node(v).name}, {"width", g.node(v).width}});
  manifest["example_columns"] = {{"weight", 1},
                                 {"inputs", inputs},
                                 {"targets", outputs}};
  json gate_nodes = json::array(), gate_edges = json::array();
  for (int v = 0; v < g.num_nodes(); ++v) gate_nodes.push_back(g.node(v).name);
  for (int e = 0; e < g.num_edges(); ++e) gate_edges.push_back(g.edge(e).name);
  manifest["gate_columns"] = {{"nodes", gate_nodes}, {"edges", gate_edges}};
  manifest["has_route_mask"] = data.route_mask.size() > 0;
  open_out(prefix + ".manifest.json") << manifest.dump(2) << "\n";
}

GatedDataset load_dataset(const std::string& prefix,
                          const ArchitectureGraph& g) {
  GatedDataset data;
  std::istringstream exin(slurp(prefix + ".examples.tsv"));
  std::string line;
  int lineno = 0;
  while (std::getline(exin, line)) {
    ++lineno;
    auto toks = tokenize(line);
    if (toks.empty()) continue;
    GatedExample ex;
    std::size_t at = 0;
    auto next = [&]() {
      if (at >= toks.size())
        fail(Errc::ParseError, "examples line " + std::to_string(lineno) +
                                   ": too few columns");
      return parse_number(toks[at++], lineno);
    };
    ex.weight = next();
    for (int v : g.input_nodes()) {
      Vector x(g.node(v).width);
      for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = next();
      ex.inputs.push_back(std::move(x));
    }
    for (int v : g.output_nodes()) {
      Vector y(g.node(v).width);
      for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = next();
      ex.targets.push_back(std::move(y));
    }
    if (at != toks.size())
      fail(Errc::ParseError, "examples line " + std::to_string(lineno) +
                                 ": too many columns");
    data.examples.push_back(std::move(ex));
  }

  std::istringstream gin(slurp(prefix + ".gates.tsv"));
  std::size_t row = 0;
  lineno = 0;
  while (std::getline(gin, line)) {
    ++lineno;
    auto toks = tokenize(line);
    if (toks.empty()) continue;
    if (row >= data.examples.size())
      fail(Errc::ParseError, "gates file has more rows than examples");
    if (toks.size() != static_cast<std::size_t>(g.num_nodes() + g.num_edges()))
      fail(Errc::ParseError, "gates line " + std::to_string(lineno) +
                                 ": expected " +
                                 std::to_string(g.num_nodes() + g.num_edges()) +
                                 " columns");
    GateAssignment& gates = data.examples[row].gates;
    gates.node_gates.resize(g.num_nodes());
    gates.edge_gates.resize(g.num_edges());
    for (int v = 0; v < g.num_nodes(); ++v)
      gates.node_gates[v] = parse_number(toks[v], lineno);
    for (int e = 0; e < g.num_edges(); ++e)
      gates.edge_gates[e] = parse_number(toks[g.num_nodes() + e], lineno);
    ++row;
  }
  if (row != data.examples.size())
    fail(Errc::ParseError, "gates file has fewer rows than examples");

  std::ifstream rin(prefix + ".routes.tsv");
  if (rin) {
    std::vector<std::vector<int>> rows;
    lineno = 0;
    while (std::getline(rin, line)) {
      ++lineno;
      auto toks = tokenize(line);
      if (toks.empty()) continue;
      std::vector<int> r;
      for (const auto& t : toks) r.push_back(parse_int(t, lineno));
      if (!rows.empty() && rows.front().size() != r.size())
        fail(Errc::ParseError, "route mask rows are ragged");
      rows.push_back(std::move(r));
    }
    if (!rows.empty()) {
      data.route_mask.resize(rows.size(), rows.front().size());
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows.front().size(); ++j)
          data.route_mask(i, j) = rows[i][j];
    }
  }
  data.validate(g);
  return data;
}

// ----------------------------------------------------------- CSV exporters

void save_series_csv(const std::string& path,
                     const std::vector<std::string>& columns,
                     const std::vector<std::vector<double>>& series) {
  require(columns.size() == series.size(), Errc::InvalidArgument,
          "one label per column required");
  std::size_t n = series.empty() ? 0 : series.front().size();
  for (const auto& s : series)
    require(s.size() == n, Errc::InvalidArgument, "ragged series");
  auto out = open_out(path);
  for (std::size_t c = 0; c < columns.size(); ++c)
    out << (c ? "," : "") << columns[c];
  out << "\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < series.size(); ++c)
      out << (c ? "," : "") << series[c][i];
    out << "\n";
  }
}

void save_trajectory_csv(const std::string& path, const Trajectory& traj,
                         const ArchitectureGraph& g) {
  std::vector<std::string> cols = {"time", "loss"};
  std::vector<std::vector<double>> series = {traj.times, traj.losses};
  if (!traj.edge_top_sv.empty() && traj.sv_times == traj.times) {
    for (int e = 0; e < g.num_edges(); ++e) {
      cols.push_back("sv_top:" + g.edge(e).name);
      std::vector<double> s;
      s.reserve(traj.edge_top_sv.size());
      for (const auto& row : traj.edge_top_sv) s.push_back(row[e]);
      series.push_back(std::move(s));
    }
  }
  if (!traj.conserved_drift.empty() && traj.conserved_times == traj.times) {
    for (std::size_t k = 0; k < traj.conserved_nodes.size(); ++k) {
      cols.push_back("balance_drift:" +
                     g.node(traj.conserved_nodes[k]).name);
      std::vector<double> s;
      s.reserve(traj.conserved_drift.size());
      for (const auto& row : traj.conserved_drift) s.push_back(row[k]);
      series.push_back(std::move(s));
    }
  }
  save_series_csv(path, cols, series);
}

void save_reduced_csv(const std::string& path, const ReducedTrajectory& traj,
                      const ArchitectureGraph& g) {
  std::vector<std::string> cols = {"time", "loss"};
  std::vector<std::vector<double>> series = {traj.times, traj.losses};
  if (!traj.b_log.empty()) {
    const auto& first = traj.b_log.front();
    for (int e = 0; e < g.num_edges(); ++e) {
      for (Eigen::Index m = 0; m < first[e].size(); ++m) {
        cols.push_back("b:" + g.edge(e).name + ":mode" + std::to_string(m));
        std::vector<double> s;
        s.reserve(traj.b_log.size());
        for (const auto& snap : traj.b_log) s.push_back(snap[e][m]);
        series.push_back(std::move(s));
      }
    }
  }
  save_series_csv(path, cols, series);
}

void save_routing_csv(const std::string& path,
                      const RoutingTrajectory& traj) {
  std::vector<std::string> cols = {"time"};
  std::vector<std::vector<double>> series = {traj.times};
  auto add = [&](const std::string& name,
                 const std::vector<Vector>& block) {
    if (block.empty()) return;
    for (Eigen::Index m = 0; m < block.front().size(); ++m) {
      cols.push_back(name + ":mode" + std::to_string(m));
      std::vector<double> s;
      s.reserve(block.size());
      for (const auto& v : block) s.push_back(v[m]);
      series.push_back(std::move(s));
    }
  };
  add("b1", traj.b1);
  add("b2", traj.b2);
  add("b3", traj.b3);
  save_series_csv(path, cols, series);
}

void save_matrix_csv(const std::string& path, const Matrix& m,
                     const std::vector<std::string>& row_labels,
                     const std::vector<std::string>& col_labels) {
  require(static_cast<Eigen::Index>(row_labels.size()) == m.rows() &&
              static_cast<Eigen::Index>(col_labels.size()) == m.cols(),
          Errc::InvalidArgument, "label counts must match the matrix shape");
  auto out = open_out(path);
  out << "row";
  for (const auto& c : col_labels) out << "," << c;
  out << "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << row_labels[i];
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << "," << m(i, j);
    out << "\n";
  }
}

void save_kernel_csv(const std::string& path, const KernelMatrix& kernel) {
  std::vector<std::string> labels;
  labels.reserve(kernel.labels.size());
  for (const auto& [d, i] : kernel.labels)
    labels.push_back("d" + std::to_string(d) + ":i" + std::to_string(i));
  save_matrix_csv(path, kernel.k, labels, labels);
}

// --------------------------------------------------------- weight snapshots

void save_weights(const std::string& path, const ArchitectureGraph& g,
                  const WeightState& w) {
  require(static_cast<int>(w.weights.size()) == g.num_edges(),
          Errc::DimensionMismatch, "one matrix per edge required");
  auto out = open_out(path);
  out << "time " << w.time << "\n";
  for (int e = 0; e < g.num_edges(); ++e) {
    const Matrix& m = w.weights[e];
    out << "matrix " << g.edge(e).name << " " << m.rows() << " " << m.cols()
        << "\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        out << (j ? " " : "") << m(i, j);
      out << "\n";
    }
  }
}

WeightState load_weights(const std::string& path,
                         const ArchitectureGraph& g) {
  std::istringstream in(slurp(path));
  WeightState w;
  w.weights.assign(g.num_edges(), Matrix());
  std::string line;
  int lineno = 0;
  int pending_edge = -1;
  Eigen::Index pending_row = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = tokenize(line);
    if (toks.empty()) continue;
    if (pending_edge >= 0) {
      Matrix& m = w.weights[pending_edge];
      if (toks.size() != static_cast<std::size_t>(m.cols()))
        fail(Errc::ParseError, "line " + std::to_string(lineno) +
                                   ": expected " + std::to_string(m.cols()) +
                                   " values");
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        m(pending_row, j) = parse_number(toks[j], lineno);
      if (++pending_row == m.rows()) pending_edge = -1;
      continue;
    }
    if (toks[0] == "time" && toks.size() == 2) {
      w.time = parse_number(toks[1], lineno);
    } else if (toks[0] == "matrix" && toks.size() == 4) {
      int e = g.edge_index(toks[1]);
      int rows = parse_int(toks[2], lineno);
      int cols = parse_int(toks[3], lineno);
      require(rows == g.edge_rows(e) && cols == g.edge_cols(e),
              Errc::DimensionMismatch,
              "snapshot shape disagrees with the graph for edge '" + toks[1] +
                  "'");
      w.weights[e].resize(rows, cols);
      pending_edge = e;
      pending_row = 0;
    } else {
      fail(Errc::ParseError, "line " + std::to_string(lineno) +
                                 ": unknown directive '" + toks[0] + "'");
    }
  }
  if (pending_edge >= 0)
    fail(Errc::ParseError, "snapshot ends mid-matrix");
  for (int e = 0; e < g.num_edges(); ++e)
    require(w.weights[e].size() > 0, Errc::ParseError,
            "snapshot is missing edge '" + g.edge(e).name + "'");
  return w;
}

// ------------------------------------------------------------- config files

namespace {
std::shared_ptr<const void> parse_config(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) fail(Errc::ParseError, "config is not valid JSON");
  if (!j.is_object()) fail(Errc::ParseError, "config root must be an object");
  return std::make_shared<const json>(std::move(j));
}

const json* find_key(const std::shared_ptr<const void>& parsed,
                     const std::vector<std::string>& aliases) {
  const json& j = *static_cast<const json*>(parsed.get());
  for (const auto& a : aliases)
    if (j.contains(a)) return &j.at(a);
  return nullptr;
}

std::string alias_label(const std::vector<std::string>& aliases) {
  return aliases.empty() ? std::string("<unnamed>") : aliases.front();
}
}  // namespace

ConfigFile::ConfigFile(const std::string& path)
    : raw_(slurp(path)), parsed_(parse_config(raw_)) {}

ConfigFile ConfigFile::from_text(const std::string& text) {
  ConfigFile c;
  c.raw_ = text.empty() ? "{}" : text;
  c.parsed_ = parse_config(c.raw_);
  return c;
}

bool ConfigFile::has(const std::vector<std::string>& aliases) const {
  return find_key(parsed_, aliases) != nullptr;
}

double ConfigFile::number(const std::vector<std::string>& aliases,
                          double fallback) const {
  const json* v = find_key(parsed_, aliases);
  if (!v) return fallback;
  require(v->is_number(), Errc::ParseError,
          "config key '" + alias_label(aliases) + "' must be a number");
  return v->get<double>();
}

long ConfigFile::integer(const std::vector<std::string>& aliases,
                         long fallback) const {
  const json* v = find_key(parsed_, aliases);
  if (!v) return fallback;
  require(v->is_number_integer(), Errc::ParseError,
          "config key '" + alias_label(aliases) + "' must be an integer");
  return v->get<long>();
}

std::string ConfigFile::text(const std::vector<std::string>& aliases,
                             const std::string& fallback) const {
  const json* v = find_key(parsed_, aliases);
  if (!v) return fallback;
  require(v->is_string(), Errc::ParseError,
          "config key '" + alias_label(aliases) + "' must be a string");
  return v->get<std::string>();
}

std::vector<double> ConfigFile::grid(const std::vector<std::string>& aliases,
                                     const std::vector<double>& fallback)
    const {
  const json* arr = find_key(parsed_, aliases);
  if (!arr) return fallback;
  require(arr->is_array() && !arr->empty(), Errc::ParseError,
          "config key '" + alias_label(aliases) +
              "' must be a non-empty array");
  std::vector<double> out;
  for (const auto& v : *arr) {
    require(v.is_number(), Errc::ParseError,
            "config key '" + alias_label(aliases) + "' must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

std::vector<std::uint64_t> ConfigFile::seeds(
    const std::vector<std::string>& aliases,
    const std::vector<std::uint64_t>& fallback) const {
  const json* arr = find_key(parsed_, aliases);
  if (!arr) return fallback;
  require(arr->is_array() && !arr->empty(), Errc::ParseError,
          "config key '" + alias_label(aliases) +
              "' must be a non-empty array");
  std::vector<std::uint64_t> out;
  for (const auto& v : *arr) {
    require(v.is_number_unsigned() || v.is_number_integer(), Errc::ParseError,
            "config key '" + alias_label(aliases) + "' must hold integers");
    out.push_back(v.get<std::uint64_t>());
  }
  return out;
}

// -------------------------------------------------------------- run manifest

void RunManifest::add_file(const std::string& path) { files.push_back(path); }

void RunManifest::save(const std::string& path) const {
  json j;
  j["experiment"] = experiment;
  j["status"] = status;
  j["seeds"] = seeds;
  j["wall_time_s"] = wall_time_s;
  j["files"] = files;
  j["config"] =
      config_echo.empty() ? json::object() : json::parse(config_echo);
  open_out(path) << j.dump(2) << "\n";
}

}  // namespace gdln
