#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "gdln/analysis.hpp"
#include "gdln/dataset.hpp"
#include "gdln/dynamics.hpp"
#include "gdln/graph.hpp"
#include "gdln/io.hpp"
#include "gdln/reduction.hpp"

namespace gdln {

// ---------------------------------------------------------------------------
// Verification checks. Each runs a pinned configuration with tolerances fixed
// in code and reports one pass/fail line; none of them write files.

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

CheckResult check_reduction_exactness();     // full vs reduced routing losses
CheckResult check_gradient_oracle();         // analytic vs finite differences
CheckResult check_conservation();            // M*B1^2 - B2^2 drift under Euler
CheckResult check_singular_value_ratios();   // sqrt(M) routing and P^(1/4) race
CheckResult check_xor_closed_form();         // sim vs sigmoid; relu envelope
CheckResult check_contextual_convergence();  // always-on / context-gated maps
CheckResult check_zero_shot_threshold();     // trained-route fraction sweep
CheckResult check_rich_lazy_transition();    // init-scale sweep endpoints
CheckResult check_transform_bench();         // classification transfer ratios

// Fast structural and algebraic invariants across all modules.
std::vector<CheckResult> invariant_suite();

// The `verify` subcommand body: invariants plus the pinned checks for the
// first six acceptance-style claims (quick mode keeps only the fast ones).
// Prints one line per check to `os` and returns true when everything passed.
bool run_verify(bool quick, std::ostream& os,
                std::vector<CheckResult>* results = nullptr);

// ---------------------------------------------------------------------------
// Shared experiment helpers.

// Raw spectrum of the four-item hierarchy: singular values of (1/4) Y X^T and
// the diagonal of the conjugated input covariance (exactly 1/4 per mode).
struct HierarchySpectrum {
  Vector S, D;  // one entry per mode
  Matrix U, V;  // frames fixed by the deterministic SVD
};
HierarchySpectrum hierarchy_raw_stats(std::uint64_t seed = 0);

// End-of-training summaries for the route-grid tasks.
struct RoutingAnalysis {
  double sv_ratio = 0.0;  // top SV of the shared hidden map over the mean
                          // top SV of the per-domain input maps
  double sharing = 0.0;   // cross-domain same-item cosine at the first hidden
  KernelMatrix rsm;
  GeneralizationReport report;
};
RoutingAnalysis analyze_routing(const RoutingTask& task, const WeightState& w);

// Runs fn(0..n-1) on a pool of `workers` threads; rethrows the first failure.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

// ---------------------------------------------------------------------------
// CLI subcommand bodies. Each writes CSV artifacts plus a manifest under
// <out_dir>/<experiment>/ and returns a process exit code.

struct CliOptions {
  std::string config_path;             // empty: built-in defaults
  std::string out_dir = "runs";
  std::vector<std::uint64_t> seeds;    // empty: per-command defaults
  int parallel = 1;
  bool quick = false;
};

int cmd_xor(const CliOptions& opt);
int cmd_routing(const CliOptions& opt);
int cmd_race(const CliOptions& opt);
int cmd_init_sweep(const CliOptions& opt);
int cmd_transform_bench(const CliOptions& opt);
int cmd_verify(const CliOptions& opt);

}  // namespace gdln
