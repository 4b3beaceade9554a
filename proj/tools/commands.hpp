#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "carve/partition.hpp"
#include "config.hpp"

namespace carve::app {

struct GlobalOptions {
  std::filesystem::path out = ".";
  int workers = 1;
  std::uint64_t seed = 1;
};

/// A mesh built from a config: leaves per rank, the gathered tree and its nodes.
struct Mesh {
  Carver carver;
  DistributedLeaves dist;
  IncompleteTree tree;
  NodeSet nodes;
};

Carver make_carver(const RunConfig& cfg);
/// Boundary seeds plus config seeds, carved-boundary conforming construction, node
/// enumeration. Throws when the domain is fully carved.
Mesh build_mesh(const RunConfig& cfg, int order, const RankExecutor& exec);
PoissonProblem make_problem(const RunConfig& cfg);

/// Built-in configuration used when a command runs without --config.
std::string default_config(const std::string& command);

int cmd_mesh(const RunConfig& cfg, const GlobalOptions& opts, std::ostream& log);
int cmd_solve(const RunConfig& cfg, const GlobalOptions& opts, std::ostream& log);
int cmd_convergence(const RunConfig& cfg, const GlobalOptions& opts, std::ostream& log);
int cmd_condition(const RunConfig& cfg, const GlobalOptions& opts, std::ostream& log);
int cmd_dof_compare(const RunConfig& cfg, const GlobalOptions& opts, std::ostream& log);
int cmd_sdf_study(const RunConfig& cfg, const GlobalOptions& opts, std::ostream& log);
int cmd_matvec_bench(const RunConfig& cfg, const GlobalOptions& opts, std::ostream& log);

/// Dispatches by command name (`mesh`, `solve`, `convergence`, `condition`, `dof-compare`,
/// `sdf-study`, `matvec-bench`).
int run_command(const std::string& command, const RunConfig& cfg, const GlobalOptions& opts, std::ostream& log);

}  // namespace carve::app
