#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "carve/solver.hpp"
#include "carve/subdomain.hpp"
#include "json.hpp"

namespace carve::app {

/// Config problem with a "origin:line:col: message" text.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BenchSettings {
  int warmup = 5;
  int iterations = 100;
  std::vector<int> orders{1};
  std::vector<int> worker_sweep;
};

/// Everything a command needs. Defaults: rel_tol = abs_tol = 1e-6, load_tol = 0.1.
struct RunConfig {
  int dim = 2;
  int order = 1;
  nlohmann::json shape_spec = {{"kind", "none"}};
  ShapePtr shape;  // null: nothing carved
  DomainMapping mapping;
  int base_level = 3;
  int boundary_level = 5;
  std::vector<Octant> seeds;  // extra refinement seeds
  int ranks = 1;
  double load_tol = 0.1;
  CgOptions solver;
  BoundaryData boundary_data = BoundaryData::Projected;
  bool manufactured = true;

  std::vector<int> levels{3, 4, 5, 6};
  std::vector<int> lengths{1, 2, 4, 8, 16};
  int condition_level = 5;
  int object_level = 7;
  BenchSettings bench;
  std::string output_dir;  // used when --out is not given
};

RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Shape from its JSON description; relative STL paths resolve against `base_dir`.
ShapePtr shape_from_json(const nlohmann::json& spec, const std::filesystem::path& base_dir = {});

}  // namespace carve::app
