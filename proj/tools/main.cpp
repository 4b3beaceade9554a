#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Carved-octree meshing, matrix-free FEM and study drivers"};
  app.require_subcommand(1);
  std::string config_path;
  carve::app::GlobalOptions opts;
  std::string out;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", out, "Output directory");
  app.add_option("--workers", opts.workers, "Worker threads driving the simulated ranks")->check(CLI::PositiveNumber);
  app.add_option("--seed", opts.seed, "Seed for randomized inputs");
  const char* commands[][2] = {
      {"mesh", "Build the balanced carved tree; write tree, nodes, VTU and partition stats"},
      {"solve", "Solve the manufactured Poisson problem; write solution VTU and report"},
      {"convergence", "Manufactured-solution convergence study"},
      {"condition", "Channel condition-number study"},
      {"dof-compare", "Carved versus immersed element and DOF counts"},
      {"sdf-study", "Boundary-node signed distance per level"},
      {"matvec-bench", "Matrix-free matvec timing by phase"},
  };
  for (const auto& c : commands) app.add_subcommand(c[0], c[1])->fallthrough();
  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const carve::app::RunConfig cfg = config_path.empty()
                                          ? carve::app::parse_config(carve::app::default_config(command), "<default>")
                                          : carve::app::load_config(config_path);
    opts.out = !out.empty() ? out : !cfg.output_dir.empty() ? cfg.output_dir : ".";
    return carve::app::run_command(command, cfg, opts, std::cout);
  } catch (const carve::app::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
