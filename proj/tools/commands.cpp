#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>

#include "carve/balance.hpp"
#include "carve/vtu.hpp"

namespace carve::app {

using nlohmann::json;

Carver make_carver(const RunConfig& cfg) { return Carver(cfg.shape ? cfg.shape : make_empty(), cfg.mapping, cfg.dim); }

Mesh build_mesh(const RunConfig& cfg, int order, const RankExecutor& exec) {
  Mesh m{make_carver(cfg), {}, {}, {}};
  std::vector<Octant> seeds = boundary_seeds(m.carver, cfg.base_level, cfg.boundary_level, cfg.dim);
  for (const auto& s : cfg.seeds) {
    if (m.carver(s) != RegionClass::Carved) seeds.push_back(s);
  }
  seeds = tree_sort(std::move(seeds), cfg.dim);
  if (seeds.empty()) throw std::runtime_error("domain fully carved");
  if (cfg.ranks <= 1) {
    m.tree = construct_boundary_conforming(m.carver, seeds, cfg.dim);
    m.dist.dim = cfg.dim;
    m.dist.map = choose_splitters(m.tree.leaves, 1, cfg.load_tol);
    m.dist.ranks = {m.tree.leaves};
    m.nodes = enumerate_nodes(m.tree, order, &m.carver);
  } else {
    m.dist = distributed_construct_boundary_conforming(m.carver, scatter_evenly(seeds, cfg.ranks), cfg.dim, cfg.ranks,
                                                       cfg.load_tol, exec);
    m.tree.dim = cfg.dim;
    m.tree.leaves = m.dist.gather();
    coarsest_covering(m.tree, m.carver);
    if (!is_balanced(m.tree).balanced) throw std::logic_error("distributed construction is not balanced");
    m.nodes = distributed_enumerate_nodes(m.dist, order, &m.carver, exec);
  }
  if (m.tree.empty()) throw std::runtime_error("domain fully carved");
  return m;
}

PoissonProblem make_problem(const RunConfig& cfg) {
  PoissonProblem p;
  p.dim = cfg.dim;
  p.order = cfg.order;
  p.shape = cfg.shape;
  p.mapping = cfg.mapping;
  p.boundary_data = cfg.boundary_data;
  p.base_level = cfg.base_level;
  p.boundary_level = cfg.boundary_level;
  if (cfg.manufactured) {
    p.solution = sine_solution(cfg.dim);
  } else {
    p.solution = {[](const Vec3&) { return 0.0; }, [](const Vec3&) { return 1.0; }};
  }
  return p;
}

namespace {

std::ofstream open_out(const GlobalOptions& opts, const std::string& name) {
  std::filesystem::create_directories(opts.out);
  std::ofstream out(opts.out / name);
  if (!out) throw std::runtime_error("cannot write " + (opts.out / name).string());
  out.precision(17);
  return out;
}

void write_json(const GlobalOptions& opts, const std::string& name, const json& j) { open_out(opts, name) << j.dump(2) << '\n'; }

json report_json(const SolveReport& r) {
  return {{"iterations", r.iterations}, {"relative_residual", r.relative_residual}, {"residual", r.residual},
          {"converged", r.converged},   {"l2", r.l2},                               {"linf", r.linf},
          {"dofs", r.dofs},             {"elements", r.elements},                   {"h", r.h}};
}

}  // namespace

std::string default_config(const std::string& command) {
  if (command == "mesh" || command == "solve") {
    return R"({"dimension": 2, "order": 1,
      "shape": {"kind": "sphere", "center": [0.5, 0.5], "radius": 0.2},
      "refinement": {"base_level": 4, "boundary_level": 7}})";
  }
  if (command == "convergence") {
    return R"({"dimension": 2, "order": 1, "shape": {"kind": "none"},
      "convergence": {"levels": [3, 4, 5, 6]}, "solver": {"rel_tol": 1e-12, "abs_tol": 1e-14}})";
  }
  if (command == "condition") return R"({"condition": {"lengths": [1, 2, 4, 8, 16], "level": 5}})";
  if (command == "dof-compare") {
    return R"({"dimension": 3, "shape": {"kind": "sphere", "center": [5, 5, 5], "radius": 0.5},
      "mapping": {"scale": 10.0}, "dof_compare": {"base_level": 4, "object_level": 7}})";
  }
  if (command == "sdf-study") {
    return R"({"dimension": 3, "shape": {"kind": "sphere", "center": [0.5, 0.5, 0.5], "radius": 0.25},
      "sdf_study": {"levels": [4, 5, 6, 7, 8, 9], "base_level": 3}})";
  }
  if (command == "matvec-bench") {
    return R"({"dimension": 3, "shape": {"kind": "sphere", "center": [0.5, 0.5, 0.5], "radius": 0.25},
      "refinement": {"base_level": 3, "boundary_level": 6}, "ranks": 1,
      "bench": {"warmup": 5, "iterations": 100, "orders": [1, 2]}})";
  }
  throw std::invalid_argument("unknown command '" + command + "'");
}

int cmd_mesh(const RunConfig& cfg, const GlobalOptions& opts, std::ostream& log) {
  const RankExecutor exec(opts.workers);
  const Mesh m = build_mesh(cfg, cfg.order, exec);
  write_tree_binary(m.tree, opts.out / "tree.bin");
  open_out(opts, "tree.json") << tree_to_json(m.tree) << '\n';
  write_nodes_csv(m.nodes, cfg.mapping, opts.out / "nodes.csv");
  write_vtu(opts.out / "mesh.vtu", m.tree, m.nodes, cfg.mapping, &m.carver, {});
  const GhostLayout layout = build_ghost_layout(m.dist, m.nodes, exec);
  const PartitionStats stats = partition_stats(m.dist, layout);
  write_partition_stats_csv(stats, opts.out / "partition.csv");
  std::size_t intercepted = 0;
  for (auto t : m.tree.tags) intercepted += t == RegionClass::RetainBoundary;
  const json summary = {{"elements", m.tree.size()},
                        {"intercepted_elements", intercepted},
                        {"dofs", m.nodes.size()},
                        {"boundary_nodes", m.nodes.boundary_count()},
                        {"finest_level", m.tree.finest_level()},
                        {"ranks", cfg.ranks},
                        {"max_rank_elements", m.dist.map.max_count()},
                        {"load_bound", m.dist.map.load_bound()},
                        {"mean_eta", stats.mean_eta}};
  write_json(opts, "summary.json", summary);
  log << "elements " << m.tree.size() << ", dofs " << m.nodes.size() << ", boundary nodes " << m.nodes.boundary_count()
      << ", finest level " << m.tree.finest_level() << '\n';
  return 0;
}

int cmd_solve(const RunConfig& cfg, const GlobalOptions& opts, std::ostream& log) {
  const RankExecutor exec(opts.workers);
  const PoissonProblem problem = make_problem(cfg);
  const PoissonSolution sol = solve_poisson(problem, cfg.solver, cfg.ranks, cfg.load_tol, exec);
  const Carver carver = make_carver(cfg);
  std::vector<double> err(sol.u.size());
  for (std::size_t i = 0; i < err.size(); ++i) err[i] = sol.u[i] - sol.exact[i];
  std::vector<NodalField> fields{{"u_h", sol.u}, {"g", sol.g}};
  if (cfg.manufactured) {
    fields.push_back({"u_exact", sol.exact});
    fields.push_back({"error", err});
  }
  write_vtu(opts.out / "solution.vtu", sol.tree, sol.nodes, cfg.mapping, &carver, fields);
  json rep = report_json(sol.report);
  if (!cfg.manufactured) {
    rep.erase("l2");
    rep.erase("linf");
  }
  rep["ranks"] = cfg.ranks;
  write_json(opts, "report.json", rep);
  log << "iterations " << sol.report.iterations << ", relative residual " << sol.report.relative_residual;
  if (cfg.manufactured) log << ", L2 " << sol.report.l2 << ", Linf " << sol.report.linf;
  log << '\n';
  return sol.report.converged ? 0 : 1;
}

int cmd_convergence(const RunConfig& cfg, const GlobalOptions& opts, std::ostream& log) {
  const ConvergenceResult res = convergence_study(make_problem(cfg), cfg.levels, cfg.solver);
  auto csv = open_out(opts, "convergence.csv");
  csv << "level,h,dofs,l2,linf\n";
  json rows = json::array();
  for (const auto& r : res.rows) {
    csv << r.level << ',' << r.h << ',' << r.dofs << ',' << r.l2 << ',' << r.linf << '\n';
    rows.push_back({{"level", r.level}, {"h", r.h}, {"dofs", r.dofs}, {"elements", r.elements}, {"l2", r.l2},
                    {"linf", r.linf}, {"iterations", r.iterations}});
  }
  write_json(opts, "convergence.json",
             {{"rows", rows}, {"l2_order", res.l2_order}, {"linf_order", res.linf_order}, {"complete", res.complete},
              {"error", res.error}});
  log << "fitted order: L2 " << std::setprecision(3) << res.l2_order << ", Linf " << res.linf_order << '\n';
  if (!res.complete) {
    log << "study aborted: " << res.error << '\n';
    return 1;
  }
  return 0;
}

int cmd_condition(const RunConfig& cfg, const GlobalOptions& opts, std::ostream& log) {
  const auto rows = channel_condition_study(cfg.lengths, cfg.condition_level);
  auto csv = open_out(opts, "condition.csv");
  csv << "length,variant,dofs,kappa\n";
  json arr = json::array();
  for (const auto& r : rows) {
    csv << r.length << ',' << r.variant << ',' << r.dofs << ',' << r.kappa << '\n';
    arr.push_back({{"length", r.length}, {"variant", r.variant}, {"dofs", r.dofs}, {"kappa", r.kappa}, {"kappa_2", r.kappa_2}});
    log << "length " << r.length << ' ' << r.variant << ": dofs " << r.dofs << ", kappa " << std::fixed
        << std::setprecision(1) << r.kappa << std::defaultfloat << '\n';
  }
  write_json(opts, "condition.json", {{"rows", arr}, {"level", cfg.condition_level}});
  return 0;
}

int cmd_dof_compare(const RunConfig& cfg, const GlobalOptions& opts, std::ostream& log) {
  const Carver carver = make_carver(cfg);
  const DofComparison d = dof_element_comparison(carver, cfg.base_level, cfg.object_level, cfg.order);
  auto csv = open_out(opts, "dof_compare.csv");
  csv << "level,variant,elements,dofs\n";
  csv << cfg.object_level << ",carved," << d.carved.elements << ',' << d.carved.dofs << '\n';
  csv << cfg.object_level << ",immersed," << d.immersed.elements << ',' << d.immersed.dofs << '\n';
  write_json(opts, "dof_compare.json",
             {{"base_level", cfg.base_level},
              {"object_level", cfg.object_level},
              {"carved", {{"elements", d.carved.elements}, {"dofs", d.carved.dofs}}},
              {"immersed", {{"elements", d.immersed.elements}, {"dofs", d.immersed.dofs}}},
              {"f_elem", d.f_elem},
              {"f_dof", d.f_dof}});
  log << "f_elem " << std::setprecision(4) << d.f_elem << ", f_DOF " << d.f_dof << '\n';
  return 0;
}

int cmd_sdf_study(const RunConfig& cfg, const GlobalOptions& opts, std::ostream& log) {
  if (!cfg.shape) throw std::runtime_error("sdf-study needs a shape");
  const Carver carver = make_carver(cfg);
  const auto rows = voxelization_error_study(carver, cfg.levels, cfg.base_level);
  auto csv = open_out(opts, "sdf_study.csv");
  csv << "level,elements,max_abs_distance\n";
  json arr = json::array();
  double ratio_sum = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    csv << r.level << ',' << r.elements << ',' << r.max_abs_distance << '\n';
    arr.push_back({{"level", r.level}, {"elements", r.elements}, {"boundary_nodes", r.boundary_nodes},
                   {"max_abs_distance", r.max_abs_distance}});
    if (i > 0) ratio_sum += r.max_abs_distance / rows[i - 1].max_abs_distance;
    log << "level " << r.level << ": elements " << r.elements << ", max |phi| " << r.max_abs_distance << '\n';
  }
  const double mean_ratio = rows.size() > 1 ? ratio_sum / static_cast<double>(rows.size() - 1) : 0.0;
  write_json(opts, "sdf_study.json", {{"rows", arr}, {"mean_ratio", mean_ratio}});
  return 0;
}

namespace {

struct PhaseStats {
  std::vector<double> samples;
  double mean() const {
    double s = 0;
    for (double v : samples) s += v;
    return samples.empty() ? 0.0 : s / static_cast<double>(samples.size());
  }
  double stddev() const {
    const double m = mean();
    double s = 0;
    for (double v : samples) s += (v - m) * (v - m);
    return samples.size() < 2 ? 0.0 : std::sqrt(s / static_cast<double>(samples.size() - 1));
  }
};

}  // namespace

int cmd_matvec_bench(const RunConfig& cfg, const GlobalOptions& opts, std::ostream& log) {
  auto csv = open_out(opts, "bench.csv");
  csv << "phase,mean_s,std_s\n";
  json runs = json::array();
  std::vector<int> sweep = cfg.bench.worker_sweep;
  if (sweep.empty()) sweep.push_back(opts.workers);
  const bool prefix = cfg.bench.orders.size() > 1 || sweep.size() > 1;
  for (int order : cfg.bench.orders) {
    for (int workers : sweep) {
      const RankExecutor exec(workers);
      const Mesh m = build_mesh(cfg, order, exec);
      const GhostLayout layout = build_ghost_layout(m.dist, m.nodes, exec);
      DistributedMatvec mv(m.dist, m.nodes, layout, {OperatorKind::PoissonStiffness}, cfg.mapping, exec);
      std::mt19937_64 rng(opts.seed);
      std::uniform_real_distribution<double> dist(-1.0, 1.0);
      std::vector<double> u(m.nodes.size());
      for (double& v : u) v = dist(rng);
      RankVectors lu = scatter_to_ranks(layout, u), lo;
      for (int i = 0; i < cfg.bench.warmup; ++i) mv.apply_local(lu, lo);
      mv.timing = true;
      std::map<std::string, PhaseStats> phases;
      for (int i = 0; i < cfg.bench.iterations; ++i) {
        mv.timers = {};
        const auto t0 = std::chrono::steady_clock::now();
        mv.apply_local(lu, lo);
        const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        phases["traversal"].samples.push_back(mv.timers.traversal);
        phases["leaf_matvec"].samples.push_back(mv.timers.leaf);
        phases["ghost_exchange"].samples.push_back(mv.timers.ghost);
        phases["alloc"].samples.push_back(mv.timers.alloc);
        phases["total"].samples.push_back(total);
      }
      std::string tag = prefix ? "p" + std::to_string(order) + "_w" + std::to_string(workers) + "_" : "";
      json ph = json::object();
      for (const char* name : {"traversal", "leaf_matvec", "ghost_exchange", "alloc", "total"}) {
        const auto& s = phases[name];
        csv << tag << name << ',' << s.mean() << ',' << s.stddev() << '\n';
        ph[name] = {{"mean_s", s.mean()}, {"std_s", s.stddev()}};
      }
      runs.push_back({{"order", order}, {"workers", workers}, {"ranks", cfg.ranks}, {"elements", m.tree.size()},
                      {"dofs", m.nodes.size()}, {"phases", ph}});
      log << "p=" << order << " workers=" << workers << ": elements " << m.tree.size() << ", dofs " << m.nodes.size()
          << ", mean matvec " << phases["total"].mean() << " s\n";
    }
  }
  write_json(opts, "bench.json", {{"runs", runs}, {"iterations", cfg.bench.iterations}, {"warmup", cfg.bench.warmup}});
  return 0;
}

int run_command(const std::string& command, const RunConfig& cfg, const GlobalOptions& opts, std::ostream& log) {
  std::filesystem::create_directories(opts.out);
  if (command == "mesh") return cmd_mesh(cfg, opts, log);
  if (command == "solve") return cmd_solve(cfg, opts, log);
  if (command == "convergence") return cmd_convergence(cfg, opts, log);
  if (command == "condition") return cmd_condition(cfg, opts, log);
  if (command == "dof-compare") return cmd_dof_compare(cfg, opts, log);
  if (command == "sdf-study") return cmd_sdf_study(cfg, opts, log);
  if (command == "matvec-bench") return cmd_matvec_bench(cfg, opts, log);
  throw std::invalid_argument("unknown command '" + command + "'");
}

}  // namespace carve::app
