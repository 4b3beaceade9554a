// Python bindings: meshes built from JSON configs, their matvec and assembly, the
// Poisson solve, and the CLI commands.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <sstream>

#include "carve/femops.hpp"
#include "carve/vtu.hpp"
#include "commands.hpp"

namespace py = pybind11;
using namespace carve;

namespace {

template <class T>
py::array_t<T> to_array(const std::vector<T>& v) {
  py::array_t<T> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<double> from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                               std::size_t n) {
  if (a.ndim() != 1 || static_cast<std::size_t>(a.shape(0)) != n) {
    throw py::value_error("expected a 1D array of length " + std::to_string(n));
  }
  return {a.data(), a.data() + n};
}

py::array_t<double> node_coords(const NodeSet& nodes, const DomainMapping& mapping) {
  py::array_t<double> out({static_cast<py::ssize_t>(nodes.size()), py::ssize_t{3}});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Vec3 x = mapping.to_physical(nodes.unit_coords(i));
    for (int a = 0; a < 3; ++a) w(i, a) = x[a];
  }
  return out;
}

class PyMesh {
 public:
  PyMesh(const std::string& config, int workers, int order)
      : cfg_(app::parse_config(config)), exec_(workers),
        mesh_(std::make_unique<app::Mesh>(app::build_mesh(cfg_, order > 0 ? order : cfg_.order, exec_))) {}

  int dim() const { return cfg_.dim; }
  int order() const { return mesh_->nodes.order; }
  int ranks() const { return static_cast<int>(mesh_->dist.ranks.size()); }
  std::size_t num_elements() const { return mesh_->tree.size(); }
  std::size_t num_dofs() const { return mesh_->nodes.size(); }

  /// (N, 4): anchor x, y, z in integer tree coordinates and the level.
  py::array_t<std::uint32_t> leaves() const {
    const auto& l = mesh_->tree.leaves;
    py::array_t<std::uint32_t> out({static_cast<py::ssize_t>(l.size()), py::ssize_t{4}});
    auto w = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < l.size(); ++i) {
      for (int a = 0; a < 3; ++a) w(i, a) = l[i].anchor[a];
      w(i, 3) = l[i].level;
    }
    return out;
  }

  py::array_t<std::uint8_t> intercepted() const {
    std::vector<std::uint8_t> v;
    for (auto t : mesh_->tree.tags) v.push_back(t == RegionClass::RetainBoundary);
    return to_array(v);
  }

  py::array_t<double> coords() const { return node_coords(mesh_->nodes, cfg_.mapping); }
  py::array_t<std::uint8_t> boundary() const { return to_array(mesh_->nodes.boundary); }

  std::vector<std::size_t> rank_elements() const {
    std::vector<std::size_t> out;
    for (const auto& r : mesh_->dist.ranks) out.push_back(r.size());
    return out;
  }

  py::array_t<double> matvec(const py::array_t<double, py::array::c_style | py::array::forcecast>& u,
                             bool mass) {
    const auto x = from_array(u, num_dofs());
    std::vector<double> y(x.size());
    {
      py::gil_scoped_release release;
      const GhostLayout layout = build_ghost_layout(mesh_->dist, mesh_->nodes, exec_);
      ElementalOperator op;
      op.kind = mass ? OperatorKind::Mass : OperatorKind::PoissonStiffness;
      DistributedMatvec mv(mesh_->dist, mesh_->nodes, layout, op, cfg_.mapping, exec_);
      mv.apply(x, y);
    }
    return to_array(y);
  }

  /// CSR arrays (data, indices, indptr) in the order scipy.sparse.csr_matrix takes them.
  py::tuple assemble(bool mass) const {
    ElementalOperator op;
    op.kind = mass ? OperatorKind::Mass : OperatorKind::PoissonStiffness;
    const CsrMatrix a = carve::assemble(mesh_->tree, mesh_->nodes, op, cfg_.mapping);
    std::vector<std::int64_t> ptr(a.row_ptr.begin(), a.row_ptr.end());
    std::vector<std::int64_t> col(a.col.begin(), a.col.end());
    return py::make_tuple(to_array(a.val), to_array(col), to_array(ptr));
  }

  void write_vtu(const std::string& path) const {
    carve::write_vtu(path, mesh_->tree, mesh_->nodes, cfg_.mapping, &mesh_->carver, {});
  }

 private:
  app::RunConfig cfg_;
  RankExecutor exec_;
  std::unique_ptr<app::Mesh> mesh_;
};

py::dict solve(const std::string& config, int workers) {
  const app::RunConfig cfg = app::parse_config(config);
  PoissonSolution sol;
  {
    py::gil_scoped_release release;
    sol = solve_poisson(app::make_problem(cfg), cfg.solver, cfg.ranks, cfg.load_tol, RankExecutor(workers));
  }
  const SolveReport& r = sol.report;
  py::dict out;
  out["iterations"] = r.iterations;
  out["relative_residual"] = r.relative_residual;
  out["residual"] = r.residual;
  out["converged"] = r.converged;
  out["l2"] = r.l2;
  out["linf"] = r.linf;
  out["dofs"] = r.dofs;
  out["elements"] = r.elements;
  out["h"] = r.h;
  out["u"] = to_array(sol.u);
  out["exact"] = to_array(sol.exact);
  out["g"] = to_array(sol.g);
  out["coords"] = node_coords(sol.nodes, cfg.mapping);
  return out;
}

int run(const std::string& command, const std::string& config, const std::string& out, int workers,
        std::uint64_t seed) {
  const app::RunConfig cfg = app::parse_config(config);
  app::GlobalOptions opts;
  opts.out = out;
  opts.workers = workers;
  opts.seed = seed;
  std::ostringstream log;
  py::gil_scoped_release release;
  return app::run_command(command, cfg, opts, log);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Carved linear octree meshes and matrix-free finite elements";

  py::register_exception<app::ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<PyMesh>(m, "Mesh")
      .def(py::init<const std::string&, int, int>(), py::arg("config"), py::arg("workers") = 1,
           py::arg("order") = 0)
      .def_property_readonly("dim", &PyMesh::dim)
      .def_property_readonly("order", &PyMesh::order)
      .def_property_readonly("ranks", &PyMesh::ranks)
      .def_property_readonly("num_elements", &PyMesh::num_elements)
      .def_property_readonly("num_dofs", &PyMesh::num_dofs)
      .def("leaves", &PyMesh::leaves)
      .def("intercepted", &PyMesh::intercepted)
      .def("coords", &PyMesh::coords)
      .def("boundary", &PyMesh::boundary)
      .def("rank_elements", &PyMesh::rank_elements)
      .def("matvec", &PyMesh::matvec, py::arg("u"), py::arg("mass") = false)
      .def("assemble", &PyMesh::assemble, py::arg("mass") = false)
      .def("write_vtu", &PyMesh::write_vtu, py::arg("path"));

  m.def("solve", &solve, py::arg("config"), py::arg("workers") = 1);
  m.def("run", &run, py::arg("command"), py::arg("config"), py::arg("out"), py::arg("workers") = 1,
        py::arg("seed") = 1);
  m.def("default_config", &app::default_config, py::arg("command"));
}
