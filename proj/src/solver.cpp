#include "carve/solver.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "carve/balance.hpp"

namespace carve {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

CgResult cg_solve(const LinearOperator& a, std::span<const double> rhs, std::span<const double> x0,
                  const CgOptions& opts) {
  const std::size_t n = rhs.size();
  CgResult res;
  res.x.assign(n, 0.0);
  if (!x0.empty()) {
    if (x0.size() != n) throw std::invalid_argument("cg: initial guess size mismatch");
    std::copy(x0.begin(), x0.end(), res.x.begin());
  }
  std::vector<double> r(n), p(n), ap(n);
  a(res.x, ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - ap[i];
  double rr = dot(r, r);
  const double r0 = std::sqrt(rr);
  res.history.push_back(r0);
  auto done = [&](double rn) { return rn <= opts.abs_tol || (r0 > 0 && rn <= opts.rel_tol * r0); };
  res.residual = r0;
  res.relative_residual = r0 > 0 ? 1.0 : 0.0;
  if (done(r0)) {
    res.converged = true;
    return res;
  }
  p = r;
  for (int it = 1; it <= opts.max_iter; ++it) {
    a(p, ap);
    const double pap = dot(p, ap);
    if (!(pap > 0)) throw std::runtime_error("cg: operator is not positive definite");
    const double alpha = rr / pap;
    for (std::size_t i = 0; i < n; ++i) {
      res.x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    const double rr_new = dot(r, r);
    const double rn = std::sqrt(rr_new);
    res.history.push_back(rn);
    res.iterations = it;
    res.residual = rn;
    res.relative_residual = rn / r0;
    if (done(rn)) {
      res.converged = true;
      return res;
    }
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
  }
  return res;
}

Manufactured sine_solution(int dim) {
  const double pi = std::numbers::pi;
  auto u = [dim, pi](const Vec3& x) {
    double v = 1.0;
    for (int a = 0; a < dim; ++a) v *= std::sin(pi * x[a]);
    return v;
  };
  return {u, [u, dim, pi](const Vec3& x) { return dim * pi * pi * u(x); }};
}

namespace {

double finest_side(const IncompleteTree& tree, const DomainMapping& mapping) {
  return mapping.scale * std::ldexp(1.0, -tree.finest_level());
}

// Tensor basis values of order p at Gauss points, axis 0 fastest.
struct QuadratureTable {
  int npts1 = 0, nq = 0, npe = 0;
  std::vector<double> xi, w, basis;  // basis[q * npe + i]
  std::vector<std::array<double, 3>> points;
};

QuadratureTable make_quadrature(int order, int dim, int npts1) {
  QuadratureTable t;
  std::vector<double> q1, w1;
  gauss_legendre(npts1, q1, w1);
  t.npts1 = npts1;
  t.nq = ipow(npts1, dim);
  t.npe = ipow(order + 1, dim);
  for (int g = 0; g < t.nq; ++g) {
    std::array<double, 3> xi{0, 0, 0};
    double wq = 1.0;
    int gr = g;
    for (int a = 0; a < dim; ++a) {
      xi[a] = q1[gr % npts1];
      wq *= w1[gr % npts1];
      gr /= npts1;
    }
    t.points.push_back(xi);
    t.w.push_back(wq);
    for (int i = 0; i < t.npe; ++i) {
      double v = 1.0;
      int ir = i;
      for (int a = 0; a < dim; ++a) {
        v *= lagrange_1d(order, ir % (order + 1), xi[a]);
        ir /= order + 1;
      }
      t.basis.push_back(v);
    }
  }
  return t;
}

}  // namespace

ErrorNorms error_norms(std::span<const double> uh, const IncompleteTree& tree, const NodeSet& nodes,
                       const DomainMapping& mapping, const std::function<double(const Vec3&)>& exact) {
  if (uh.size() != nodes.size()) throw std::invalid_argument("error_norms: vector size mismatch");
  const int dim = nodes.dim, order = nodes.order;
  const QuadratureTable quad = make_quadrature(order, dim, order + 2);
  Traverser<double> trav(dim, order);
  const int npe = quad.npe;
  std::vector<double> local(npe);
  double sum2 = 0.0, linf = 0.0;
  trav.run(tree.leaves, nodes.keys, uh, {}, [&](const LeafContext<double>& ctx) {
    for (int i = 0; i < npe; ++i) local[i] = ctx.gather(i);
    const Octant& leaf = ctx.leaf();
    const double h = mapping.scale * static_cast<double>(leaf.side()) / kRootLength;
    Vec3 origin;
    for (int a = 0; a < dim; ++a) origin[a] = static_cast<double>(leaf.anchor[a]) / kRootLength;
    origin = mapping.to_physical(origin);
    const double jac = std::pow(h, dim);
    for (int g = 0; g < quad.nq; ++g) {
      double v = 0.0;
      for (int i = 0; i < npe; ++i) v += quad.basis[g * npe + i] * local[i];
      Vec3 x = origin;
      for (int a = 0; a < dim; ++a) x[a] += h * quad.points[g][a];
      const double e = v - exact(x);
      sum2 += quad.w[g] * jac * e * e;
      linf = std::max(linf, std::abs(e));
    }
    for (int i = 0; i < npe; ++i) {
      Vec3 x = origin;
      int ir = i;
      for (int a = 0; a < dim; ++a) {
        x[a] += h * static_cast<double>(ir % (order + 1)) / order;
        ir /= order + 1;
      }
      linf = std::max(linf, std::abs(local[i] - exact(x)));
    }
  });
  return {std::sqrt(sum2), linf};
}

PoissonSolution solve_poisson(const PoissonProblem& problem, const CgOptions& opts, int ranks, double load_tol,
                              const RankExecutor& exec) {
  const int dim = problem.dim;
  const Carver carver(problem.shape ? problem.shape : make_empty(), problem.mapping, dim);
  PoissonSolution sol;
  std::vector<Octant> seeds = tree_sort(boundary_seeds(carver, problem.base_level, problem.boundary_level, dim), dim);
  if (seeds.empty()) throw std::runtime_error("domain fully carved");

  DistributedLeaves dist;
  if (ranks <= 1) {
    sol.tree = construct_boundary_conforming(carver, seeds, dim);
    dist.dim = dim;
    dist.map = choose_splitters(sol.tree.leaves, 1, load_tol);
    dist.ranks = {sol.tree.leaves};
    sol.nodes = enumerate_nodes(sol.tree, problem.order, &carver);
  } else {
    dist = distributed_construct_boundary_conforming(carver, scatter_evenly(seeds, ranks), dim, ranks, load_tol, exec);
    sol.tree.dim = dim;
    sol.tree.leaves = dist.gather();
    coarsest_covering(sol.tree, carver);
    sol.nodes = distributed_enumerate_nodes(dist, problem.order, &carver, exec);
  }
  if (sol.tree.empty()) throw std::runtime_error("domain fully carved");
  const NodeSet& nodes = sol.nodes;
  const std::size_t n = nodes.size();

  const auto& solution = problem.solution;
  sol.exact.resize(n);
  sol.g.assign(n, 0.0);
  std::vector<double> fvals(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 unit = nodes.unit_coords(i);
    const Vec3 x = problem.mapping.to_physical(unit);
    sol.exact[i] = solution.u(x);
    fvals[i] = solution.f(x);
    if (!nodes.boundary[i]) continue;
    const bool carved = carver.classify_point(unit) == PointClass::Carved;
    if (carved && problem.boundary_data == BoundaryData::Projected) {
      Vec3 xb = carver.shape().closest_boundary_point(x);
      if (dim == 2) xb.z = x.z;
      sol.g[i] = solution.u(xb);
    } else {
      sol.g[i] = sol.exact[i];
    }
  }

  const GhostLayout layout = build_ghost_layout(dist, nodes, exec);
  DistributedMatvec stiffness(dist, nodes, layout, {OperatorKind::PoissonStiffness}, problem.mapping, exec);
  DistributedMatvec mass(dist, nodes, layout, {OperatorKind::Mass}, problem.mapping, exec);
  std::vector<double> rhs_f(n);
  mass.apply(fvals, rhs_f);
  const LinearOperator a = [&](std::span<const double> x, std::span<double> y) { stiffness.apply(x, y); };
  const LinearOperator constrained = dirichlet_operator(a, nodes.boundary);
  const std::vector<double> rhs = dirichlet_rhs(a, nodes.boundary, rhs_f, sol.g);
  std::vector<double> x0(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (nodes.boundary[i]) x0[i] = sol.g[i];
  }
  CgResult cg = cg_solve(constrained, rhs, x0, opts);
  sol.u = std::move(cg.x);

  SolveReport& rep = sol.report;
  rep.iterations = cg.iterations;
  rep.relative_residual = cg.relative_residual;
  rep.residual = cg.residual;
  rep.converged = cg.converged;
  const ErrorNorms en = error_norms(sol.u, sol.tree, nodes, problem.mapping, solution.u);
  rep.l2 = en.l2;
  rep.linf = en.linf;
  rep.dofs = n;
  rep.elements = sol.tree.size();
  rep.h = finest_side(sol.tree, problem.mapping);
  return sol;
}

double fitted_order(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw std::invalid_argument("fitted_order: need at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

ConvergenceResult convergence_study(PoissonProblem problem, std::span<const int> levels, const CgOptions& opts) {
  if (levels.size() < 3) throw std::invalid_argument("convergence_study: needs at least 3 levels");
  ConvergenceResult res;
  for (int level : levels) {
    problem.base_level = problem.boundary_level = level;
    try {
      const PoissonSolution sol = solve_poisson(problem, opts);
      if (!sol.report.converged) throw std::runtime_error("solver did not converge at level " + std::to_string(level));
      res.rows.push_back({level, sol.report.h, sol.report.dofs, sol.report.elements, sol.report.l2, sol.report.linf,
                          sol.report.iterations});
    } catch (const std::exception& e) {
      res.complete = false;
      res.error = e.what();
      break;
    }
  }
  if (res.rows.size() >= 2) {
    std::vector<double> h, l2, li;
    for (const auto& r : res.rows) {
      h.push_back(r.h);
      l2.push_back(r.l2);
      li.push_back(r.linf);
    }
    res.l2_order = fitted_order(h, l2);
    res.linf_order = fitted_order(h, li);
  }
  return res;
}

ConditionEstimate condition_estimate(const CsrMatrix& a, double tol, int max_iter) {
  ConditionEstimate est;
  const std::size_t n = a.n;
  if (n == 0) throw std::invalid_argument("condition_estimate: empty matrix");
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = 1.0 + static_cast<double>(i % 7) / 7.0;
  auto normalize = [](std::vector<double>& v) {
    const double s = std::sqrt(dot(v, v));
    for (double& e : v) e /= s;
    return s;
  };
  normalize(x);
  double lmax = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    a.multiply(x, y);
    const double l = dot(x, y);
    est.iterations = it + 1;
    const bool stop = it > 0 && std::abs(l - lmax) <= tol * std::abs(l);
    lmax = l;
    if (stop) break;
    x = y;
    normalize(x);
  }
  est.lambda_max = lmax;

  const LinearOperator op = [&a](std::span<const double> in, std::span<double> out) { a.multiply(in, out); };
  CgOptions inner;
  inner.rel_tol = 1e-12;
  inner.abs_tol = 0.0;
  inner.max_iter = static_cast<int>(10 * n + 100);
  for (std::size_t i = 0; i < n; ++i) x[i] = 1.0 + static_cast<double>(i % 5) / 5.0;
  normalize(x);
  double mu = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    CgResult r;
    try {
      r = cg_solve(op, x, {}, inner);
    } catch (const std::runtime_error&) {
      est.singular = true;
      return est;
    }
    const double m = dot(x, r.x);
    const bool stop = it > 0 && std::abs(m - mu) <= tol * std::abs(m);
    mu = m;
    if (stop) break;
    x = std::move(r.x);
    normalize(x);
  }
  est.lambda_min = mu > 0 ? 1.0 / mu : 0.0;
  est.singular = !(est.lambda_min > 1e-14 * est.lambda_max);
  est.kappa = est.singular ? std::numeric_limits<double>::infinity() : est.lambda_max / est.lambda_min;
  return est;
}

namespace {

Eigen::SparseMatrix<double> to_eigen(const CsrMatrix& a) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(a.nnz());
  for (std::size_t i = 0; i < a.n; ++i) {
    for (std::size_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
      t.emplace_back(static_cast<int>(i), static_cast<int>(a.col[k]), a.val[k]);
    }
  }
  Eigen::SparseMatrix<double> m(static_cast<int>(a.n), static_cast<int>(a.n));
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

double norm1(const CsrMatrix& a) {
  std::vector<double> colsum(a.n, 0.0);
  for (std::size_t k = 0; k < a.nnz(); ++k) colsum[a.col[k]] += std::abs(a.val[k]);
  return *std::max_element(colsum.begin(), colsum.end());
}

struct LuSolver {
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  explicit LuSolver(const Eigen::SparseMatrix<double>& m) {
    lu.analyzePattern(m);
    lu.factorize(m);
    if (lu.info() != Eigen::Success) throw std::runtime_error("condition: singular matrix");
  }
  Eigen::VectorXd solve(const Eigen::VectorXd& b) { return lu.solve(b); }
};

}  // namespace

double condition_1norm_exact(const CsrMatrix& a) {
  const auto m = to_eigen(a);
  LuSolver lu(m);
  const int n = static_cast<int>(a.n);
  double inv = 0.0;
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < n; ++j) {
    e[j] = 1.0;
    inv = std::max(inv, lu.solve(e).lpNorm<1>());
    e[j] = 0.0;
  }
  return norm1(a) * inv;
}

double condition_1norm_estimate(const CsrMatrix& a) {
  const auto m = to_eigen(a);
  const Eigen::SparseMatrix<double> mt = m.transpose();
  LuSolver lu(m), lut(mt);
  const int n = static_cast<int>(a.n);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 / n);
  double est = 0.0;
  int last = -1;
  for (int it = 0; it < 5; ++it) {
    const Eigen::VectorXd y = lu.solve(x);
    const double ny = y.lpNorm<1>();
    if (it > 0 && ny <= est) break;
    est = ny;
    Eigen::VectorXd xi(n);
    for (int i = 0; i < n; ++i) xi[i] = y[i] >= 0 ? 1.0 : -1.0;
    const Eigen::VectorXd z = lut.solve(xi);
    int j = 0;
    z.cwiseAbs().maxCoeff(&j);
    if (it > 0 && (j == last || std::abs(z[j]) <= z.dot(x))) break;
    last = j;
    x.setZero();
    x[j] = 1.0;
  }
  // Alternating probe guards against the classic failure cases of the iteration above.
  Eigen::VectorXd alt(n);
  for (int i = 0; i < n; ++i) alt[i] = (i % 2 == 0 ? 1.0 : -1.0) * (1.0 + (n > 1 ? static_cast<double>(i) / (n - 1) : 0.0));
  est = std::max(est, 2.0 * lu.solve(alt).lpNorm<1>() / (3.0 * n));
  return norm1(a) * est;
}

std::vector<ChannelRow> channel_condition_study(std::span<const int> lengths, int level) {
  std::vector<ChannelRow> rows;
  for (int length : lengths) {
    if (length < 1 || (1 << level) % length != 0) throw std::invalid_argument("channel: length must divide 2^level");
    for (const char* variant : {"incomplete", "stretched"}) {
      const bool incomplete = std::string(variant) == "incomplete";
      const Carver carver(incomplete ? make_retained_box({{0, 0, 0}, {1.0, 1.0 / length, 0}}) : make_empty(),
                          DomainMapping{}, 2);
      ElementalOperator op;
      if (!incomplete) op.aspect = {1.0, 1.0 / length, 1.0};
      const IncompleteTree tree = construct_uniform(carver, level, 2);
      const NodeSet nodes = enumerate_nodes(tree, 1, &carver);
      const CsrMatrix k = assemble(tree, nodes, op, DomainMapping{});
      CsrMatrix rows_only = k;
      apply_dirichlet_rows(rows_only, nodes.boundary);
      CsrMatrix sym = k;
      std::vector<double> zeros(nodes.size(), 0.0), rhs(nodes.size(), 0.0);
      apply_dirichlet(sym, nodes.boundary, zeros, rhs);
      ChannelRow row;
      row.length = length;
      row.variant = variant;
      row.dofs = nodes.size();
      row.kappa = nodes.size() <= 20000 ? condition_1norm_exact(rows_only) : condition_1norm_estimate(rows_only);
      row.kappa_2 = condition_estimate(sym).kappa;
      rows.push_back(row);
    }
  }
  return rows;
}

DofComparison dof_element_comparison(const Carver& carver, int base_level, int object_level, int order,
                                     std::size_t max_elements) {
  const int dim = carver.dim();
  const ImmersedCarver immersed(carver);
  DofComparison out;
  auto build = [&](const RegionClassifier& F, const Carver* flags) {
    std::vector<Octant> seeds = boundary_seeds(F, base_level, object_level, dim);
    if (seeds.size() > max_elements) {
      throw std::runtime_error("dof comparison: " + std::to_string(seeds.size()) + " seeds exceed the budget of " +
                               std::to_string(max_elements) + " elements");
    }
    const IncompleteTree tree = construct_balanced(F, std::move(seeds), dim);
    return DofCount{tree.size(), enumerate_nodes(tree, order, flags).size()};
  };
  out.carved = build(carver, &carver);
  out.immersed = build(immersed, nullptr);
  if (out.carved.elements == 0) throw std::runtime_error("domain fully carved");
  out.f_elem = static_cast<double>(out.immersed.elements) / static_cast<double>(out.carved.elements);
  out.f_dof = static_cast<double>(out.immersed.dofs) / static_cast<double>(out.carved.dofs);
  return out;
}

std::vector<VoxelRow> voxelization_error_study(const Carver& carver, std::span<const int> levels, int base_level) {
  const int dim = carver.dim();
  std::vector<VoxelRow> rows;
  for (int level : levels) {
    const IncompleteTree tree =
        construct_balanced(carver, boundary_seeds(carver, std::min(base_level, level), level, dim), dim);
    const NodeSet nodes = enumerate_nodes_unchecked(tree.leaves, dim, 1, nullptr);
    VoxelRow row;
    row.level = level;
    row.elements = tree.size();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const Vec3 unit = nodes.unit_coords(i);
      if (carver.classify_point(unit) != PointClass::Carved) continue;
      ++row.boundary_nodes;
      const double phi = carver.shape().signed_distance(carver.mapping().to_physical(unit));
      row.max_abs_distance = std::max(row.max_abs_distance, std::abs(phi));
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace carve
