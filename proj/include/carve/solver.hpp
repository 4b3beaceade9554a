#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carve/femops.hpp"
#include "carve/nodes.hpp"
#include "carve/partition.hpp"
#include "carve/tree.hpp"

namespace carve {

struct CgOptions {
  double rel_tol = 1e-6;
  double abs_tol = 1e-6;
  int max_iter = 10000;
};

struct CgResult {
  std::vector<double> x;
  int iterations = 0;
  double residual = 0;           // final ||r||
  double relative_residual = 0;  // final ||r|| / ||r0||
  bool converged = false;
  std::vector<double> history;  // ||r|| per iteration, starting with r0
};

/// Sequential dot product in index order.
double dot(std::span<const double> a, std::span<const double> b);

/// Conjugate gradients from x0 (zero when empty).
CgResult cg_solve(const LinearOperator& a, std::span<const double> rhs, std::span<const double> x0 = {},
                  const CgOptions& opts = {});

/// Analytic solution and forcing f = -laplace(u) in physical coordinates.
struct Manufactured {
  std::function<double(const Vec3&)> u;
  std::function<double(const Vec3&)> f;
};

/// u = prod sin(pi x_i), f = d pi^2 u.
Manufactured sine_solution(int dim);

enum class BoundaryData {
  NodeValue,  // g = u*(node)
  Projected,  // g = u*(closest point on the carved boundary); wall nodes use u*(node)
};

struct PoissonProblem {
  int dim = 2;
  int order = 1;
  ShapePtr shape;  // carved set; null carves nothing
  DomainMapping mapping;
  Manufactured solution = sine_solution(2);
  BoundaryData boundary_data = BoundaryData::Projected;
  int base_level = 3;
  int boundary_level = 3;
};

struct SolveReport {
  int iterations = 0;
  double relative_residual = 0;
  double residual = 0;
  bool converged = false;
  double l2 = 0, linf = 0;
  std::size_t dofs = 0, elements = 0;
  double h = 0;
};

struct PoissonSolution {
  IncompleteTree tree;
  NodeSet nodes;
  std::vector<double> u, exact, g;
  SolveReport report;
};

/// Mesh -> nodes -> matrix-free CG on `ranks` simulated ranks -> error norms.
PoissonSolution solve_poisson(const PoissonProblem& problem, const CgOptions& opts = {}, int ranks = 1,
                              double load_tol = 0.1, const RankExecutor& exec = RankExecutor());

struct ErrorNorms {
  double l2 = 0, linf = 0;
};

/// Elementwise Gauss quadrature with p+2 points per axis; hanging values reconstructed by
/// interpolation. L-infinity over quadrature points and element nodes.
ErrorNorms error_norms(std::span<const double> uh, const IncompleteTree& tree, const NodeSet& nodes,
                       const DomainMapping& mapping, const std::function<double(const Vec3&)>& exact);

struct ConvergenceRow {
  int level = 0;
  double h = 0;
  std::size_t dofs = 0, elements = 0;
  double l2 = 0, linf = 0;
  int iterations = 0;
};

struct ConvergenceResult {
  std::vector<ConvergenceRow> rows;
  double l2_order = 0, linf_order = 0;
  bool complete = true;
  std::string error;
};

/// Least-squares slope of log(y) against log(x).
double fitted_order(std::span<const double> x, std::span<const double> y);

/// Uniform refinement of the retained region at each level (>= 3 levels).
ConvergenceResult convergence_study(PoissonProblem problem, std::span<const int> levels, const CgOptions& opts);

struct ConditionEstimate {
  double kappa = 0;
  double lambda_max = 0, lambda_min = 0;
  bool singular = false;
  int iterations = 0;
};

/// 2-norm: power iteration for lambda_max, inverse iteration (inner CG) for lambda_min.
/// Requires a symmetric positive definite matrix.
ConditionEstimate condition_estimate(const CsrMatrix& a, double tol = 1e-6, int max_iter = 20000);

/// Exact ||A||_1 * ||A^-1||_1 by sparse LU column solves.
double condition_1norm_exact(const CsrMatrix& a);
/// Hager/Higham estimate of ||A||_1 * ||A^-1||_1 (a lower bound, usually exact).
double condition_1norm_estimate(const CsrMatrix& a);

struct ChannelRow {
  int length = 1;
  std::string variant;  // "incomplete" or "stretched"
  std::size_t dofs = 0;
  double kappa = 0;     // 1-norm, Dirichlet rows replaced by identity
  double kappa_2 = 0;   // 2-norm of the symmetric elimination
};

/// Channel [0,1] x [0,1/L]: an incomplete quadtree at `level` versus the complete
/// quadtree of the same box with stretched elements.
std::vector<ChannelRow> channel_condition_study(std::span<const int> lengths, int level = 5);

struct DofCount {
  std::size_t elements = 0, dofs = 0;
};

struct DofComparison {
  DofCount carved, immersed;
  double f_elem = 1, f_dof = 1;
};

/// Carved tree versus the complete tree built from the same seeds with nothing carved.
DofComparison dof_element_comparison(const Carver& carver, int base_level, int object_level, int order = 1,
                                     std::size_t max_elements = 20'000'000);

struct VoxelRow {
  int level = 0;
  std::size_t elements = 0, boundary_nodes = 0;
  double max_abs_distance = 0;
};

/// Trees refined to each level at the boundary; max |signed distance| over nodes flagged
/// by the carved set (root-wall nodes are excluded).
std::vector<VoxelRow> voxelization_error_study(const Carver& carver, std::span<const int> levels, int base_level);

}  // namespace carve
