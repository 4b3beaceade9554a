#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "carve/nodes.hpp"
#include "carve/traversal.hpp"
#include "carve/tree.hpp"

namespace carve {

enum class OperatorKind { PoissonStiffness, Mass };

/// Elemental operator on axis-aligned elements. `aspect` stretches the physical element
/// per axis (1 = isotropic); the tree itself stays isotropic.
struct ElementalOperator {
  OperatorKind kind = OperatorKind::PoissonStiffness;
  Vec3 aspect{1.0, 1.0, 1.0};
};

/// Row-major dense square matrix.
struct DenseMatrix {
  int n = 0;
  std::vector<double> a;

  DenseMatrix() = default;
  explicit DenseMatrix(int size) : n(size), a(static_cast<std::size_t>(size) * size, 0.0) {}
  double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * n + j]; }
  double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * n + j]; }
};

/// 1D reference matrices on [0,1] for the equispaced order-p Lagrange basis.
struct Reference1D {
  int order = 1;
  std::vector<double> stiffness;  // (p+1)^2
  std::vector<double> mass;
};
Reference1D reference_1d(int order);

/// Gauss-Legendre points and weights on [0,1].
void gauss_legendre(int npoints, std::vector<double>& points, std::vector<double>& weights);

/// Physical element side along each axis.
Vec3 element_sides(const Octant& leaf, const DomainMapping& mapping, const ElementalOperator& op, int dim);

/// Dense elemental matrix by tensor Gauss quadrature (p+1 points per axis).
DenseMatrix elemental_matrix(const ElementalOperator& op, const Octant& leaf, int order, int dim,
                             const DomainMapping& mapping);

/// Sum-factorized elemental apply: y = K_e x, with K_e the same operator as elemental_matrix.
class ElementKernel {
 public:
  ElementKernel(const ElementalOperator& op, int order, int dim, const DomainMapping& mapping);

  int nodes_per_element() const { return npe_; }
  void apply(const Octant& leaf, const double* x, double* y) const;

 private:
  void kron(const double* const factors[3], const double* x, double* y) const;

  ElementalOperator op_;
  int order_, dim_, npe_;
  DomainMapping mapping_;
  Reference1D ref_;
  mutable std::vector<double> t0_, t1_;
};

/// Matrix-free operator application by top-down bucketing and bottom-up accumulation.
/// `out` is overwritten. Works on any SFC-sorted leaf set with its node keys (one rank
/// passes its owned+ghost keys).
class MatvecEngine {
 public:
  MatvecEngine(const ElementalOperator& op, int order, int dim, const DomainMapping& mapping);

  void apply(std::span<const Octant> leaves, std::span<const NodeKey> keys, std::span<const double> u,
             std::span<double> out, TraversalTimers* timers = nullptr);

  int order() const { return order_; }
  int dim() const { return dim_; }

 private:
  int order_, dim_;
  ElementKernel kernel_;
  Traverser<double> traverser_;
  std::vector<double> local_in_, local_out_;
};

/// One-shot matvec over a whole tree.
std::vector<double> matvec(const IncompleteTree& tree, const NodeSet& nodes, const ElementalOperator& op,
                           const DomainMapping& mapping, std::span<const double> u);

struct CsrMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::uint32_t> col;
  std::vector<double> val;

  std::size_t nnz() const { return val.size(); }
  void multiply(std::span<const double> x, std::span<double> y) const;
  std::vector<double> multiply(std::span<const double> x) const;
  double at(std::size_t i, std::size_t j) const;
  CsrMatrix transpose() const;
  /// max |A - A^T|
  double asymmetry() const;
};

struct Triplet {
  std::uint32_t row, col;
  double value;
};

/// Sorts triplets by (row, col) and sums duplicates.
CsrMatrix csr_from_triplets(std::size_t n, std::vector<Triplet> triplets);

/// Condensed global matrix over non-hanging nodes, via id bucketing to leaves.
CsrMatrix assemble(const IncompleteTree& tree, const NodeSet& nodes, const ElementalOperator& op,
                   const DomainMapping& mapping);
CsrMatrix assemble(std::span<const Octant> leaves, const NodeSet& nodes, const ElementalOperator& op,
                   const DomainMapping& mapping);

/// Symmetric elimination: boundary rows and columns replaced by identity, rhs compensated
/// (rhs_i -= A_ib g_b, rhs_b = g_b).
void apply_dirichlet(CsrMatrix& a, std::span<const std::uint8_t> boundary, std::span<const double> g,
                     std::span<double> rhs);
/// Boundary rows replaced by identity, columns kept (non-symmetric).
void apply_dirichlet_rows(CsrMatrix& a, std::span<const std::uint8_t> boundary);

using LinearOperator = std::function<void(std::span<const double>, std::span<double>)>;

/// Matvec view of the symmetrically eliminated system: boundary inputs are frozen
/// (treated as zero in the operator), boundary outputs return u_b.
LinearOperator dirichlet_operator(LinearOperator a, std::vector<std::uint8_t> boundary);
/// rhs for dirichlet_operator: f - A g_B on interior rows, g on boundary rows.
std::vector<double> dirichlet_rhs(const LinearOperator& a, std::span<const std::uint8_t> boundary,
                                  std::span<const double> f, std::span<const double> g);

void write_matrix_market(const CsrMatrix& a, const std::filesystem::path& path);

}  // namespace carve
