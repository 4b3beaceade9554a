#include "carve/femops.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <stdexcept>

namespace carve {

void gauss_legendre(int npoints, std::vector<double>& points, std::vector<double>& weights) {
  points.assign(npoints, 0.0);
  weights.assign(npoints, 0.0);
  // Newton iteration on P_n from the Chebyshev-like initial guess.
  for (int i = 0; i < npoints; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (npoints + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= npoints; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = npoints * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    points[npoints - 1 - i] = 0.5 * (x + 1.0);
    weights[npoints - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
}

Reference1D reference_1d(int order) {
  Reference1D r;
  r.order = order;
  const int n = order + 1;
  r.stiffness.assign(n * n, 0.0);
  r.mass.assign(n * n, 0.0);
  std::vector<double> q, w;
  gauss_legendre(n, q, w);
  for (std::size_t g = 0; g < q.size(); ++g) {
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) {
        r.stiffness[i * n + k] += w[g] * lagrange_1d_derivative(order, i, q[g]) * lagrange_1d_derivative(order, k, q[g]);
        r.mass[i * n + k] += w[g] * lagrange_1d(order, i, q[g]) * lagrange_1d(order, k, q[g]);
      }
    }
  }
  return r;
}

Vec3 element_sides(const Octant& leaf, const DomainMapping& mapping, const ElementalOperator& op, int dim) {
  const double h = mapping.scale * static_cast<double>(leaf.side()) / kRootLength;
  Vec3 s{1.0, 1.0, 1.0};
  for (int a = 0; a < dim; ++a) s[a] = h * op.aspect[a];
  return s;
}

DenseMatrix elemental_matrix(const ElementalOperator& op, const Octant& leaf, int order, int dim,
                             const DomainMapping& mapping) {
  if (order < 1 || order > 2) throw std::invalid_argument("elemental_matrix: order must be 1 or 2");
  const int n1 = order + 1;
  const int npe = ipow(n1, dim);
  const Vec3 h = element_sides(leaf, mapping, op, dim);
  double jac = 1.0;
  for (int a = 0; a < dim; ++a) jac *= h[a];
  std::vector<double> q, w;
  gauss_legendre(n1, q, w);
  const int nq = ipow(n1, dim);
  DenseMatrix m(npe);
  std::vector<double> val(npe);
  std::vector<Vec3> grad(npe);
  for (int g = 0; g < nq; ++g) {
    double xi[3] = {0, 0, 0}, wq = jac;
    int gr = g;
    for (int a = 0; a < dim; ++a) {
      xi[a] = q[gr % n1];
      wq *= w[gr % n1];
      gr /= n1;
    }
    for (int i = 0; i < npe; ++i) {
      int idx[3] = {0, 0, 0}, ir = i;
      for (int a = 0; a < dim; ++a) {
        idx[a] = ir % n1;
        ir /= n1;
      }
      double v = 1.0;
      Vec3 gv{0, 0, 0};
      for (int a = 0; a < dim; ++a) v *= lagrange_1d(order, idx[a], xi[a]);
      for (int a = 0; a < dim; ++a) {
        double d = lagrange_1d_derivative(order, idx[a], xi[a]) / h[a];
        for (int b = 0; b < dim; ++b) {
          if (b != a) d *= lagrange_1d(order, idx[b], xi[b]);
        }
        gv[a] = d;
      }
      val[i] = v;
      grad[i] = gv;
    }
    for (int i = 0; i < npe; ++i) {
      for (int k = 0; k < npe; ++k) {
        m(i, k) += wq * (op.kind == OperatorKind::Mass ? val[i] * val[k] : dot(grad[i], grad[k]));
      }
    }
  }
  return m;
}

ElementKernel::ElementKernel(const ElementalOperator& op, int order, int dim, const DomainMapping& mapping)
    : op_(op), order_(order), dim_(dim), npe_(ipow(order + 1, dim)), mapping_(mapping), ref_(reference_1d(order)),
      t0_(npe_), t1_(npe_) {
  if (order < 1 || order > 2) throw std::invalid_argument("ElementKernel: order must be 1 or 2");
}

void ElementKernel::kron(const double* const factors[3], const double* x, double* y) const {
  const int n = order_ + 1;
  const double* src = x;
  int stride = 1;
  for (int a = 0; a < dim_; ++a) {
    double* dst = (a == dim_ - 1) ? y : (a % 2 == 0 ? t0_.data() : t1_.data());
    const double* f = factors[a];
    const int outer = npe_ / (stride * n);
    for (int o = 0; o < outer; ++o) {
      const int base = o * stride * n;
      for (int i = 0; i < n; ++i) {
        for (int in = 0; in < stride; ++in) {
          double s = 0.0;
          for (int j = 0; j < n; ++j) s += f[i * n + j] * src[base + j * stride + in];
          dst[base + i * stride + in] = s;
        }
      }
    }
    src = dst;
    stride *= n;
  }
}

void ElementKernel::apply(const Octant& leaf, const double* x, double* y) const {
  const Vec3 h = element_sides(leaf, mapping_, op_, dim_);
  double jac = 1.0;
  for (int a = 0; a < dim_; ++a) jac *= h[a];
  std::fill(y, y + npe_, 0.0);
  double tmp[27];
  const double* factors[3];
  if (op_.kind == OperatorKind::Mass) {
    for (int a = 0; a < 3; ++a) factors[a] = ref_.mass.data();
    kron(factors, x, tmp);
    for (int i = 0; i < npe_; ++i) y[i] = jac * tmp[i];
    return;
  }
  for (int d = 0; d < dim_; ++d) {
    for (int a = 0; a < 3; ++a) factors[a] = (a == d) ? ref_.stiffness.data() : ref_.mass.data();
    kron(factors, x, tmp);
    const double c = jac / (h[d] * h[d]);
    for (int i = 0; i < npe_; ++i) y[i] += c * tmp[i];
  }
}

MatvecEngine::MatvecEngine(const ElementalOperator& op, int order, int dim, const DomainMapping& mapping)
    : order_(order), dim_(dim), kernel_(op, order, dim, mapping), traverser_(dim, order),
      local_in_(kernel_.nodes_per_element()), local_out_(kernel_.nodes_per_element()) {}

void MatvecEngine::apply(std::span<const Octant> leaves, std::span<const NodeKey> keys, std::span<const double> u,
                         std::span<double> out, TraversalTimers* timers) {
  if (u.size() != keys.size() || out.size() != keys.size()) throw std::invalid_argument("matvec: size mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  const int npe = kernel_.nodes_per_element();
  traverser_.run(leaves, keys, u, out, [&](const LeafContext<double>& ctx) {
    for (int i = 0; i < npe; ++i) local_in_[i] = ctx.gather(i);
    kernel_.apply(ctx.leaf(), local_in_.data(), local_out_.data());
    for (int i = 0; i < npe; ++i) ctx.add(i, local_out_[i]);
  }, timers);
}

std::vector<double> matvec(const IncompleteTree& tree, const NodeSet& nodes, const ElementalOperator& op,
                           const DomainMapping& mapping, std::span<const double> u) {
  if (u.size() != nodes.size()) throw std::invalid_argument("matvec: vector does not match the node set");
  MatvecEngine engine(op, nodes.order, tree.dim, mapping);
  std::vector<double> out(u.size());
  engine.apply(tree.leaves, nodes.keys, u, out);
  return out;
}

void CsrMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  if (x.size() != n || y.size() != n) throw std::invalid_argument("csr multiply: size mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k] * x[col[k]];
    y[i] = s;
  }
}

std::vector<double> CsrMatrix::multiply(std::span<const double> x) const {
  std::vector<double> y(n);
  multiply(x, y);
  return y;
}

double CsrMatrix::at(std::size_t i, std::size_t j) const {
  const auto b = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]);
  const auto e = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]);
  const auto it = std::lower_bound(b, e, static_cast<std::uint32_t>(j));
  return (it != e && *it == j) ? val[static_cast<std::size_t>(it - col.begin())] : 0.0;
}

CsrMatrix CsrMatrix::transpose() const {
  std::vector<Triplet> t;
  t.reserve(nnz());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) t.push_back({col[k], static_cast<std::uint32_t>(i), val[k]});
  }
  return csr_from_triplets(n, std::move(t));
}

double CsrMatrix::asymmetry() const {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) m = std::max(m, std::abs(val[k] - at(col[k], i)));
  }
  return m;
}

CsrMatrix csr_from_triplets(std::size_t n, std::vector<Triplet> triplets) {
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  CsrMatrix m;
  m.n = n;
  m.row_ptr.assign(n + 1, 0);
  for (std::size_t i = 0; i < triplets.size();) {
    const Triplet& t = triplets[i];
    if (t.row >= n || t.col >= n) throw std::out_of_range("csr: triplet index out of range");
    double s = 0.0;
    std::size_t j = i;
    while (j < triplets.size() && triplets[j].row == t.row && triplets[j].col == t.col) s += triplets[j++].value;
    m.col.push_back(t.col);
    m.val.push_back(s);
    ++m.row_ptr[t.row + 1];
    i = j;
  }
  for (std::size_t i = 0; i < n; ++i) m.row_ptr[i + 1] += m.row_ptr[i];
  return m;
}

CsrMatrix assemble(std::span<const Octant> leaves, const NodeSet& nodes, const ElementalOperator& op,
                   const DomainMapping& mapping) {
  const int dim = nodes.dim, order = nodes.order;
  Traverser<std::uint32_t> trav(dim, order);
  const int npe = trav.tables().nodes_per_element();
  std::vector<std::uint32_t> ids(nodes.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::uint32_t>(i);
  std::map<int, DenseMatrix> cache;
  std::vector<Triplet> triplets;
  std::vector<std::vector<StencilEntry>> local(npe);
  trav.run(leaves, nodes.keys, std::span<const std::uint32_t>(ids), {}, [&](const LeafContext<std::uint32_t>& ctx) {
    const Octant& leaf = ctx.leaf();
    auto it = cache.find(leaf.level);
    if (it == cache.end()) it = cache.emplace(leaf.level, elemental_matrix(op, leaf, order, dim, mapping)).first;
    const DenseMatrix& ke = it->second;
    for (int i = 0; i < npe; ++i) {
      local[i].clear();
      if (ctx.present(i)) {
        local[i].push_back({ctx.value(i), 1.0});
      } else {
        for (const auto& s : ctx.stencil(i)) local[i].push_back({ctx.parent_value(s.index), s.weight});
      }
    }
    for (int i = 0; i < npe; ++i) {
      for (int k = 0; k < npe; ++k) {
        const double v = ke(i, k);
        if (v == 0.0) continue;
        for (const auto& ri : local[i]) {
          for (const auto& ck : local[k]) triplets.push_back({ri.index, ck.index, v * ri.weight * ck.weight});
        }
      }
    }
  });
  return csr_from_triplets(nodes.size(), std::move(triplets));
}

CsrMatrix assemble(const IncompleteTree& tree, const NodeSet& nodes, const ElementalOperator& op,
                   const DomainMapping& mapping) {
  return assemble(std::span<const Octant>(tree.leaves), nodes, op, mapping);
}

namespace {

void check_sizes(const CsrMatrix& a, std::size_t m) {
  if (m != a.n) throw std::out_of_range("dirichlet: boundary flags do not match the matrix");
}

}  // namespace

void apply_dirichlet(CsrMatrix& a, std::span<const std::uint8_t> boundary, std::span<const double> g,
                     std::span<double> rhs) {
  check_sizes(a, boundary.size());
  check_sizes(a, g.size());
  check_sizes(a, rhs.size());
  std::vector<Triplet> t;
  t.reserve(a.nnz());
  for (std::size_t i = 0; i < a.n; ++i) {
    if (boundary[i]) {
      t.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i), 1.0});
      rhs[i] = g[i];
      continue;
    }
    for (std::size_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
      if (boundary[a.col[k]]) {
        rhs[i] -= a.val[k] * g[a.col[k]];
      } else {
        t.push_back({static_cast<std::uint32_t>(i), a.col[k], a.val[k]});
      }
    }
  }
  a = csr_from_triplets(a.n, std::move(t));
}

void apply_dirichlet_rows(CsrMatrix& a, std::span<const std::uint8_t> boundary) {
  check_sizes(a, boundary.size());
  std::vector<Triplet> t;
  t.reserve(a.nnz());
  for (std::size_t i = 0; i < a.n; ++i) {
    if (boundary[i]) {
      t.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i), 1.0});
      continue;
    }
    for (std::size_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) t.push_back({static_cast<std::uint32_t>(i), a.col[k], a.val[k]});
  }
  a = csr_from_triplets(a.n, std::move(t));
}

LinearOperator dirichlet_operator(LinearOperator a, std::vector<std::uint8_t> boundary) {
  return [a = std::move(a), boundary = std::move(boundary), masked = std::vector<double>()](
             std::span<const double> x, std::span<double> y) mutable {
    if (x.size() != boundary.size()) throw std::invalid_argument("dirichlet operator: size mismatch");
    masked.assign(x.begin(), x.end());
    for (std::size_t i = 0; i < masked.size(); ++i) {
      if (boundary[i]) masked[i] = 0.0;
    }
    a(masked, y);
    for (std::size_t i = 0; i < masked.size(); ++i) {
      if (boundary[i]) y[i] = x[i];
    }
  };
}

std::vector<double> dirichlet_rhs(const LinearOperator& a, std::span<const std::uint8_t> boundary,
                                  std::span<const double> f, std::span<const double> g) {
  const std::size_t n = boundary.size();
  if (f.size() != n || g.size() != n) throw std::invalid_argument("dirichlet rhs: size mismatch");
  std::vector<double> gb(n, 0.0), agb(n, 0.0), rhs(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (boundary[i]) gb[i] = g[i];
  }
  a(gb, agb);
  for (std::size_t i = 0; i < n; ++i) rhs[i] = boundary[i] ? g[i] : f[i] - agb[i];
  return rhs;
}

void write_matrix_market(const CsrMatrix& a, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "%%MatrixMarket matrix coordinate real general\n" << a.n << ' ' << a.n << ' ' << a.nnz() << '\n';
  for (std::size_t i = 0; i < a.n; ++i) {
    for (std::size_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) out << i + 1 << ' ' << a.col[k] + 1 << ' ' << a.val[k] << '\n';
  }
}

}  // namespace carve
