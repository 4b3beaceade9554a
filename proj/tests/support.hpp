#pragma once

// Random carved trees and brute-force oracles shared by the unit tests and the
// acceptance binary. Nothing here calls into the code paths it checks: neighbor
// search is all-pairs, hanging detection is an explicit incident-leaf search,
// and interpolation uses its own 1D Lagrange basis.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <unordered_map>
#include <vector>

#include "carve/balance.hpp"
#include "carve/femops.hpp"
#include "carve/nodes.hpp"
#include "carve/subdomain.hpp"
#include "carve/tree.hpp"

namespace carve::testing {

struct RandomCase {
  int dim = 2;
  ShapePtr shape;
  std::shared_ptr<Carver> carver;
  IncompleteTree tree;
};

inline ShapePtr random_shape(std::mt19937_64& rng, int dim) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto center = [&] { return Vec3{u(rng), u(rng), dim == 3 ? u(rng) : 0.0}; };
  auto corner_box = [&] {
    Box3 b;
    for (int a = 0; a < 3; ++a) {
      const double lo = u(rng) * 0.8, hi = lo + 0.1 + 0.5 * u(rng);
      b.lo[a] = a < dim ? lo : 0.0;
      b.hi[a] = a < dim ? hi : 0.0;
    }
    return b;
  };
  switch (std::uniform_int_distribution<int>(0, 4)(rng)) {
    case 0: return make_sphere(center(), 0.1 + 0.3 * u(rng));
    case 1: return make_complement(make_sphere(center(), 0.25 + 0.35 * u(rng)));
    case 2: return make_box(corner_box());
    case 3: return make_union({make_sphere(center(), 0.1 + 0.2 * u(rng)), make_box(corner_box())});
    default: return make_retained_box(corner_box());
  }
}

/// A balanced carved tree with leaves no finer than `max_level`. Retries shapes
/// that carve everything.
inline RandomCase random_case(std::mt19937_64& rng, int dim, int max_level) {
  for (;;) {
    RandomCase c;
    c.dim = dim;
    c.shape = random_shape(rng, dim);
    c.carver = std::make_shared<Carver>(c.shape, DomainMapping{}, dim);
    const int base = std::uniform_int_distribution<int>(1, std::max(1, max_level - 2))(rng);
    const int boundary = std::uniform_int_distribution<int>(base, max_level)(rng);
    std::vector<Octant> seeds = boundary_seeds(*c.carver, base, boundary, dim);
    // A few random deep seeds break the symmetry of pure boundary refinement.
    std::uniform_int_distribution<std::uint32_t> coord(0, kRootLength - 1);
    const int extra = std::uniform_int_distribution<int>(0, 4)(rng);
    for (int i = 0; i < extra; ++i) {
      Octant o{{coord(rng), coord(rng), dim == 3 ? coord(rng) : 0u}, static_cast<std::uint8_t>(kMaxLevel)};
      o = o.ancestor(max_level);
      if ((*c.carver)(o) != RegionClass::Carved) seeds.push_back(o);
    }
    seeds = tree_sort(std::move(seeds), dim);
    if (seeds.empty()) continue;
    c.tree = construct_boundary_conforming(*c.carver, seeds, dim);
    if (!c.tree.empty() && c.tree.finest_level() <= max_level) return c;
  }
}

// ---------------------------------------------------------------- balance oracle

inline bool closures_touch(const Octant& a, const Octant& b, int dim) {
  for (int ax = 0; ax < dim; ++ax) {
    const std::uint64_t alo = a.anchor[ax], ahi = alo + a.side();
    const std::uint64_t blo = b.anchor[ax], bhi = blo + b.side();
    if (ahi < blo || bhi < alo) return false;
  }
  return true;
}

/// All pairs of leaves whose closed boxes meet differ by at most one level.
inline bool brute_force_balanced(std::span<const Octant> leaves, int dim) {
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    for (std::size_t j = i + 1; j < leaves.size(); ++j) {
      if (std::abs(int(leaves[i].level) - int(leaves[j].level)) > 1 && closures_touch(leaves[i], leaves[j], dim)) {
        return false;
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------- hanging oracle

using Key = std::array<std::uint32_t, 3>;

/// Leaves whose closure contains the node point, found by probing the 2^d cells
/// around it at every level through a hash set of the leaves.
class IncidenceOracle {
 public:
  IncidenceOracle(std::span<const Octant> leaves, int dim, int order) : dim_(dim), order_(order) {
    for (std::size_t i = 0; i < leaves.size(); ++i) index_[pack(leaves[i])] = i;
    leaves_.assign(leaves.begin(), leaves.end());
  }

  std::vector<std::size_t> incident(const Key& x) const {
    std::set<std::size_t> found;
    for (int corner = 0; corner < (1 << dim_); ++corner) {
      double y[3] = {0, 0, 0};
      bool inside = true;
      for (int a = 0; a < dim_; ++a) {
        const double s = (corner >> a) & 1 ? 0.25 : -0.25;
        y[a] = (static_cast<double>(x[a]) + s) / order_;
        if (y[a] < 0 || y[a] >= kRootLength) inside = false;
      }
      if (!inside) continue;
      for (int lev = 0; lev <= kMaxLevel; ++lev) {
        const std::uint32_t side = kRootLength >> lev;
        Octant o{{0, 0, 0}, static_cast<std::uint8_t>(lev)};
        for (int a = 0; a < dim_; ++a) o.anchor[a] = static_cast<std::uint32_t>(std::floor(y[a] / side)) * side;
        auto it = index_.find(pack(o));
        if (it != index_.end()) {
          found.insert(it->second);
          break;
        }
      }
    }
    return {found.begin(), found.end()};
  }

  /// On the closed lattice of leaf e (element pitch side/p).
  bool on_lattice(std::size_t e, const Key& x) const {
    const Octant& o = leaves_[e];
    for (int a = 0; a < dim_; ++a) {
      const std::uint64_t lo = std::uint64_t(order_) * o.anchor[a];
      if (x[a] < lo || x[a] > lo + std::uint64_t(order_) * o.side()) return false;
      if ((x[a] - lo) % o.side() != 0) return false;
    }
    return true;
  }

  bool hanging(const Key& x) const {
    for (std::size_t e : incident(x)) {
      if (!on_lattice(e, x)) return true;
    }
    return false;
  }

  const std::vector<Octant>& leaves() const { return leaves_; }

 private:
  static std::uint64_t mix(std::uint64_t h, std::uint64_t v) { return (h ^ v) * 0x100000001b3ull; }
  static std::uint64_t pack(const Octant& o) {
    return mix(mix(mix(mix(0xcbf29ce484222325ull, o.level), o.anchor[0]), o.anchor[1]), o.anchor[2]);
  }

  int dim_, order_;
  std::vector<Octant> leaves_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

inline std::vector<Key> lattice_points(const Octant& o, int order, int dim) {
  std::vector<Key> out;
  const int n = order + 1;
  const int count = dim == 3 ? n * n * n : n * n;
  for (int k = 0; k < count; ++k) {
    Key x{0, 0, 0};
    int r = k;
    for (int a = 0; a < dim; ++a) {
      x[a] = order * o.anchor[a] + static_cast<std::uint32_t>(r % n) * o.side();
      r /= n;
    }
    out.push_back(x);
  }
  return out;
}

struct OracleNodes {
  std::set<Key> nodes, hanging;
};

inline OracleNodes brute_force_nodes(std::span<const Octant> leaves, int order, int dim) {
  IncidenceOracle oracle(leaves, dim, order);
  OracleNodes out;
  for (const Octant& o : leaves) {
    for (const Key& x : lattice_points(o, order, dim)) {
      if (out.nodes.count(x) || out.hanging.count(x)) continue;
      (oracle.hanging(x) ? out.hanging : out.nodes).insert(x);
    }
  }
  return out;
}

// ---------------------------------------------------------------- reference assembly

inline double lagrange(int order, int k, double xi) {
  double v = 1;
  for (int m = 0; m <= order; ++m) {
    if (m != k) v *= (xi * order - m) / double(k - m);
  }
  return v;
}

/// Dense global operator over the NodeSet built from elemental matrices and an
/// independent hanging interpolation: each hanging element node is expanded in the
/// basis of a coarser incident leaf whose closure holds it, recursively until every
/// contribution lands on a NodeSet member.
inline std::vector<double> reference_dense(const IncompleteTree& tree, const NodeSet& nodes, const ElementalOperator& op,
                                           const DomainMapping& mapping) {
  const int p = nodes.order, dim = tree.dim;
  IncidenceOracle oracle(tree.leaves, dim, p);
  const std::size_t n = nodes.size();
  std::map<Key, std::uint32_t> id;
  for (std::size_t i = 0; i < n; ++i) id[nodes.keys[i]] = static_cast<std::uint32_t>(i);

  std::function<void(const Key&, double, std::map<std::uint32_t, double>&)> expand =
      [&](const Key& x, double w, std::map<std::uint32_t, double>& acc) {
        if (auto it = id.find(x); it != id.end()) {
          acc[it->second] += w;
          return;
        }
        for (std::size_t e : oracle.incident(x)) {
          if (oracle.on_lattice(e, x)) continue;
          const Octant& c = tree.leaves[e];
          for (const Key& y : lattice_points(c, p, dim)) {
            double phi = 1;
            for (int a = 0; a < dim; ++a) {
              const double xi = (double(x[a]) - double(p) * c.anchor[a]) / (double(p) * c.side());
              const int k = static_cast<int>((y[a] - std::uint64_t(p) * c.anchor[a]) / c.side());
              phi *= lagrange(p, k, xi);
            }
            if (phi != 0) expand(y, w * phi, acc);
          }
          return;
        }
        throw std::logic_error("reference_dense: dangling node");
      };

  std::vector<double> a(n * n, 0.0);
  for (const Octant& leaf : tree.leaves) {
    const DenseMatrix ke = elemental_matrix(op, leaf, p, dim, mapping);
    const auto pts = lattice_points(leaf, p, dim);
    std::vector<std::map<std::uint32_t, double>> rows(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) expand(pts[i], 1.0, rows[i]);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (std::size_t j = 0; j < pts.size(); ++j) {
        const double kij = ke(int(i), int(j));
        for (auto [gi, wi] : rows[i]) {
          for (auto [gj, wj] : rows[j]) a[gi * n + gj] += wi * wj * kij;
        }
      }
    }
  }
  return a;
}

/// Gaussian elimination with partial pivoting.
inline std::vector<double> dense_solve(std::vector<double> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(a[i * n + k]) > std::abs(a[piv * n + k])) piv = i;
    }
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[piv * n + j]);
      std::swap(b[k], b[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a[i * n + k] / a[k * n + k];
      if (f == 0) continue;
      for (std::size_t j = k; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
      b[i] -= f * b[k];
    }
  }
  std::vector<double> x(n);
  for (std::size_t k = n; k-- > 0;) {
    double s = b[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= a[k * n + j] * x[j];
    x[k] = s / a[k * n + k];
  }
  return x;
}

inline double max_abs(std::span<const double> v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double max_rel_deviation(std::span<const double> a, std::span<const double> b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  const double scale = std::max(max_abs(a), max_abs(b));
  return scale == 0 ? d : d / scale;
}

}  // namespace carve::testing
