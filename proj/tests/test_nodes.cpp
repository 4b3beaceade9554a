#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "carve/nodes.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace carve;
using testing::Key;

namespace {

std::set<Key> as_set(const std::vector<NodeKey>& v) { return {v.begin(), v.end()}; }

// Points of the child lattice (pitch side/2p) on the closed element boundary
// that are not points of the element lattice.
std::set<Key> cancellation_oracle(const Octant& o, int p, int dim) {
  std::set<Key> out;
  const int n = 2 * p;
  const std::uint32_t h = o.side() / 2;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      for (int k = 0; k <= (dim == 3 ? n : 0); ++k) {
        const int idx[3] = {i, j, k};
        bool on_boundary = false, on_lattice = true;
        for (int a = 0; a < dim; ++a) {
          on_boundary |= idx[a] == 0 || idx[a] == n;
          on_lattice &= idx[a] % 2 == 0;
        }
        if (!on_boundary || on_lattice) continue;
        Key x{0, 0, 0};
        for (int a = 0; a < dim; ++a) x[a] = p * o.anchor[a] + idx[a] * h;
        out.insert(x);
      }
    }
  }
  return out;
}

IncompleteTree seven_leaf_mesh() {
  const Octant root{};
  std::vector<Octant> leaves{root.child(1), root.child(2), root.child(3)};
  for (int c = 0; c < 4; ++c) leaves.push_back(root.child(0).child(c));
  IncompleteTree t;
  t.dim = 2;
  t.leaves = tree_sort(leaves, 2);
  t.tags.assign(t.leaves.size(), RegionClass::RetainInternal);
  return t;
}

Key unit_key(double x, double y, int p) {
  return {static_cast<std::uint32_t>(x * p * kRootLength), static_cast<std::uint32_t>(y * p * kRootLength), 0};
}

}  // namespace

TEST_CASE("element node lattices") {
  const Octant root{};
  CHECK(generate_element_nodes(root, 1, 2).size() == 4);
  const auto q = generate_element_nodes(root, 2, 2);
  CHECK(q.size() == 9);
  CHECK(as_set(q).count(unit_key(0.5, 0.5, 2)));
  const Octant o = root.child(6).child(1);
  const auto c = generate_element_nodes(o, 2, 3);
  CHECK(c.size() == 27);
  const auto corners = generate_element_nodes(o, 1, 3);
  for (const auto& k : corners) {
    Key scaled{2 * k[0], 2 * k[1], 2 * k[2]};
    CHECK(as_set(c).count(scaled));
  }
  // Axis 0 fastest.
  CHECK(q[1][0] > q[0][0]);
  CHECK(q[1][1] == q[0][1]);
}

TEST_CASE("cancellation nodes equal the child-lattice boundary set difference") {
  const Octant root{};
  CHECK(generate_cancellation_nodes(root, 1, 2).size() == 4);
  CHECK(generate_cancellation_nodes(root, 2, 2).size() == 8);
  CHECK(generate_cancellation_nodes(root, 1, 3).size() == 18);
  for (int dim : {2, 3}) {
    for (int p : {1, 2}) {
      const Octant o = root.child(3).child(4 % (1 << dim));
      CHECK(as_set(generate_cancellation_nodes(o, p, dim)) == cancellation_oracle(o, p, dim));
    }
  }
}

TEST_CASE("uniform 2x2 quadtree has 9 nodes") {
  IncompleteTree t;
  t.dim = 2;
  for (int c = 0; c < 4; ++c) t.leaves.push_back(Octant{}.child(c));
  t.tags.assign(4, RegionClass::RetainInternal);
  const NodeSet ns = enumerate_nodes(t, 1, nullptr);
  CHECK(ns.size() == 9);
  CHECK(ns.boundary_count() == 8);
}

TEST_CASE("seven-leaf mesh: 12 nodes, two hanging") {
  const IncompleteTree t = seven_leaf_mesh();
  const NodeSet ns = enumerate_nodes(t, 1, nullptr);
  CHECK(ns.size() == 12);
  CHECK_FALSE(ns.find(unit_key(0.5, 0.25, 1)));
  CHECK_FALSE(ns.find(unit_key(0.25, 0.5, 1)));
  CHECK(ns.find(unit_key(0.25, 0.25, 1)));
  for (std::size_t i = 0; i + 1 < ns.size(); ++i) CHECK(node_less(ns.keys[i], ns.keys[i + 1]));
  const auto oracle = testing::brute_force_nodes(t.leaves, 1, 2);
  CHECK(oracle.nodes == as_set(ns.keys));
  CHECK(oracle.hanging.size() == 2);
}

TEST_CASE("p=1 edge-midpoint stencil on the seven-leaf mesh") {
  const IncompleteTree t = seven_leaf_mesh();
  const NodeSet ns = enumerate_nodes(t, 1, nullptr);
  const auto gov = build_hanging_governance(t, ns);
  const Key target = unit_key(0.5, 0.25, 1);
  int found = 0;
  for (std::size_t e = 0; e < t.size(); ++e) {
    const auto pts = generate_element_nodes(t.leaves[e], 1, 2);
    for (int i = 0; i < gov.nodes_per_element; ++i) {
      if (pts[i] != target) continue;
      ++found;
      REQUIRE(gov.is_hanging(e, i));
      std::map<Key, double> w;
      for (const auto& s : gov.local(e, i)) w[ns.keys[s.index]] = s.weight;
      CHECK(w.size() == 2);
      CHECK(w[unit_key(0.5, 0, 1)] == 0.5);
      CHECK(w[unit_key(0.5, 0.5, 1)] == 0.5);
    }
  }
  CHECK(found == 2);  // corners of two fine leaves
}

TEST_CASE("p=1 face-center stencil in 3D") {
  const Octant root{};
  std::vector<Octant> leaves;
  for (int c = 1; c < 8; ++c) leaves.push_back(root.child(c));
  for (int g = 0; g < 8; ++g) leaves.push_back(root.child(0).child(g));
  IncompleteTree t;
  t.dim = 3;
  t.leaves = tree_sort(leaves, 3);
  t.tags.assign(t.size(), RegionClass::RetainInternal);
  const NodeSet ns = enumerate_nodes(t, 1, nullptr);
  const auto gov = build_hanging_governance(t, ns);
  const std::uint32_t q = kRootLength / 4, h = kRootLength / 2;
  const Key center{h, q, q};  // face x=1/2 of the fine block, center of the coarse face
  int found = 0;
  for (std::size_t e = 0; e < t.size(); ++e) {
    const auto pts = generate_element_nodes(t.leaves[e], 1, 3);
    for (int i = 0; i < gov.nodes_per_element; ++i) {
      if (pts[i] != center) continue;
      ++found;
      const auto st = gov.local(e, i);
      CHECK(st.size() == 4);
      for (const auto& s : st) CHECK(s.weight == 0.25);
    }
  }
  CHECK(found == 4);
}

TEST_CASE("p=2 quarter-point weights are 3/8, 3/4, -1/8") {
  // Coarse edge nodes at 0, 1/2, 1 of the level-1 leaf [1/2,1]x[0,1/2]; the fine
  // neighbor's node at y=1/8 sits at the coarse-edge quarter point.
  const Octant root{};
  std::vector<Octant> leaves{root.child(1), root.child(2), root.child(3)};
  for (int c = 0; c < 4; ++c) leaves.push_back(root.child(0).child(c));
  IncompleteTree t;
  t.dim = 2;
  t.leaves = tree_sort(leaves, 2);
  t.tags.assign(t.size(), RegionClass::RetainInternal);
  const NodeSet ns = enumerate_nodes(t, 2, nullptr);
  const auto gov = build_hanging_governance(t, ns);
  const Key target = unit_key(0.5, 0.125, 2);
  int found = 0;
  for (std::size_t e = 0; e < t.size(); ++e) {
    const auto pts = generate_element_nodes(t.leaves[e], 2, 2);
    for (int i = 0; i < gov.nodes_per_element; ++i) {
      if (pts[i] != target) continue;
      ++found;
      std::map<Key, double> w;
      for (const auto& s : gov.local(e, i)) w[ns.keys[s.index]] = s.weight;
      CHECK(w.size() == 3);
      CHECK(w[unit_key(0.5, 0.0, 2)] == 0.375);
      CHECK(w[unit_key(0.5, 0.25, 2)] == 0.75);
      CHECK(w[unit_key(0.5, 0.5, 2)] == -0.125);
    }
  }
  CHECK(found == 1);
}

TEST_CASE("unbalanced trees are rejected") {
  const Octant root{};
  std::vector<Octant> bad{root.child(1), root.child(2), root.child(3)};
  for (int g = 0; g < 3; ++g) bad.push_back(root.child(0).child(g));
  for (int h = 0; h < 4; ++h) bad.push_back(root.child(0).child(3).child(h));
  IncompleteTree t;
  t.dim = 2;
  t.leaves = tree_sort(bad, 2);
  t.tags.assign(t.size(), RegionClass::RetainInternal);
  CHECK_THROWS(enumerate_nodes(t, 1, nullptr));
}

TEST_CASE("random trees: NodeSet equals the brute-force classification") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 40; ++trial) {
    const int dim = trial % 2 ? 3 : 2;
    const int p = trial % 4 < 2 ? 1 : 2;
    const auto c = testing::random_case(rng, dim, dim == 2 ? 5 : 4);
    const NodeSet ns = enumerate_nodes(c.tree, p, c.carver.get());
    const auto oracle = testing::brute_force_nodes(c.tree.leaves, p, dim);
    CHECK(oracle.nodes == as_set(ns.keys));
    for (const Key& h : oracle.hanging) {
      CHECK(c.carver->classify_point(node_unit_coords(h, p, dim)) == PointClass::Retained);
    }
  }
}

TEST_CASE("conforming construction removes hanging nodes from the carved boundary") {
  std::mt19937_64 rng(83);
  int repaired = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int dim = 2 + trial % 2;
    const auto shape = testing::random_shape(rng, dim);
    const Carver carver(shape, {}, dim);
    auto seeds = boundary_seeds(carver, 1, dim == 2 ? 3 : 2, dim);
    std::uniform_int_distribution<std::uint32_t> c(0, kRootLength - 1);
    for (int i = 0; i < 6; ++i) {
      const Octant o = Octant{{c(rng), c(rng), dim == 3 ? c(rng) : 0u}, kMaxLevel}.ancestor(dim == 2 ? 6 : 4);
      if (carver(o) != RegionClass::Carved) seeds.push_back(o);
    }
    seeds = tree_sort(seeds, dim);
    if (seeds.empty()) continue;
    const IncompleteTree plain = construct_balanced(carver, seeds, dim);
    repaired += !carved_hanging_sources(plain.leaves, dim, carver).empty();
    const IncompleteTree t = construct_boundary_conforming(carver, seeds, dim);
    CHECK(is_balanced(t).balanced);
    CHECK(carved_hanging_sources(t.leaves, dim, carver).empty());
    for (int p : {1, 2}) {
      for (const Key& h : testing::brute_force_nodes(t.leaves, p, dim).hanging) {
        CHECK(carver.classify_point(node_unit_coords(h, p, dim)) == PointClass::Retained);
      }
    }
  }
  CHECK(repaired > 0);  // the plain construction does produce such nodes
}

TEST_CASE("boundary flags: carved points and root walls, nothing else") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = 2 + trial % 2;
    const auto c = testing::random_case(rng, dim, dim == 2 ? 6 : 4);
    const NodeSet ns = enumerate_nodes(c.tree, 1, c.carver.get());
    for (std::size_t i = 0; i < ns.size(); ++i) {
      const Vec3 x = ns.unit_coords(i);
      bool wall = false;
      for (int a = 0; a < dim; ++a) wall |= x[a] == 0.0 || x[a] == 1.0;
      const bool carved = c.shape->signed_distance(x) >= 0;
      CHECK(bool(ns.boundary[i]) == (wall || carved));
    }
  }
}

TEST_CASE("governance reproduces polynomials of degree <= p at hanging nodes") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 24; ++trial) {
    const int dim = trial % 2 ? 3 : 2;
    const int p = 1 + (trial / 2) % 2;
    const auto c = testing::random_case(rng, dim, dim == 2 ? 6 : 4);
    const NodeSet ns = enumerate_nodes(c.tree, p, c.carver.get());
    const auto gov = build_hanging_governance(c.tree, ns);
    REQUIRE(gov.element_count() == c.tree.size());
    std::size_t hanging = 0;
    for (std::size_t e = 0; e < c.tree.size(); ++e) {
      const auto pts = generate_element_nodes(c.tree.leaves[e], p, dim);
      for (int i = 0; i < gov.nodes_per_element; ++i) {
        const auto st = gov.local(e, i);
        if (!gov.is_hanging(e, i)) {
          REQUIRE(st.size() == 1);
          CHECK(ns.keys[st[0].index] == pts[i]);
          CHECK(st[0].weight == 1.0);
          continue;
        }
        ++hanging;
        CHECK_FALSE(ns.find(pts[i]));
        const Vec3 x = node_unit_coords(pts[i], p, dim);
        for (int ex = 0; ex <= p; ++ex) {
          for (int ey = 0; ey <= p; ++ey) {
            for (int ez = 0; ez <= (dim == 3 ? p : 0); ++ez) {
              auto m = [&](const Vec3& y) { return std::pow(y.x, ex) * std::pow(y.y, ey) * std::pow(y.z, ez); };
              double v = 0;
              for (const auto& s : st) v += s.weight * m(ns.unit_coords(s.index));
              CHECK(v == doctest::Approx(m(x)).epsilon(1e-12));
            }
          }
        }
      }
    }
    (void)hanging;
  }
}

TEST_CASE("node CSV dump in physical coordinates") {
  IncompleteTree t;
  t.dim = 2;
  for (int c = 0; c < 4; ++c) t.leaves.push_back(Octant{}.child(c));
  t.tags.assign(4, RegionClass::RetainInternal);
  const NodeSet ns = enumerate_nodes(t, 1, nullptr);
  const auto path = std::filesystem::temp_directory_path() / "carve_nodes.csv";
  write_nodes_csv(ns, DomainMapping{2.0, {1, 0, 0}}, path);
  std::ifstream in(path);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "id,x,y,boundary");
  CHECK(first == "0,1,0,1");
  std::filesystem::remove(path);
}
