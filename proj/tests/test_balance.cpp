#include <random>

#include "carve/balance.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace carve;

TEST_CASE("same-level neighbor counts") {
  const Octant i2{{kRootLength / 4, kRootLength / 4, 0}, 2};
  CHECK(make_neighbors(i2, 2).size() == 8);
  CHECK(make_neighbors(Octant{}.child(0), 2).size() == 3);
  CHECK(make_neighbors(Octant{}.child(0).child(7), 3).size() == 26);
  CHECK(make_neighbors(Octant{}.child(0), 3).size() == 7);
  CHECK(make_neighbors(Octant{}, 3).empty());
}

namespace {

IncompleteTree tree_of(std::vector<Octant> leaves) {
  IncompleteTree t;
  t.dim = 2;
  t.leaves = tree_sort(std::move(leaves), 2);
  t.tags.assign(t.leaves.size(), RegionClass::RetainInternal);
  return t;
}

}  // namespace

TEST_CASE("is_balanced on hand-built quadtrees") {
  const Octant root{};
  std::vector<Octant> ok;
  for (int c = 0; c < 4; ++c) {
    for (int g = 0; g < 4; ++g) {
      if (c == 0 && g == 3) {
        for (int h = 0; h < 4; ++h) ok.push_back(root.child(0).child(3).child(h));
      } else {
        ok.push_back(root.child(c).child(g));
      }
    }
  }
  CHECK(is_balanced(tree_of(ok)).balanced);

  // A level-3 corner against a level-1 quadrant, touching only at one point.
  std::vector<Octant> bad{root.child(1), root.child(2), root.child(3)};
  for (int g = 0; g < 3; ++g) bad.push_back(root.child(0).child(g));
  for (int h = 0; h < 4; ++h) bad.push_back(root.child(0).child(3).child(h));
  const auto report = is_balanced(tree_of(bad));
  CHECK_FALSE(report.balanced);
  CHECK_FALSE(testing::brute_force_balanced(tree_of(bad).leaves, 2));
  REQUIRE_FALSE(report.violations.empty());
  CHECK(report.violations.front().first.level == 1);
  CHECK(report.violations.front().second.level == 3);
}

TEST_CASE("balanced construction passes the all-pairs check and refines the input") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const int dim = trial % 2 ? 3 : 2;
    const int max_level = dim == 2 ? 7 : 5;
    const auto shape = testing::random_shape(rng, dim);
    const Carver carver(shape, {}, dim);
    auto seeds = tree_sort(boundary_seeds(carver, 1, max_level, dim), dim);
    if (seeds.empty()) continue;
    const IncompleteTree plain = construct_constrained(carver, seeds, dim);
    const IncompleteTree bal = construct_balanced(carver, seeds, dim);
    CHECK(testing::brute_force_balanced(bal.leaves, dim));
    CHECK(is_balanced(bal).balanced);
    CHECK(is_balanced(plain).balanced == testing::brute_force_balanced(plain.leaves, dim));
    for (const Octant& leaf : bal.leaves) {
      const auto idx = locate_leaf(plain.leaves, leaf.anchor);
      if (idx >= 0) CHECK(plain.leaves[idx].level <= leaf.level);
    }
    CHECK(lattice_volume(bal.leaves, dim) >= lattice_volume(plain.leaves, dim));
  }
}

TEST_CASE("locate_leaf matches a linear scan") {
  std::mt19937_64 rng(8);
  const auto c = testing::random_case(rng, 3, 5);
  std::uniform_int_distribution<std::uint32_t> u(0, kRootLength - 1);
  for (int i = 0; i < 2000; ++i) {
    const std::array<std::uint32_t, 3> p{u(rng), u(rng), u(rng)};
    std::ptrdiff_t expect = -1;
    for (std::size_t k = 0; k < c.tree.size(); ++k) {
      const Octant& o = c.tree.leaves[k];
      bool in = true;
      for (int a = 0; a < 3; ++a) in &= p[a] >= o.anchor[a] && p[a] < o.anchor[a] + o.side();
      if (in) expect = static_cast<std::ptrdiff_t>(k);
    }
    CHECK(locate_leaf(c.tree.leaves, p) == expect);
  }
}
