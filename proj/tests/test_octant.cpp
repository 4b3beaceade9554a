#include <algorithm>
#include <random>

#include "carve/octant.hpp"
#include "carve/tree.hpp"
#include "doctest.h"

using namespace carve;

namespace {

// Bit-interleaved Morton key: x in the lowest bit of each triple.
std::uint64_t interleave(const std::array<std::uint32_t, 3>& p) {
  std::uint64_t k = 0;
  for (int b = 0; b < 21; ++b) {
    for (int a = 0; a < 3; ++a) k |= std::uint64_t((p[a] >> b) & 1u) << (3 * b + a);
  }
  return k;
}

bool oracle_less(const Octant& a, const Octant& b) {
  const auto ka = interleave(a.anchor), kb = interleave(b.anchor);
  return ka != kb ? ka < kb : a.level < b.level;
}

Octant random_octant(std::mt19937_64& rng, int dim, int max_level) {
  std::uniform_int_distribution<std::uint32_t> c(0, kRootLength - 1);
  Octant o{{c(rng), c(rng), dim == 3 ? c(rng) : 0u}, kMaxLevel};
  return o.ancestor(std::uniform_int_distribution<int>(0, max_level)(rng));
}

}  // namespace

TEST_CASE("child and parent round trip") {
  const Octant root{};
  for (int c = 0; c < 8; ++c) {
    const Octant ch = root.child(c);
    CHECK(ch.level == 1);
    CHECK(ch.parent() == root);
    CHECK(ch.child_number(1) == c);
    CHECK(root.is_strict_ancestor_of(ch));
    CHECK_FALSE(ch.is_ancestor_or_self_of(root));
  }
  CHECK(root.child(5).anchor == std::array<std::uint32_t, 3>{kRootLength / 2, 0, kRootLength / 2});
}

TEST_CASE("sfc_compare agrees with the interleaved-key order") {
  std::mt19937_64 rng(7);
  for (int dim : {2, 3}) {
    for (int i = 0; i < 20000; ++i) {
      Octant a = random_octant(rng, dim, 12), b = random_octant(rng, dim, 12);
      if (i % 4 == 0) b = a.ancestor(std::uniform_int_distribution<int>(0, a.level)(rng));
      CHECK(sfc_less(a, b) == oracle_less(a, b));
      CHECK((sfc_compare(a, b) == 0) == (a == b));
    }
  }
}

TEST_CASE("morton_less on lattice points matches interleaving") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::uint32_t> c(0, (1u << 21) - 1);
  for (int i = 0; i < 20000; ++i) {
    std::array<std::uint32_t, 3> a{c(rng), c(rng), c(rng)}, b{c(rng), c(rng), c(rng)};
    if (i % 3 == 0) b[i % 2] = a[i % 2];
    CHECK(morton_less(a, b) == (interleave(a) < interleave(b)));
  }
}

TEST_CASE("common ancestor level") {
  const Octant root{};
  const Octant a = root.child(0).child(3), b = root.child(0).child(1).child(2);
  CHECK(common_ancestor_level(a, b) == 1);
  CHECK(common_ancestor_level(a, a) == 2);
  CHECK(common_ancestor_level(a, a.child(4)) == 2);
  CHECK(common_ancestor_level(root.child(1), root.child(2)) == 0);
}

TEST_CASE("tree_sort matches a comparison sort and removes duplicates") {
  std::mt19937_64 rng(3);
  for (int dim : {2, 3}) {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Octant> v;
      for (int i = 0; i < 3000; ++i) v.push_back(random_octant(rng, dim, 9));
      for (int i = 0; i < 200; ++i) v.push_back(v[i * 7]);
      std::vector<Octant> expect = v;
      std::sort(expect.begin(), expect.end(), oracle_less);
      expect.erase(std::unique(expect.begin(), expect.end()), expect.end());
      const auto got = tree_sort(v, dim);
      CHECK(got == expect);
      CHECK(is_sfc_sorted(got));
    }
  }
}
