#include "carve/octant.hpp"

#include <algorithm>

namespace carve {

namespace {

// Highest differing anchor bit of two octants, or -1 when anchors agree.
int highest_differing_bit(const Octant& a, const Octant& b) {
  const std::uint32_t x = (a.anchor[0] ^ b.anchor[0]) | (a.anchor[1] ^ b.anchor[1]) |
                          (a.anchor[2] ^ b.anchor[2]);
  return static_cast<int>(std::bit_width(x)) - 1;
}

}  // namespace

int common_ancestor_level(const Octant& a, const Octant& b) {
  const int min_level = std::min(a.level, b.level);
  const int hb = highest_differing_bit(a, b);
  if (hb < 0) return min_level;
  // They sit in different children of the level (kMaxLevel - hb - 1) ancestor.
  return std::min(min_level, kMaxLevel - hb - 1);
}

std::strong_ordering sfc_compare(const Octant& a, const Octant& b) {
  const int hb = highest_differing_bit(a, b);
  const int min_level = std::min(a.level, b.level);
  if (hb < 0 || kMaxLevel - hb > min_level) {
    // Same anchor, or one contains the other: the coarser comes first.
    return a.level <=> b.level;
  }
  const SfcOracle oracle;
  const int lev = kMaxLevel - hb;
  return oracle.morton_to_sfc(a.child_number(lev)) <=> oracle.morton_to_sfc(b.child_number(lev));
}

bool morton_less(const std::array<std::uint32_t, 3>& a, const std::array<std::uint32_t, 3>& b) {
  int best = -1;
  int best_width = 0;
  for (int axis = 0; axis < 3; ++axis) {
    const int w = static_cast<int>(std::bit_width(a[axis] ^ b[axis]));
    if (w > 0 && w >= best_width) {
      best = axis;
      best_width = w;
    }
  }
  if (best < 0) return false;
  return a[best] < b[best];
}

}  // namespace carve
