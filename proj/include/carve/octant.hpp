#pragma once

#include <array>
#include <bit>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>

namespace carve {

/// Finest refinement level per axis. Anchors live on the lattice [0, 2^kMaxLevel).
inline constexpr int kMaxLevel = 20;
inline constexpr std::uint32_t kRootLength = 1u << kMaxLevel;

/// An octant (quadrant in 2D): a level and the lattice anchor of its lower corner.
///
/// Unused axes (z in 2D) always carry a zero anchor, so child numbers and SFC
/// comparisons never need to know the dimension.
struct Octant {
  std::array<std::uint32_t, 3> anchor{0, 0, 0};
  std::uint8_t level = 0;

  constexpr std::uint32_t side() const { return kRootLength >> level; }

  constexpr bool operator==(const Octant&) const = default;

  /// Morton child index of the level-`lev` ancestor inside its own parent.
  constexpr int child_number(int lev) const {
    const int shift = kMaxLevel - lev;
    return static_cast<int>(((anchor[0] >> shift) & 1u) | (((anchor[1] >> shift) & 1u) << 1) |
                            (((anchor[2] >> shift) & 1u) << 2));
  }

  constexpr Octant parent() const { return ancestor(level - 1); }

  constexpr Octant ancestor(int lev) const {
    const std::uint32_t mask = ~((kRootLength >> lev) - 1u);
    return Octant{{anchor[0] & mask, anchor[1] & mask, anchor[2] & mask},
                  static_cast<std::uint8_t>(lev)};
  }

  constexpr Octant child(int morton_child) const {
    const std::uint32_t half = side() >> 1;
    Octant c{anchor, static_cast<std::uint8_t>(level + 1)};
    for (int axis = 0; axis < 3; ++axis) {
      if ((morton_child >> axis) & 1) c.anchor[axis] += half;
    }
    return c;
  }

  /// True when `other` lies inside this octant (or equals it).
  constexpr bool is_ancestor_or_self_of(const Octant& other) const {
    return other.level >= level && other.ancestor(level) == *this;
  }

  constexpr bool is_strict_ancestor_of(const Octant& other) const {
    return other.level > level && other.ancestor(level) == *this;
  }
};

inline constexpr Octant kRootOctant{};

struct OctantHash {
  std::size_t operator()(const Octant& o) const noexcept {
    std::uint64_t h = o.level;
    for (auto a : o.anchor) h = h * 0x9E3779B97F4A7C15ull + a;
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

/// Regional space-filling-curve oracle. Only the Morton curve is realized;
/// a curve with rotating orientation (Hilbert) would carry state in `state`.
class SfcOracle {
 public:
  constexpr SfcOracle() = default;

  constexpr int sfc_to_morton(int sfc_child) const { return sfc_child; }
  constexpr int morton_to_sfc(int morton_child) const { return morton_child; }
  constexpr SfcOracle child(int /*sfc_child*/) const { return *this; }
  constexpr int state() const { return state_; }

 private:
  int state_ = 0;
};

/// Level of the lowest common ancestor of two octants.
int common_ancestor_level(const Octant& a, const Octant& b);

/// Total SFC order: ancestors precede descendants, otherwise Morton order of the
/// first differing child step.
std::strong_ordering sfc_compare(const Octant& a, const Octant& b);

inline bool sfc_less(const Octant& a, const Octant& b) { return sfc_compare(a, b) < 0; }

/// Morton order on lattice points (any 32-bit coordinates).
bool morton_less(const std::array<std::uint32_t, 3>& a, const std::array<std::uint32_t, 3>& b);

}  // namespace carve
