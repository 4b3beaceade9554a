#pragma once

#include <span>
#include <utility>
#include <vector>

#include "carve/tree.hpp"

namespace carve {

/// Same-level neighbors of an octant (up to 3^d - 1), clipped at the root-cube walls only.
std::vector<Octant> make_neighbors(const Octant& oct, int dim);

/// Seeds whose reconstruction is 2:1 balanced. Neighbors of every octant's parent are
/// added one level coarser, finest level first. Neighbors in carved space are kept.
std::vector<Octant> bottom_up_constrain_neighbors(std::span<const Octant> leaves, int dim);

/// Construct -> constrain neighbors (no classifier) -> construct.
IncompleteTree construct_balanced(const RegionClassifier& F, std::vector<Octant> seeds, int dim);

struct BalanceReport {
  bool balanced = true;
  std::vector<std::pair<Octant, Octant>> violations;  // (coarse, fine)
};

/// Checks every pair of retained leaves sharing any boundary point differ by at most one level.
BalanceReport is_balanced(const IncompleteTree& tree);

/// Index of the leaf containing the lattice point, or -1.
std::ptrdiff_t locate_leaf(std::span<const Octant> leaves, const std::array<std::uint32_t, 3>& point);

}  // namespace carve
