#include "carve/balance.hpp"

#include <algorithm>
#include <unordered_set>


namespace carve {

std::vector<Octant> make_neighbors(const Octant& oct, int dim) {
  std::vector<Octant> out;
  const std::int64_t side = oct.side();
  const int zr = dim == 3 ? 1 : 0;
  for (int dz = -zr; dz <= zr; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0 && dz == 0) continue;
        const std::int64_t a[3] = {oct.anchor[0] + dx * side, oct.anchor[1] + dy * side, oct.anchor[2] + dz * side};
        bool inside = true;
        for (int i = 0; i < 3; ++i) inside = inside && a[i] >= 0 && a[i] < static_cast<std::int64_t>(kRootLength);
        if (!inside) continue;
        out.push_back(Octant{{static_cast<std::uint32_t>(a[0]), static_cast<std::uint32_t>(a[1]),
                              static_cast<std::uint32_t>(a[2])},
                             oct.level});
      }
  return out;
}

std::vector<Octant> bottom_up_constrain_neighbors(std::span<const Octant> leaves, int dim) {
  int finest = 0;
  for (const auto& o : leaves) finest = std::max<int>(finest, o.level);

  // Ladder of seeds per level with add_unique semantics.
  std::vector<std::vector<Octant>> ladder(finest + 1);
  std::vector<std::unordered_set<Octant, OctantHash>> seen(finest + 1);
  auto add_unique = [&](const Octant& o) {
    if (seen[o.level].insert(o).second) ladder[o.level].push_back(o);
  };
  for (const auto& o : leaves) add_unique(o);

  for (int l = finest; l >= 1; --l) {
    // ladder[l-1] grows while ladder[l] is read; indices stay valid.
    for (std::size_t i = 0; i < ladder[l].size(); ++i) {
      const Octant parent = ladder[l][i].parent();
      for (const auto& n : make_neighbors(parent, dim)) add_unique(n);
    }
  }

  std::vector<Octant> seeds;
  for (const auto& level : ladder) seeds.insert(seeds.end(), level.begin(), level.end());
  return tree_sort(std::move(seeds), dim);
}

IncompleteTree construct_balanced(const RegionClassifier& F, std::vector<Octant> seeds, int dim) {
  seeds = tree_sort(std::move(seeds), dim);
  const IncompleteTree t1 = construct_constrained(F, seeds, dim);
  const std::vector<Octant> t2 = bottom_up_constrain_neighbors(t1.leaves, dim);
  return construct_constrained(F, t2, dim);
}

std::ptrdiff_t locate_leaf(std::span<const Octant> leaves, const std::array<std::uint32_t, 3>& point) {
  const Octant probe{point, static_cast<std::uint8_t>(kMaxLevel)};
  auto it = std::upper_bound(leaves.begin(), leaves.end(), probe,
                             [](const Octant& a, const Octant& b) { return sfc_less(a, b); });
  if (it == leaves.begin()) return -1;
  --it;
  return it->is_ancestor_or_self_of(probe) ? it - leaves.begin() : -1;
}

BalanceReport is_balanced(const IncompleteTree& tree) {
  BalanceReport report;
  const int zr = tree.dim == 3 ? 1 : 0;
  for (const auto& fine : tree.leaves) {
    if (fine.level < 2) continue;
    const std::int64_t side = fine.side();
    for (int dz = -zr; dz <= zr; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const int d[3] = {dx, dy, dz};
          std::array<std::uint32_t, 3> probe{};
          bool inside = true;
          for (int a = 0; a < 3; ++a) {
            std::int64_t v = fine.anchor[a];
            if (d[a] < 0) v -= 1;
            if (d[a] > 0) v += side;
            inside = inside && v >= 0 && v < static_cast<std::int64_t>(kRootLength);
            probe[a] = static_cast<std::uint32_t>(v);
          }
          if (!inside) continue;
          const auto idx = locate_leaf(tree.leaves, probe);
          if (idx < 0) continue;
          const Octant& coarse = tree.leaves[idx];
          if (coarse.level + 1 < fine.level) {
            const std::pair<Octant, Octant> v{coarse, fine};
            if (std::find(report.violations.begin(), report.violations.end(), v) == report.violations.end()) {
              report.violations.push_back(v);
            }
          }
        }
  }
  report.balanced = report.violations.empty();
  return report;
}

}  // namespace carve
