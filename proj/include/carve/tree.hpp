#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "carve/octant.hpp"
#include "carve/subdomain.hpp"

namespace carve {

using RegionClassifier = std::function<RegionClass(const Octant&)>;

/// SFC-sorted, duplicate-free retained leaves. Carved subtrees are simply absent.
struct IncompleteTree {
  int dim = 3;
  std::vector<Octant> leaves;
  std::vector<RegionClass> tags;  // one per leaf

  std::size_t size() const { return leaves.size(); }
  bool empty() const { return leaves.empty(); }
  int finest_level() const;
};

/// Comparison-free MSD radix sort on child numbers, buckets permuted by the SFC
/// oracle. Duplicates are removed.
std::vector<Octant> tree_sort(std::vector<Octant> octants, int dim);

/// True when sorted (non-decreasing) under sfc_compare.
bool is_sfc_sorted(std::span<const Octant> octants);

/// All level-L octants not carved by F, in SFC order.
IncompleteTree construct_uniform(const RegionClassifier& F, int level, int dim);

/// Leaves covering the retained region, no coarser than any overlapping seed.
/// `seeds` must be SFC-sorted.
IncompleteTree construct_constrained(const RegionClassifier& F, std::span<const Octant> seeds, int dim);

/// Re-evaluates F on every leaf and stores the tags.
void coarsest_covering(IncompleteTree& tree, const RegionClassifier& F);

/// Octants refined while they are intercepted, down to `boundary_level`, and
/// uniformly down to `base_level` elsewhere. Carved octants are dropped.
std::vector<Octant> boundary_seeds(const RegionClassifier& F, int base_level, int boundary_level, int dim);

/// Maximal carved octants: carved children of retained ancestors (and the
/// root itself when fully carved). Together with the leaves they tile the root.
std::vector<Octant> carved_cover(const IncompleteTree& tree, const RegionClassifier& F);

/// Exact sum of octant volumes in finest-lattice cells.
unsigned __int128 lattice_volume(std::span<const Octant> octants, int dim);

// Tree dump/load: little-endian binary with a versioned header, or JSON records.
void write_tree_binary(const IncompleteTree& tree, const std::filesystem::path& path);
IncompleteTree read_tree_binary(const std::filesystem::path& path);
std::string tree_to_json(const IncompleteTree& tree);
IncompleteTree tree_from_json(const std::string& text);

}  // namespace carve
