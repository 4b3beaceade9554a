#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "carve/geometry.hpp"
#include "carve/subdomain.hpp"
#include "carve/tree.hpp"

namespace carve {

/// Node coordinate on the lattice of pitch 1/(p * 2^kMaxLevel). Exact integer equality.
using NodeKey = std::array<std::uint32_t, 3>;

inline bool node_less(const NodeKey& a, const NodeKey& b) { return morton_less(a, b); }

/// Unique non-hanging nodes in Morton order; ids are positions in `keys`.
struct NodeSet {
  int dim = 3;
  int order = 1;
  std::vector<NodeKey> keys;
  std::vector<std::uint8_t> boundary;

  std::size_t size() const { return keys.size(); }
  std::optional<std::uint32_t> find(const NodeKey& key) const;
  Vec3 unit_coords(std::size_t id) const;
  std::size_t boundary_count() const;
};

Vec3 node_unit_coords(const NodeKey& key, int order, int dim);

/// The (p+1)^d lattice of the closed element, lexicographic with axis 0 fastest.
std::vector<NodeKey> generate_element_nodes(const Octant& leaf, int order, int dim);

/// Child-lattice points on the element boundary that are not element nodes:
/// where hanging nodes of hypothetical finer neighbors would sit.
std::vector<NodeKey> generate_cancellation_nodes(const Octant& leaf, int order, int dim);

/// Sort-and-cancel node enumeration. Requires a 2:1-balanced tree (throws otherwise).
/// Boundary flags: carved points (when `carver` is given) and root-cube wall points.
NodeSet enumerate_nodes(const IncompleteTree& tree, int order, const Carver* carver);

/// Enumeration without the balance check; used by the distributed path after its own check.
NodeSet enumerate_nodes_unchecked(std::span<const Octant> leaves, int dim, int order, const Carver* carver);

/// Leaves that would own a hanging node lying in the carved set, for order 1 or 2: the
/// coarse side of a level jump across a face or edge that touches C. SFC-sorted, unique.
std::vector<Octant> carved_hanging_sources(std::span<const Octant> leaves, int dim, const Carver& carver);

/// Balanced construction followed by refinement of carved_hanging_sources until none
/// remain, so that no hanging node of either order sits on the carved boundary.
IncompleteTree construct_boundary_conforming(const Carver& carver, std::vector<Octant> seeds, int dim);

/// Boundary flag of a single node key.
bool is_boundary_node(const NodeKey& key, int order, int dim, const Carver* carver);

struct StencilEntry {
  std::uint32_t index;
  double weight;
};

/// Per element and local node: the non-hanging node itself (one entry, weight 1) or the
/// interpolation stencil from the parent's face/edge nodes.
struct HangingGovernance {
  int nodes_per_element = 0;

  std::size_t element_count() const {
    return nodes_per_element == 0 ? 0 : (offsets.size() - 1) / nodes_per_element;
  }
  std::span<const StencilEntry> local(std::size_t element, int local_node) const {
    const std::size_t k = element * nodes_per_element + local_node;
    return {entries.data() + offsets[k], entries.data() + offsets[k + 1]};
  }
  bool is_hanging(std::size_t element, int local_node) const {
    return hanging[element * nodes_per_element + local_node] != 0;
  }

  std::vector<std::uint32_t> offsets;  // elements * nodes_per_element + 1
  std::vector<StencilEntry> entries;
  std::vector<std::uint8_t> hanging;
};

HangingGovernance build_hanging_governance(const IncompleteTree& tree, const NodeSet& nodes);
HangingGovernance build_hanging_governance(std::span<const Octant> leaves, const NodeSet& nodes);

/// CSV `id,x,y[,z],boundary` in physical coordinates.
void write_nodes_csv(const NodeSet& nodes, const DomainMapping& mapping, const std::filesystem::path& path);

}  // namespace carve
