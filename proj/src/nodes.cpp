#include "carve/nodes.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "carve/balance.hpp"
#include "carve/traversal.hpp"

namespace carve {

Vec3 node_unit_coords(const NodeKey& key, int order, int dim) {
  const double pitch = 1.0 / (static_cast<double>(order) * kRootLength);
  Vec3 x;
  for (int a = 0; a < dim; ++a) x[a] = key[a] * pitch;
  return x;
}

std::optional<std::uint32_t> NodeSet::find(const NodeKey& key) const {
  auto it = std::lower_bound(keys.begin(), keys.end(), key, node_less);
  if (it == keys.end() || *it != key) return std::nullopt;
  return static_cast<std::uint32_t>(it - keys.begin());
}

Vec3 NodeSet::unit_coords(std::size_t id) const { return node_unit_coords(keys[id], order, dim); }

std::size_t NodeSet::boundary_count() const {
  return static_cast<std::size_t>(std::count(boundary.begin(), boundary.end(), std::uint8_t{1}));
}

std::vector<NodeKey> generate_element_nodes(const Octant& leaf, int order, int dim) {
  const int n1 = order + 1;
  const int npe = ipow(n1, dim);
  std::vector<NodeKey> out(npe);
  const std::uint32_t side = leaf.side();
  for (int i = 0; i < npe; ++i) {
    NodeKey k{0, 0, 0};
    int rem = i;
    for (int a = 0; a < dim; ++a) {
      k[a] = static_cast<std::uint32_t>(order) * leaf.anchor[a] + static_cast<std::uint32_t>(rem % n1) * side;
      rem /= n1;
    }
    out[i] = k;
  }
  return out;
}

std::vector<NodeKey> generate_cancellation_nodes(const Octant& leaf, int order, int dim) {
  std::vector<NodeKey> out;
  if (leaf.level >= kMaxLevel) return out;
  const int n1 = 2 * order + 1;
  const int total = ipow(n1, dim);
  const std::uint32_t half = leaf.side() / 2;
  for (int i = 0; i < total; ++i) {
    NodeKey k{0, 0, 0};
    bool on_boundary = false, all_even = true;
    int rem = i;
    for (int a = 0; a < dim; ++a) {
      const int j = rem % n1;
      rem /= n1;
      on_boundary = on_boundary || j == 0 || j == 2 * order;
      all_even = all_even && j % 2 == 0;
      k[a] = static_cast<std::uint32_t>(order) * leaf.anchor[a] + static_cast<std::uint32_t>(j) * half;
    }
    if (on_boundary && !all_even) out.push_back(k);
  }
  return out;
}

bool is_boundary_node(const NodeKey& key, int order, int dim, const Carver* carver) {
  const std::uint32_t top = static_cast<std::uint32_t>(order) * kRootLength;
  for (int a = 0; a < dim; ++a) {
    if (key[a] == 0 || key[a] == top) return true;
  }
  return carver != nullptr && carver->classify_point(node_unit_coords(key, order, dim)) == PointClass::Carved;
}

NodeSet enumerate_nodes_unchecked(std::span<const Octant> leaves, int dim, int order, const Carver* carver) {
  if (order < 1 || order > 2) throw std::invalid_argument("enumerate_nodes: order must be 1 or 2");
  struct Instance {
    NodeKey key;
    bool cancel;
  };
  std::vector<Instance> inst;
  inst.reserve(leaves.size() * static_cast<std::size_t>(ipow(order + 1, dim)) * 2);
  for (const Octant& leaf : leaves) {
    for (const auto& k : generate_element_nodes(leaf, order, dim)) inst.push_back({k, false});
    for (const auto& k : generate_cancellation_nodes(leaf, order, dim)) inst.push_back({k, true});
  }
  std::sort(inst.begin(), inst.end(), [](const Instance& a, const Instance& b) { return node_less(a.key, b.key); });

  NodeSet set;
  set.dim = dim;
  set.order = order;
  for (std::size_t i = 0; i < inst.size();) {
    std::size_t j = i;
    bool cancelled = false, generated = false;
    while (j < inst.size() && inst[j].key == inst[i].key) {
      cancelled = cancelled || inst[j].cancel;
      generated = generated || !inst[j].cancel;
      ++j;
    }
    if (generated && !cancelled) set.keys.push_back(inst[i].key);
    i = j;
  }
  set.boundary.resize(set.keys.size());
  for (std::size_t i = 0; i < set.keys.size(); ++i) {
    set.boundary[i] = is_boundary_node(set.keys[i], order, dim, carver) ? 1 : 0;
  }
  return set;
}

NodeSet enumerate_nodes(const IncompleteTree& tree, int order, const Carver* carver) {
  if (!is_balanced(tree).balanced) throw std::invalid_argument("enumerate_nodes: tree is not 2:1 balanced");
  return enumerate_nodes_unchecked(tree.leaves, tree.dim, order, carver);
}

std::vector<Octant> carved_hanging_sources(std::span<const Octant> leaves, int dim, const Carver& carver) {
  struct Instance {
    NodeKey key;
    std::uint32_t leaf;
    bool cancel;
  };
  std::vector<Octant> sources;
  std::vector<Instance> inst;
  for (int order = 1; order <= 2; ++order) {
    inst.clear();
    for (std::size_t e = 0; e < leaves.size(); ++e) {
      const auto id = static_cast<std::uint32_t>(e);
      for (const auto& k : generate_element_nodes(leaves[e], order, dim)) inst.push_back({k, id, false});
      for (const auto& k : generate_cancellation_nodes(leaves[e], order, dim)) inst.push_back({k, id, true});
    }
    std::sort(inst.begin(), inst.end(), [](const Instance& a, const Instance& b) { return node_less(a.key, b.key); });
    for (std::size_t i = 0; i < inst.size();) {
      std::size_t j = i;
      bool cancelled = false, generated = false;
      for (; j < inst.size() && inst[j].key == inst[i].key; ++j) {
        cancelled = cancelled || inst[j].cancel;
        generated = generated || !inst[j].cancel;
      }
      if (generated && cancelled &&
          carver.classify_point(node_unit_coords(inst[i].key, order, dim)) == PointClass::Carved) {
        for (std::size_t k = i; k < j; ++k) {
          if (inst[k].cancel) sources.push_back(leaves[inst[k].leaf]);
        }
      }
      i = j;
    }
  }
  return tree_sort(std::move(sources), dim);
}

IncompleteTree construct_boundary_conforming(const Carver& carver, std::vector<Octant> seeds, int dim) {
  std::vector<Octant> previous;
  for (;;) {
    IncompleteTree tree = construct_balanced(carver, seeds, dim);
    const auto sources = carved_hanging_sources(tree.leaves, dim, carver);
    // No progress means the classifier keeps a parent whose children it carves; the
    // remaining hanging nodes then lie on an element with every node in C.
    if (sources.empty() || tree.leaves == previous) return tree;
    previous = tree.leaves;
    // Refining the coarse side strictly raises its level, and balance never goes finer
    // than the existing finest leaf, so this terminates. Carved children are seeded too:
    // a conservative classifier may retain a parent whose children are all carved, and
    // splitting is what removes it.
    for (const Octant& o : sources) {
      for (int c = 0; c < (1 << dim); ++c) seeds.push_back(o.child(c));
    }
    seeds = tree_sort(std::move(seeds), dim);
  }
}

HangingGovernance build_hanging_governance(std::span<const Octant> leaves, const NodeSet& nodes) {
  HangingGovernance gov;
  Traverser<std::uint32_t> trav(nodes.dim, nodes.order);
  gov.nodes_per_element = trav.tables().nodes_per_element();
  gov.offsets.reserve(leaves.size() * gov.nodes_per_element + 1);
  gov.offsets.push_back(0);
  gov.hanging.reserve(leaves.size() * gov.nodes_per_element);
  std::vector<std::uint32_t> ids(nodes.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::uint32_t>(i);
  trav.run(leaves, nodes.keys, std::span<const std::uint32_t>(ids), {}, [&](const LeafContext<std::uint32_t>& ctx) {
    for (int i = 0; i < ctx.nodes_per_element(); ++i) {
      if (ctx.present(i)) {
        gov.entries.push_back({ctx.value(i), 1.0});
        gov.hanging.push_back(0);
      } else {
        for (const auto& s : ctx.stencil(i)) gov.entries.push_back({ctx.parent_value(s.index), s.weight});
        gov.hanging.push_back(1);
      }
      gov.offsets.push_back(static_cast<std::uint32_t>(gov.entries.size()));
    }
  });
  if (gov.element_count() != leaves.size()) throw std::logic_error("governance: traversal missed elements");
  return gov;
}

HangingGovernance build_hanging_governance(const IncompleteTree& tree, const NodeSet& nodes) {
  return build_hanging_governance(std::span<const Octant>(tree.leaves), nodes);
}

void write_nodes_csv(const NodeSet& nodes, const DomainMapping& mapping, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << (nodes.dim == 2 ? "id,x,y,boundary\n" : "id,x,y,z,boundary\n");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Vec3 x = mapping.to_physical(nodes.unit_coords(i));
    out << i << ',' << x.x << ',' << x.y;
    if (nodes.dim == 3) out << ',' << x.z;
    out << ',' << static_cast<int>(nodes.boundary[i]) << '\n';
  }
}

}  // namespace carve
