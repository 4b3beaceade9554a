#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "carve/nodes.hpp"
#include "carve/tree.hpp"

namespace carve {

/// A per-node field over a NodeSet.
struct NodalField {
  std::string name;
  std::span<const double> values;
};

/// ASCII XML UnstructuredGrid with one quad/hex per leaf. Each cell carries its own corner
/// points, so hanging corners show their interpolated values. Point data: `boundary` and
/// the given fields; cell data: `level`.
void write_vtu(const std::filesystem::path& path, const IncompleteTree& tree, const NodeSet& nodes,
               const DomainMapping& mapping, const Carver* carver, const std::vector<NodalField>& fields);

}  // namespace carve
