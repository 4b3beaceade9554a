#include "carve/vtu.hpp"

#include <fstream>
#include <stdexcept>

#include "carve/traversal.hpp"

namespace carve {

namespace {

// VTK corner order: counter-clockwise bottom face, then the top face.
constexpr int kCornerBits[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                   {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};

}  // namespace

void write_vtu(const std::filesystem::path& path, const IncompleteTree& tree, const NodeSet& nodes,
               const DomainMapping& mapping, const Carver* carver, const std::vector<NodalField>& fields) {
  for (const auto& f : fields) {
    if (f.values.size() != nodes.size()) throw std::invalid_argument("vtu: field '" + f.name + "' has the wrong size");
  }
  const int dim = tree.dim, order = nodes.order;
  const int ncorner = 1 << dim;
  const std::size_t ncells = tree.size();

  // Corner lattice indices in the element's (p+1)^d numbering.
  std::vector<int> corner_local(ncorner);
  for (int c = 0; c < ncorner; ++c) {
    int idx = 0, stride = 1;
    for (int a = 0; a < dim; ++a) {
      idx += kCornerBits[c][a] * order * stride;
      stride *= order + 1;
    }
    corner_local[c] = idx;
  }

  std::vector<std::vector<double>> values(fields.size(), std::vector<double>(ncells * ncorner));
  for (std::size_t f = 0; f < fields.size(); ++f) {
    Traverser<double> trav(dim, order);
    std::size_t e = 0;
    trav.run(tree.leaves, nodes.keys, fields[f].values, {}, [&](const LeafContext<double>& ctx) {
      for (int c = 0; c < ncorner; ++c) values[f][e * ncorner + c] = ctx.gather(corner_local[c]);
      ++e;
    });
  }

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "<?xml version=\"1.0\"?>\n"
      << "<VTKFile type=\"UnstructuredGrid\" version=\"0.1\" byte_order=\"LittleEndian\">\n"
      << "  <UnstructuredGrid>\n"
      << "    <Piece NumberOfPoints=\"" << ncells * ncorner << "\" NumberOfCells=\"" << ncells << "\">\n";

  out << "      <PointData>\n";
  out << "        <DataArray type=\"Int32\" Name=\"boundary\" format=\"ascii\">\n";
  for (const Octant& leaf : tree.leaves) {
    out << "         ";
    for (int c = 0; c < ncorner; ++c) {
      NodeKey key{0, 0, 0};
      for (int a = 0; a < dim; ++a) key[a] = static_cast<std::uint32_t>(order) * (leaf.anchor[a] + kCornerBits[c][a] * leaf.side());
      out << ' ' << (is_boundary_node(key, order, dim, carver) ? 1 : 0);
    }
    out << '\n';
  }
  out << "        </DataArray>\n";
  for (std::size_t f = 0; f < fields.size(); ++f) {
    out << "        <DataArray type=\"Float64\" Name=\"" << fields[f].name << "\" format=\"ascii\">\n";
    for (std::size_t e = 0; e < ncells; ++e) {
      out << "         ";
      for (int c = 0; c < ncorner; ++c) out << ' ' << values[f][e * ncorner + c];
      out << '\n';
    }
    out << "        </DataArray>\n";
  }
  out << "      </PointData>\n";

  out << "      <CellData>\n        <DataArray type=\"Int32\" Name=\"level\" format=\"ascii\">\n";
  for (const Octant& leaf : tree.leaves) out << "          " << static_cast<int>(leaf.level) << '\n';
  out << "        </DataArray>\n      </CellData>\n";

  out << "      <Points>\n        <DataArray type=\"Float64\" NumberOfComponents=\"3\" format=\"ascii\">\n";
  for (const Octant& leaf : tree.leaves) {
    for (int c = 0; c < ncorner; ++c) {
      Vec3 unit;
      for (int a = 0; a < dim; ++a) {
        unit[a] = static_cast<double>(leaf.anchor[a] + kCornerBits[c][a] * leaf.side()) / kRootLength;
      }
      const Vec3 x = mapping.to_physical(unit);
      out << "          " << x.x << ' ' << x.y << ' ' << x.z << '\n';
    }
  }
  out << "        </DataArray>\n      </Points>\n";

  out << "      <Cells>\n        <DataArray type=\"Int64\" Name=\"connectivity\" format=\"ascii\">\n";
  for (std::size_t e = 0; e < ncells; ++e) {
    out << "         ";
    for (int c = 0; c < ncorner; ++c) out << ' ' << e * ncorner + c;
    out << '\n';
  }
  out << "        </DataArray>\n        <DataArray type=\"Int64\" Name=\"offsets\" format=\"ascii\">\n";
  for (std::size_t e = 0; e < ncells; ++e) out << "          " << (e + 1) * ncorner << '\n';
  out << "        </DataArray>\n        <DataArray type=\"UInt8\" Name=\"types\" format=\"ascii\">\n";
  for (std::size_t e = 0; e < ncells; ++e) out << "          " << (dim == 2 ? 9 : 12) << '\n';
  out << "        </DataArray>\n      </Cells>\n";
  out << "    </Piece>\n  </UnstructuredGrid>\n</VTKFile>\n";
}

}  // namespace carve
