#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "carve/subdomain.hpp"

namespace carve {

Box3 TriangleMesh::bounding_box() const {
  if (vertices.empty()) return {};
  Box3 b{vertices.front(), vertices.front()};
  for (const auto& v : vertices) {
    for (int i = 0; i < 3; ++i) {
      b.lo[i] = std::min(b.lo[i], v[i]);
      b.hi[i] = std::max(b.hi[i], v[i]);
    }
  }
  return b;
}

WatertightReport check_watertight(const TriangleMesh& mesh) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
  for (const auto& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) ++directed[{f[k], f[(k + 1) % 3]}];
  }
  WatertightReport r;
  for (const auto& [e, n] : directed) {
    if (n > 1) r.misoriented_edges += 1;
    const auto rev = directed.find({e.second, e.first});
    const int uses = n + (rev == directed.end() ? 0 : rev->second);
    if (e.first < e.second || rev == directed.end()) {
      if (uses == 1) r.boundary_edges += 1;
      if (uses > 2) r.nonmanifold_edges += 1;
    }
  }
  return r;
}

// --- STL ------------------------------------------------------------------

namespace {

class VertexWelder {
 public:
  explicit VertexWelder(TriangleMesh& mesh) : mesh_(mesh) {}
  std::uint32_t add(const Vec3& v) {
    auto [it, inserted] = index_.try_emplace(std::make_tuple(v.x, v.y, v.z),
                                             static_cast<std::uint32_t>(mesh_.vertices.size()));
    if (inserted) mesh_.vertices.push_back(v);
    return it->second;
  }

 private:
  TriangleMesh& mesh_;
  std::map<std::tuple<double, double, double>, std::uint32_t> index_;
};

TriangleMesh read_stl_binary(const std::string& bytes) {
  if (bytes.size() < 84) throw std::runtime_error("STL: truncated header");
  std::uint32_t count = 0;
  std::memcpy(&count, bytes.data() + 80, 4);
  if (bytes.size() < 84 + 50ull * count) throw std::runtime_error("STL: truncated triangle data");
  TriangleMesh mesh;
  VertexWelder weld(mesh);
  for (std::uint32_t t = 0; t < count; ++t) {
    const char* rec = bytes.data() + 84 + 50ull * t + 12;
    std::array<std::uint32_t, 3> face{};
    for (int k = 0; k < 3; ++k) {
      float xyz[3];
      std::memcpy(xyz, rec + 12 * k, 12);
      face[k] = weld.add({xyz[0], xyz[1], xyz[2]});
    }
    mesh.faces.push_back(face);
  }
  return mesh;
}

TriangleMesh read_stl_ascii(const std::string& text) {
  TriangleMesh mesh;
  VertexWelder weld(mesh);
  std::istringstream in(text);
  std::string word;
  std::vector<std::uint32_t> pending;
  while (in >> word) {
    if (word == "vertex") {
      Vec3 v;
      if (!(in >> v.x >> v.y >> v.z)) throw std::runtime_error("STL: malformed vertex line");
      pending.push_back(weld.add(v));
    } else if (word == "endfacet") {
      if (pending.size() != 3) throw std::runtime_error("STL: facet without exactly 3 vertices");
      mesh.faces.push_back({pending[0], pending[1], pending[2]});
      pending.clear();
    }
  }
  return mesh;
}

}  // namespace

TriangleMesh read_stl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open STL file " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  bool binary = true;
  if (bytes.rfind("solid", 0) == 0) {
    std::uint32_t count = 0;
    if (bytes.size() >= 84) std::memcpy(&count, bytes.data() + 80, 4);
    binary = bytes.size() >= 84 && bytes.size() == 84 + 50ull * count;
  }
  TriangleMesh mesh = binary ? read_stl_binary(bytes) : read_stl_ascii(bytes);
  if (mesh.faces.empty()) throw std::runtime_error("STL: no triangles in " + path.string());
  return mesh;
}

void write_stl_ascii(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "solid carve\n";
  for (const auto& f : mesh.faces) {
    const Vec3 a = mesh.vertices[f[0]], b = mesh.vertices[f[1]], c = mesh.vertices[f[2]];
    Vec3 n = cross(b - a, c - a);
    const double len = norm(n);
    if (len > 0) n = (1.0 / len) * n;
    out << " facet normal " << n.x << ' ' << n.y << ' ' << n.z << "\n  outer loop\n";
    for (const Vec3& v : {a, b, c}) out << "   vertex " << v.x << ' ' << v.y << ' ' << v.z << '\n';
    out << "  endloop\n endfacet\n";
  }
  out << "endsolid carve\n";
}

TriangleMesh make_icosphere(int subdivisions, double radius, Vec3 center) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
             {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (auto& v : m.vertices) v = (1.0 / norm(v)) * v;
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      Vec3 v = 0.5 * (m.vertices[a] + m.vertices[b]);
      v = (1.0 / norm(v)) * v;
      m.vertices.push_back(v);
      const auto id = static_cast<std::uint32_t>(m.vertices.size() - 1);
      mid.emplace(key, id);
      return id;
    };
    std::vector<std::array<std::uint32_t, 3>> faces;
    faces.reserve(m.faces.size() * 4);
    for (const auto& f : m.faces) {
      const auto a = midpoint(f[0], f[1]), b = midpoint(f[1], f[2]), c = midpoint(f[2], f[0]);
      faces.push_back({f[0], a, c});
      faces.push_back({f[1], b, a});
      faces.push_back({f[2], c, b});
      faces.push_back({a, b, c});
    }
    m.faces = std::move(faces);
  }
  for (auto& v : m.vertices) v = center + radius * v;
  return m;
}

TriangleMesh make_box_mesh(const Box3& b) {
  TriangleMesh m;
  for (int k = 0; k < 8; ++k) {
    m.vertices.push_back({(k & 1) ? b.hi.x : b.lo.x, (k & 2) ? b.hi.y : b.lo.y, (k & 4) ? b.hi.z : b.lo.z});
  }
  // Outward-facing, counterclockwise seen from outside.
  m.faces = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
             {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
  return m;
}

// --- geometric predicates -------------------------------------------------

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c, Vec3* closest) {
  // Closest point by Voronoi-region classification.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  Vec3 q;
  const double d1 = dot(ab, ap), d2 = dot(ac, ap);
  const Vec3 bp = p - b;
  const double d3 = dot(ab, bp), d4 = dot(ac, bp);
  const Vec3 cp = p - c;
  const double d5 = dot(ab, cp), d6 = dot(ac, cp);
  const double vc = d1 * d4 - d3 * d2;
  const double vb = d5 * d2 - d1 * d6;
  const double va = d3 * d6 - d5 * d4;
  if (d1 <= 0 && d2 <= 0) {
    q = a;
  } else if (d3 >= 0 && d4 <= d3) {
    q = b;
  } else if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    q = a + (d1 / (d1 - d3)) * ab;
  } else if (d6 >= 0 && d5 <= d6) {
    q = c;
  } else if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    q = a + (d2 / (d2 - d6)) * ac;
  } else if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    q = b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  } else {
    const double denom = 1.0 / (va + vb + vc);
    q = a + (vb * denom) * ab + (vc * denom) * ac;
  }
  if (closest) *closest = q;
  return norm(p - q);
}

bool triangle_box_overlap(const Box3& box, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 center = box.center();
  const Vec3 h = 0.5 * (box.hi - box.lo);
  const Vec3 v[3] = {a - center, b - center, c - center};
  const Vec3 e[3] = {v[1] - v[0], v[2] - v[1], v[0] - v[2]};

  auto separated = [&](const Vec3& axis) {
    const double p0 = dot(v[0], axis), p1 = dot(v[1], axis), p2 = dot(v[2], axis);
    const double r = h.x * std::abs(axis.x) + h.y * std::abs(axis.y) + h.z * std::abs(axis.z);
    return std::min({p0, p1, p2}) > r || std::max({p0, p1, p2}) < -r;
  };

  for (int i = 0; i < 3; ++i) {
    Vec3 unit{};
    unit[i] = 1.0;
    for (const auto& edge : e) {
      const Vec3 axis = cross(unit, edge);
      if (dot(axis, axis) > 0 && separated(axis)) return false;
    }
  }
  for (int i = 0; i < 3; ++i) {
    const double mn = std::min({v[0][i], v[1][i], v[2][i]});
    const double mx = std::max({v[0][i], v[1][i], v[2][i]});
    if (mn > h[i] || mx < -h[i]) return false;
  }
  const Vec3 n = cross(e[0], e[1]);
  if (dot(n, n) > 0 && separated(n)) return false;
  return true;
}

namespace {

// Moller-Trumbore; returns the ray parameter or a negative value on miss.
double ray_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 pv = cross(d, e2);
  const double det = dot(e1, pv);
  if (std::abs(det) < 1e-300) return -1;
  const double inv = 1.0 / det;
  const Vec3 tv = o - a;
  const double u = dot(tv, pv) * inv;
  if (u < 0 || u > 1) return -1;
  const Vec3 qv = cross(tv, e1);
  const double w = dot(d, qv) * inv;
  if (w < 0 || u + w > 1) return -1;
  return dot(e2, qv) * inv;
}

}  // namespace

// --- mesh shape -----------------------------------------------------------

struct MeshShape::Grid {
  Box3 bounds;
  std::array<int, 3> dims{1, 1, 1};
  Vec3 cell{1, 1, 1};
  std::vector<std::vector<std::uint32_t>> cells;

  int index(int i, int j, int k) const { return (k * dims[1] + j) * dims[0] + i; }

  std::array<int, 3> cell_of(const Vec3& p) const {
    std::array<int, 3> c{};
    for (int a = 0; a < 3; ++a) {
      c[a] = std::clamp(static_cast<int>(std::floor((p[a] - bounds.lo[a]) / cell[a])), 0, dims[a] - 1);
    }
    return c;
  }
};

MeshShape::MeshShape(TriangleMesh mesh) : mesh_(std::move(mesh)), grid_(std::make_unique<Grid>()) {
  const WatertightReport report = check_watertight(mesh_);
  if (!report.ok()) {
    throw std::invalid_argument("mesh is not watertight: " + std::to_string(report.boundary_edges) +
                                " boundary edges, " + std::to_string(report.nonmanifold_edges) +
                                " non-manifold edges, " + std::to_string(report.misoriented_edges) +
                                " inconsistently oriented edges");
  }
  Grid& g = *grid_;
  // Cell size: median triangle bounding-box diagonal.
  std::vector<double> diags;
  diags.reserve(mesh_.faces.size());
  for (const auto& f : mesh_.faces) {
    Box3 tb{mesh_.vertices[f[0]], mesh_.vertices[f[0]]};
    for (int k = 1; k < 3; ++k) {
      for (int a = 0; a < 3; ++a) {
        tb.lo[a] = std::min(tb.lo[a], mesh_.vertices[f[k]][a]);
        tb.hi[a] = std::max(tb.hi[a], mesh_.vertices[f[k]][a]);
      }
    }
    diags.push_back(norm(tb.hi - tb.lo));
  }
  std::nth_element(diags.begin(), diags.begin() + diags.size() / 2, diags.end());
  g.bounds = mesh_.bounding_box();
  const Vec3 extent = g.bounds.hi - g.bounds.lo;
  const double span = std::max({extent.x, extent.y, extent.z});
  const double size = std::max(diags[diags.size() / 2], span / 128.0);
  for (int a = 0; a < 3; ++a) {
    g.dims[a] = std::max(1, static_cast<int>(std::ceil(extent[a] / size)));
    g.cell[a] = extent[a] > 0 ? extent[a] / g.dims[a] : size;
    if (extent[a] <= 0) {
      g.bounds.lo[a] -= 0.5 * size;
      g.bounds.hi[a] += 0.5 * size;
      g.cell[a] = size;
    }
  }
  g.cells.resize(static_cast<std::size_t>(g.dims[0]) * g.dims[1] * g.dims[2]);
  for (std::uint32_t t = 0; t < mesh_.faces.size(); ++t) {
    const auto& f = mesh_.faces[t];
    Vec3 lo = mesh_.vertices[f[0]], hi = lo;
    for (int k = 1; k < 3; ++k) {
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], mesh_.vertices[f[k]][a]);
        hi[a] = std::max(hi[a], mesh_.vertices[f[k]][a]);
      }
    }
    const auto c0 = g.cell_of(lo), c1 = g.cell_of(hi);
    for (int k = c0[2]; k <= c1[2]; ++k)
      for (int j = c0[1]; j <= c1[1]; ++j)
        for (int i = c0[0]; i <= c1[0]; ++i) g.cells[g.index(i, j, k)].push_back(t);
  }
}

MeshShape::~MeshShape() = default;

double MeshShape::unsigned_distance(const Vec3& x) const {
  const Grid& g = *grid_;
  const auto start = g.cell_of(x);
  const double cmin = std::min({g.cell.x, g.cell.y, g.cell.z});
  const int max_ring = std::max({g.dims[0], g.dims[1], g.dims[2]});
  double best = std::numeric_limits<double>::infinity();
  for (int ring = 0; ring <= max_ring; ++ring) {
    for (int k = start[2] - ring; k <= start[2] + ring; ++k) {
      if (k < 0 || k >= g.dims[2]) continue;
      for (int j = start[1] - ring; j <= start[1] + ring; ++j) {
        if (j < 0 || j >= g.dims[1]) continue;
        for (int i = start[0] - ring; i <= start[0] + ring; ++i) {
          if (i < 0 || i >= g.dims[0]) continue;
          const int cheb = std::max({std::abs(i - start[0]), std::abs(j - start[1]), std::abs(k - start[2])});
          if (cheb != ring) continue;
          for (auto t : g.cells[g.index(i, j, k)]) {
            const auto& f = mesh_.faces[t];
            best = std::min(best, point_triangle_distance(x, mesh_.vertices[f[0]], mesh_.vertices[f[1]],
                                                          mesh_.vertices[f[2]]));
          }
        }
      }
    }
    // Cells beyond this ring are at least `ring` full cells away.
    if (best <= ring * cmin) break;
  }
  return best;
}

bool MeshShape::parity_inside(const Vec3& x, const Vec3& dir) const {
  const Grid& g = *grid_;
  // Clip the ray to the grid bounds.
  double t0 = 0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0) {
      if (x[a] < g.bounds.lo[a] || x[a] > g.bounds.hi[a]) return false;
      continue;
    }
    double ta = (g.bounds.lo[a] - x[a]) / dir[a], tb = (g.bounds.hi[a] - x[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1) return false;
  // 3D DDA over grid cells.
  const Vec3 entry = x + t0 * dir;
  auto cell = g.cell_of(entry);
  std::array<int, 3> step{};
  Vec3 tmax, tdelta;
  for (int a = 0; a < 3; ++a) {
    if (dir[a] > 0) {
      step[a] = 1;
      tmax[a] = t0 + (g.bounds.lo[a] + (cell[a] + 1) * g.cell[a] - entry[a]) / dir[a];
      tdelta[a] = g.cell[a] / dir[a];
    } else if (dir[a] < 0) {
      step[a] = -1;
      tmax[a] = t0 + (g.bounds.lo[a] + cell[a] * g.cell[a] - entry[a]) / dir[a];
      tdelta[a] = -g.cell[a] / dir[a];
    } else {
      step[a] = 0;
      tmax[a] = std::numeric_limits<double>::infinity();
      tdelta[a] = std::numeric_limits<double>::infinity();
    }
  }
  std::vector<std::uint32_t> hits;
  while (true) {
    for (auto t : g.cells[g.index(cell[0], cell[1], cell[2])]) {
      const auto& f = mesh_.faces[t];
      const double s = ray_triangle(x, dir, mesh_.vertices[f[0]], mesh_.vertices[f[1]], mesh_.vertices[f[2]]);
      if (s > 0) hits.push_back(t);
    }
    int a = 0;
    if (tmax[1] < tmax[a]) a = 1;
    if (tmax[2] < tmax[a]) a = 2;
    cell[a] += step[a];
    if (cell[a] < 0 || cell[a] >= g.dims[a]) break;
    tmax[a] += tdelta[a];
  }
  std::sort(hits.begin(), hits.end());
  hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
  return hits.size() % 2 == 1;
}

bool MeshShape::inside(const Vec3& x) const {
  static const Vec3 dirs[3] = {
      Vec3{1.0, 0.1234567, 0.0456789}, Vec3{-0.0789123, 1.0, 0.1432109}, Vec3{0.0321987, -0.0654321, 1.0}};
  int votes = 0;
  for (const auto& d : dirs) votes += parity_inside(x, d) ? 1 : 0;
  return votes >= 2;
}

double MeshShape::signed_distance(const Vec3& x) const {
  const double d = unsigned_distance(x);
  return inside(x) ? d : -d;
}

RegionClass MeshShape::classify_box(const Box3& box) const {
  const Grid& g = *grid_;
  if (box.overlaps(g.bounds)) {
    const auto c0 = g.cell_of(box.lo), c1 = g.cell_of(box.hi);
    for (int k = c0[2]; k <= c1[2]; ++k)
      for (int j = c0[1]; j <= c1[1]; ++j)
        for (int i = c0[0]; i <= c1[0]; ++i) {
          for (auto t : g.cells[g.index(i, j, k)]) {
            const auto& f = mesh_.faces[t];
            if (triangle_box_overlap(box, mesh_.vertices[f[0]], mesh_.vertices[f[1]], mesh_.vertices[f[2]])) {
              return RegionClass::RetainBoundary;
            }
          }
        }
  }
  return inside(box.center()) ? RegionClass::Carved : RegionClass::RetainInternal;
}

ShapePtr make_mesh_shape(TriangleMesh mesh) { return std::make_shared<MeshShape>(std::move(mesh)); }

}  // namespace carve
