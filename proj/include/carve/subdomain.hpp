#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "carve/geometry.hpp"
#include "carve/octant.hpp"

namespace carve {

/// Label of a closed region against the carved set C.
enum class RegionClass : std::uint8_t { Carved = 0, RetainInternal = 1, RetainBoundary = 2 };

/// Points are either in C (closed, so on the boundary counts) or in the retained set.
enum class PointClass : std::uint8_t { Carved = 0, Retained = 1 };

const char* to_string(RegionClass c);

/// Field description of a carved set. Positive values are inside C.
class Shape {
 public:
  virtual ~Shape() = default;

  virtual double signed_distance(const Vec3& x) const = 0;

  /// Upper bound on the Lipschitz constant of signed_distance.
  virtual double lipschitz_bound() const { return 1.0; }

  /// Region test. The default is the conservative Lipschitz test; shapes with an
  /// exact closed-form answer override it.
  virtual RegionClass classify_box(const Box3& box) const;

  /// Nearest point on the zero level set. Default: one gradient step, exact for true distance fields.
  virtual Vec3 closest_boundary_point(const Vec3& x) const;
};

using ShapePtr = std::shared_ptr<const Shape>;

PointClass classify_point(const Shape& shape, const Vec3& x);

/// Conservative Lipschitz region test: center value against the Lipschitz radius of the half diagonal.
RegionClass classify_region(const Shape& shape, const Box3& box);

/// Solid ball (disk when the z coordinate is constant) carved out of the domain.
class SphereShape final : public Shape {
 public:
  SphereShape(Vec3 center, double radius);
  double signed_distance(const Vec3& x) const override;
  RegionClass classify_box(const Box3& box) const override;
  Vec3 closest_boundary_point(const Vec3& x) const override;
  Vec3 center() const { return center_; }
  double radius() const { return radius_; }

 private:
  Vec3 center_;
  double radius_;
};

/// Solid axis-aligned box carved out of the domain.
class BoxShape final : public Shape {
 public:
  explicit BoxShape(Box3 box);
  double signed_distance(const Vec3& x) const override;
  RegionClass classify_box(const Box3& box) const override;

 private:
  Box3 box_;
};

/// Everything outside an axis-aligned box is carved ("channel").
class RetainedBoxShape final : public Shape {
 public:
  explicit RetainedBoxShape(Box3 box);
  double signed_distance(const Vec3& x) const override;
  RegionClass classify_box(const Box3& box) const override;

 private:
  Box3 box_;
};

/// Closure of the complement: negated field.
class ComplementShape final : public Shape {
 public:
  explicit ComplementShape(ShapePtr inner);
  double signed_distance(const Vec3& x) const override;
  double lipschitz_bound() const override;
  RegionClass classify_box(const Box3& box) const override;
  Vec3 closest_boundary_point(const Vec3& x) const override;

 private:
  ShapePtr inner_;
};

/// Union of carved sets: pointwise max of the fields.
class UnionShape final : public Shape {
 public:
  explicit UnionShape(std::vector<ShapePtr> shapes);
  double signed_distance(const Vec3& x) const override;
  double lipschitz_bound() const override;
  /// Carved when one member carves the box or the members cover it piecewise, checked
  /// by subdividing up to kCoverDepth times.
  RegionClass classify_box(const Box3& box) const override;

  static constexpr int kCoverDepth = 4;

 private:
  std::vector<ShapePtr> shapes_;
};

/// Carves nothing; every region is retained-internal.
class EmptyShape final : public Shape {
 public:
  double signed_distance(const Vec3& x) const override;
  RegionClass classify_box(const Box3& box) const override;
};

ShapePtr make_sphere(Vec3 center, double radius);
ShapePtr make_box(Box3 box);
ShapePtr make_retained_box(Box3 box);
ShapePtr make_complement(ShapePtr s);
ShapePtr make_union(std::vector<ShapePtr> shapes);
ShapePtr make_empty();

/// Isotropic map from the unit cube to physical space.
struct DomainMapping {
  double scale = 1.0;
  Vec3 origin{};

  Vec3 to_physical(const Vec3& unit) const { return origin + scale * unit; }
};

/// A shape bound to a mapping and dimension: the classifier F() of the tree algorithms.
class Carver {
 public:
  Carver(ShapePtr shape, DomainMapping mapping, int dim);

  RegionClass operator()(const Octant& oct) const { return classify(oct); }
  RegionClass classify(const Octant& oct) const;

  /// Point classification of a unit-cube coordinate.
  PointClass classify_point(const Vec3& unit) const;

  Box3 physical_box(const Octant& oct) const;
  int dim() const { return dim_; }
  const DomainMapping& mapping() const { return mapping_; }
  const Shape& shape() const { return *shape_; }
  const ShapePtr& shape_ptr() const { return shape_; }

 private:
  ShapePtr shape_;
  DomainMapping mapping_;
  int dim_;
};

/// Classifier that never carves: carved regions report RetainInternal.
/// Used to build the "immersed" comparison tree.
class ImmersedCarver {
 public:
  explicit ImmersedCarver(const Carver& inner) : inner_(&inner) {}
  RegionClass operator()(const Octant& oct) const {
    const RegionClass c = inner_->classify(oct);
    return c == RegionClass::Carved ? RegionClass::RetainInternal : c;
  }

 private:
  const Carver* inner_;
};

// ---------------------------------------------------------------------------
// Triangle meshes

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> faces;

  Box3 bounding_box() const;
};

struct WatertightReport {
  std::size_t boundary_edges = 0;     // edges used by one face only
  std::size_t nonmanifold_edges = 0;  // edges used by more than two faces
  std::size_t misoriented_edges = 0;  // directed edges used twice
  bool ok() const { return boundary_edges == 0 && nonmanifold_edges == 0 && misoriented_edges == 0; }
};

WatertightReport check_watertight(const TriangleMesh& mesh);

/// Reads binary or ASCII STL; vertices are merged by exact coordinate equality.
TriangleMesh read_stl(const std::filesystem::path& path);
void write_stl_ascii(const TriangleMesh& mesh, const std::filesystem::path& path);

/// Icosahedron subdivided `subdivisions` times and projected to the sphere.
TriangleMesh make_icosphere(int subdivisions, double radius = 1.0, Vec3 center = {});
TriangleMesh make_box_mesh(const Box3& box);

/// Signed distance to a watertight mesh, sign by majority of three jittered ray casts.
class MeshShape final : public Shape {
 public:
  explicit MeshShape(TriangleMesh mesh);
  ~MeshShape() override;

  double signed_distance(const Vec3& x) const override;
  RegionClass classify_box(const Box3& box) const override;

  double unsigned_distance(const Vec3& x) const;
  bool inside(const Vec3& x) const;
  /// Ray-cast parity along one direction (exposed for testing).
  bool parity_inside(const Vec3& x, const Vec3& direction) const;
  const TriangleMesh& mesh() const { return mesh_; }

 private:
  struct Grid;
  TriangleMesh mesh_;
  std::unique_ptr<Grid> grid_;
};

ShapePtr make_mesh_shape(TriangleMesh mesh);

/// Separating-axis triangle/box overlap test.
bool triangle_box_overlap(const Box3& box, const Vec3& a, const Vec3& b, const Vec3& c);

/// Distance from p to triangle abc (closest point written to `closest` when non-null).
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c,
                               Vec3* closest = nullptr);

}  // namespace carve
