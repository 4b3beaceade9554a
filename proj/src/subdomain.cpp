#include "carve/subdomain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace carve {

const char* to_string(RegionClass c) {
  switch (c) {
    case RegionClass::Carved: return "carved";
    case RegionClass::RetainInternal: return "retain-internal";
    case RegionClass::RetainBoundary: return "retain-boundary";
  }
  return "?";
}

namespace {

void require_nondegenerate(const Box3& box) {
  if (!(box.hi.x > box.lo.x) || !(box.hi.y > box.lo.y) || box.hi.z < box.lo.z) {
    throw std::invalid_argument("classify_region: degenerate box");
  }
}

double box_sdf(const Box3& b, const Vec3& p) {
  double outside2 = 0.0;
  double inside = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    const double d = std::max(b.lo[i] - p[i], p[i] - b.hi[i]);
    if (d > 0) outside2 += d * d;
    inside = std::max(inside, d);
  }
  return outside2 > 0 ? std::sqrt(outside2) : inside;
}

// A flat box axis means "unbounded along that axis" (2D boxes may omit z).
Box3 unbounded_flat_axes(Box3 b) {
  for (int i = 0; i < 3; ++i) {
    if (b.lo[i] > b.hi[i]) throw std::invalid_argument("box with lo > hi");
    if (b.lo[i] == b.hi[i]) {
      b.lo[i] = -std::numeric_limits<double>::infinity();
      b.hi[i] = std::numeric_limits<double>::infinity();
    }
  }
  return b;
}

}  // namespace

PointClass classify_point(const Shape& shape, const Vec3& x) {
  return shape.signed_distance(x) >= 0.0 ? PointClass::Carved : PointClass::Retained;
}

RegionClass classify_region(const Shape& shape, const Box3& box) {
  require_nondegenerate(box);
  const double phi = shape.signed_distance(box.center());
  const double r = shape.lipschitz_bound() * box.half_diagonal();
  if (phi >= r) return RegionClass::Carved;
  if (phi <= -r) return RegionClass::RetainInternal;
  return RegionClass::RetainBoundary;
}

RegionClass Shape::classify_box(const Box3& box) const { return classify_region(*this, box); }

Vec3 Shape::closest_boundary_point(const Vec3& x) const {
  const double phi = signed_distance(x);
  const double h = 1e-7 * std::max(1.0, norm(x));
  Vec3 g;
  for (int i = 0; i < 3; ++i) {
    Vec3 a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (signed_distance(a) - signed_distance(b)) / (2 * h);
  }
  const double gn = norm(g);
  if (gn == 0.0) return x;
  return x - (phi / gn) * (1.0 / gn) * g;
}

// --- sphere ---------------------------------------------------------------

SphereShape::SphereShape(Vec3 center, double radius) : center_(center), radius_(radius) {
  if (!(radius > 0)) throw std::invalid_argument("sphere radius must be positive");
}

double SphereShape::signed_distance(const Vec3& x) const { return radius_ - norm(x - center_); }

RegionClass SphereShape::classify_box(const Box3& box) const {
  require_nondegenerate(box);
  double near2 = 0, far2 = 0;
  for (int i = 0; i < 3; ++i) {
    const double c = center_[i];
    const double clamped = std::clamp(c, box.lo[i], box.hi[i]);
    near2 += (c - clamped) * (c - clamped);
    const double f = std::max(std::abs(c - box.lo[i]), std::abs(c - box.hi[i]));
    far2 += f * f;
  }
  const double r2 = radius_ * radius_;
  if (far2 <= r2) return RegionClass::Carved;
  if (near2 > r2) return RegionClass::RetainInternal;
  return RegionClass::RetainBoundary;
}

Vec3 SphereShape::closest_boundary_point(const Vec3& x) const {
  const Vec3 d = x - center_;
  const double n = norm(d);
  if (n == 0.0) return center_ + Vec3{radius_, 0, 0};
  return center_ + (radius_ / n) * d;
}

// --- boxes ----------------------------------------------------------------

BoxShape::BoxShape(Box3 box) : box_(unbounded_flat_axes(box)) {}

double BoxShape::signed_distance(const Vec3& x) const { return -box_sdf(box_, x); }

RegionClass BoxShape::classify_box(const Box3& e) const {
  require_nondegenerate(e);
  bool inside = true, disjoint = false;
  for (int i = 0; i < 3; ++i) {
    inside = inside && e.lo[i] >= box_.lo[i] && e.hi[i] <= box_.hi[i];
    disjoint = disjoint || e.hi[i] < box_.lo[i] || e.lo[i] > box_.hi[i];
  }
  if (inside) return RegionClass::Carved;
  if (disjoint) return RegionClass::RetainInternal;
  return RegionClass::RetainBoundary;
}

RetainedBoxShape::RetainedBoxShape(Box3 box) : box_(unbounded_flat_axes(box)) {}

double RetainedBoxShape::signed_distance(const Vec3& x) const { return box_sdf(box_, x); }

RegionClass RetainedBoxShape::classify_box(const Box3& e) const {
  require_nondegenerate(e);
  bool interior = true, outside = false;
  for (int i = 0; i < 3; ++i) {
    if (e.lo[i] == e.hi[i]) {
      // Flat axis of a 2D element: only the slice position matters.
      outside = outside || e.lo[i] <= box_.lo[i] || e.lo[i] >= box_.hi[i];
      continue;
    }
    interior = interior && e.lo[i] > box_.lo[i] && e.hi[i] < box_.hi[i];
    outside = outside || e.hi[i] <= box_.lo[i] || e.lo[i] >= box_.hi[i];
  }
  if (outside) return RegionClass::Carved;
  if (interior) return RegionClass::RetainInternal;
  return RegionClass::RetainBoundary;
}

// --- combinators ----------------------------------------------------------

ComplementShape::ComplementShape(ShapePtr inner) : inner_(std::move(inner)) {
  if (!inner_) throw std::invalid_argument("complement of null shape");
}

double ComplementShape::signed_distance(const Vec3& x) const { return -inner_->signed_distance(x); }
double ComplementShape::lipschitz_bound() const { return inner_->lipschitz_bound(); }

RegionClass ComplementShape::classify_box(const Box3& box) const {
  switch (inner_->classify_box(box)) {
    case RegionClass::RetainInternal: return RegionClass::Carved;
    case RegionClass::RetainBoundary: return RegionClass::RetainBoundary;
    case RegionClass::Carved: {
      // The inner set is closed, so only boxes clear of its boundary are retained-internal here.
      const double phi = inner_->signed_distance(box.center());
      const double r = inner_->lipschitz_bound() * box.half_diagonal();
      if (phi > r) return RegionClass::RetainInternal;
      // Exact refinement for an inner sphere: the farthest point must be strictly inside.
      if (auto* s = dynamic_cast<const SphereShape*>(inner_.get())) {
        double far2 = 0;
        for (int i = 0; i < 3; ++i) {
          const double f = std::max(std::abs(s->center()[i] - box.lo[i]), std::abs(s->center()[i] - box.hi[i]));
          far2 += f * f;
        }
        if (far2 < s->radius() * s->radius()) return RegionClass::RetainInternal;
      }
      return RegionClass::RetainBoundary;
    }
  }
  return RegionClass::RetainBoundary;
}

Vec3 ComplementShape::closest_boundary_point(const Vec3& x) const {
  return inner_->closest_boundary_point(x);
}

UnionShape::UnionShape(std::vector<ShapePtr> shapes) : shapes_(std::move(shapes)) {
  if (shapes_.empty()) throw std::invalid_argument("union of zero shapes");
  for (const auto& s : shapes_) {
    if (!s) throw std::invalid_argument("union operand is null");
  }
}

double UnionShape::signed_distance(const Vec3& x) const {
  double v = -std::numeric_limits<double>::infinity();
  for (const auto& s : shapes_) v = std::max(v, s->signed_distance(x));
  return v;
}

double UnionShape::lipschitz_bound() const {
  double l = 0;
  for (const auto& s : shapes_) l = std::max(l, s->lipschitz_bound());
  return l;
}

namespace {

// True when some member carves the box, or each sub-box of a bounded subdivision is
// carved by some member (a box covered piecewise by several shapes).
bool union_covers(const std::vector<ShapePtr>& shapes, const Box3& box, int depth) {
  bool all_internal = true;
  for (const auto& s : shapes) {
    const RegionClass c = s->classify_box(box);
    if (c == RegionClass::Carved) return true;
    all_internal = all_internal && c == RegionClass::RetainInternal;
  }
  if (all_internal || depth == 0) return false;
  const Vec3 mid = box.center();
  for (int corner = 0; corner < 8; ++corner) {
    Box3 sub = box;
    bool skip = false;
    for (int a = 0; a < 3; ++a) {
      const bool upper = (corner >> a) & 1;
      if (box.lo[a] == box.hi[a]) {
        skip = skip || upper;  // flat axis: one slab only
        continue;
      }
      (upper ? sub.lo[a] : sub.hi[a]) = mid[a];
    }
    if (!skip && !union_covers(shapes, sub, depth - 1)) return false;
  }
  return true;
}

}  // namespace

RegionClass UnionShape::classify_box(const Box3& box) const {
  bool all_internal = true;
  for (const auto& s : shapes_) {
    const RegionClass c = s->classify_box(box);
    if (c == RegionClass::Carved) return RegionClass::Carved;
    all_internal = all_internal && c == RegionClass::RetainInternal;
  }
  if (all_internal) return RegionClass::RetainInternal;
  return union_covers(shapes_, box, kCoverDepth) ? RegionClass::Carved : RegionClass::RetainBoundary;
}

double EmptyShape::signed_distance(const Vec3&) const { return -1e300; }
RegionClass EmptyShape::classify_box(const Box3& box) const {
  require_nondegenerate(box);
  return RegionClass::RetainInternal;
}

ShapePtr make_sphere(Vec3 center, double radius) { return std::make_shared<SphereShape>(center, radius); }
ShapePtr make_box(Box3 box) { return std::make_shared<BoxShape>(box); }
ShapePtr make_retained_box(Box3 box) { return std::make_shared<RetainedBoxShape>(box); }
ShapePtr make_complement(ShapePtr s) { return std::make_shared<ComplementShape>(std::move(s)); }
ShapePtr make_union(std::vector<ShapePtr> shapes) { return std::make_shared<UnionShape>(std::move(shapes)); }
ShapePtr make_empty() { return std::make_shared<EmptyShape>(); }

// --- carver ---------------------------------------------------------------

Carver::Carver(ShapePtr shape, DomainMapping mapping, int dim)
    : shape_(std::move(shape)), mapping_(mapping), dim_(dim) {
  if (!shape_) throw std::invalid_argument("carver needs a shape");
  if (dim != 2 && dim != 3) throw std::invalid_argument("dimension must be 2 or 3");
  if (!(mapping.scale > 0)) throw std::invalid_argument("domain scale must be positive");
}

Box3 Carver::physical_box(const Octant& oct) const {
  constexpr double inv = 1.0 / static_cast<double>(kRootLength);
  Vec3 lo, hi;
  for (int i = 0; i < dim_; ++i) {
    lo[i] = oct.anchor[i] * inv;
    hi[i] = (static_cast<double>(oct.anchor[i]) + oct.side()) * inv;
  }
  Box3 b{mapping_.to_physical(lo), mapping_.to_physical(hi)};
  if (dim_ == 2) b.lo.z = b.hi.z = mapping_.origin.z;
  return b;
}

RegionClass Carver::classify(const Octant& oct) const { return shape_->classify_box(physical_box(oct)); }

PointClass Carver::classify_point(const Vec3& unit) const {
  Vec3 u = unit;
  if (dim_ == 2) u.z = 0;
  return carve::classify_point(*shape_, mapping_.to_physical(u));
}

}  // namespace carve
