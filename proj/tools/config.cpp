#include "config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace carve::app {

using nlohmann::json;

namespace {

struct Context {
  const std::string& text;
  const std::string& origin;

  // Position of the first occurrence of `"key"`, as line:col.
  std::string where(const std::string& key) const {
    const std::size_t pos = key.empty() ? std::string::npos : text.find('"' + key + '"');
    return at(pos == std::string::npos ? 0 : pos);
  }
  std::string at(std::size_t byte) const {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    return origin + ":" + std::to_string(line) + ":" + std::to_string(col);
  }
  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw ConfigError(where(key) + ": " + msg);
  }
};

void check_keys(const Context& cx, const json& obj, const std::string& section, const std::set<std::string>& allowed) {
  if (!obj.is_object()) cx.fail(section, "'" + section + "' must be an object");
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) cx.fail(k, "unknown key '" + k + "' in " + (section.empty() ? "config" : "'" + section + "'"));
  }
}

template <class T>
T get(const Context& cx, const json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    cx.fail(key, "key '" + key + "' has the wrong type");
  }
}

Vec3 get_vec(const Context& cx, const json& obj, const std::string& key, Vec3 fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_array() || v.size() < 2 || v.size() > 3) cx.fail(key, "key '" + key + "' must be an array of 2 or 3 numbers");
  Vec3 out{};
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) cx.fail(key, "key '" + key + "' must contain numbers");
    out[static_cast<int>(i)] = v[i].get<double>();
  }
  return out;
}

std::vector<int> get_ints(const Context& cx, const json& obj, const std::string& key, std::vector<int> fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<std::vector<int>>();
  } catch (const json::exception&) {
    cx.fail(key, "key '" + key + "' must be an array of integers");
  }
}

ShapePtr parse_shape(const Context& cx, const json& spec, const std::filesystem::path& base_dir) {
  if (!spec.is_object() || !spec.contains("kind")) cx.fail("shape", "shape needs a 'kind'");
  const std::string kind = get<std::string>(cx, spec, "kind", "");
  if (kind == "none") {
    check_keys(cx, spec, "shape", {"kind"});
    return nullptr;
  }
  if (kind == "sphere") {
    check_keys(cx, spec, "shape", {"kind", "center", "radius"});
    const double r = get<double>(cx, spec, "radius", 0.25);
    if (!(r > 0)) cx.fail("radius", "sphere radius must be positive");
    return make_sphere(get_vec(cx, spec, "center", {0.5, 0.5, 0.5}), r);
  }
  if (kind == "box" || kind == "retained_box") {
    check_keys(cx, spec, "shape", {"kind", "lo", "hi"});
    const Box3 b{get_vec(cx, spec, "lo", {}), get_vec(cx, spec, "hi", {1, 1, 1})};
    for (int a = 0; a < 3; ++a) {
      if (b.lo[a] > b.hi[a]) cx.fail("lo", "box has lo > hi");
    }
    return kind == "box" ? make_box(b) : make_retained_box(b);
  }
  if (kind == "complement") {
    check_keys(cx, spec, "shape", {"kind", "of"});
    if (!spec.contains("of")) cx.fail("kind", "complement needs 'of'");
    ShapePtr inner = parse_shape(cx, spec.at("of"), base_dir);
    return make_complement(inner ? inner : make_empty());
  }
  if (kind == "union") {
    check_keys(cx, spec, "shape", {"kind", "shapes"});
    if (!spec.contains("shapes") || !spec.at("shapes").is_array()) cx.fail("kind", "union needs a 'shapes' array");
    std::vector<ShapePtr> parts;
    for (const auto& s : spec.at("shapes")) {
      if (auto p = parse_shape(cx, s, base_dir)) parts.push_back(p);
    }
    return parts.empty() ? nullptr : make_union(std::move(parts));
  }
  if (kind == "stl") {
    check_keys(cx, spec, "shape", {"kind", "path"});
    std::filesystem::path p = get<std::string>(cx, spec, "path", "");
    if (p.is_relative()) p = base_dir / p;
    try {
      return make_mesh_shape(read_stl(p));
    } catch (const std::exception& e) {
      cx.fail("path", e.what());
    }
  }
  if (kind == "icosphere") {
    check_keys(cx, spec, "shape", {"kind", "center", "radius", "subdivisions"});
    return make_mesh_shape(make_icosphere(get<int>(cx, spec, "subdivisions", 3), get<double>(cx, spec, "radius", 0.25),
                                          get_vec(cx, spec, "center", {0.5, 0.5, 0.5})));
  }
  cx.fail("kind", "unknown shape kind '" + kind + "'");
}

}  // namespace

ShapePtr shape_from_json(const json& spec, const std::filesystem::path& base_dir) {
  const std::string text = spec.dump();
  const std::string origin = "<shape>";
  return parse_shape(Context{text, origin}, spec, base_dir);
}

namespace {

RunConfig parse_impl(const std::string& text, const std::string& origin, const std::filesystem::path& base_dir) {
  const Context cx{text, origin};
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
    std::string msg = e.what();
    if (const auto p = msg.find("parse error"); p != std::string::npos) msg = msg.substr(p);
    throw ConfigError(cx.at(byte) + ": " + msg);
  }
  check_keys(cx, root, "",
             {"dimension", "order", "shape", "mapping", "refinement", "ranks", "load_tol", "solver", "boundary_data",
              "manufactured", "convergence", "condition", "dof_compare", "sdf_study", "bench", "max_level", "output"});
  RunConfig cfg;
  cfg.dim = get<int>(cx, root, "dimension", 2);
  if (cfg.dim != 2 && cfg.dim != 3) cx.fail("dimension", "dimension must be 2 or 3");
  cfg.order = get<int>(cx, root, "order", 1);
  if (cfg.order != 1 && cfg.order != 2) cx.fail("order", "order must be 1 or 2");
  if (get<int>(cx, root, "max_level", kMaxLevel) != kMaxLevel) {
    cx.fail("max_level", "max_level is fixed at " + std::to_string(kMaxLevel));
  }
  if (root.contains("shape")) {
    cfg.shape_spec = root.at("shape");
    cfg.shape = parse_shape(cx, cfg.shape_spec, base_dir);
  }
  if (root.contains("mapping")) {
    const json& m = root.at("mapping");
    check_keys(cx, m, "mapping", {"scale", "origin"});
    cfg.mapping.scale = get<double>(cx, m, "scale", 1.0);
    if (!(cfg.mapping.scale > 0)) cx.fail("scale", "mapping scale must be positive");
    cfg.mapping.origin = get_vec(cx, m, "origin", {});
  }
  if (root.contains("refinement")) {
    const json& r = root.at("refinement");
    check_keys(cx, r, "refinement", {"base_level", "boundary_level", "seeds"});
    cfg.base_level = get<int>(cx, r, "base_level", cfg.base_level);
    cfg.boundary_level = get<int>(cx, r, "boundary_level", std::max(cfg.base_level, cfg.boundary_level));
    if (cfg.base_level < 0 || cfg.boundary_level > kMaxLevel || cfg.base_level > cfg.boundary_level) {
      cx.fail("base_level", "need 0 <= base_level <= boundary_level <= " + std::to_string(kMaxLevel));
    }
    if (r.contains("seeds")) {
      // Each seed: [level, x, y(, z)] with unit-cube coordinates of a point inside it.
      for (const auto& s : r.at("seeds")) {
        if (!s.is_array() || static_cast<int>(s.size()) != cfg.dim + 1) {
          cx.fail("seeds", "each seed is [level, x, y" + std::string(cfg.dim == 3 ? ", z]" : "]"));
        }
        const int level = s[0].get<int>();
        if (level < 0 || level > kMaxLevel) cx.fail("seeds", "seed level out of range");
        Octant o{{0, 0, 0}, static_cast<std::uint8_t>(kMaxLevel)};
        for (int a = 0; a < cfg.dim; ++a) {
          const double x = s[a + 1].get<double>();
          if (x < 0 || x >= 1) cx.fail("seeds", "seed coordinates must lie in [0,1)");
          o.anchor[a] = static_cast<std::uint32_t>(x * kRootLength);
        }
        cfg.seeds.push_back(o.ancestor(level));
      }
    }
  }
  cfg.ranks = get<int>(cx, root, "ranks", 1);
  if (cfg.ranks < 1) cx.fail("ranks", "ranks must be at least 1");
  cfg.load_tol = get<double>(cx, root, "load_tol", 0.1);
  if (cfg.load_tol < 0) cx.fail("load_tol", "load_tol must be non-negative");
  if (root.contains("solver")) {
    const json& s = root.at("solver");
    check_keys(cx, s, "solver", {"rel_tol", "abs_tol", "max_iter"});
    cfg.solver.rel_tol = get<double>(cx, s, "rel_tol", cfg.solver.rel_tol);
    cfg.solver.abs_tol = get<double>(cx, s, "abs_tol", cfg.solver.abs_tol);
    cfg.solver.max_iter = get<int>(cx, s, "max_iter", cfg.solver.max_iter);
  }
  if (root.contains("boundary_data")) {
    const std::string bd = get<std::string>(cx, root, "boundary_data", "projected");
    if (bd == "projected") {
      cfg.boundary_data = BoundaryData::Projected;
    } else if (bd == "node") {
      cfg.boundary_data = BoundaryData::NodeValue;
    } else {
      cx.fail("boundary_data", "boundary_data must be 'projected' or 'node'");
    }
  }
  cfg.manufactured = get<bool>(cx, root, "manufactured", true);
  cfg.output_dir = get<std::string>(cx, root, "output", "");
  if (root.contains("convergence")) {
    const json& c = root.at("convergence");
    check_keys(cx, c, "convergence", {"levels"});
    cfg.levels = get_ints(cx, c, "levels", cfg.levels);
  }
  if (root.contains("condition")) {
    const json& c = root.at("condition");
    check_keys(cx, c, "condition", {"lengths", "level"});
    cfg.lengths = get_ints(cx, c, "lengths", cfg.lengths);
    cfg.condition_level = get<int>(cx, c, "level", cfg.condition_level);
  }
  if (root.contains("dof_compare")) {
    const json& c = root.at("dof_compare");
    check_keys(cx, c, "dof_compare", {"base_level", "object_level"});
    cfg.base_level = get<int>(cx, c, "base_level", cfg.base_level);
    cfg.object_level = get<int>(cx, c, "object_level", cfg.object_level);
  }
  if (root.contains("sdf_study")) {
    const json& c = root.at("sdf_study");
    check_keys(cx, c, "sdf_study", {"levels", "base_level"});
    cfg.levels = get_ints(cx, c, "levels", cfg.levels);
    cfg.base_level = get<int>(cx, c, "base_level", cfg.base_level);
  }
  if (root.contains("bench")) {
    const json& b = root.at("bench");
    check_keys(cx, b, "bench", {"warmup", "iterations", "orders", "workers"});
    cfg.bench.warmup = get<int>(cx, b, "warmup", cfg.bench.warmup);
    cfg.bench.iterations = get<int>(cx, b, "iterations", cfg.bench.iterations);
    cfg.bench.orders = get_ints(cx, b, "orders", cfg.bench.orders);
    cfg.bench.worker_sweep = get_ints(cx, b, "workers", {});
    if (cfg.bench.iterations < 1) cx.fail("iterations", "bench iterations must be positive");
  }
  return cfg;
}

}  // namespace

static RunConfig parse_checked(const std::string& text, const std::string& origin, const std::filesystem::path& base_dir) {
  try {
    return parse_impl(text, origin, base_dir);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  return parse_checked(text, origin, std::filesystem::current_path());
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_checked(ss.str(), path.string(), path.parent_path());
}

}  // namespace carve::app
