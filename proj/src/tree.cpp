#include "carve/tree.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include "json.hpp"
#include <stdexcept>

namespace carve {

int IncompleteTree::finest_level() const {
  int l = 0;
  for (const auto& o : leaves) l = std::max<int>(l, o.level);
  return l;
}

bool is_sfc_sorted(std::span<const Octant> octants) {
  for (std::size_t i = 1; i < octants.size(); ++i) {
    if (sfc_compare(octants[i - 1], octants[i]) > 0) return false;
  }
  return true;
}

std::vector<Octant> tree_sort(std::vector<Octant> octants, int dim) {
  const int nchild = 1 << dim;
  std::vector<Octant> scratch(octants.size());

  struct Segment {
    std::size_t begin, end;
    int level;
    SfcOracle oracle;
  };
  std::vector<Segment> stack;
  stack.push_back({0, octants.size(), 0, SfcOracle{}});

  while (!stack.empty()) {
    const Segment seg = stack.back();
    stack.pop_back();
    if (seg.end - seg.begin <= 1 || seg.level >= kMaxLevel) continue;

    // Bucket 0 holds octants equal to the segment's own octant (they precede descendants),
    // buckets 1..2^d hold descendants by SFC-ordered child.
    std::array<std::size_t, 9> counts{};
    const int next = seg.level + 1;
    for (std::size_t i = seg.begin; i < seg.end; ++i) {
      const Octant& o = octants[i];
      if (o.level <= seg.level) {
        ++counts[0];
      } else {
        ++counts[1 + seg.oracle.morton_to_sfc(o.child_number(next))];
      }
    }
    std::array<std::size_t, 10> offsets{};
    offsets[0] = seg.begin;
    for (int b = 0; b <= nchild; ++b) offsets[b + 1] = offsets[b] + counts[b];
    std::array<std::size_t, 9> cursor{};
    std::copy_n(offsets.begin(), nchild + 1, cursor.begin());
    for (std::size_t i = seg.begin; i < seg.end; ++i) {
      const Octant& o = octants[i];
      const int b = o.level <= seg.level ? 0 : 1 + seg.oracle.morton_to_sfc(o.child_number(next));
      scratch[cursor[b]++] = o;
    }
    std::copy(scratch.begin() + seg.begin, scratch.begin() + seg.end, octants.begin() + seg.begin);

    for (int c = nchild - 1; c >= 0; --c) {
      const std::size_t b = offsets[c + 1], e = offsets[c + 2];
      if (e - b > 1) stack.push_back({b, e, next, seg.oracle.child(c)});
    }
  }
  octants.erase(std::unique(octants.begin(), octants.end()), octants.end());
  return octants;
}

IncompleteTree construct_uniform(const RegionClassifier& F, int level, int dim) {
  if (level < 0 || level > kMaxLevel) throw std::invalid_argument("construct_uniform: level out of range");
  IncompleteTree tree;
  tree.dim = dim;
  const int nchild = 1 << dim;
  struct Item {
    Octant oct;
    SfcOracle oracle;
  };
  std::vector<Item> stack{{kRootOctant, SfcOracle{}}};
  while (!stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    const RegionClass c = F(it.oct);
    if (c == RegionClass::Carved) continue;  // pruned with its whole subtree
    if (it.oct.level >= level) {
      tree.leaves.push_back(it.oct);
      tree.tags.push_back(c);
      continue;
    }
    for (int s = nchild - 1; s >= 0; --s) {
      stack.push_back({it.oct.child(it.oracle.sfc_to_morton(s)), it.oracle.child(s)});
    }
  }
  return tree;
}

IncompleteTree construct_constrained(const RegionClassifier& F, std::span<const Octant> seeds, int dim) {
  if (!is_sfc_sorted(seeds)) throw std::invalid_argument("construct_constrained: seeds are not SFC-sorted");
  IncompleteTree tree;
  tree.dim = dim;
  const int nchild = 1 << dim;

  struct Item {
    Octant oct;
    SfcOracle oracle;
    std::size_t begin, end;  // seeds inside `oct`
  };
  std::vector<Item> stack{{kRootOctant, SfcOracle{}, 0, seeds.size()}};
  while (!stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    const RegionClass c = F(it.oct);
    if (c == RegionClass::Carved) continue;

    int finest = -1;
    for (std::size_t i = it.begin; i < it.end; ++i) finest = std::max<int>(finest, seeds[i].level);
    if (it.begin == it.end || it.oct.level >= finest) {
      tree.leaves.push_back(it.oct);
      tree.tags.push_back(c);
      continue;
    }

    // Bucket seeds to SFC-sorted children. Seeds at this octant's own level sort first and
    // constrain nothing below it.
    const int next = it.oct.level + 1;
    std::size_t first = it.begin;
    while (first < it.end && seeds[first].level <= it.oct.level) ++first;
    std::array<std::size_t, 8> counts{};
    for (std::size_t i = first; i < it.end; ++i) ++counts[it.oracle.morton_to_sfc(seeds[i].child_number(next))];
    std::array<std::size_t, 9> offsets{};
    offsets[0] = first;
    for (int s = 0; s < nchild; ++s) offsets[s + 1] = offsets[s] + counts[s];

    for (int s = nchild - 1; s >= 0; --s) {
      const int m = it.oracle.sfc_to_morton(s);
      stack.push_back({it.oct.child(m), it.oracle.child(s), offsets[s], offsets[s + 1]});
    }
  }
  return tree;
}

void coarsest_covering(IncompleteTree& tree, const RegionClassifier& F) {
  tree.tags.resize(tree.leaves.size());
  for (std::size_t i = 0; i < tree.leaves.size(); ++i) tree.tags[i] = F(tree.leaves[i]);
}

std::vector<Octant> boundary_seeds(const RegionClassifier& F, int base_level, int boundary_level, int dim) {
  if (base_level > boundary_level) throw std::invalid_argument("boundary_seeds: base level above boundary level");
  std::vector<Octant> out;
  const int nchild = 1 << dim;
  std::vector<Octant> stack{kRootOctant};
  while (!stack.empty()) {
    const Octant o = stack.back();
    stack.pop_back();
    const RegionClass c = F(o);
    if (c == RegionClass::Carved) continue;
    const bool refine = o.level < base_level || (c == RegionClass::RetainBoundary && o.level < boundary_level);
    if (!refine) {
      out.push_back(o);
      continue;
    }
    for (int s = nchild - 1; s >= 0; --s) stack.push_back(o.child(s));
  }
  return out;
}

std::vector<Octant> carved_cover(const IncompleteTree& tree, const RegionClassifier& F) {
  std::vector<Octant> out;
  const int nchild = 1 << tree.dim;
  struct Item {
    Octant oct;
    std::size_t begin, end;
  };
  std::vector<Item> stack{{kRootOctant, 0, tree.leaves.size()}};
  while (!stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    if (F(it.oct) == RegionClass::Carved) {
      out.push_back(it.oct);
      continue;
    }
    if (it.begin == it.end) continue;  // retained but uncovered: caller's volume check will see it
    if (it.end - it.begin == 1 && tree.leaves[it.begin] == it.oct) continue;
    const int next = it.oct.level + 1;
    std::size_t pos = it.begin;
    std::vector<Item> children;
    for (int c = 0; c < nchild; ++c) {
      std::size_t e = pos;
      while (e < it.end && tree.leaves[e].child_number(next) == c) ++e;
      children.push_back({it.oct.child(c), pos, e});
      pos = e;
    }
    for (auto ci = children.rbegin(); ci != children.rend(); ++ci) stack.push_back(*ci);
  }
  return out;
}

unsigned __int128 lattice_volume(std::span<const Octant> octants, int dim) {
  unsigned __int128 v = 0;
  for (const auto& o : octants) {
    unsigned __int128 cell = 1;
    for (int a = 0; a < dim; ++a) cell *= o.side();
    v += cell;
  }
  return v;
}

// --- dump/load ------------------------------------------------------------

namespace {

constexpr char kTreeMagic[4] = {'C', 'R', 'V', 'T'};
constexpr std::uint32_t kTreeVersion = 1;

void put_le(std::ostream& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::istream& in, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = in.get();
    if (c == EOF) throw std::runtime_error("tree file truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace

void write_tree_binary(const IncompleteTree& tree, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kTreeMagic, 4);
  put_le(out, kTreeVersion, 4);
  put_le(out, static_cast<std::uint64_t>(tree.dim), 4);
  put_le(out, tree.leaves.size(), 8);
  for (std::size_t i = 0; i < tree.leaves.size(); ++i) {
    put_le(out, tree.leaves[i].level, 1);
    for (int a = 0; a < tree.dim; ++a) put_le(out, tree.leaves[i].anchor[a], 4);
    put_le(out, i < tree.tags.size() ? static_cast<std::uint64_t>(tree.tags[i]) : 0, 1);
  }
}

IncompleteTree read_tree_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kTreeMagic, 4) != 0) throw std::runtime_error("not a carve tree file");
  const auto version = get_le(in, 4);
  if (version != kTreeVersion) throw std::runtime_error("unsupported tree file version " + std::to_string(version));
  IncompleteTree tree;
  tree.dim = static_cast<int>(get_le(in, 4));
  if (tree.dim != 2 && tree.dim != 3) throw std::runtime_error("tree file: bad dimension");
  const auto n = get_le(in, 8);
  tree.leaves.resize(n);
  tree.tags.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    tree.leaves[i].level = static_cast<std::uint8_t>(get_le(in, 1));
    for (int a = 0; a < tree.dim; ++a) tree.leaves[i].anchor[a] = static_cast<std::uint32_t>(get_le(in, 4));
    const auto tag = get_le(in, 1);
    if (tag > 2) throw std::runtime_error("tree file: bad region tag");
    tree.tags[i] = static_cast<RegionClass>(tag);
  }
  return tree;
}

std::string tree_to_json(const IncompleteTree& tree) {
  nlohmann::json j;
  j["format"] = "carve-tree";
  j["version"] = kTreeVersion;
  j["dim"] = tree.dim;
  auto& recs = j["leaves"] = nlohmann::json::array();
  for (std::size_t i = 0; i < tree.leaves.size(); ++i) {
    nlohmann::json r = nlohmann::json::array();
    r.push_back(tree.leaves[i].level);
    for (int a = 0; a < tree.dim; ++a) r.push_back(tree.leaves[i].anchor[a]);
    r.push_back(static_cast<int>(i < tree.tags.size() ? tree.tags[i] : RegionClass::RetainInternal));
    recs.push_back(std::move(r));
  }
  return j.dump();
}

IncompleteTree tree_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("format", "") != "carve-tree") throw std::runtime_error("not a carve tree document");
  if (j.at("version").get<std::uint32_t>() != kTreeVersion) throw std::runtime_error("unsupported tree version");
  IncompleteTree tree;
  tree.dim = j.at("dim").get<int>();
  for (const auto& r : j.at("leaves")) {
    Octant o;
    o.level = r.at(0).get<std::uint8_t>();
    for (int a = 0; a < tree.dim; ++a) o.anchor[a] = r.at(1 + a).get<std::uint32_t>();
    tree.leaves.push_back(o);
    tree.tags.push_back(static_cast<RegionClass>(r.at(1 + tree.dim).get<int>()));
  }
  return tree;
}

}  // namespace carve
