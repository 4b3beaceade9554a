#include <atomic>
#include <fstream>
#include <random>

#include "carve/partition.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace carve;

namespace {

IncompleteTree uniform_quadtree(int level) {
  const Carver none(make_empty(), {}, 2);
  return construct_uniform(none, level, 2);
}

DistributedLeaves split(const IncompleteTree& t, int ranks) {
  DistributedLeaves d;
  d.dim = t.dim;
  d.map = choose_splitters(t.leaves, ranks, 0.1);
  for (int r = 0; r < ranks; ++r) {
    d.ranks.emplace_back(t.leaves.begin() + d.map.begin(r), t.leaves.begin() + d.map.end(r));
  }
  return d;
}

}  // namespace

TEST_CASE("executor runs every rank once and rethrows") {
  for (int workers : {1, 3, 8}) {
    const RankExecutor exec(workers);
    std::vector<std::atomic<int>> hits(13);
    exec.run(13, [&](int r) { hits[r]++; });
    for (auto& h : hits) CHECK(h.load() == 1);
    CHECK_THROWS_AS(exec.run(5, [](int r) { if (r == 3) throw std::runtime_error("rank 3"); }), std::runtime_error);
  }
}

TEST_CASE("splitters respect the load tolerance") {
  std::mt19937_64 rng(59);
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = testing::random_case(rng, 2 + trial % 2, 5);
    for (int ranks : {1, 2, 3, 4, 8}) {
      if (c.tree.size() < static_cast<std::size_t>(4 * ranks)) continue;
      const PartitionMap m = choose_splitters(c.tree.leaves, ranks, 0.1);
      CHECK(m.total() == c.tree.size());
      CHECK(m.max_count() <= m.load_bound());
      CHECK_FALSE(m.has_empty_rank());
      for (int r = 0; r < ranks; ++r) {
        if (m.count(r)) CHECK(m.rank_of(m.begin(r)) == r);
      }
    }
  }
}

TEST_CASE("distributed sort and unique") {
  std::mt19937_64 rng(61);
  std::uniform_int_distribution<std::uint32_t> u(0, kRootLength - 1);
  std::vector<std::vector<Octant>> input(4);
  std::vector<Octant> all;
  for (int i = 0; i < 800; ++i) {
    const Octant o = Octant{{u(rng), u(rng), u(rng)}, kMaxLevel}.ancestor(1 + i % 6);
    input[i % 4].push_back(o);
    all.push_back(o);
  }
  const auto sorted = dist_tree_sort(input, 3, 4, 0.1);
  CHECK(sorted.gather() == tree_sort(all, 3));

  // Overlaps: keep only the finest, drop duplicates.
  const Octant root{};
  std::vector<std::vector<Octant>> ranks{{root.child(0), root.child(0).child(3)}, {root.child(0).child(3), root.child(1)}};
  const auto uniq = distributed_unique_leafs(ranks, 3, 2, 0.1);
  CHECK(uniq.gather() == std::vector<Octant>{root.child(0).child(3), root.child(1)});
}

TEST_CASE("hand-built ghost layout on a 4x4 quadtree split in two") {
  const IncompleteTree t = uniform_quadtree(2);
  const NodeSet ns = enumerate_nodes(t, 1, nullptr);
  const DistributedLeaves d = split(t, 2);
  REQUIRE(d.map.count(0) == 8);  // Morton halves: y < 1/2 and y > 1/2
  const GhostLayout g = build_ghost_layout(d, ns);
  CHECK(g.ranks[0].owned == 15);
  CHECK(g.ranks[0].ghosts() == 0);
  CHECK(g.ranks[1].owned == 10);
  CHECK(g.ranks[1].ghosts() == 5);
  CHECK(g.ranks[1].eta() == 0.5);
  for (int gh : g.ranks[1].ghost_owner) CHECK(gh == 0);
  CHECK(g.ranks[0].send[1].size() == 5);
  CHECK(g.ranks[1].recv[0].size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto gid = g.ranks[1].global_ids[g.ranks[1].recv[0][i]];
    CHECK(g.ranks[0].global_ids[g.ranks[0].send[1][i]] == gid);
    CHECK(ns.unit_coords(gid).y == 0.5);
  }

  std::vector<double> v(ns.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = double(i);
  RankVectors lv = scatter_to_ranks(g, v);
  CHECK(gather_owned(g, lv, ns.size()) == v);
  for (auto& x : lv[1]) x = 1.0;
  ghost_accumulate(g, lv);
  const auto acc = gather_owned(g, lv, ns.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const bool shared = ns.unit_coords(i).y == 0.5;
    CHECK(acc[i] == (shared ? v[i] + 1.0 : g.owner[i] == 1 ? 1.0 : v[i]));
  }
  ghost_read(g, lv);
  for (std::size_t k = 0; k < g.ranks[1].ghosts(); ++k) {
    const auto local = g.ranks[1].owned + k;
    CHECK(lv[1][local] == acc[g.ranks[1].global_ids[local]]);
  }
}

TEST_CASE("rank invariance of construction, nodes and matvec") {
  std::mt19937_64 rng(67);
  for (int trial = 0; trial < 8; ++trial) {
    const int dim = 2 + trial % 2;
    const int p = 1 + (trial / 2) % 2;
    const auto shape = testing::random_shape(rng, dim);
    const Carver carver(shape, {}, dim);
    const auto seeds = tree_sort(boundary_seeds(carver, 2, dim == 2 ? 6 : 4, dim), dim);
    if (seeds.empty()) continue;
    const IncompleteTree ref = construct_balanced(carver, seeds, dim);
    const NodeSet ref_nodes = enumerate_nodes(ref, p, &carver);
    std::vector<double> u(ref_nodes.size());
    std::uniform_real_distribution<double> ud(-1, 1);
    for (double& x : u) x = ud(rng);
    const auto y_ref = matvec(ref, ref_nodes, {}, {}, u);
    for (int ranks : {1, 2, 4, 8}) {
      const RankExecutor exec(3);
      const auto d = distributed_construct_balanced(carver, scatter_evenly(seeds, ranks), dim, ranks, 0.1, exec);
      CHECK(d.gather() == ref.leaves);
      const NodeSet ns = distributed_enumerate_nodes(d, p, &carver, exec);
      CHECK(ns.keys == ref_nodes.keys);
      CHECK(ns.boundary == ref_nodes.boundary);
      const GhostLayout g = build_ghost_layout(d, ns, exec);
      DistributedMatvec mv(d, ns, g, {}, {}, exec);
      std::vector<double> y(ns.size());
      mv.apply(u, y);
      CHECK(testing::max_rel_deviation(y, y_ref) <= 1e-12);
    }
  }
}

TEST_CASE("worker count does not change results") {
  std::mt19937_64 rng(71);
  const auto c = testing::random_case(rng, 3, 4);
  const auto seeds = tree_sort(boundary_seeds(*c.carver, 2, 4, 3), 3);
  std::vector<double> first;
  for (int workers : {1, 2, 5}) {
    const RankExecutor exec(workers);
    const auto d = distributed_construct_balanced(*c.carver, scatter_evenly(seeds, 4), 3, 4, 0.1, exec);
    const NodeSet ns = distributed_enumerate_nodes(d, 2, c.carver.get(), exec);
    const GhostLayout g = build_ghost_layout(d, ns, exec);
    DistributedMatvec mv(d, ns, g, {}, {}, exec);
    std::vector<double> u(ns.size()), y(ns.size());
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::sin(double(i));
    mv.apply(u, y);
    if (first.empty()) first = y;
    else CHECK(y == first);
  }
}

TEST_CASE("partition stats CSV") {
  const IncompleteTree t = uniform_quadtree(3);
  const NodeSet ns = enumerate_nodes(t, 1, nullptr);
  const DistributedLeaves d = split(t, 4);
  const GhostLayout g = build_ghost_layout(d, ns);
  const PartitionStats s = partition_stats(d, g);
  REQUIRE(s.ranks.size() == 4);
  std::size_t owned = 0;
  for (const auto& r : s.ranks) owned += r.owned_nodes;
  CHECK(owned == ns.size());
  const auto path = std::filesystem::temp_directory_path() / "carve_part.csv";
  write_partition_stats_csv(s, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "rank,elements,owned_nodes,ghost_nodes,eta");
  std::filesystem::remove(path);
}
