#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "carve/femops.hpp"
#include "carve/nodes.hpp"
#include "carve/tree.hpp"

namespace carve {

/// Runs one task per simulated rank on a fixed number of worker threads. Tasks only
/// touch their own rank's data, so results do not depend on the worker count.
class RankExecutor {
 public:
  explicit RankExecutor(int workers = 1) : workers_(workers < 1 ? 1 : workers) {}
  int workers() const { return workers_; }
  void run(int rank_count, const std::function<void(int)>& task) const;

 private:
  int workers_;
};

/// Contiguous SFC ranges of a global leaf order, one per rank.
struct PartitionMap {
  int rank_count = 1;
  double load_tol = 0.1;
  std::vector<std::size_t> offsets{0, 0};  // rank_count + 1

  std::size_t begin(int r) const { return offsets[r]; }
  std::size_t end(int r) const { return offsets[r + 1]; }
  std::size_t count(int r) const { return offsets[r + 1] - offsets[r]; }
  std::size_t total() const { return offsets.back(); }
  std::size_t max_count() const;
  bool has_empty_rank() const;
  int rank_of(std::size_t index) const;
  /// ceil(mean * (1 + load_tol))
  std::size_t load_bound() const;
};

/// Splitters for a sorted global sequence. Each split stays within floor(tol*mean/2) of
/// its ideal position and, inside that window, prefers cuts between octants whose common
/// ancestor is coarsest.
PartitionMap choose_splitters(std::span<const Octant> sorted, int rank_count, double load_tol);

/// Leaves held per rank; the global order is the concatenation.
struct DistributedLeaves {
  int dim = 3;
  PartitionMap map;
  std::vector<std::vector<Octant>> ranks;

  std::vector<Octant> gather() const;
};

/// Sorts distributed octants globally (duplicates removed) and repartitions.
DistributedLeaves dist_tree_sort(const std::vector<std::vector<Octant>>& input, int dim, int rank_count,
                                 double load_tol, const RankExecutor& exec = RankExecutor());

/// Deletes duplicates (lower-rank copy kept) and octants with a finer overlapping octant,
/// then repartitions.
DistributedLeaves distributed_unique_leafs(const std::vector<std::vector<Octant>>& sorted_ranks, int dim,
                                           int rank_count, double load_tol);

/// Seeds split across ranks; each rank constructs from the root with its slice, then
/// overlaps are resolved.
DistributedLeaves distributed_construct_constrained(const RegionClassifier& F,
                                                    const std::vector<std::vector<Octant>>& seeds, int dim,
                                                    int rank_count, double load_tol,
                                                    const RankExecutor& exec = RankExecutor());

/// Distributed construct -> per-rank neighbor constraints -> distributed construct.
DistributedLeaves distributed_construct_balanced(const RegionClassifier& F,
                                                 const std::vector<std::vector<Octant>>& seeds, int dim,
                                                 int rank_count, double load_tol,
                                                 const RankExecutor& exec = RankExecutor());

/// Splits a sorted list into `rank_count` nearly equal contiguous slices (input scattering).
std::vector<std::vector<Octant>> scatter_evenly(std::span<const Octant> octants, int rank_count);

/// Sample-sort node enumeration: ranks emit node and cancellation instances, exchange them
/// by key range, and resolve each coordinate on its destination rank. The concatenated
/// result equals the single-rank NodeSet.
NodeSet distributed_enumerate_nodes(const DistributedLeaves& leaves, int order, const Carver* carver,
                                    const RankExecutor& exec = RankExecutor());

/// carved_hanging_sources with the node instances exchanged by key range.
std::vector<Octant> distributed_carved_hanging_sources(const DistributedLeaves& leaves, const Carver& carver,
                                                       const RankExecutor& exec = RankExecutor());

/// Distributed counterpart of construct_boundary_conforming.
DistributedLeaves distributed_construct_boundary_conforming(const Carver& carver,
                                                            std::vector<std::vector<Octant>> seeds, int dim,
                                                            int rank_count, double load_tol,
                                                            const RankExecutor& exec = RankExecutor());

/// Per-rank local numbering: owned nodes (ascending global id), then ghosts (ascending).
struct RankLayout {
  std::vector<std::uint32_t> global_ids;
  std::size_t owned = 0;
  std::vector<int> ghost_owner;  // per ghost
  // send[b]: local indices of owned nodes that rank b holds as ghosts;
  // recv[a]: local ghost indices whose owner is rank a. Index-for-index consistent.
  std::vector<std::vector<std::uint32_t>> send, recv;

  std::size_t size() const { return global_ids.size(); }
  std::size_t ghosts() const { return global_ids.size() - owned; }
  double eta() const { return owned == 0 ? 0.0 : static_cast<double>(ghosts()) / static_cast<double>(owned); }
};

struct GhostLayout {
  int rank_count = 1;
  std::vector<RankLayout> ranks;
  std::vector<int> owner;  // per global node
};

/// A rank needs every node its elements reference: non-hanging element nodes and the
/// governing nodes of hanging ones. Owner = lowest rank that needs the node.
GhostLayout build_ghost_layout(const DistributedLeaves& leaves, const NodeSet& nodes,
                               const RankExecutor& exec = RankExecutor());

/// Per-rank vectors (owned + ghost entries).
using RankVectors = std::vector<std::vector<double>>;

RankVectors scatter_to_ranks(const GhostLayout& layout, std::span<const double> global);
std::vector<double> gather_owned(const GhostLayout& layout, const RankVectors& local, std::size_t n);

/// Ghosts overwritten with owner values.
void ghost_read(const GhostLayout& layout, RankVectors& v);
/// Ghost contributions added to owners in ascending source-rank order, then ghosts zeroed.
void ghost_accumulate(const GhostLayout& layout, RankVectors& v);

struct MatvecTimers {
  double traversal = 0, leaf = 0, ghost = 0, alloc = 0;
};

/// ghost_read -> per-rank traversal matvec -> ghost_accumulate.
class DistributedMatvec {
 public:
  DistributedMatvec(const DistributedLeaves& leaves, const NodeSet& nodes, const GhostLayout& layout,
                    const ElementalOperator& op, const DomainMapping& mapping, RankExecutor exec = RankExecutor());

  /// Global vector in, global vector out.
  void apply(std::span<const double> u, std::span<double> out);
  void apply_local(RankVectors& u, RankVectors& out);

  bool timing = false;
  MatvecTimers timers;

 private:
  const DistributedLeaves* leaves_;
  const GhostLayout* layout_;
  std::size_t n_;
  RankExecutor exec_;
  std::vector<std::vector<NodeKey>> keys_;
  std::vector<MatvecEngine> engines_;
  std::vector<TraversalTimers> rank_timers_;
};

struct RankStats {
  int rank = 0;
  std::size_t elements = 0, owned_nodes = 0, ghost_nodes = 0;
  double eta = 0;
};

struct PartitionStats {
  std::vector<RankStats> ranks;
  double mean_ghosts = 0, std_ghosts = 0, mean_eta = 0, std_eta = 0;
  std::size_t total_ghosts = 0;
};

PartitionStats partition_stats(const DistributedLeaves& leaves, const GhostLayout& layout);
/// CSV `rank,elements,owned_nodes,ghost_nodes,eta`.
void write_partition_stats_csv(const PartitionStats& stats, const std::filesystem::path& path);

}  // namespace carve
