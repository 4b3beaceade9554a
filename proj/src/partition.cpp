#include "carve/partition.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "carve/balance.hpp"

namespace carve {

void RankExecutor::run(int rank_count, const std::function<void(int)>& task) const {
  const int nthreads = std::min(workers_, rank_count);
  if (nthreads <= 1) {
    for (int r = 0; r < rank_count; ++r) task(r);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  {
    std::vector<std::jthread> pool;
    for (int t = 0; t < nthreads; ++t) {
      pool.emplace_back([&] {
        for (int r = next++; r < rank_count; r = next++) {
          try {
            task(r);
          } catch (...) {
            if (!failed.exchange(true)) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

std::size_t PartitionMap::max_count() const {
  std::size_t m = 0;
  for (int r = 0; r < rank_count; ++r) m = std::max(m, count(r));
  return m;
}

bool PartitionMap::has_empty_rank() const {
  for (int r = 0; r < rank_count; ++r) {
    if (count(r) == 0) return true;
  }
  return false;
}

int PartitionMap::rank_of(std::size_t index) const {
  const auto it = std::upper_bound(offsets.begin(), offsets.end(), index);
  return static_cast<int>(it - offsets.begin()) - 1;
}

std::size_t PartitionMap::load_bound() const {
  const double mean = static_cast<double>(total()) / rank_count;
  return static_cast<std::size_t>(std::ceil(mean * (1.0 + load_tol) - 1e-12));
}

PartitionMap choose_splitters(std::span<const Octant> sorted, int rank_count, double load_tol) {
  if (rank_count < 1) throw std::invalid_argument("partition: rank count must be positive");
  if (load_tol < 0) throw std::invalid_argument("partition: negative load tolerance");
  PartitionMap map;
  map.rank_count = rank_count;
  map.load_tol = load_tol;
  const std::size_t n = sorted.size();
  map.offsets.assign(rank_count + 1, 0);
  map.offsets[rank_count] = n;
  const double mean = static_cast<double>(n) / rank_count;
  const auto w = static_cast<std::size_t>(std::floor(load_tol * mean / 2.0));
  for (int i = 1; i < rank_count; ++i) {
    const std::size_t ideal = static_cast<std::size_t>(i) * n / rank_count;
    const std::size_t lo = std::max(ideal > w ? ideal - w : 0, std::max<std::size_t>(map.offsets[i - 1], 1));
    const std::size_t hi = std::min(ideal + w, n > 0 ? n - 1 : 0);
    std::size_t best = std::max(ideal, map.offsets[i - 1]);
    if (lo <= hi && n > 1) {
      int best_level = 1 << 30;
      std::size_t best_dist = 0;
      for (std::size_t b = lo; b <= hi; ++b) {
        const int lev = common_ancestor_level(sorted[b - 1], sorted[b]);
        const std::size_t dist = b > ideal ? b - ideal : ideal - b;
        if (lev < best_level || (lev == best_level && dist < best_dist)) {
          best_level = lev;
          best_dist = dist;
          best = b;
        }
      }
    }
    map.offsets[i] = std::min(std::max(best, map.offsets[i - 1]), n);
  }
  return map;
}

std::vector<Octant> DistributedLeaves::gather() const {
  std::vector<Octant> out;
  for (const auto& r : ranks) out.insert(out.end(), r.begin(), r.end());
  return out;
}

namespace {

DistributedLeaves split(std::vector<Octant> global, int dim, int rank_count, double load_tol) {
  DistributedLeaves d;
  d.dim = dim;
  d.map = choose_splitters(global, rank_count, load_tol);
  d.ranks.resize(rank_count);
  for (int r = 0; r < rank_count; ++r) {
    d.ranks[r].assign(global.begin() + static_cast<std::ptrdiff_t>(d.map.begin(r)),
                      global.begin() + static_cast<std::ptrdiff_t>(d.map.end(r)));
  }
  return d;
}

}  // namespace

std::vector<std::vector<Octant>> scatter_evenly(std::span<const Octant> octants, int rank_count) {
  std::vector<std::vector<Octant>> out(rank_count);
  const std::size_t n = octants.size();
  for (int r = 0; r < rank_count; ++r) {
    const std::size_t b = static_cast<std::size_t>(r) * n / rank_count;
    const std::size_t e = static_cast<std::size_t>(r + 1) * n / rank_count;
    out[r].assign(octants.begin() + static_cast<std::ptrdiff_t>(b), octants.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return out;
}

DistributedLeaves dist_tree_sort(const std::vector<std::vector<Octant>>& input, int dim, int rank_count,
                                 double load_tol, const RankExecutor& exec) {
  // Local sorts, then a k-way merge standing in for the all-to-all exchange.
  std::vector<std::vector<Octant>> local(input.size());
  exec.run(static_cast<int>(input.size()), [&](int r) { local[r] = tree_sort(input[r], dim); });
  std::vector<Octant> merged;
  for (auto& l : local) {
    const auto mid = static_cast<std::ptrdiff_t>(merged.size());
    merged.insert(merged.end(), l.begin(), l.end());
    std::inplace_merge(merged.begin(), merged.begin() + mid, merged.end(), sfc_less);
  }
  merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
  return split(std::move(merged), dim, rank_count, load_tol);
}

DistributedLeaves distributed_unique_leafs(const std::vector<std::vector<Octant>>& sorted_ranks, int dim,
                                           int rank_count, double load_tol) {
  // Walk the concatenation in rank order. Equal copies keep the first (lower rank);
  // an octant followed by one of its descendants is dropped.
  std::vector<Octant> all;
  for (const auto& r : sorted_ranks) all.insert(all.end(), r.begin(), r.end());
  if (!is_sfc_sorted(all)) throw std::invalid_argument("unique leafs: input is not globally sorted");
  all.erase(std::unique(all.begin(), all.end()), all.end());
  // Descendants of an octant follow it contiguously in SFC order.
  std::vector<Octant> out;
  out.reserve(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i + 1 < all.size() && all[i].is_strict_ancestor_of(all[i + 1])) continue;
    out.push_back(all[i]);
  }
  return split(std::move(out), dim, rank_count, load_tol);
}

DistributedLeaves distributed_construct_constrained(const RegionClassifier& F,
                                                    const std::vector<std::vector<Octant>>& seeds, int dim,
                                                    int rank_count, double load_tol, const RankExecutor& exec) {
  const DistributedLeaves part = dist_tree_sort(seeds, dim, rank_count, load_tol, exec);
  std::vector<std::vector<Octant>> built(rank_count);
  exec.run(rank_count, [&](int r) {
    if (!part.ranks[r].empty()) built[r] = construct_constrained(F, part.ranks[r], dim).leaves;
  });
  // Each rank's cover spans the whole retained region; redistribute and resolve overlaps.
  const DistributedLeaves resorted = dist_tree_sort(built, dim, rank_count, load_tol, exec);
  return distributed_unique_leafs(resorted.ranks, dim, rank_count, load_tol);
}

DistributedLeaves distributed_construct_balanced(const RegionClassifier& F,
                                                 const std::vector<std::vector<Octant>>& seeds, int dim,
                                                 int rank_count, double load_tol, const RankExecutor& exec) {
  const DistributedLeaves first = distributed_construct_constrained(F, seeds, dim, rank_count, load_tol, exec);
  // The neighbor ladder of an octant depends on that octant alone, so per-rank ladders
  // union to the global one.
  std::vector<std::vector<Octant>> constrained(rank_count);
  exec.run(rank_count, [&](int r) { constrained[r] = bottom_up_constrain_neighbors(first.ranks[r], dim); });
  return distributed_construct_constrained(F, constrained, dim, rank_count, load_tol, exec);
}

namespace {

// Sample-sort exchange of per-rank key-sorted records: splitters from R regular samples
// per rank, each destination receives from ranks in ascending order and stable-sorts.
template <class Record>
std::vector<std::vector<Record>> exchange_by_key(std::vector<std::vector<Record>>& local, const RankExecutor& exec) {
  const int R = static_cast<int>(local.size());
  auto less = [](const Record& a, const Record& b) { return node_less(a.key, b.key); };
  exec.run(R, [&](int r) { std::sort(local[r].begin(), local[r].end(), less); });
  std::vector<NodeKey> samples;
  for (const auto& v : local) {
    for (int s = 1; s <= R && !v.empty(); ++s) samples.push_back(v[(v.size() * s) / (R + 1)].key);
  }
  std::sort(samples.begin(), samples.end(), node_less);
  std::vector<NodeKey> splitters;
  for (int r = 1; r < R && !samples.empty(); ++r) splitters.push_back(samples[samples.size() * r / R]);
  auto destination = [&](const NodeKey& k) {
    return static_cast<int>(std::upper_bound(splitters.begin(), splitters.end(), k, node_less) - splitters.begin());
  };
  std::vector<std::vector<Record>> received(R);
  for (int src = 0; src < R; ++src) {
    for (const auto& rec : local[src]) received[destination(rec.key)].push_back(rec);
  }
  exec.run(R, [&](int d) { std::stable_sort(received[d].begin(), received[d].end(), less); });
  return received;
}

}  // namespace

NodeSet distributed_enumerate_nodes(const DistributedLeaves& leaves, int order, const Carver* carver,
                                    const RankExecutor& exec) {
  const int R = leaves.map.rank_count;
  const int dim = leaves.dim;
  struct Instance {
    NodeKey key;
    bool cancel;
  };
  std::vector<std::vector<Instance>> local(R);
  exec.run(R, [&](int r) {
    auto& v = local[r];
    for (const auto& leaf : leaves.ranks[r]) {
      for (const auto& k : generate_element_nodes(leaf, order, dim)) v.push_back({k, false});
      for (const auto& k : generate_cancellation_nodes(leaf, order, dim)) v.push_back({k, true});
    }
  });
  const auto received = exchange_by_key(local, exec);

  std::vector<std::vector<NodeKey>> unique(R);
  exec.run(R, [&](int d) {
    const auto& v = received[d];
    for (std::size_t i = 0; i < v.size();) {
      std::size_t j = i;
      bool cancelled = false, generated = false;
      while (j < v.size() && v[j].key == v[i].key) {
        cancelled = cancelled || v[j].cancel;
        generated = generated || !v[j].cancel;
        ++j;
      }
      if (generated && !cancelled) unique[d].push_back(v[i].key);
      i = j;
    }
  });

  NodeSet set;
  set.dim = dim;
  set.order = order;
  for (const auto& u : unique) set.keys.insert(set.keys.end(), u.begin(), u.end());
  set.boundary.resize(set.keys.size());
  for (std::size_t i = 0; i < set.keys.size(); ++i) set.boundary[i] = is_boundary_node(set.keys[i], order, dim, carver);
  return set;
}

std::vector<Octant> distributed_carved_hanging_sources(const DistributedLeaves& leaves, const Carver& carver,
                                                       const RankExecutor& exec) {
  const int R = leaves.map.rank_count;
  const int dim = leaves.dim;
  struct Instance {
    NodeKey key;
    Octant leaf;
    bool cancel;
  };
  std::vector<Octant> sources;
  for (int order = 1; order <= 2; ++order) {
    std::vector<std::vector<Instance>> local(R);
    exec.run(R, [&](int r) {
      for (const auto& leaf : leaves.ranks[r]) {
        for (const auto& k : generate_element_nodes(leaf, order, dim)) local[r].push_back({k, leaf, false});
        for (const auto& k : generate_cancellation_nodes(leaf, order, dim)) local[r].push_back({k, leaf, true});
      }
    });
    const auto received = exchange_by_key(local, exec);
    std::vector<std::vector<Octant>> found(R);
    exec.run(R, [&](int d) {
      const auto& v = received[d];
      for (std::size_t i = 0; i < v.size();) {
        std::size_t j = i;
        bool cancelled = false, generated = false;
        for (; j < v.size() && v[j].key == v[i].key; ++j) {
          cancelled = cancelled || v[j].cancel;
          generated = generated || !v[j].cancel;
        }
        if (generated && cancelled &&
            carver.classify_point(node_unit_coords(v[i].key, order, dim)) == PointClass::Carved) {
          for (std::size_t k = i; k < j; ++k) {
            if (v[k].cancel) found[d].push_back(v[k].leaf);
          }
        }
        i = j;
      }
    });
    for (const auto& f : found) sources.insert(sources.end(), f.begin(), f.end());
  }
  return tree_sort(std::move(sources), dim);
}

DistributedLeaves distributed_construct_boundary_conforming(const Carver& carver,
                                                            std::vector<std::vector<Octant>> seeds, int dim,
                                                            int rank_count, double load_tol, const RankExecutor& exec) {
  std::vector<Octant> previous;
  for (;;) {
    DistributedLeaves d = distributed_construct_balanced(carver, seeds, dim, rank_count, load_tol, exec);
    const auto sources = distributed_carved_hanging_sources(d, carver, exec);
    std::vector<Octant> current = d.gather();
    if (sources.empty() || current == previous) return d;
    previous = std::move(current);
    // Children of each source join the seeds of the rank that holds the source.
    for (const Octant& o : sources) {
      int r = 0;
      for (int q = 0; q < rank_count; ++q) {
        if (std::binary_search(d.ranks[q].begin(), d.ranks[q].end(), o, sfc_less)) r = q;
      }
      for (int c = 0; c < (1 << dim); ++c) seeds[r].push_back(o.child(c));
    }
  }
}

GhostLayout build_ghost_layout(const DistributedLeaves& leaves, const NodeSet& nodes, const RankExecutor& exec) {
  const int R = leaves.map.rank_count;
  GhostLayout layout;
  layout.rank_count = R;
  layout.ranks.resize(R);
  std::vector<std::vector<std::uint32_t>> needed(R);
  exec.run(R, [&](int r) {
    if (leaves.ranks[r].empty()) return;
    const HangingGovernance gov = build_hanging_governance(leaves.ranks[r], nodes);
    auto& ids = needed[r];
    ids.reserve(gov.entries.size());
    for (const auto& e : gov.entries) ids.push_back(e.index);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  });

  layout.owner.assign(nodes.size(), -1);
  for (int r = 0; r < R; ++r) {
    for (auto id : needed[r]) {
      if (layout.owner[id] < 0) layout.owner[id] = r;
    }
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (layout.owner[i] < 0) throw std::logic_error("ghost layout: node referenced by no element");
  }

  for (int r = 0; r < R; ++r) {
    RankLayout& rl = layout.ranks[r];
    rl.send.assign(R, {});
    rl.recv.assign(R, {});
    for (auto id : needed[r]) {
      if (layout.owner[id] == r) rl.global_ids.push_back(id);
    }
    rl.owned = rl.global_ids.size();
    for (auto id : needed[r]) {
      if (layout.owner[id] != r) {
        rl.global_ids.push_back(id);
        rl.ghost_owner.push_back(layout.owner[id]);
      }
    }
  }
  // recv lists in ascending global id; the owner's send list mirrors them.
  for (int b = 0; b < R; ++b) {
    RankLayout& rb = layout.ranks[b];
    for (std::size_t g = 0; g < rb.ghosts(); ++g) {
      const int a = rb.ghost_owner[g];
      const std::uint32_t gid = rb.global_ids[rb.owned + g];
      RankLayout& ra = layout.ranks[a];
      const auto it = std::lower_bound(ra.global_ids.begin(), ra.global_ids.begin() + static_cast<std::ptrdiff_t>(ra.owned), gid);
      rb.recv[a].push_back(static_cast<std::uint32_t>(rb.owned + g));
      ra.send[b].push_back(static_cast<std::uint32_t>(it - ra.global_ids.begin()));
    }
  }
  return layout;
}

RankVectors scatter_to_ranks(const GhostLayout& layout, std::span<const double> global) {
  RankVectors v(layout.rank_count);
  for (int r = 0; r < layout.rank_count; ++r) {
    const auto& rl = layout.ranks[r];
    v[r].resize(rl.size());
    for (std::size_t i = 0; i < rl.size(); ++i) v[r][i] = global[rl.global_ids[i]];
  }
  return v;
}

std::vector<double> gather_owned(const GhostLayout& layout, const RankVectors& local, std::size_t n) {
  std::vector<double> out(n, 0.0);
  for (int r = 0; r < layout.rank_count; ++r) {
    const auto& rl = layout.ranks[r];
    for (std::size_t i = 0; i < rl.owned; ++i) out[rl.global_ids[i]] = local[r][i];
  }
  return out;
}

namespace {

void check_layout(const GhostLayout& layout, const RankVectors& v) {
  if (static_cast<int>(v.size()) != layout.rank_count) throw std::invalid_argument("ghost exchange: rank count mismatch");
  for (int r = 0; r < layout.rank_count; ++r) {
    if (v[r].size() != layout.ranks[r].size()) throw std::invalid_argument("ghost exchange: vector size mismatch");
  }
}

}  // namespace

void ghost_read(const GhostLayout& layout, RankVectors& v) {
  check_layout(layout, v);
  for (int a = 0; a < layout.rank_count; ++a) {
    for (int b = 0; b < layout.rank_count; ++b) {
      const auto& send = layout.ranks[a].send[b];
      const auto& recv = layout.ranks[b].recv[a];
      for (std::size_t k = 0; k < send.size(); ++k) v[b][recv[k]] = v[a][send[k]];
    }
  }
}

void ghost_accumulate(const GhostLayout& layout, RankVectors& v) {
  check_layout(layout, v);
  for (int a = 0; a < layout.rank_count; ++a) {
    for (int b = 0; b < layout.rank_count; ++b) {
      const auto& send = layout.ranks[a].send[b];
      const auto& recv = layout.ranks[b].recv[a];
      for (std::size_t k = 0; k < send.size(); ++k) v[a][send[k]] += v[b][recv[k]];
    }
  }
  for (int b = 0; b < layout.rank_count; ++b) {
    const auto& rl = layout.ranks[b];
    std::fill(v[b].begin() + static_cast<std::ptrdiff_t>(rl.owned), v[b].end(), 0.0);
  }
}

DistributedMatvec::DistributedMatvec(const DistributedLeaves& leaves, const NodeSet& nodes, const GhostLayout& layout,
                                     const ElementalOperator& op, const DomainMapping& mapping, RankExecutor exec)
    : leaves_(&leaves), layout_(&layout), n_(nodes.size()), exec_(exec) {
  const int R = layout.rank_count;
  keys_.resize(R);
  rank_timers_.resize(R);
  engines_.reserve(R);
  for (int r = 0; r < R; ++r) {
    const auto& rl = layout.ranks[r];
    keys_[r].reserve(rl.size());
    for (auto id : rl.global_ids) keys_[r].push_back(nodes.keys[id]);
    engines_.emplace_back(op, nodes.order, nodes.dim, mapping);
  }
}

void DistributedMatvec::apply_local(RankVectors& u, RankVectors& out) {
  using clock = std::chrono::steady_clock;
  const int R = layout_->rank_count;
  auto t0 = clock::now();
  ghost_read(*layout_, u);
  auto t1 = clock::now();
  if (static_cast<int>(out.size()) != R) out.resize(R);
  for (int r = 0; r < R; ++r) out[r].resize(u[r].size());
  auto t2 = clock::now();
  for (auto& t : rank_timers_) t = TraversalTimers{timing, 0, 0};
  exec_.run(R, [&](int r) {
    engines_[r].apply(leaves_->ranks[r], keys_[r], u[r], out[r], &rank_timers_[r]);
  });
  auto t3 = clock::now();
  ghost_accumulate(*layout_, out);
  auto t4 = clock::now();
  if (timing) {
    double leaf = 0, total = 0;
    for (const auto& t : rank_timers_) {
      leaf += t.leaf_seconds;
      total += t.total_seconds;
    }
    const double wall = std::chrono::duration<double>(t3 - t2).count();
    // Split the traversal wall time by the summed per-rank leaf fraction.
    const double frac = total > 0 ? leaf / total : 0.0;
    timers.leaf += wall * frac;
    timers.traversal += wall * (1.0 - frac);
    timers.ghost += std::chrono::duration<double>((t1 - t0) + (t4 - t3)).count();
    timers.alloc += std::chrono::duration<double>(t2 - t1).count();
  }
}

void DistributedMatvec::apply(std::span<const double> u, std::span<double> out) {
  if (u.size() != n_ || out.size() != n_) throw std::invalid_argument("distributed matvec: size mismatch");
  RankVectors lu = scatter_to_ranks(*layout_, u);
  RankVectors lo;
  apply_local(lu, lo);
  const auto g = gather_owned(*layout_, lo, n_);
  std::copy(g.begin(), g.end(), out.begin());
}

PartitionStats partition_stats(const DistributedLeaves& leaves, const GhostLayout& layout) {
  PartitionStats s;
  const int R = layout.rank_count;
  for (int r = 0; r < R; ++r) {
    const auto& rl = layout.ranks[r];
    s.ranks.push_back({r, leaves.ranks[r].size(), rl.owned, rl.ghosts(), rl.eta()});
    s.total_ghosts += rl.ghosts();
  }
  double sg = 0, sg2 = 0, se = 0, se2 = 0;
  for (const auto& r : s.ranks) {
    sg += static_cast<double>(r.ghost_nodes);
    sg2 += static_cast<double>(r.ghost_nodes) * static_cast<double>(r.ghost_nodes);
    se += r.eta;
    se2 += r.eta * r.eta;
  }
  s.mean_ghosts = sg / R;
  s.std_ghosts = std::sqrt(std::max(0.0, sg2 / R - s.mean_ghosts * s.mean_ghosts));
  s.mean_eta = se / R;
  s.std_eta = std::sqrt(std::max(0.0, se2 / R - s.mean_eta * s.mean_eta));
  return s;
}

void write_partition_stats_csv(const PartitionStats& stats, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(10);
  out << "rank,elements,owned_nodes,ghost_nodes,eta\n";
  for (const auto& r : stats.ranks) {
    out << r.rank << ',' << r.elements << ',' << r.owned_nodes << ',' << r.ghost_nodes << ',' << r.eta << '\n';
  }
}

}  // namespace carve
