#pragma once

// Top-down / bottom-up tree traversal that buckets node payloads to leaves, so each
// element sees its nodes contiguously without an element-to-node map.

#include <chrono>
#include <span>
#include <stdexcept>
#include <vector>

#include "carve/nodes.hpp"
#include "carve/octant.hpp"

namespace carve {

inline int ipow(int b, int e) {
  int r = 1;
  while (e-- > 0) r *= b;
  return r;
}

/// Lagrange weights of a parent's order-p lattice at each child's lattice nodes.
class HangingTables {
 public:
  HangingTables(int dim, int order);

  int nodes_per_element() const { return npe_; }
  /// Parent-lattice stencil of local node `local` of Morton child `child`.
  std::span<const StencilEntry> stencil(int child, int local) const {
    const std::size_t k = static_cast<std::size_t>(child) * npe_ + local;
    return {entries_.data() + offsets_[k], entries_.data() + offsets_[k + 1]};
  }

 private:
  int npe_;
  std::vector<std::uint32_t> offsets_;
  std::vector<StencilEntry> entries_;
};

/// 1D Lagrange basis on equispaced nodes k/p of [0,1], evaluated at xi.
double lagrange_1d(int order, int k, double xi);
double lagrange_1d_derivative(int order, int k, double xi);

struct TraversalTimers {
  bool enabled = false;
  double leaf_seconds = 0;
  double total_seconds = 0;
};

template <class T>
class Traverser;

/// View of one leaf during a traversal.
template <class T>
class LeafContext {
 public:
  const Octant& leaf() const { return leaf_; }
  int nodes_per_element() const { return npe_; }
  bool present(int i) const { return local_[i] >= 0; }
  const T& value(int i) const { return (*leaf_in_)[local_[i]]; }
  /// Parent-lattice stencil for a hanging local node.
  std::span<const StencilEntry> stencil(int i) const { return tables_->stencil(child_, i); }
  bool parent_present(int k) const { return parent_local_[k] >= 0; }
  const T& parent_value(int k) const { return (*parent_in_)[parent_local_[k]]; }

  /// Value at local node i, interpolated from the parent when hanging (numeric payloads).
  double gather(int i) const {
    if (present(i)) return static_cast<double>(value(i));
    double v = 0;
    for (const auto& s : stencil(i)) v += s.weight * static_cast<double>(parent_value(s.index));
    return v;
  }

  /// Adds to the output of local node i; hanging contributions go to the parent nodes
  /// with the transposed interpolation weights.
  void add(int i, double v) const {
    if (present(i)) {
      (*leaf_out_)[local_[i]] += v;
      return;
    }
    for (const auto& s : stencil(i)) (*parent_out_)[parent_local_[s.index]] += s.weight * v;
  }

 private:
  friend class Traverser<T>;
  Octant leaf_;
  int npe_ = 0;
  int child_ = 0;
  const HangingTables* tables_ = nullptr;
  const int* local_ = nullptr;
  const int* parent_local_ = nullptr;
  const std::vector<T>* leaf_in_ = nullptr;
  const std::vector<T>* parent_in_ = nullptr;
  std::vector<double>* leaf_out_ = nullptr;
  std::vector<double>* parent_out_ = nullptr;
};

template <class T>
class Traverser {
 public:
  Traverser(int dim, int order) : dim_(dim), order_(order), tables_(dim, order), buckets_(kMaxLevel + 2) {}

  int dim() const { return dim_; }
  int order() const { return order_; }
  const HangingTables& tables() const { return tables_; }

  /// Runs the traversal restricted to subtrees containing `leaves` (SFC-sorted).
  /// `out`, when non-empty, receives the bottom-up accumulation (added, not overwritten).
  template <class LeafFn>
  void run(std::span<const Octant> leaves, std::span<const NodeKey> keys, std::span<const T> in,
           std::span<double> out, LeafFn&& fn, TraversalTimers* timers = nullptr) {
    if (keys.size() != in.size()) throw std::invalid_argument("traversal: payload size mismatch");
    if (!out.empty() && out.size() != in.size()) throw std::invalid_argument("traversal: output size mismatch");
    leaves_ = leaves;
    accumulate_ = !out.empty();
    timers_ = timers;
    const auto t0 = std::chrono::steady_clock::now();
    if (!leaves.empty()) {
      Bucket& root = buckets_[0];
      root.keys.assign(keys.begin(), keys.end());
      root.in.assign(in.begin(), in.end());
      root.out.assign(accumulate_ ? in.size() : 0, 0.0);
      root.lattice_ready = false;
      visit(0, kRootOctant, SfcOracle{}, 0, leaves.size(), fn);
      if (accumulate_) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += root.out[i];
      }
    }
    if (timers) {
      timers->total_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  }

 private:
  struct Bucket {
    std::vector<NodeKey> keys;
    std::vector<T> in;
    std::vector<double> out;
    std::vector<std::uint32_t> up;  // index in the parent bucket
    std::vector<int> lattice;       // lattice position -> bucket index, -1 when absent
    bool lattice_ready = false;
  };

  // Lattice index of `key` within element `oct`, or -1 when not a lattice node.
  int lattice_index(const Octant& oct, const NodeKey& key) const {
    const std::uint32_t side = oct.side();
    int idx = 0, stride = 1;
    for (int a = 0; a < dim_; ++a) {
      const std::uint32_t off = key[a] - static_cast<std::uint32_t>(order_) * oct.anchor[a];
      if (off % side != 0) return -1;
      idx += static_cast<int>(off / side) * stride;
      stride *= order_ + 1;
    }
    return idx;
  }

  void build_lattice(Bucket& b, const Octant& oct) const {
    b.lattice.assign(tables_.nodes_per_element(), -1);
    for (std::size_t i = 0; i < b.keys.size(); ++i) {
      const int k = lattice_index(oct, b.keys[i]);
      if (k >= 0) b.lattice[k] = static_cast<int>(i);
    }
    b.lattice_ready = true;
  }

  bool in_closure(const Octant& oct, const NodeKey& key) const {
    for (int a = 0; a < dim_; ++a) {
      const std::uint32_t lo = static_cast<std::uint32_t>(order_) * oct.anchor[a];
      const std::uint32_t hi = lo + static_cast<std::uint32_t>(order_) * oct.side();
      if (key[a] < lo || key[a] > hi) return false;
    }
    return true;
  }

  template <class LeafFn>
  void visit(int depth, const Octant& oct, const SfcOracle& oracle, std::size_t begin, std::size_t end, LeafFn& fn) {
    Bucket& cur = buckets_[depth];
    if (end - begin == 1 && leaves_[begin] == oct) {
      leaf(depth, oct, fn);
      return;
    }
    const int nchild = 1 << dim_;
    const int next = oct.level + 1;
    // Leaves of each child are contiguous in SFC order.
    std::size_t pos = begin;
    for (int s = 0; s < nchild; ++s) {
      const int m = oracle.sfc_to_morton(s);
      std::size_t stop = pos;
      while (stop < end && leaves_[stop].child_number(next) == m) ++stop;
      if (stop == pos) continue;
      const Octant child = oct.child(m);
      Bucket& cb = buckets_[depth + 1];
      cb.keys.clear();
      cb.in.clear();
      cb.up.clear();
      for (std::size_t i = 0; i < cur.keys.size(); ++i) {
        if (!in_closure(child, cur.keys[i])) continue;
        cb.keys.push_back(cur.keys[i]);
        cb.in.push_back(cur.in[i]);
        cb.up.push_back(static_cast<std::uint32_t>(i));
      }
      cb.out.assign(accumulate_ ? cb.keys.size() : 0, 0.0);
      cb.lattice_ready = false;
      visit(depth + 1, child, oracle.child(s), pos, stop, fn);
      if (accumulate_) {
        for (std::size_t i = 0; i < cb.out.size(); ++i) cur.out[cb.up[i]] += cb.out[i];
      }
      pos = stop;
    }
    if (pos != end) throw std::logic_error("traversal: leaves are not SFC-sorted descendants");
  }

  template <class LeafFn>
  void leaf(int depth, const Octant& oct, LeafFn& fn) {
    Bucket& lb = buckets_[depth];
    build_lattice(lb, oct);
    for (std::size_t i = 0; i < lb.keys.size(); ++i) {
      if (lattice_index(oct, lb.keys[i]) < 0) throw std::logic_error("traversal: node off the element lattice");
    }
    LeafContext<T> ctx;
    ctx.leaf_ = oct;
    ctx.npe_ = tables_.nodes_per_element();
    ctx.tables_ = &tables_;
    ctx.local_ = lb.lattice.data();
    ctx.leaf_in_ = &lb.in;
    ctx.leaf_out_ = &lb.out;
    bool missing = false;
    for (int v : lb.lattice) missing = missing || v < 0;
    if (missing) {
      if (depth == 0) throw std::logic_error("traversal: root element with missing nodes");
      Bucket& pb = buckets_[depth - 1];
      if (!pb.lattice_ready) build_lattice(pb, oct.parent());
      ctx.child_ = oct.child_number(oct.level);
      ctx.parent_local_ = pb.lattice.data();
      ctx.parent_in_ = &pb.in;
      ctx.parent_out_ = &pb.out;
      for (int i = 0; i < ctx.npe_; ++i) {
        if (ctx.present(i)) continue;
        for (const auto& s : ctx.stencil(i)) {
          if (!ctx.parent_present(s.index)) {
            throw std::logic_error("traversal: hanging node governed by a missing parent node");
          }
        }
      }
    }
    if (timers_ && timers_->enabled) {
      const auto t0 = std::chrono::steady_clock::now();
      fn(ctx);
      timers_->leaf_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    } else {
      fn(ctx);
    }
  }

  int dim_;
  int order_;
  HangingTables tables_;
  std::vector<Bucket> buckets_;
  std::span<const Octant> leaves_;
  bool accumulate_ = false;
  TraversalTimers* timers_ = nullptr;
};

}  // namespace carve
