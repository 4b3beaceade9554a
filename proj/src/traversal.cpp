#include "carve/traversal.hpp"

#include <cmath>

namespace carve {

double lagrange_1d(int order, int k, double xi) {
  double v = 1.0;
  for (int m = 0; m <= order; ++m) {
    if (m == k) continue;
    v *= (xi * order - m) / static_cast<double>(k - m);
  }
  return v;
}

double lagrange_1d_derivative(int order, int k, double xi) {
  double sum = 0.0;
  for (int skip = 0; skip <= order; ++skip) {
    if (skip == k) continue;
    double term = static_cast<double>(order) / (k - skip);
    for (int m = 0; m <= order; ++m) {
      if (m == k || m == skip) continue;
      term *= (xi * order - m) / static_cast<double>(k - m);
    }
    sum += term;
  }
  return sum;
}

HangingTables::HangingTables(int dim, int order) : npe_(ipow(order + 1, dim)) {
  const int nchild = 1 << dim;
  offsets_.reserve(static_cast<std::size_t>(nchild) * npe_ + 1);
  offsets_.push_back(0);
  for (int c = 0; c < nchild; ++c) {
    for (int i = 0; i < npe_; ++i) {
      // Position of child node i in the parent's reference cube.
      double xi[3] = {0, 0, 0};
      int rem = i;
      for (int a = 0; a < dim; ++a) {
        const int j = rem % (order + 1);
        rem /= order + 1;
        xi[a] = static_cast<double>(((c >> a) & 1) * order + j) / (2.0 * order);
      }
      for (int k = 0; k < npe_; ++k) {
        double w = 1.0;
        int kr = k;
        for (int a = 0; a < dim; ++a) {
          w *= lagrange_1d(order, kr % (order + 1), xi[a]);
          kr /= order + 1;
        }
        if (w != 0.0) entries_.push_back({static_cast<std::uint32_t>(k), w});
      }
      offsets_.push_back(static_cast<std::uint32_t>(entries_.size()));
    }
  }
}

}  // namespace carve
