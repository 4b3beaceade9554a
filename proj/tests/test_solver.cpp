#include <cmath>
#include <random>

#include "carve/solver.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace carve;

namespace {

CsrMatrix laplacian_1d(std::size_t n, double shift) {
  std::vector<Triplet> t;
  for (std::uint32_t i = 0; i < n; ++i) {
    t.push_back({i, i, 2.0 + shift});
    if (i > 0) t.push_back({i, i - 1, -1.0});
    if (i + 1 < n) t.push_back({i, i + 1, -1.0});
  }
  return csr_from_triplets(n, t);
}

std::vector<double> to_dense(const CsrMatrix& a) {
  std::vector<double> d(a.n * a.n);
  for (std::size_t i = 0; i < a.n; ++i) {
    for (std::size_t j = 0; j < a.n; ++j) d[i * a.n + j] = a.at(i, j);
  }
  return d;
}

double dense_norm1(const std::vector<double>& a, std::size_t n) {
  double m = 0;
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += std::abs(a[i * n + j]);
    m = std::max(m, s);
  }
  return m;
}

}  // namespace

TEST_CASE("CG matches a dense solve") {
  std::mt19937_64 rng(73);
  const CsrMatrix a = laplacian_1d(60, 0.05);
  std::vector<double> b(60);
  std::uniform_real_distribution<double> u(-1, 1);
  for (double& x : b) x = u(rng);
  const LinearOperator op = [&](std::span<const double> x, std::span<double> y) { a.multiply(x, y); };
  const CgResult r = cg_solve(op, b, {}, {1e-14, 1e-14, 1000});
  CHECK(r.converged);
  CHECK(r.history.front() == doctest::Approx(std::sqrt(dot(b, b))));
  const auto x = testing::dense_solve(to_dense(a), b);
  CHECK(testing::max_rel_deviation(r.x, x) < 1e-10);

  const CgResult capped = cg_solve(op, b, {}, {1e-14, 1e-14, 3});
  CHECK_FALSE(capped.converged);
  CHECK(capped.iterations == 3);
  const CgResult zero = cg_solve(op, std::vector<double>(60, 0.0));
  CHECK(zero.converged);
  CHECK(zero.iterations == 0);
}

TEST_CASE("fitted order of an exact power law") {
  const std::vector<double> h{0.1, 0.05, 0.025, 0.0125};
  std::vector<double> e;
  for (double x : h) e.push_back(3.0 * x * x * x);
  CHECK(fitted_order(h, e) == doctest::Approx(3.0));
}

TEST_CASE("manufactured forcing is minus the Laplacian") {
  for (int dim : {2, 3}) {
    const Manufactured m = sine_solution(dim);
    const Vec3 x{0.3, 0.6, dim == 3 ? 0.45 : 0.0};
    const double h = 1e-4;
    double lap = 0;
    for (int a = 0; a < dim; ++a) {
      Vec3 xp = x, xm = x;
      xp[a] += h;
      xm[a] -= h;
      lap += (m.u(xp) - 2 * m.u(x) + m.u(xm)) / (h * h);
    }
    CHECK(m.f(x) == doctest::Approx(-lap).epsilon(1e-5));
  }
}

TEST_CASE("error norms vanish on interpolated polynomials of degree p") {
  std::mt19937_64 rng(79);
  for (int trial = 0; trial < 6; ++trial) {
    const int dim = 2 + trial % 2;
    const int p = 1 + (trial / 2) % 2;
    const auto c = testing::random_case(rng, dim, dim == 2 ? 6 : 4);
    const NodeSet ns = enumerate_nodes(c.tree, p, c.carver.get());
    auto poly = [&](const Vec3& x) { return p == 1 ? 1 + x.x - 2 * x.y : x.x * x.x - x.x * x.y + 0.5 * x.y; };
    std::vector<double> uh(ns.size());
    for (std::size_t i = 0; i < ns.size(); ++i) uh[i] = poly(ns.unit_coords(i));
    const ErrorNorms e = error_norms(uh, c.tree, ns, {}, poly);
    CHECK(e.l2 < 1e-13);
    CHECK(e.linf < 1e-13);
  }
}

TEST_CASE("1-norm condition numbers against a dense inverse") {
  const CsrMatrix a = laplacian_1d(40, 0.0);
  const auto d = to_dense(a);
  std::vector<double> inv(40 * 40);
  for (std::size_t j = 0; j < 40; ++j) {
    std::vector<double> e(40, 0.0);
    e[j] = 1;
    const auto col = testing::dense_solve(d, e);
    for (std::size_t i = 0; i < 40; ++i) inv[i * 40 + j] = col[i];
  }
  const double kappa = dense_norm1(d, 40) * dense_norm1(inv, 40);
  CHECK(condition_1norm_exact(a) == doctest::Approx(kappa).epsilon(1e-10));
  const double est = condition_1norm_estimate(a);
  CHECK(est <= kappa * (1 + 1e-12));
  CHECK(est >= 0.3 * kappa);
}

TEST_CASE("2-norm condition of a 1D Laplacian") {
  const std::size_t n = 30;
  const CsrMatrix a = laplacian_1d(n, 0.0);
  const double pi = std::acos(-1.0);
  const double lmax = 2 - 2 * std::cos(pi * n / (n + 1)), lmin = 2 - 2 * std::cos(pi / (n + 1));
  const ConditionEstimate c = condition_estimate(a, 1e-10);
  CHECK(c.lambda_max == doctest::Approx(lmax).epsilon(1e-6));
  CHECK(c.lambda_min == doctest::Approx(lmin).epsilon(1e-6));
  CHECK(c.kappa == doctest::Approx(lmax / lmin).epsilon(1e-5));
}

TEST_CASE("Poisson solve on the full square agrees across ranks") {
  PoissonProblem pr;
  pr.dim = 2;
  pr.base_level = pr.boundary_level = 4;
  const CgOptions tight{1e-12, 1e-14, 10000};
  const PoissonSolution one = solve_poisson(pr, tight, 1);
  const PoissonSolution four = solve_poisson(pr, tight, 4, 0.1, RankExecutor(2));
  CHECK(one.report.converged);
  CHECK(one.report.dofs == 289);
  CHECK(one.report.l2 < 5e-3);
  CHECK(testing::max_rel_deviation(one.u, four.u) <= 1e-10);
  CHECK(four.report.l2 == doctest::Approx(one.report.l2).epsilon(1e-10));
  const std::vector<int> levels{3, 4, 5};
  const ConvergenceResult conv = convergence_study(pr, levels, tight);
  CHECK(conv.rows[1].l2 == doctest::Approx(one.report.l2).epsilon(1e-8));
}

TEST_CASE("voxelated disk: boundary values equal the data") {
  PoissonProblem pr;
  pr.dim = 2;
  pr.shape = make_complement(make_sphere({0.5, 0.5, 0}, 0.3));
  pr.base_level = pr.boundary_level = 5;
  const PoissonSolution s = solve_poisson(pr, {1e-10, 1e-12, 10000});
  for (std::size_t i = 0; i < s.nodes.size(); ++i) {
    if (s.nodes.boundary[i]) CHECK(s.u[i] == s.g[i]);
  }
}

TEST_CASE("fully carved domain is an error") {
  PoissonProblem pr;
  pr.dim = 2;
  pr.shape = make_box({{-1, -1, 0}, {2, 2, 0}});
  CHECK_THROWS_WITH(solve_poisson(pr), doctest::Contains("domain fully carved"));
}

TEST_CASE("channel DOF counts and immersed comparison") {
  const std::vector<int> lengths{8, 16};
  const auto rows = channel_condition_study(lengths, 5);
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) {
    if (r.variant == "incomplete") CHECK(r.dofs == (r.length == 8 ? 165u : 99u));
    else CHECK(r.dofs == 1089u);
  }
  const Carver sph(make_sphere({0.5, 0.5, 0.5}, 0.2), {}, 3);
  const DofComparison d = dof_element_comparison(sph, 2, 4);
  CHECK(d.immersed.elements >= d.carved.elements);
  CHECK(d.f_elem == doctest::Approx(double(d.immersed.elements) / d.carved.elements));
}
