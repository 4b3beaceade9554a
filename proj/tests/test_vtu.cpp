#include <fstream>
#include <sstream>

#include "carve/balance.hpp"
#include "carve/vtu.hpp"
#include "doctest.h"

using namespace carve;

TEST_CASE("VTU output is deterministic and lists every cell") {
  const Carver carver(make_sphere({0.5, 0.5, 0.5}, 0.25), {}, 3);
  auto seeds = tree_sort(boundary_seeds(carver, 2, 4, 3), 3);
  const IncompleteTree t = construct_balanced(carver, seeds, 3);
  const NodeSet ns = enumerate_nodes(t, 1, &carver);
  std::vector<double> f(ns.size(), 1.5);
  const auto dir = std::filesystem::temp_directory_path();
  write_vtu(dir / "carve_a.vtu", t, ns, {}, &carver, {{"f", f}});
  write_vtu(dir / "carve_b.vtu", t, ns, {}, &carver, {{"f", f}});
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string a = slurp(dir / "carve_a.vtu");
  CHECK(a == slurp(dir / "carve_b.vtu"));
  CHECK(a.find("NumberOfCells=\"" + std::to_string(t.size()) + "\"") != std::string::npos);
  CHECK(a.find("Name=\"boundary\"") != std::string::npos);
  CHECK(a.find("Name=\"level\"") != std::string::npos);
  CHECK(a.find("Name=\"f\"") != std::string::npos);
  std::filesystem::remove(dir / "carve_a.vtu");
  std::filesystem::remove(dir / "carve_b.vtu");
}
