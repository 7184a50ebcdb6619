#include <random>

#include "amr/balance.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace amr;

namespace {

template <int D>
Marking zeros(const Forest<D>& f) {
  Marking m(f.num_ranks());
  for (int p = 0; p < f.num_ranks(); ++p) m[p].assign(f.num_local(p), 0);
  return m;
}

template <int D>
BalanceReport run_marking(const Forest<D>& f, Marking& m, Comm& comm, BalanceOptions opt = {}) {
  const auto layers = build_ghost(f, comm);
  std::vector<IntersectionTable<D>> tables(f.num_ranks());
  for (int p = 0; p < f.num_ranks(); ++p) tables[p] = build_intersections(f, layers[p], p);
  return balanced_marking(f, layers, tables, m, comm, opt);
}

std::vector<Leaf<2>> corner_refined() {
  std::vector<Leaf<2>> leaves;
  for (const auto& c : children(child(Quadrant<2>{}, 0))) leaves.push_back({0, c});
  for (int i = 1; i < 4; ++i) leaves.push_back({0, child(Quadrant<2>{}, i)});
  return leaves;
}

}  // namespace

TEST_CASE("zero marking is already consistent") {
  Comm comm(2);
  const auto f = Forest<2>::uniform(std::make_shared<const Connectivity<2>>(build_brick<2>({2, 2})), 2, 2);
  auto m = zeros(f);
  const auto r = run_marking(f, m, comm);
  CHECK(r.sweeps_used == 1);
  CHECK_FALSE(r.fell_back);
  CHECK(r.changes == 0);
  CHECK(m == zeros(f));
}

TEST_CASE("refining next to a coarser leaf lifts it") {
  Comm comm(1);
  const auto conn = std::make_shared<const Connectivity<2>>(build_unit_cube<2>());
  const auto f = Forest<2>::from_global(conn, corner_refined(), 1);
  auto m = zeros(f);
  m[0][1] = 1;  // child 1 of child 0 touches child 1 of the root
  run_marking(f, m, comm);
  CHECK(m[0][4] == 1);
  CHECK(m[0][5] == 0);
  CHECK(m[0][6] == 0);
}

TEST_CASE("check_balanced") {
  Comm comm(1);
  const auto conn = std::make_shared<const Connectivity<2>>(build_unit_cube<2>());
  CHECK(check_balanced(Forest<2>::uniform(conn, 3, 1), comm).empty());
  auto leaves = corner_refined();
  const auto c = leaves[3].quad;
  leaves.erase(leaves.begin() + 3);
  const auto kids = children(c);
  leaves.insert(leaves.begin() + 3, {{0, kids[0]}, {0, kids[1]}, {0, kids[2]}, {0, kids[3]}});
  // two level-3 leaves touch each of the level-1 leaves 1 and 2
  const auto bad = check_balanced(Forest<2>::from_global(conn, leaves, 1), comm);
  REQUIRE(bad.size() == 4);
  CHECK(bad[0].fine.quad.level == 3);
  CHECK(bad[0].coarse.quad.level == 1);
}

TEST_CASE("monolithic balance of a level-2 corner against level 0") {
  Comm comm(1);
  const auto conn = std::make_shared<const Connectivity<2>>(build_brick<2>({2, 1}));
  std::vector<Leaf<2>> leaves;
  const auto c1 = child(Quadrant<2>{}, 1);
  for (int i = 0; i < 4; ++i) {
    if (i == 1) {
      for (const auto& k : children(c1)) leaves.push_back({0, k});
    } else {
      leaves.push_back({0, child(Quadrant<2>{}, i)});
    }
  }
  leaves.push_back({1, Quadrant<2>{}});
  auto f = Forest<2>::from_global(conn, leaves, 1);
  CHECK_FALSE(check_balanced(f, comm).empty());
  monolithic_balance(f, comm);
  CHECK(check_balanced(f, comm).empty());
  CHECK(f.leaves(0).back().tree == 1);
  CHECK(f.leaves(0).back().quad.level >= 1);
  const auto again = f.gather();
  monolithic_balance(f, comm);
  CHECK(f.gather() == again);
}

TEST_CASE("monolithic balance equals the unbounded ripple oracle") {
  std::mt19937 rng(77);
  for (int n = 0; n < 80; ++n) {
    const auto b = oracle::random_brick<2>(6, rng);
    const auto raw = oracle::random_leaves<2>(b.trees(), 5, 0.3, rng);
    const int P = 1 + static_cast<int>(rng() % 4);
    auto f = Forest<2>::from_global(oracle::make_brick(b), raw, P);
    Comm comm(P);
    monolithic_balance(f, comm);
    REQUIRE(f.gather() == oracle::ripple_refine(b, raw));
    CHECK(oracle::is_balanced(b, f.gather()));
  }
}

TEST_CASE("refine-only markings reproduce refine-then-ripple") {
  std::mt19937 rng(78);
  for (int n = 0; n < 100; ++n) {
    const auto b = oracle::random_brick<2>(4, rng);
    const auto g = oracle::ripple_refine(b, oracle::random_leaves<2>(b.trees(), 4, 0.35, rng));
    auto f = Forest<2>::from_global(oracle::make_brick(b), g, 1);
    Comm comm(1);
    auto m = zeros(f);
    std::vector<Leaf<2>> refined;
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[0][i] = std::bernoulli_distribution(0.1)(rng);
      if (m[0][i]) {
        oracle::refine_into(g[i], refined);
      } else {
        refined.push_back(g[i]);
      }
    }
    const auto r = run_marking(f, m, comm);
    CHECK(r.sweeps_used <= 2);
    adapt(f, m, comm);
    REQUIRE(f.gather() == oracle::ripple_refine(b, refined));
  }
}

TEST_CASE("ripple marking matches the oracle in 3D") {
  std::mt19937 rng(79);
  for (int n = 0; n < 30; ++n) {
    const auto b = oracle::random_brick<3>(4, rng);
    const auto g = oracle::ripple_refine(b, oracle::random_leaves<3>(b.trees(), 3, 0.3, rng));
    const int P = 1 + static_cast<int>(rng() % 3);
    auto f = Forest<3>::from_global(oracle::make_brick(b), g, P);
    Comm comm(P);
    partition(f, comm);
    auto m = zeros(f);
    std::vector<std::int8_t> flat;
    for (auto& r : m)
      for (auto& v : r) flat.push_back(v = static_cast<std::int8_t>(std::uniform_int_distribution<int>(-1, 1)(rng)));
    const auto rep = run_marking(f, m, comm);
    REQUIRE_FALSE(rep.fell_back);
    adapt(f, m, comm);
    REQUIRE(f.gather() == oracle::balanced_adapt(b, g, flat));
  }
}

TEST_CASE("descending sweeps give the same marking") {
  std::mt19937 rng(80);
  for (int n = 0; n < 50; ++n) {
    const auto b = oracle::random_brick<2>(4, rng);
    const auto g = oracle::ripple_refine(b, oracle::random_leaves<2>(b.trees(), 5, 0.3, rng));
    auto f = Forest<2>::from_global(oracle::make_brick(b), g, 2);
    Comm comm(2);
    partition(f, comm);
    auto m = zeros(f);
    for (auto& r : m)
      for (auto& v : r) v = static_cast<std::int8_t>(std::uniform_int_distribution<int>(-1, 1)(rng));
    auto m2 = m;
    run_marking(f, m, comm);
    run_marking(f, m2, comm, BalanceOptions{3, true});
    CHECK(m == m2);
  }
}

TEST_CASE("adapt_balanced strategies agree on refine-only markings") {
  std::mt19937 rng(81);
  for (int n = 0; n < 40; ++n) {
    const auto b = oracle::random_brick<2>(4, rng);
    const auto g = oracle::ripple_refine(b, oracle::random_leaves<2>(b.trees(), 4, 0.3, rng));
    auto f1 = Forest<2>::from_global(oracle::make_brick(b), g, 3);
    auto f2 = f1;
    Comm comm(3);
    auto m = zeros(f1);
    for (auto& r : m)
      for (auto& v : r) v = static_cast<std::int8_t>(std::bernoulli_distribution(0.15)(rng));
    adapt_balanced(f1, m, comm, BalanceStrategy::Ripple);
    adapt_balanced(f2, m, comm, BalanceStrategy::Monolithic);
    REQUIRE(f1.gather() == f2.gather());
  }
}
