#include <random>
#include <set>

#include "amr/ghost.hpp"
#include "amr/meshiter.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace amr;

namespace {

template <int D>
struct Case {
  oracle::Brick<D> brick;
  std::vector<Leaf<D>> global;
};

template <int D>
Case<D> random_case(std::mt19937& rng, int max_trees, int max_level, double p) {
  Case<D> c;
  c.brick = oracle::random_brick<D>(max_trees, rng);
  c.global = oracle::ripple_refine(c.brick, oracle::random_leaves<D>(c.brick.trees(), max_level, p, rng));
  return c;
}

template <int D>
void check_against_oracle(const Case<D>& c, int P, std::mt19937& rng) {
  const auto conn = oracle::make_brick(c.brick);
  // random cut points instead of the equal-count formula
  std::vector<std::int64_t> cuts{0};
  for (int p = 1; p < P; ++p) cuts.push_back(std::uniform_int_distribution<std::int64_t>(0, c.global.size())(rng));
  cuts.push_back(static_cast<std::int64_t>(c.global.size()));
  std::sort(cuts.begin(), cuts.end());
  std::vector<std::vector<Leaf<D>>> per(P);
  for (int p = 0; p < P; ++p) per[p].assign(c.global.begin() + cuts[p], c.global.begin() + cuts[p + 1]);
  Forest<D> f(conn, per);
  auto owner = [&](std::int64_t g) { return static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), g) - cuts.begin()) - 1; };

  Comm comm(P);
  const auto layers = build_ghost(f, comm);
  const auto adj = oracle::adjacency(c.brick, c.global);

  std::set<std::pair<int, int>> adjacent_pairs;
  for (int p = 0; p < P; ++p) {
    std::set<std::int64_t> ghosts;
    std::vector<std::set<std::int32_t>> to(P);
    for (auto i = cuts[p]; i < cuts[p + 1]; ++i)
      for (const auto& s : adj[i])
        for (int j : s) {
          const int q = owner(j);
          if (q == p) continue;
          ghosts.insert(j);
          to[q].insert(static_cast<std::int32_t>(i - cuts[p]));
          adjacent_pairs.insert({p, q});
        }
    const auto& layer = layers[p];
    std::vector<std::int64_t> got;
    for (const auto& g : layer.ghosts) got.push_back(g.global_index);
    REQUIRE(std::vector<std::int64_t>(ghosts.begin(), ghosts.end()) == got);
    for (const auto& g : layer.ghosts) {
      CHECK(g.owner == owner(g.global_index));
      CHECK(g.leaf == c.global[g.global_index]);
    }
    std::set<std::int32_t> all_mirrors;
    for (int q = 0; q < P; ++q) {
      const auto m = layer.mirrors_to(q);
      REQUIRE(std::vector<std::int32_t>(m.begin(), m.end()) == std::vector<std::int32_t>(to[q].begin(), to[q].end()));
      all_mirrors.insert(to[q].begin(), to[q].end());
    }
    CHECK(std::vector<std::int32_t>(all_mirrors.begin(), all_mirrors.end()) == layer.mirrors);
  }
  CHECK(comm.transcript().messages_with_tag(kTagGhostBuild) == static_cast<std::int64_t>(adjacent_pairs.size()));

  comm.reset_transcript();
  std::vector<std::vector<std::int64_t>> payload(P);
  for (int p = 0; p < P; ++p)
    for (auto i = cuts[p]; i < cuts[p + 1]; ++i) payload[p].push_back(i * 7 + 3);
  const auto got = ghost_exchange(layers, payload, comm);
  for (int p = 0; p < P; ++p)
    for (std::size_t g = 0; g < layers[p].ghosts.size(); ++g) CHECK(got[p][g] == layers[p].ghosts[g].global_index * 7 + 3);
  CHECK(comm.transcript().messages == static_cast<std::int64_t>(adjacent_pairs.size()));
  for (const auto& [key, n] : comm.transcript().per_pair) CHECK(n == 1);
}

}  // namespace

TEST_CASE("single rank has no ghosts") {
  Comm comm(1);
  const auto f = Forest<2>::uniform(std::make_shared<const Connectivity<2>>(build_brick<2>({2, 2})), 2, 1);
  const auto l = build_ghost(f, comm);
  CHECK(l[0].ghosts.empty());
  CHECK(l[0].mirrors.empty());
}

TEST_CASE("four leaves on two ranks") {
  Comm comm(2);
  const auto f = Forest<2>::uniform(std::make_shared<const Connectivity<2>>(build_unit_cube<2>()), 1, 2);
  const auto l = build_ghost(f, comm);
  REQUIRE(l[0].ghosts.size() == 2);
  CHECK(l[0].ghosts[0].global_index == 2);
  CHECK(l[0].ghosts[1].global_index == 3);
  CHECK(l[0].mirrors == std::vector<std::int32_t>{0, 1});
  CHECK(l[1].ghosts[0].global_index == 0);
  CHECK(l[1].mirrors == std::vector<std::int32_t>{0, 1});
}

TEST_CASE("exchange of owner ranks and global indices") {
  Comm comm(3, ExecMode::Threaded);
  const auto f = Forest<3>::uniform(std::make_shared<const Connectivity<3>>(build_brick<3>({2, 1, 1}, {true, false, false})), 2, 3);
  const auto layers = build_ghost(f, comm);
  std::vector<std::vector<int>> ranks(3);
  std::vector<std::vector<std::int64_t>> ids(3);
  for (int p = 0; p < 3; ++p) {
    ranks[p].assign(f.num_local(p), p);
    for (std::int64_t i = 0; i < f.num_local(p); ++i) ids[p].push_back(f.offset(p) + i);
  }
  const auto r = ghost_exchange(layers, ranks, comm);
  const auto g = ghost_exchange(layers, ids, comm);
  for (int p = 0; p < 3; ++p)
    for (std::size_t k = 0; k < layers[p].ghosts.size(); ++k) {
      CHECK(r[p][k] == layers[p].ghosts[k].owner);
      CHECK(g[p][k] == layers[p].ghosts[k].global_index);
    }
}

TEST_CASE("mismatched record sizes are rejected") {
  Comm comm(2);
  const auto f = Forest<2>::uniform(std::make_shared<const Connectivity<2>>(build_unit_cube<2>()), 1, 2);
  const auto layers = build_ghost(f, comm);
  std::vector<const GhostIndex*> layout{&layers[0], &layers[1]};
  std::vector<std::vector<std::byte>> payload{std::vector<std::byte>(2 * 4), std::vector<std::byte>(2 * 8)};
  CHECK_THROWS_AS(exchange_records(layout, payload, std::vector<std::size_t>{4, 8}, comm), Error);
}

TEST_CASE("ghost layers match all-pairs adjacency in 2D") {
  std::mt19937 rng(101);
  for (int n = 0; n < 150; ++n) check_against_oracle(random_case<2>(rng, 9, 4, 0.35), 1 + static_cast<int>(rng() % 5), rng);
}

TEST_CASE("ghost layers match all-pairs adjacency in 3D") {
  std::mt19937 rng(102);
  for (int n = 0; n < 40; ++n) check_against_oracle(random_case<3>(rng, 4, 3, 0.25), 1 + static_cast<int>(rng() % 5), rng);
}
