#include <random>
#include <set>

#include "amr/meshiter.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace amr;

namespace {

template <int D>
using Rec = FaceRecord<D>;

template <int D>
std::pair<int, int> count_faces(const Forest<D>& f, Comm& comm) {
  const auto layers = build_ghost(f, comm);
  int interior = 0, boundary = 0;
  for (int p = 0; p < f.num_ranks(); ++p)
    iterate_faces<D>(f, layers[p], p, [&](const Rec<D>& r) {
      if (r.kind == Rec<D>::Kind::Boundary) {
        ++boundary;
      } else {
        interior += r.num_outside;
      }
    });
  return {interior, boundary};
}

template <int D>
void check_case(const oracle::Brick<D>& brick, const std::vector<Leaf<D>>& global, int P) {
  const auto f = Forest<D>::from_global(oracle::make_brick(brick), global, P);
  Comm comm(P);
  const auto layers = build_ghost(f, comm);
  const auto adj = oracle::adjacency(brick, global);
  for (int p = 0; p < P; ++p) {
    const auto n_local = static_cast<std::int32_t>(f.num_local(p));
    auto to_global = [&](std::int32_t idx) {
      return idx < n_local ? f.offset(p) + idx : layers[p].ghosts[idx - n_local].global_index;
    };
    const auto table = build_intersections(f, layers[p], p);
    for (std::int32_t i = 0; i < n_local; ++i) {
      const auto gi = f.offset(p) + i;
      REQUIRE(table[i].size() <= D * kChildren<D>);
      for (int face = 0; face < kFaces<D>; ++face) {
        std::multiset<int> got;
        bool boundary = false;
        for (const auto& is : table[i].face(face)) {
          if (is.neighbor < 0) {
            boundary = true;
            CHECK(is.face == face);
          } else {
            got.insert(static_cast<int>(to_global(is.neighbor)));
            // symmetry through the neighbor's own entries when it is local
            if (is.neighbor < n_local) {
              bool back = false;
              for (const auto& r : table[is.neighbor].face(is.face)) back = back || (r.neighbor == i && r.face == face);
              CHECK(back);
            }
          }
        }
        CHECK(boundary == adj[gi][face].empty());
        REQUIRE(got == adj[gi][face]);
      }
    }

    // Each sub-face touching a local leaf is visited once.
    std::int64_t ordered_local = 0, ordered_remote = 0, boundary_faces = 0;
    for (std::int32_t i = 0; i < n_local; ++i)
      for (int face = 0; face < kFaces<D>; ++face) {
        ordered_local += static_cast<std::int64_t>(adj[f.offset(p) + i][face].size());
        boundary_faces += adj[f.offset(p) + i][face].empty();
      }
    for (std::int64_t j = 0; j < static_cast<std::int64_t>(global.size()); ++j) {
      if (j >= f.offset(p) && j < f.offset(p + 1)) continue;
      for (const auto& s : adj[j])
        for (int k : s) ordered_remote += (k >= f.offset(p) && k < f.offset(p + 1));
    }
    const auto local_local = ordered_local - ordered_remote;  // counted from both sides
    const auto expected = local_local / 2 + ordered_remote + boundary_faces;
    std::int64_t visited = 0;
    iterate_faces<D>(f, layers[p], p, [&](const Rec<D>& r) {
      if (r.kind == Rec<D>::Kind::Boundary) {
        ++visited;
        return;
      }
      visited += r.num_outside;
      for (int k = 0; k < r.num_outside; ++k) {
        const auto& s = adj[f.offset(p) + r.inside.index][r.inside.face];
        CHECK(s.count(static_cast<int>(to_global(r.outside[k].index))) > 0);
      }
    });
    CHECK(visited == expected);
  }
}

}  // namespace

TEST_CASE("face counts of small meshes") {
  Comm comm(1);
  const auto unit = std::make_shared<const Connectivity<2>>(build_unit_cube<2>());
  CHECK(count_faces(Forest<2>::uniform(unit, 0, 1), comm) == std::pair{0, 4});
  CHECK(count_faces(Forest<2>::uniform(unit, 1, 1), comm) == std::pair{4, 8});
  const auto cube = std::make_shared<const Connectivity<3>>(build_unit_cube<3>());
  CHECK(count_faces(Forest<3>::uniform(cube, 0, 1), comm) == std::pair{0, 6});
}

TEST_CASE("single leaf table holds only boundary entries") {
  Comm comm(1);
  const auto f = Forest<2>::uniform(std::make_shared<const Connectivity<2>>(build_unit_cube<2>()), 0, 1);
  const auto table = build_intersections(f, build_ghost(f, comm)[0], 0);
  REQUIRE(table.size() == 1);
  CHECK(table[0].size() == 4);
  for (int face = 0; face < 4; ++face) CHECK(table[0].face(face)[0].neighbor < 0);
}

TEST_CASE("hanging face entries") {
  Comm comm(1);
  const auto conn = std::make_shared<const Connectivity<2>>(build_unit_cube<2>());
  // child 0 refined, children 1..3 at level 1
  std::vector<Leaf<2>> leaves;
  for (const auto& c : children(child(Quadrant<2>{}, 0))) leaves.push_back({0, c});
  for (int i = 1; i < 4; ++i) leaves.push_back({0, child(Quadrant<2>{}, i)});
  const auto f = Forest<2>::from_global(conn, leaves, 1);
  const auto table = build_intersections(f, build_ghost(f, comm)[0], 0);
  // leaf 4 is child 1; its -x face sees fine leaves 1 and 3
  const auto left = table[4].face(0);
  REQUIRE(left.size() == 2);
  CHECK(left[0].neighbor == 1);
  CHECK(left[1].neighbor == 3);
  CHECK(table[1].face(1).size() == 1);
  CHECK(table[1].face(1)[0].neighbor == 4);
  CHECK(table[3].face(1)[0].neighbor == 4);
}

TEST_CASE("unbalanced meshes are rejected") {
  Comm comm(1);
  const auto conn = std::make_shared<const Connectivity<2>>(build_unit_cube<2>());
  std::vector<Leaf<2>> leaves;
  const auto c0 = child(Quadrant<2>{}, 0);
  for (int i = 0; i < 3; ++i) leaves.push_back({0, child(c0, i)});
  for (const auto& c : children(child(c0, 3))) leaves.push_back({0, c});
  for (int i = 1; i < 4; ++i) leaves.push_back({0, child(Quadrant<2>{}, i)});
  const auto f = Forest<2>::from_global(conn, leaves, 1);
  CHECK_THROWS_AS(build_intersections(f, build_ghost(f, comm)[0], 0), Error);
}

TEST_CASE("tables and visits match all-pairs adjacency in 2D") {
  std::mt19937 rng(55);
  for (int n = 0; n < 120; ++n) {
    const auto b = oracle::random_brick<2>(9, rng);
    const auto g = oracle::ripple_refine(b, oracle::random_leaves<2>(b.trees(), 4, 0.35, rng));
    check_case(b, g, 1 + static_cast<int>(rng() % 4));
  }
}

TEST_CASE("tables and visits match all-pairs adjacency in 3D") {
  std::mt19937 rng(56);
  for (int n = 0; n < 30; ++n) {
    const auto b = oracle::random_brick<3>(4, rng);
    const auto g = oracle::ripple_refine(b, oracle::random_leaves<3>(b.trees(), 3, 0.25, rng));
    check_case(b, g, 1 + static_cast<int>(rng() % 4));
  }
}

TEST_CASE("rotated trees from a coarse mesh") {
  // three quadrilaterals with mixed orientations
  const auto conn = std::make_shared<const Connectivity<2>>(build_from_mesh<2>(
      {{0, 0}, {0.5, 0}, {1, 0}, {0.5, 0.5}, {1, 1}, {1, 0.5}, {0, 1}}, {{0, 1, 6, 3}, {1, 2, 3, 5}, {3, 5, 6, 4}}));
  std::mt19937 rng(9);
  auto f = Forest<2>::uniform(conn, 2, 3);
  Comm comm(3);
  const auto layers = build_ghost(f, comm);
  int total = 0;
  for (int p = 0; p < 3; ++p) {
    const auto table = build_intersections(f, layers[p], p);
    for (const auto& e : table) total += e.size();
  }
  // 48 leaves, each with 4 faces, all conforming
  CHECK(total == 48 * 4);
}
