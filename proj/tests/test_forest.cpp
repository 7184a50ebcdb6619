#include <algorithm>
#include <numeric>
#include <random>

#include "amr/forest.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace amr;

namespace {

template <int D>
std::shared_ptr<const Connectivity<D>> brick(std::array<int, D> ext) {
  return std::make_shared<const Connectivity<D>>(build_brick<D>(ext));
}

template <int D>
Marking zero_marking(const Forest<D>& f) {
  Marking m(f.num_ranks());
  for (int p = 0; p < f.num_ranks(); ++p) m[p].assign(f.num_local(p), 0);
  return m;
}

// Refine +1 leaves, coarsen complete same-rank families marked -1.
template <int D>
std::vector<Leaf<D>> adapt_oracle(const std::vector<std::vector<Leaf<D>>>& ranks, const Marking& m) {
  constexpr int K = kChildren<D>;
  std::vector<Leaf<D>> out;
  for (std::size_t p = 0; p < ranks.size(); ++p) {
    const auto& ls = ranks[p];
    for (std::size_t i = 0; i < ls.size();) {
      if (m[p][i] == 1) {
        oracle::refine_into(ls[i], out);
        ++i;
        continue;
      }
      bool fam = m[p][i] == -1 && i + K <= ls.size() && ls[i].quad.level > 0;
      for (int k = 0; fam && k < K; ++k) {
        fam = m[p][i + k] == -1 && ls[i + k].tree == ls[i].tree && ls[i + k].quad.level == ls[i].quad.level &&
              parent(ls[i + k].quad) == parent(ls[i].quad);
      }
      if (fam) {
        out.push_back({ls[i].tree, parent(ls[i].quad)});
        i += K;
      } else {
        out.push_back(ls[i]);
        ++i;
      }
    }
  }
  return out;
}

template <int D>
int straddling_families(const Forest<D>& f) {
  constexpr int K = kChildren<D>;
  const auto all = f.gather();
  int n = 0;
  for (std::size_t s = 0; s + K <= all.size(); ++s) {
    std::array<Quadrant<D>, K> qs;
    bool same_tree = true;
    for (int k = 0; k < K; ++k) {
      qs[k] = all[s + k].quad;
      same_tree = same_tree && all[s + k].tree == all[s].tree;
    }
    if (!same_tree || !is_family<D>(std::span<const Quadrant<D>>(qs))) continue;
    for (int p = 1; p < f.num_ranks(); ++p) {
      const auto b = f.offset(p);
      if (b > static_cast<std::int64_t>(s) && b < static_cast<std::int64_t>(s + K)) ++n;
    }
  }
  return n;
}

}  // namespace

TEST_CASE("uniform construction") {
  CHECK(Forest<2>::uniform(brick<2>({1, 1}), 0, 1).num_global() == 1);
  CHECK(Forest<2>::uniform(brick<2>({2, 2}), 2, 1).num_global() == 64);
  CHECK(Forest<2>::uniform(brick<2>({64, 64}), 0, 3).num_global() == 4096);
  const auto f = Forest<3>::uniform(brick<3>({2, 1, 1}), 2, 5);
  CHECK(f.num_global() == 128);
  CHECK(validate(f).empty());
  CHECK(f.offsets() == partition_offsets(128, 5));
}

TEST_CASE("owner search") {
  const auto f = Forest<2>::uniform(brick<2>({2, 1}), 2, 3);
  for (int p = 0; p < 3; ++p)
    for (const auto& l : f.leaves(p)) {
      CHECK(f.owner(sfc_first(l.tree, l.quad)) == p);
      CHECK(f.owner(sfc_last(l.tree, l.quad)) == p);
    }
}

TEST_CASE("adapt examples") {
  Comm comm(1);
  auto f = Forest<2>::uniform(brick<2>({1, 1}), 1, 1);
  Marking m{{-1, -1, -1, -1}};
  adapt(f, m, comm);
  CHECK(f.num_global() == 1);
  auto g = Forest<2>::uniform(brick<2>({1, 1}), 1, 1);
  adapt(g, Marking{{1, 0, 0, 0}}, comm);
  CHECK(g.num_global() == 7);
  CHECK(validate(g).empty());
}

TEST_CASE("adapt rejects bad markings and unbalanced results") {
  Comm comm(1);
  auto f = Forest<2>::uniform(brick<2>({1, 1}), 1, 1);
  CHECK_THROWS_AS(adapt(f, Marking{{1, 0, 0}}, comm), Error);
  CHECK_THROWS_AS(adapt(f, Marking{{2, 0, 0, 0}}, comm), Error);
  adapt(f, Marking{{1, 0, 0, 0}}, comm);
  // refining the corner child again puts level 3 next to level 1
  Marking m = zero_marking(f);
  m[0][3] = 1;
  const auto before = f.gather();
  CHECK_THROWS_AS(adapt(f, m, comm), Error);
  CHECK(f.gather() == before);
  adapt(f, m, comm, nullptr, AdaptOptions{false});
  CHECK(f.num_global() == 10);
}

TEST_CASE("coarsening never crosses a rank") {
  Comm comm(2);
  auto f = Forest<2>::from_global(brick<2>({1, 1}), Forest<2>::uniform(brick<2>({1, 1}), 1, 1).gather(), 2);
  Marking m{{-1, -1}, {-1, -1}};
  adapt(f, m, comm);
  CHECK(f.num_global() == 4);
}

TEST_CASE("adapt matches the sequential oracle") {
  std::mt19937 rng(21);
  for (int n = 0; n < 200; ++n) {
    oracle::Brick<2> b = oracle::random_brick<2>(4, rng, false);
    const auto conn = oracle::make_brick(b);
    const int P = 1 + static_cast<int>(rng() % 4);
    auto f = Forest<2>::from_global(conn, oracle::random_leaves<2>(b.trees(), 4, 0.5, rng), P);
    Marking m = zero_marking(f);
    std::uniform_int_distribution<int> mark(-1, 1);
    for (auto& r : m)
      for (auto& v : r) v = static_cast<std::int8_t>(mark(rng));
    std::vector<std::vector<Leaf<2>>> ranks;
    for (int p = 0; p < P; ++p) ranks.push_back(f.leaves(p));
    const auto expect = adapt_oracle<2>(ranks, m);
    Comm comm(P);
    adapt(f, m, comm, nullptr, AdaptOptions{false});
    REQUIRE(f.gather() == expect);
    REQUIRE(validate(f).empty());
  }
}

namespace {

struct Recorder : AdaptDataHandle {
  std::vector<std::int64_t> counts;
  std::vector<std::vector<AdaptEvent>> events;
  bool finished = false;
  void prepare(const std::vector<std::int64_t>& c) override {
    counts = c;
    events.assign(c.size(), {});
  }
  void transfer(const AdaptEvent& e) override { events[e.rank].push_back(e); }
  void finish() override { finished = true; }
};

}  // namespace

TEST_CASE("adapt events cover old and new leaves in order") {
  Comm comm(2, ExecMode::Threaded);
  auto f = Forest<2>::uniform(brick<2>({2, 1}), 2, 2);
  Marking m = zero_marking(f);
  m[0][0] = 1;
  for (int i = 4; i < 8; ++i) m[0][i] = -1;
  m[1][3] = 1;
  Recorder rec;
  adapt(f, m, comm, &rec);
  CHECK(rec.finished);
  for (int p = 0; p < 2; ++p) {
    std::int64_t old_next = 0, new_next = 0;
    for (const auto& e : rec.events[p]) {
      CHECK(e.old_first == old_next);
      CHECK(e.new_first == new_next);
      old_next += e.old_count;
      new_next += e.new_count;
    }
    CHECK(new_next == rec.counts[p]);
    CHECK(new_next == f.num_local(p));
  }
  CHECK(rec.events[0][0].kind == AdaptEvent::Refine);
  CHECK(rec.events[0][4].kind == AdaptEvent::Coarsen);
  CHECK(rec.events[0][4].old_count == 4);
}

TEST_CASE("partition offsets") {
  CHECK(partition_offsets(10, 3) == std::vector<std::int64_t>{0, 3, 6, 10});
  const auto seven = partition_offsets(7, 7);
  for (int p = 0; p < 7; ++p) CHECK(seven[p + 1] - seven[p] == 1);
  for (std::int64_t n = 0; n <= 200; ++n)
    for (int P = 1; P <= 16; ++P) {
      const auto o = partition_offsets(n, P);
      for (int p = 0; p <= P; ++p) REQUIRE(o[p] == (p * n) / P);
    }
}

TEST_CASE("family fix keeps a split family together") {
  Comm comm(2);
  auto f = Forest<2>::uniform(brick<2>({1, 1}), 1, 2);
  CHECK(f.num_local(0) == 2);
  fix_family_splits(f, comm);
  CHECK(f.num_local(0) == 4);
  CHECK(f.num_local(1) == 0);
  CHECK(validate(f).empty());
  auto g = Forest<2>::uniform(brick<2>({1, 1}), 2, 4);
  const auto before = g.offsets();
  Comm comm4(4);
  fix_family_splits(g, comm4);
  CHECK(g.offsets() == before);
}

TEST_CASE("partition preserves the global sequence and splits no family") {
  std::mt19937 rng(4);
  for (int n = 0; n < 150; ++n) {
    const auto b = oracle::random_brick<3>(4, rng, false);
    const int P = 1 + static_cast<int>(rng() % 7);
    const auto global = oracle::random_leaves<3>(b.trees(), 3, 0.4, rng);
    auto f = Forest<3>::from_global(oracle::make_brick(b), global, 1 + static_cast<int>(rng() % 5));
    Forest<3> g(f.connectivity_ptr(), std::vector<std::vector<Leaf<3>>>(P));
    g = Forest<3>::from_global(f.connectivity_ptr(), global, P);
    Comm comm(P);
    const auto before = g.offsets();
    partition(g, comm, nullptr, PartitionOptions{false});
    CHECK(g.offsets() == partition_offsets(static_cast<std::int64_t>(global.size()), P));
    partition(g, comm);
    REQUIRE(g.gather() == global);
    REQUIRE(straddling_families(g) == 0);
    REQUIRE(validate(g).empty());
    (void)before;
  }
}

TEST_CASE("weighted partition balances weight") {
  std::mt19937 rng(8);
  int within_max_minus_min = 0, runs = 0;
  for (int n = 0; n < 200; ++n) {
    const int P = 1 + static_cast<int>(rng() % 6);
    const auto global = oracle::random_leaves<2>(3, 4, 0.5, rng);
    auto f = Forest<2>::from_global(brick<2>({3, 1}), global, P);
    std::vector<std::vector<std::int64_t>> w(P);
    std::vector<std::int64_t> flat;
    std::int64_t wmax = 0;
    for (int p = 0; p < P; ++p)
      for (std::int64_t i = 0; i < f.num_local(p); ++i) {
        w[p].push_back(std::uniform_int_distribution<int>(0, 8)(rng));
        flat.push_back(w[p].back());
        wmax = std::max(wmax, w[p].back());
      }
    Comm comm(P);
    const auto plan = partition(f, comm, &w, PartitionOptions{false});
    REQUIRE(f.gather() == global);
    const auto moved = migrate(plan, w, comm);
    // prefix-sum oracle: the ideal cut of rank p is at W p / P
    const std::int64_t W = std::accumulate(flat.begin(), flat.end(), std::int64_t{0});
    std::vector<std::int64_t> sums;
    std::int64_t prefix = 0;
    for (int p = 0; p < P; ++p) {
      const auto s = std::accumulate(moved[p].begin(), moved[p].end(), std::int64_t{0});
      sums.push_back(s);
      prefix += s;
      if (W > 0) CHECK(std::abs(prefix * P - W * (p + 1)) <= wmax * P);
    }
    const auto [lo, hi] = std::minmax_element(sums.begin(), sums.end());
    within_max_minus_min += (*hi - *lo <= wmax);
    ++runs;
  }
  MESSAGE("max - min <= wmax in " << within_max_minus_min << " of " << runs << " runs");
}

TEST_CASE("coarsen-all after partition loses no family") {
  std::mt19937 rng(12);
  for (int n = 0; n < 100; ++n) {
    const auto b = oracle::random_brick<2>(4, rng, false);
    const auto global = oracle::random_leaves<2>(b.trees(), 4, 0.55, rng);
    const int P = 2 + static_cast<int>(rng() % 4);
    auto serial = Forest<2>::from_global(oracle::make_brick(b), global, 1);
    auto dist = Forest<2>::from_global(oracle::make_brick(b), global, P);
    Comm c1(1), cp(P);
    partition(dist, cp);
    Marking m1 = zero_marking(serial), mp = zero_marking(dist);
    for (auto& r : m1) std::fill(r.begin(), r.end(), -1);
    for (auto& r : mp) std::fill(r.begin(), r.end(), -1);
    adapt(serial, m1, c1, nullptr, AdaptOptions{false});
    adapt(dist, mp, cp, nullptr, AdaptOptions{false});
    REQUIRE(serial.gather() == dist.gather());
  }
}

TEST_CASE("validate reports problems") {
  const auto conn = brick<2>({2, 1});
  auto good = Forest<2>::uniform(conn, 1, 2);
  CHECK(validate(good).empty());
  auto leaves = good.gather();
  leaves[2] = leaves[1];
  const auto bad = Forest<2>::from_global(conn, leaves, 2);
  const auto diag = validate(bad);
  REQUIRE_FALSE(diag.empty());
  CHECK(diag.front().find("tree 0") != std::string::npos);
  CHECK(diag.front().find("leaf") != std::string::npos);
  leaves = good.gather();
  leaves.erase(leaves.begin() + 5);
  const auto gap = validate(Forest<2>::from_global(conn, leaves, 2));
  REQUIRE_FALSE(gap.empty());
  CHECK(gap.back().find("tree 1") != std::string::npos);
}

TEST_CASE("migrate moves payload with its leaves") {
  const auto conn = brick<2>({3, 2});
  std::mt19937 rng(30);
  auto f = Forest<2>::from_global(conn, oracle::random_leaves<2>(6, 3, 0.5, rng), 1);
  Comm comm(4, ExecMode::Threaded);
  auto g = Forest<2>::from_global(conn, f.gather(), 4);
  std::vector<std::vector<std::int64_t>> payload(4);
  for (int p = 0; p < 4; ++p)
    for (std::int64_t i = 0; i < g.num_local(p); ++i) payload[p].push_back(g.offset(p) + i);
  std::vector<std::vector<std::int64_t>> w(4);
  for (int p = 0; p < 4; ++p) w[p].assign(g.num_local(p), p == 0 ? 5 : 1);
  const auto plan = partition(g, comm, &w);
  const auto moved = migrate(plan, payload, comm);
  for (int p = 0; p < 4; ++p)
    for (std::int64_t i = 0; i < g.num_local(p); ++i) CHECK(moved[p][i] == g.offset(p) + i);
  CHECK(comm.transcript().messages_with_tag(kTagMigrate) > 0);
}
