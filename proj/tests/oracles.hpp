// Independent reference computations for the tests. Everything here works
// on brick domains in global integer coordinates and compares boxes
// directly; none of it uses the library's neighbor search or transforms.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "amr/connectivity.hpp"
#include "amr/forest.hpp"

namespace oracle {

using amr::Leaf;
using amr::Quadrant;

template <int D>
struct Brick {
  std::array<int, D> ext{};
  std::array<bool, D> periodic{};

  int trees() const {
    int n = 1;
    for (auto e : ext) n *= e;
    return n;
  }
  std::array<int, D> tree_pos(int t) const {
    std::array<int, D> p{};
    for (int a = 0; a < D; ++a) {
      p[a] = t % ext[a];
      t /= ext[a];
    }
    return p;
  }
  std::int64_t length(int a) const { return std::int64_t{ext[a]} << amr::kRootLog; }
};

template <int D>
struct Box {
  std::array<std::int64_t, D> lo{}, hi{};
};

template <int D>
Box<D> box_of(const Brick<D>& b, const Leaf<D>& l) {
  Box<D> out;
  const auto p = b.tree_pos(l.tree);
  const std::int64_t len = amr::quadrant_len(l.quad.level);
  for (int a = 0; a < D; ++a) {
    out.lo[a] = (std::int64_t{p[a]} << amr::kRootLog) + l.quad.x[a];
    out.hi[a] = out.lo[a] + len;
  }
  return out;
}

/// Face contact from a's side: the faces of a (0..2D-1) touching b with
/// positive measure, one entry per distinct contact (periodic images
/// counted separately).
template <int D>
std::vector<int> contacts(const Brick<D>& b, const Box<D>& a, const Box<D>& c) {
  std::vector<int> faces;
  std::array<int, D> s{};
  auto range = [&](int ax) { return b.periodic[ax] ? 1 : 0; };
  std::array<int, D> idx{};
  for (int a2 = 0; a2 < D; ++a2) idx[a2] = -range(a2);
  while (true) {
    for (int ax = 0; ax < D; ++ax) s[ax] = idx[ax];
    Box<D> sh = c;
    for (int ax = 0; ax < D; ++ax) {
      sh.lo[ax] += s[ax] * b.length(ax);
      sh.hi[ax] += s[ax] * b.length(ax);
    }
    for (int ax = 0; ax < D; ++ax) {
      bool overlap = true;
      for (int o = 0; o < D; ++o) {
        if (o == ax) continue;
        if (std::min(a.hi[o], sh.hi[o]) - std::max(a.lo[o], sh.lo[o]) <= 0) overlap = false;
      }
      if (!overlap) continue;
      if (a.hi[ax] == sh.lo[ax]) faces.push_back(2 * ax + 1);
      if (sh.hi[ax] == a.lo[ax]) faces.push_back(2 * ax);
    }
    int ax = 0;
    while (ax < D && idx[ax] == range(ax)) idx[ax++] = -range(ax);
    if (ax == D) break;
    ++idx[ax];
  }
  return faces;
}

/// Per leaf and face, the sorted indices of face-touching leaves (all pairs).
template <int D>
std::vector<std::array<std::multiset<int>, 2 * D>> adjacency(const Brick<D>& b, const std::vector<Leaf<D>>& leaves) {
  const int n = static_cast<int>(leaves.size());
  std::vector<Box<D>> boxes;
  for (const auto& l : leaves) boxes.push_back(box_of(b, l));
  std::vector<std::array<std::multiset<int>, 2 * D>> adj(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int f : contacts(b, boxes[i], boxes[j])) adj[i][f].insert(j);
  return adj;
}

template <int D>
bool is_balanced(const Brick<D>& b, const std::vector<Leaf<D>>& leaves) {
  const auto adj = adjacency(b, leaves);
  for (std::size_t i = 0; i < leaves.size(); ++i)
    for (const auto& s : adj[i])
      for (int j : s)
        if (std::abs(leaves[i].quad.level - leaves[j].quad.level) > 1) return false;
  return true;
}

template <int D>
void refine_into(const Leaf<D>& l, std::vector<Leaf<D>>& out) {
  for (const auto& c : amr::children(l.quad)) out.push_back({l.tree, c});
}

/// Refines every leaf with a face neighbor two or more levels finer until
/// none is left.
template <int D>
std::vector<Leaf<D>> ripple_refine(const Brick<D>& b, std::vector<Leaf<D>> leaves) {
  while (true) {
    const auto adj = adjacency(b, leaves);
    std::vector<char> mark(leaves.size(), 0);
    bool any = false;
    for (std::size_t i = 0; i < leaves.size(); ++i)
      for (const auto& s : adj[i])
        for (int j : s)
          if (leaves[j].quad.level >= leaves[i].quad.level + 2) mark[i] = 1, any = true;
    if (!any) return leaves;
    std::vector<Leaf<D>> next;
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      if (mark[i]) {
        refine_into(leaves[i], next);
      } else {
        next.push_back(leaves[i]);
      }
    }
    leaves = std::move(next);
  }
}

/// Depth-first random refinement; the result is in curve order.
template <int D, class Rng>
std::vector<Leaf<D>> random_leaves(int trees, int max_level, double p, Rng& rng) {
  std::vector<Leaf<D>> out;
  std::bernoulli_distribution coin(p);
  auto rec = [&](auto&& self, int t, const Quadrant<D>& q) -> void {
    if (q.level < max_level && coin(rng)) {
      for (const auto& c : amr::children(q)) self(self, t, c);
    } else {
      out.push_back({t, q});
    }
  };
  for (int t = 0; t < trees; ++t) rec(rec, t, Quadrant<D>{});
  return out;
}

/// Result of one balanced adaptation step for a marking of a balanced
/// forest: the refinement closure R of the +1 marks over coarser
/// neighbors is refined; a -1 leaf stays -1 only if it is outside R, has no
/// finer neighbor and no same-level neighbor in R; complete families whose
/// members all stay -1 are coarsened.
template <int D>
std::vector<Leaf<D>> balanced_adapt(const Brick<D>& b, const std::vector<Leaf<D>>& leaves,
                                    const std::vector<std::int8_t>& marks) {
  const auto adj = adjacency(b, leaves);
  const int n = static_cast<int>(leaves.size());
  std::vector<char> in_r(n, 0);
  std::vector<int> stack;
  for (int i = 0; i < n; ++i)
    if (marks[i] == 1) in_r[i] = 1, stack.push_back(i);
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    for (const auto& s : adj[i])
      for (int j : s)
        if (!in_r[j] && leaves[j].quad.level < leaves[i].quad.level) in_r[j] = 1, stack.push_back(j);
  }
  std::vector<char> coarsen(n, 0);
  for (int i = 0; i < n; ++i) {
    if (marks[i] != -1 || in_r[i]) continue;
    bool ok = true;
    for (const auto& s : adj[i])
      for (int j : s) {
        if (leaves[j].quad.level > leaves[i].quad.level) ok = false;
        if (leaves[j].quad.level == leaves[i].quad.level && in_r[j]) ok = false;
      }
    coarsen[i] = ok;
  }
  constexpr int K = amr::kChildren<D>;
  std::vector<Leaf<D>> out;
  for (int i = 0; i < n;) {
    if (in_r[i]) {
      refine_into(leaves[i], out);
      ++i;
      continue;
    }
    if (coarsen[i] && i + K <= n && leaves[i].quad.level > 0 && amr::child_id(leaves[i].quad) == 0) {
      bool fam = true;
      for (int k = 0; k < K; ++k) {
        fam = fam && coarsen[i + k] && leaves[i + k].tree == leaves[i].tree &&
              leaves[i + k].quad.level == leaves[i].quad.level &&
              amr::parent(leaves[i + k].quad) == amr::parent(leaves[i].quad);
      }
      if (fam) {
        out.push_back({leaves[i].tree, amr::parent(leaves[i].quad)});
        i += K;
        continue;
      }
    }
    out.push_back(leaves[i]);
    ++i;
  }
  return out;
}

template <int D>
std::shared_ptr<const amr::Connectivity<D>> make_brick(const Brick<D>& b) {
  return std::make_shared<const amr::Connectivity<D>>(amr::build_brick<D>(b.ext, b.periodic));
}

/// Random brick with at most `max_trees` trees.
template <int D, class Rng>
Brick<D> random_brick(int max_trees, Rng& rng, bool allow_periodic = true) {
  Brick<D> b;
  while (true) {
    for (int a = 0; a < D; ++a) b.ext[a] = std::uniform_int_distribution<int>(1, 3)(rng);
    if (b.trees() <= max_trees) break;
  }
  for (int a = 0; a < D; ++a) b.periodic[a] = allow_periodic && std::bernoulli_distribution(0.3)(rng);
  return b;
}

}  // namespace oracle
