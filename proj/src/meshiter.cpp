#include "amr/meshiter.hpp"

#include <algorithm>

namespace amr {

template <int D>
LeafLocator<D>::LeafLocator(const Forest<D>& forest, const GhostLayer<D>& ghosts, int rank)
    : local_(forest.leaves(rank)), n_local_(static_cast<std::int32_t>(forest.num_local(rank))) {
  local_keys_.reserve(local_.size());
  for (const auto& l : local_) local_keys_.push_back({sfc_first(l.tree, l.quad), l.quad.level});
  // Ghosts arrive grouped by owner; owners hold disjoint increasing curve
  // ranges, so the concatenation is already sorted.
  ghost_leaves_.reserve(ghosts.ghosts.size());
  for (const auto& g : ghosts.ghosts) {
    ghost_leaves_.push_back(g.leaf);
    ghost_keys_.push_back({sfc_first(g.leaf.tree, g.leaf.quad), g.leaf.quad.level});
  }
}

template <int D>
const Leaf<D>& LeafLocator<D>::leaf(std::int32_t index) const {
  if (index < n_local_) return local_[index];
  return ghost_leaves_.at(index - n_local_);
}

template <int D>
typename LeafLocator<D>::Match LeafLocator<D>::search(const std::vector<Key>& keys, std::int32_t base,
                                                      std::int32_t tree, const Quadrant<D>& q) const {
  const SfcPos first = sfc_first(tree, q);
  const SfcPos last = sfc_last(tree, q);
  auto less = [](const Key& a, const Key& b) {
    if (a.pos != b.pos) return a.pos < b.pos;
    return a.level < b.level;
  };
  auto it = std::lower_bound(keys.begin(), keys.end(), Key{first, q.level}, less);
  if (it != keys.end()) {
    if (it->pos == first && it->level == q.level) return {Relation::Equal, base + static_cast<std::int32_t>(it - keys.begin())};
    if (it->pos <= last && it->level > q.level) return {Relation::Finer, base + static_cast<std::int32_t>(it - keys.begin())};
  }
  if (it != keys.begin()) {
    const auto& p = *(it - 1);
    if (p.pos.tree == tree && p.level < q.level && p.pos.key + finest_cells<D>(p.level) - 1 >= first.key) {
      return {Relation::Coarser, base + static_cast<std::int32_t>(it - 1 - keys.begin())};
    }
  }
  return {};
}

template <int D>
typename LeafLocator<D>::Match LeafLocator<D>::locate(std::int32_t tree, const Quadrant<D>& q) const {
  auto m = search(local_keys_, 0, tree, q);
  if (m.relation != Relation::None) return m;
  return search(ghost_keys_, n_local_, tree, q);
}

template <int D>
void LeafLocator<D>::leaves_touching(std::int32_t tree, const Quadrant<D>& q, int f,
                                     std::vector<std::int32_t>& out) const {
  const SfcPos first = sfc_first(tree, q);
  const SfcPos last = sfc_last(tree, q);
  auto scan = [&](const std::vector<Key>& keys, std::int32_t base) {
    auto it = std::lower_bound(keys.begin(), keys.end(), first, [](const Key& k, const SfcPos& p) { return k.pos < p; });
    for (; it != keys.end() && it->pos <= last; ++it) {
      const auto idx = base + static_cast<std::int32_t>(it - keys.begin());
      const auto& l = leaf(idx);
      if (l.quad.level >= q.level && touches_face_plane(l.quad, q, f)) out.push_back(idx);
    }
  };
  scan(local_keys_, 0);
  scan(ghost_keys_, n_local_);
}

template <int D>
FaceNeighborhood<D> face_neighborhood(const Connectivity<D>& conn, const Leaf<D>& leaf, int face) {
  FaceNeighborhood<D> nb;
  const auto n = face_neighbor(leaf.quad, face);
  if (inside_root(n)) {
    nb.tree = leaf.tree;
    nb.neighbor = n;
    nb.neighbor_face = opposite_face(face);
    return nb;
  }
  auto t = conn.transform_quadrant(leaf.tree, face, n);
  if (!t) {
    nb.boundary = true;
    nb.tree = leaf.tree;
    nb.neighbor = n;
    nb.neighbor_face = face;
    return nb;
  }
  const auto link = conn.neighbor(leaf.tree, face);
  nb.tree = t->first;
  nb.neighbor = t->second;
  nb.neighbor_face = link.face;
  nb.orientation = link.orientation;
  return nb;
}

template <int D>
void iterate_faces(const Forest<D>& forest, const GhostLayer<D>& ghosts, int rank,
                   const std::function<void(const FaceRecord<D>&)>& visit) {
  using Rel = typename LeafLocator<D>::Relation;
  using Kind = typename FaceRecord<D>::Kind;
  const LeafLocator<D> loc(forest, ghosts, rank);
  const auto& ls = forest.leaves(rank);
  auto where = [&](std::int32_t i, int f) {
    return "rank " + std::to_string(rank) + " leaf " + std::to_string(i) + " face " + std::to_string(f);
  };
  for (std::int32_t i = 0; i < static_cast<std::int32_t>(ls.size()); ++i) {
    for (int f = 0; f < kFaces<D>; ++f) {
      const auto nb = face_neighborhood(forest.connectivity(), ls[i], f);
      FaceRecord<D> rec;
      rec.inside = {i, static_cast<std::int8_t>(f)};
      rec.orientation = nb.orientation;
      if (nb.boundary) {
        rec.kind = Kind::Boundary;
        visit(rec);
        continue;
      }
      const auto g = static_cast<std::int8_t>(nb.neighbor_face);
      const auto m = loc.locate(nb.tree, nb.neighbor);
      switch (m.relation) {
        case Rel::None:
          throw Error(where(i, f) + ": neighbor missing from the ghost layer");
        case Rel::Equal:
          if (loc.is_ghost(m.index) || m.index > i || (m.index == i && f < g)) {
            rec.kind = Kind::Same;
            rec.num_outside = 1;
            rec.outside[0] = {m.index, g};
            visit(rec);
          }
          break;
        case Rel::Coarser: {
          if (loc.leaf(m.index).quad.level + 1 != ls[i].quad.level) throw Error(where(i, f) + ": not 2:1 balanced");
          if (loc.is_ghost(m.index)) {
            rec.kind = Kind::OutsideCoarser;
            rec.num_outside = 1;
            rec.outside[0] = {m.index, g};
            visit(rec);
          }
          break;
        }
        case Rel::Finer: {
          rec.kind = Kind::InsideCoarser;
          rec.num_outside = kFaceChildren<D>;
          const auto kids = face_children(nb.neighbor, g);
          for (int k = 0; k < kFaceChildren<D>; ++k) {
            const auto c = loc.locate(nb.tree, kids[k]);
            if (c.relation == Rel::Finer) throw Error(where(i, f) + ": not 2:1 balanced");
            if (c.relation != Rel::Equal) throw Error(where(i, f) + ": neighbor missing from the ghost layer");
            rec.outside[k] = {c.index, g};
          }
          visit(rec);
          break;
        }
      }
    }
  }
}

template <int D>
IntersectionTable<D> build_intersections(const Forest<D>& forest, const GhostLayer<D>& ghosts, int rank) {
  using Kind = typename FaceRecord<D>::Kind;
  const auto n_local = static_cast<std::int32_t>(forest.num_local(rank));
  IntersectionTable<D> table(static_cast<std::size_t>(n_local));
  auto add = [&](std::int32_t leaf, int face, Intersection is) {
    auto& e = table[leaf];
    if (e.count[face] >= kFaceChildren<D>) throw Error("build_intersections: face has too many neighbors");
    e.slots[face * kFaceChildren<D> + e.count[face]++] = is;
  };
  iterate_faces<D>(forest, ghosts, rank, [&](const FaceRecord<D>& r) {
    const auto i = r.inside.index;
    const auto f = r.inside.face;
    switch (r.kind) {
      case Kind::Boundary:
        add(i, f, {-1, f});
        break;
      case Kind::Same:
      case Kind::InsideCoarser:
        for (int k = 0; k < r.num_outside; ++k) {
          const auto& o = r.outside[k];
          add(i, f, {o.index, o.face});
          if (o.index < n_local) add(o.index, o.face, {i, f});
        }
        break;
      case Kind::OutsideCoarser:
        add(i, f, {r.outside[0].index, r.outside[0].face});
        break;
    }
  });
  return table;
}

#define AMR_INSTANTIATE(D)                                                                                    \
  template class LeafLocator<D>;                                                                              \
  template FaceNeighborhood<D> face_neighborhood(const Connectivity<D>&, const Leaf<D>&, int);                \
  template void iterate_faces(const Forest<D>&, const GhostLayer<D>&, int,                                    \
                              const std::function<void(const FaceRecord<D>&)>&);                              \
  template IntersectionTable<D> build_intersections(const Forest<D>&, const GhostLayer<D>&, int);

AMR_INSTANTIATE(2)
AMR_INSTANTIATE(3)

}  // namespace amr
