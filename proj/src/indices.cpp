#include "amr/indices.hpp"

#include <string>

namespace amr {

template <int D>
EntityId<D> geometric_id(const Connectivity<D>& conn, const Leaf<D>& leaf, int codim, int sub) {
  const auto c = conn.canonicalize(leaf.tree, coordinates_of(leaf.quad, codim, sub));
  return {c.coords, static_cast<std::int32_t>(c.tree * (D + 1) + codim)};
}

template <int D>
EntityId<D> element_id(std::int64_t global_index) {
  EntityId<D> id;
  const auto u = static_cast<std::uint64_t>(global_index);
  id.coords[0] = static_cast<std::int32_t>(static_cast<std::uint32_t>(u >> 32));
  id.coords[1] = static_cast<std::int32_t>(static_cast<std::uint32_t>(u));
  id.tag = EntityId<D>::kElementTag;
  return id;
}

template <int D>
std::int64_t element_number(const EntityId<D>& id) {
  if (id.tag != EntityId<D>::kElementTag) throw Error("element_number: not an element id");
  const auto hi = static_cast<std::uint64_t>(static_cast<std::uint32_t>(id.coords[0]));
  const auto lo = static_cast<std::uint64_t>(static_cast<std::uint32_t>(id.coords[1]));
  return static_cast<std::int64_t>((hi << 32) | lo);
}

template <int D>
EntityId<D> entity_id(const Forest<D>& forest, int rank, std::int32_t i, int codim, int sub) {
  if (codim == 0) {
    if (sub != 0) throw Error("entity_id: an element has one codim-0 sub-entity");
    return element_id<D>(forest.offset(rank) + i);
  }
  return geometric_id(forest.connectivity(), forest.leaves(rank).at(i), codim, sub);
}

template <int D>
void PersistentIndexSet<D>::rebuild(const Forest<D>& forest, int rank) {
  const auto& conn = forest.connectivity();
  const auto& ls = forest.leaves(rank);
  for (int c = 0; c <= D; ++c) {
    std::vector<EntityId<D>> current;
    std::unordered_map<EntityId<D>, char, EntityIdHash<D>> seen;
    const int n = subentity_count<D>(c);
    for (const auto& l : ls)
      for (int s = 0; s < n; ++s) {
        const auto id = geometric_id(conn, l, c, s);
        if (seen.emplace(id, 0).second) current.push_back(id);
      }
    auto& map = map_[c];
    for (auto it = map.begin(); it != map.end();) {
      if (!seen.count(it->first)) {
        free_[c].insert(it->second);
        it = map.erase(it);
      } else {
        ++it;
      }
    }
    for (const auto& id : current) {
      if (map.count(id)) continue;
      std::int32_t idx;
      if (!free_[c].empty()) {
        idx = *free_[c].begin();
        free_[c].erase(free_[c].begin());
      } else {
        idx = next_[c]++;
      }
      map.emplace(id, idx);
    }
  }
}

template <int D>
bool PersistentIndexSet<D>::contains(const EntityId<D>& key) const {
  const int c = key.codim();
  return map_.at(c).count(key) > 0;
}

template <int D>
std::int32_t PersistentIndexSet<D>::index(const EntityId<D>& key) const {
  const auto& map = map_.at(key.codim());
  auto it = map.find(key);
  if (it == map.end()) {
    throw Error("persistent index: entity of codim " + std::to_string(key.codim()) + " in tree " +
                std::to_string(key.tag / (D + 1)) + " does not exist");
  }
  return it->second;
}

template <int D>
std::int32_t PersistentIndexSet<D>::index(const Forest<D>& forest, int rank, std::int32_t leaf, int codim,
                                          int sub) const {
  return index(geometric_id(forest.connectivity(), forest.leaves(rank).at(leaf), codim, sub));
}

template <int D>
LeafIndexSet<D>::LeafIndexSet(const Forest<D>& forest, int rank) {
  const auto& ls = forest.leaves(rank);
  const auto n = static_cast<std::int32_t>(ls.size());
  sub_[0].resize(n);
  for (std::int32_t i = 0; i < n; ++i) sub_[0][i] = i;
  count_[0] = n;
  for (int c = 1; c <= D; ++c) {
    const int k = subentity_count<D>(c);
    std::unordered_map<EntityId<D>, std::int32_t, EntityIdHash<D>> ids;
    sub_[c].resize(static_cast<std::size_t>(n) * k);
    for (std::int32_t i = 0; i < n; ++i)
      for (int s = 0; s < k; ++s) {
        auto [it, fresh] = ids.emplace(geometric_id(forest.connectivity(), ls[i], c, s), count_[c]);
        if (fresh) ++count_[c];
        sub_[c][static_cast<std::size_t>(i) * k + s] = it->second;
      }
  }
}

template <int D>
std::int32_t LeafIndexSet<D>::index(std::int32_t leaf, int codim, int sub) const {
  if (codim < 0 || codim > D || sub < 0 || sub >= subentity_count<D>(codim)) throw Error("LeafIndexSet: bad sub-entity");
  return sub_[codim].at(static_cast<std::size_t>(leaf) * subentity_count<D>(codim) + sub);
}

#define AMR_INSTANTIATE(D)                                                                         \
  template EntityId<D> geometric_id(const Connectivity<D>&, const Leaf<D>&, int, int);            \
  template EntityId<D> element_id<D>(std::int64_t);                                                \
  template std::int64_t element_number(const EntityId<D>&);                                       \
  template EntityId<D> entity_id(const Forest<D>&, int, std::int32_t, int, int);                   \
  template class PersistentIndexSet<D>;                                                            \
  template class LeafIndexSet<D>;

AMR_INSTANTIATE(2)
AMR_INSTANTIATE(3)

}  // namespace amr
