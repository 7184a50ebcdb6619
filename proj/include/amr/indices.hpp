// Entity ids that agree across ranks and codimensions, per-rank persistent
// indices that survive adaptation, and consecutive leaf index sets.
#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <set>
#include <unordered_map>
#include <vector>

#include "amr/forest.hpp"

namespace amr {

/// d + 1 32-bit integers: entity midpoint in canonical tree coordinates and
/// tree * (d + 1) + codim. Elements instead carry their global number split
/// into the two leading slots under the tag kElementTag.
template <int D>
struct EntityId {
  static constexpr std::int32_t kElementTag = -(D + 1);

  std::array<std::int32_t, D> coords{};
  std::int32_t tag = 0;

  int codim() const { return tag == kElementTag ? 0 : tag % (D + 1); }

  friend bool operator==(const EntityId&, const EntityId&) = default;
  friend auto operator<=>(const EntityId&, const EntityId&) = default;
};

template <int D>
struct EntityIdHash {
  std::size_t operator()(const EntityId<D>& id) const {
    std::size_t h = static_cast<std::uint32_t>(id.tag);
    for (auto c : id.coords) h = h * 0x9e3779b97f4a7c15ULL + static_cast<std::uint32_t>(c);
    return h ^ (h >> 29);
  }
};

/// Id of sub-entity `sub` of codimension `codim` > 0, or of the midpoint
/// when codim is 0.
template <int D>
EntityId<D> geometric_id(const Connectivity<D>& conn, const Leaf<D>& leaf, int codim, int sub);

template <int D>
EntityId<D> element_id(std::int64_t global_index);

template <int D>
std::int64_t element_number(const EntityId<D>& id);

/// Global id of a sub-entity of local leaf `i` of `rank`.
template <int D>
EntityId<D> entity_id(const Forest<D>& forest, int rank, std::int32_t i, int codim, int sub);

/// Rank-local indices that stay fixed while an entity exists. Elements are
/// keyed by their midpoint id because global element numbers shift under
/// adaptation.
template <int D>
class PersistentIndexSet {
 public:
  /// Drops vanished entities and indexes new ones, reusing the lowest
  /// freed index first.
  void rebuild(const Forest<D>& forest, int rank);

  /// Throws Error for an entity that does not exist.
  std::int32_t index(const EntityId<D>& key) const;
  std::int32_t index(const Forest<D>& forest, int rank, std::int32_t leaf, int codim, int sub) const;
  bool contains(const EntityId<D>& key) const;

  std::size_t size(int codim) const { return map_.at(codim).size(); }
  /// One past the largest index ever handed out.
  std::int32_t capacity(int codim) const { return next_.at(codim); }

 private:
  std::array<std::unordered_map<EntityId<D>, std::int32_t, EntityIdHash<D>>, D + 1> map_;
  std::array<std::set<std::int32_t>, D + 1> free_;
  std::array<std::int32_t, D + 1> next_{};
};

/// Consecutive numbering 0..count-1 per codimension over the local leaves,
/// shared entities counted once, in first-seen order.
template <int D>
class LeafIndexSet {
 public:
  LeafIndexSet(const Forest<D>& forest, int rank);

  std::int32_t size(int codim) const { return count_.at(codim); }
  std::int32_t index(std::int32_t leaf, int codim, int sub) const;

 private:
  std::array<std::vector<std::int32_t>, D + 1> sub_;  // leaf * subentity_count + sub
  std::array<std::int32_t, D + 1> count_{};
};

}  // namespace amr
