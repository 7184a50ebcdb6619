// Face iteration over a rank's leaves plus its ghost layer, and the fixed
// size per-leaf intersection table built from it.
//
// Leaves are addressed by a combined index: [0, n_local) are local leaves,
// n_local + g is ghost g.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "amr/forest.hpp"
#include "amr/ghost.hpp"

namespace amr {

/// Binary search over the local leaves and the ghosts of one rank.
template <int D>
class LeafLocator {
 public:
  enum class Relation { None, Equal, Coarser, Finer };
  struct Match {
    Relation relation = Relation::None;
    std::int32_t index = -1;  // combined index; for Finer the first leaf found inside
  };

  LeafLocator(const Forest<D>& forest, const GhostLayer<D>& ghosts, int rank);

  std::int32_t num_local() const { return n_local_; }
  std::int32_t size() const { return n_local_ + static_cast<std::int32_t>(ghost_leaves_.size()); }
  bool is_ghost(std::int32_t index) const { return index >= n_local_; }
  const Leaf<D>& leaf(std::int32_t index) const;

  /// How the stored leaves relate to the region (tree, q): a leaf equal to
  /// it, a leaf strictly containing it, or leaves strictly inside it.
  Match locate(std::int32_t tree, const Quadrant<D>& q) const;

  /// Every stored leaf inside (tree, q) that touches face f of q, local
  /// leaves first, each group in curve order.
  void leaves_touching(std::int32_t tree, const Quadrant<D>& q, int f, std::vector<std::int32_t>& out) const;

 private:
  struct Key {
    SfcPos pos;
    std::int8_t level;
  };
  Match search(const std::vector<Key>& keys, std::int32_t base, std::int32_t tree, const Quadrant<D>& q) const;

  std::span<const Leaf<D>> local_;
  std::vector<Leaf<D>> ghost_leaves_;
  std::vector<Key> local_keys_;
  std::vector<Key> ghost_keys_;
  std::int32_t n_local_ = 0;
};

/// Where a leaf face sits relative to its tree's face transform.
template <int D>
struct FaceNeighborhood {
  bool boundary = false;
  std::int32_t tree = 0;      // tree of the hypothetical neighbor
  Quadrant<D> neighbor;       // same-size neighbor in that tree's frame
  int neighbor_face = 0;      // face of `neighbor` touching the leaf
  int orientation = 0;
};

template <int D>
FaceNeighborhood<D> face_neighborhood(const Connectivity<D>& conn, const Leaf<D>& leaf, int face);

struct FaceSide {
  std::int32_t index = -1;  // combined index
  std::int8_t face = 0;
};

template <int D>
struct FaceRecord {
  enum class Kind {
    Boundary,        // no outside
    Same,            // one outside leaf of equal size
    InsideCoarser,   // inside is the coarse leaf, 2^(D-1) outside children
    OutsideCoarser,  // inside is fine, outside is a coarser ghost
  };
  Kind kind = Kind::Boundary;
  FaceSide inside;
  int num_outside = 0;
  std::array<FaceSide, kFaceChildren<D>> outside{};
  int orientation = 0;
};

/// Visits every face touching a local leaf of `rank` exactly once. The
/// inside leaf is always local. Throws Error for a mesh that is not 2:1
/// face balanced or whose ghost layer misses a neighbor.
template <int D>
void iterate_faces(const Forest<D>& forest, const GhostLayer<D>& ghosts, int rank,
                   const std::function<void(const FaceRecord<D>&)>& visit);

struct Intersection {
  std::int32_t neighbor = -1;  // combined index, negative on the boundary
  std::int8_t face = 0;        // face of the neighbor (of the leaf itself on the boundary)
};

/// At most D * 2^D intersections per leaf: face f owns the slots
/// [f * 2^(D-1), f * 2^(D-1) + count[f]).
template <int D>
struct LeafIntersections {
  std::array<Intersection, kFaces<D> * kFaceChildren<D>> slots{};
  std::array<std::int8_t, kFaces<D>> count{};

  std::span<const Intersection> face(int f) const {
    return {slots.data() + f * kFaceChildren<D>, static_cast<std::size_t>(count[f])};
  }
  int size() const {
    int n = 0;
    for (auto c : count) n += c;
    return n;
  }
};

template <int D>
using IntersectionTable = std::vector<LeafIntersections<D>>;

template <int D>
IntersectionTable<D> build_intersections(const Forest<D>& forest, const GhostLayer<D>& ghosts, int rank);

}  // namespace amr
