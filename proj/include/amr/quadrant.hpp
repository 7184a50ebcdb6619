// Fixed-point quadrant (2D) / octant (3D) arithmetic inside a single tree.
//
// Conventions used throughout the library:
//   * a tree is the cube [0, 2^30]^D in integer coordinates;
//   * child i has bit k set iff it is offset along axis k (z-order);
//   * faces are numbered -x, +x, -y, +y, -z, +z, so face f lies on axis f / 2
//     and on the upper side iff f is odd;
//   * corners follow the child numbering;
//   * 3D edges: edge e is parallel to axis e / 4, and bits 0 and 1 of e % 4
//     select the upper side of the two remaining axes in ascending order.
#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <stdexcept>

namespace amr {

inline constexpr int kRootLog = 30;
inline constexpr std::int32_t kRootLen = std::int32_t{1} << kRootLog;

template <int D>
inline constexpr int kMaxLevel = D == 2 ? 29 : 19;

template <int D>
inline constexpr int kChildren = 1 << D;

template <int D>
inline constexpr int kFaces = 2 * D;

template <int D>
inline constexpr int kFaceChildren = 1 << (D - 1);

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr std::int32_t quadrant_len(int level) {
  return std::int32_t{1} << (kRootLog - level);
}

constexpr int face_axis(int face) { return face >> 1; }
constexpr int face_side(int face) { return face & 1; }
constexpr int opposite_face(int face) { return face ^ 1; }

template <int D>
struct Quadrant {
  std::array<std::int32_t, D> x{};
  std::int8_t level = 0;

  friend bool operator==(const Quadrant&, const Quadrant&) = default;
};

namespace detail {

constexpr std::uint64_t spread2(std::uint64_t v) {
  v &= 0xffffffffULL;
  v = (v | (v << 16)) & 0x0000ffff0000ffffULL;
  v = (v | (v << 8)) & 0x00ff00ff00ff00ffULL;
  v = (v | (v << 4)) & 0x0f0f0f0f0f0f0f0fULL;
  v = (v | (v << 2)) & 0x3333333333333333ULL;
  v = (v | (v << 1)) & 0x5555555555555555ULL;
  return v;
}

constexpr std::uint64_t spread3(std::uint64_t v) {
  v &= 0x1fffffULL;
  v = (v | (v << 32)) & 0x1f00000000ffffULL;
  v = (v | (v << 16)) & 0x1f0000ff0000ffULL;
  v = (v | (v << 8)) & 0x100f00f00f00f00fULL;
  v = (v | (v << 4)) & 0x10c30c30c30c30c3ULL;
  v = (v | (v << 2)) & 0x1249249249249249ULL;
  return v;
}

}  // namespace detail

/// Morton index of the quadrant anchor on the finest (MAX_LEVEL) grid.
/// Requires in-tree coordinates.
template <int D>
constexpr std::uint64_t morton_key(const Quadrant<D>& q) {
  constexpr int shift = kRootLog - kMaxLevel<D>;
  std::uint64_t key = 0;
  for (int a = 0; a < D; ++a) {
    const auto c = static_cast<std::uint64_t>(q.x[a]) >> shift;
    key |= (D == 2 ? detail::spread2(c) : detail::spread3(c)) << a;
  }
  return key;
}

/// Number of finest-level cells covered by a quadrant of the given level.
template <int D>
constexpr std::uint64_t finest_cells(int level) {
  return std::uint64_t{1} << (D * (kMaxLevel<D> - level));
}

/// Morton key of the last finest-level descendant.
template <int D>
constexpr std::uint64_t morton_key_last(const Quadrant<D>& q) {
  return morton_key(q) + finest_cells<D>(q.level) - 1;
}

/// Inverse of morton_key for a key at `level`: anchor of the quadrant with
/// the given linear id.
template <int D>
constexpr Quadrant<D> quadrant_from_linear_id(std::uint64_t id, int level) {
  Quadrant<D> q;
  q.level = static_cast<std::int8_t>(level);
  for (int b = 0; b < level; ++b) {
    for (int a = 0; a < D; ++a) {
      if ((id >> (b * D + a)) & 1U) q.x[a] |= std::int32_t{1} << (kRootLog - level + b);
    }
  }
  return q;
}

/// Position of q among all quadrants of its level in z-order.
template <int D>
constexpr std::uint64_t linear_id(const Quadrant<D>& q) {
  return morton_key(q) >> (D * (kMaxLevel<D> - q.level));
}

/// Depth-first pre-order: ancestors before descendants, disjoint quadrants
/// by interleaved-bit order.
template <int D>
constexpr std::strong_ordering morton_cmp(const Quadrant<D>& a, const Quadrant<D>& b) {
  const auto ka = morton_key(a);
  const auto kb = morton_key(b);
  if (ka != kb) return ka <=> kb;
  return a.level <=> b.level;
}

template <int D>
constexpr bool morton_less(const Quadrant<D>& a, const Quadrant<D>& b) {
  return morton_cmp(a, b) < 0;
}

template <int D>
constexpr bool inside_root(const Quadrant<D>& q) {
  const auto len = quadrant_len(q.level);
  for (int a = 0; a < D; ++a) {
    if (q.x[a] < 0 || q.x[a] > kRootLen - len) return false;
  }
  return true;
}

template <int D>
constexpr bool is_valid(const Quadrant<D>& q) {
  if (q.level < 0 || q.level > kMaxLevel<D>) return false;
  const auto len = quadrant_len(q.level);
  for (int a = 0; a < D; ++a) {
    if (q.x[a] % len != 0) return false;
  }
  return inside_root(q);
}

/// True iff a contains b (a is an ancestor of b or equal to it).
template <int D>
constexpr bool contains(const Quadrant<D>& a, const Quadrant<D>& b) {
  if (a.level > b.level) return false;
  const auto mask = ~(quadrant_len(a.level) - 1);
  for (int k = 0; k < D; ++k) {
    if ((b.x[k] & mask) != a.x[k]) return false;
  }
  return true;
}

/// Strict ancestor test.
template <int D>
constexpr bool is_ancestor(const Quadrant<D>& a, const Quadrant<D>& b) {
  return a.level < b.level && contains(a, b);
}

template <int D>
constexpr bool overlaps(const Quadrant<D>& a, const Quadrant<D>& b) {
  return a.level <= b.level ? contains(a, b) : contains(b, a);
}

template <int D>
constexpr int child_id(const Quadrant<D>& q) {
  if (q.level == 0) return 0;
  const auto len = quadrant_len(q.level);
  int id = 0;
  for (int a = 0; a < D; ++a) {
    if (q.x[a] & len) id |= 1 << a;
  }
  return id;
}

template <int D>
constexpr Quadrant<D> child(const Quadrant<D>& q, int i) {
  if (q.level >= kMaxLevel<D>) throw Error("child: quadrant already at maximum level");
  if (i < 0 || i >= kChildren<D>) throw Error("child: invalid child index");
  Quadrant<D> c = q;
  c.level = static_cast<std::int8_t>(q.level + 1);
  const auto len = quadrant_len(c.level);
  for (int a = 0; a < D; ++a) {
    if ((i >> a) & 1) c.x[a] += len;
  }
  return c;
}

template <int D>
constexpr Quadrant<D> parent(const Quadrant<D>& q) {
  if (q.level <= 0) throw Error("parent: root quadrant has no parent");
  Quadrant<D> p = q;
  p.level = static_cast<std::int8_t>(q.level - 1);
  const auto mask = ~(quadrant_len(p.level) - 1);
  for (int a = 0; a < D; ++a) p.x[a] &= mask;
  return p;
}

template <int D>
constexpr std::array<Quadrant<D>, kChildren<D>> children(const Quadrant<D>& q) {
  std::array<Quadrant<D>, kChildren<D>> out{};
  for (int i = 0; i < kChildren<D>; ++i) out[i] = child(q, i);
  return out;
}

template <int D>
constexpr std::array<Quadrant<D>, kChildren<D>> siblings(const Quadrant<D>& q) {
  return children(parent(q));
}

template <int D>
constexpr bool is_family(std::span<const Quadrant<D>> qs) {
  if (qs.size() != static_cast<std::size_t>(kChildren<D>)) return false;
  if (qs[0].level == 0) return false;
  const auto p = parent(qs[0]);
  for (int i = 0; i < kChildren<D>; ++i) {
    if (qs[i].level != qs[0].level || child_id(qs[i]) != i || !contains(p, qs[i])) return false;
  }
  return true;
}

/// Same-level neighbor across face f; may lie outside the tree.
template <int D>
constexpr Quadrant<D> face_neighbor(const Quadrant<D>& q, int f) {
  Quadrant<D> n = q;
  const auto len = quadrant_len(q.level);
  n.x[face_axis(f)] += face_side(f) ? len : -len;
  return n;
}

/// The 2^(D-1) children of q that touch face f, in z-order.
template <int D>
constexpr std::array<Quadrant<D>, kFaceChildren<D>> face_children(const Quadrant<D>& q, int f) {
  std::array<Quadrant<D>, kFaceChildren<D>> out{};
  const int axis = face_axis(f);
  int n = 0;
  for (int i = 0; i < kChildren<D>; ++i) {
    if (((i >> axis) & 1) == face_side(f)) out[n++] = child(q, i);
  }
  return out;
}

/// True iff q touches the plane of face f of the quadrant `of`.
template <int D>
constexpr bool touches_face_plane(const Quadrant<D>& q, const Quadrant<D>& of, int f) {
  const int axis = face_axis(f);
  if (face_side(f)) return q.x[axis] + quadrant_len(q.level) == of.x[axis] + quadrant_len(of.level);
  return q.x[axis] == of.x[axis];
}

template <int D>
constexpr int subentity_count(int codim) {
  if (codim == 0) return 1;
  if (codim == D) return kChildren<D>;
  if (codim == 1) return kFaces<D>;
  return 12;  // 3D edges
}

/// Tree-local midpoint of a sub-entity of codimension `codim`.
template <int D>
constexpr std::array<std::int32_t, D> coordinates_of(const Quadrant<D>& q, int codim, int index) {
  if (codim < 0 || codim > D) throw Error("coordinates_of: invalid codimension");
  if (index < 0 || index >= subentity_count<D>(codim)) throw Error("coordinates_of: invalid sub-entity index");
  const auto len = quadrant_len(q.level);
  const auto half = len / 2;
  std::array<std::int32_t, D> c = q.x;
  if (codim == 0) {
    for (auto& v : c) v += half;
  } else if (codim == D) {
    for (int a = 0; a < D; ++a) {
      if ((index >> a) & 1) c[a] += len;
    }
  } else if (codim == 1) {
    for (int a = 0; a < D; ++a) {
      if (a == face_axis(index)) {
        if (face_side(index)) c[a] += len;
      } else {
        c[a] += half;
      }
    }
  } else {
    const int axis = index / 4;
    int bit = 0;
    for (int a = 0; a < D; ++a) {
      if (a == axis) {
        c[a] += half;
      } else {
        if (((index % 4) >> bit) & 1) c[a] += len;
        ++bit;
      }
    }
  }
  return c;
}

}  // namespace amr
