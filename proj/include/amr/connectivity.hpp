// Inter-tree topology: which tree faces touch, and how tree-local
// coordinates map across each connection.
#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "amr/quadrant.hpp"

namespace amr {

template <int D>
using TreeCoords = std::array<std::int32_t, D>;

template <int D>
using Point = std::array<double, D>;

/// Number of distinct face orientation codes: 2 in 2D (edge kept or
/// reversed), 8 in 3D (optional axis swap times two flips).
template <int D>
inline constexpr int kOrientations = D == 2 ? 2 : 8;

/// tree_to_face entries pack the neighbor face and the orientation.
template <int D>
constexpr int encode_face(int face, int orientation) {
  return face + kFaces<D> * orientation;
}

struct FaceLink {
  int tree;
  int face;
  int orientation;
};

template <int D>
struct CanonicalCoordinate {
  int tree = 0;
  TreeCoords<D> coords{};

  friend bool operator==(const CanonicalCoordinate&, const CanonicalCoordinate&) = default;
};

/// Maps integer coordinates given in the frame of the tree owning face
/// `face` into the frame of the tree owning `neighbor_face`. Points beyond
/// the face land inside the neighbor; the map is affine and extends to any
/// integer input.
template <int D>
std::array<std::int64_t, D> apply_face_transform(int face, int neighbor_face, int orientation,
                                                 const std::array<std::int64_t, D>& p);

template <int D>
class Connectivity {
 public:
  using Vertex = Point<D>;
  using TreeVertices = std::array<int, kChildren<D>>;
  using FaceArray = std::array<int, kFaces<D>>;

  Connectivity(std::vector<Vertex> vertices, std::vector<TreeVertices> tree_to_vertex,
               std::vector<FaceArray> tree_to_tree, std::vector<FaceArray> tree_to_face);

  int num_trees() const { return static_cast<int>(tree_to_vertex_.size()); }
  const std::vector<Vertex>& vertices() const { return vertices_; }
  const TreeVertices& tree_vertices(int tree) const { return tree_to_vertex_.at(tree); }
  int tree_to_tree(int tree, int face) const { return tree_to_tree_.at(tree)[face]; }
  int tree_to_face(int tree, int face) const { return tree_to_face_.at(tree)[face]; }

  FaceLink neighbor(int tree, int face) const;
  bool is_boundary(int tree, int face) const;
  /// Number of (tree, face) slots connected to another slot, counted once per pair.
  int interior_face_pairs() const;
  int boundary_faces() const;

  /// Express a point in the neighbor tree across `face`. Returns nullopt for
  /// a physical boundary.
  std::optional<std::pair<int, TreeCoords<D>>> transform_point(int tree, int face,
                                                               const TreeCoords<D>& p) const;

  /// Express a (typically hypothetical, out-of-tree) quadrant in the
  /// neighbor tree across `face`.
  std::optional<std::pair<int, Quadrant<D>>> transform_quadrant(int tree, int face,
                                                                const Quadrant<D>& q) const;

  /// Unique representative of a point on tree boundaries: smallest tree,
  /// then lexicographically smallest local coordinates.
  CanonicalCoordinate<D> canonicalize(int tree, const TreeCoords<D>& p) const;

  /// Multilinear image of tree-local reference coordinates in [0,1]^D.
  Vertex map_reference(int tree, const Point<D>& ref) const;
  Vertex map_coords(int tree, const TreeCoords<D>& p) const;

  /// Face symmetry and vertex-range diagnostics; empty when valid.
  std::vector<std::string> validate() const;

 private:
  std::vector<Vertex> vertices_;
  std::vector<TreeVertices> tree_to_vertex_;
  std::vector<FaceArray> tree_to_tree_;
  std::vector<FaceArray> tree_to_face_;
};

template <int D>
Connectivity<D> build_unit_cube();

/// Lattice of extents[0] x extents[1] (x extents[2]) unit trees, numbered
/// lexicographically with x fastest.
template <int D>
Connectivity<D> build_brick(const std::array<int, D>& extents,
                            const std::array<bool, D>& periodic = {});

/// Connectivity from a coarse mesh: vertex coordinates plus one z-ordered
/// vertex tuple per cube.
template <int D>
Connectivity<D> build_from_mesh(const std::vector<Point<D>>& vertices,
                                const std::vector<std::array<int, kChildren<D>>>& cubes);

/// Coarse mesh in dictionary form: {"vertices": [[..], ..], "cubes": [[..], ..]}.
template <int D>
struct MeshDict {
  std::vector<Point<D>> vertices;
  std::vector<std::array<int, kChildren<D>>> cubes;
};

template <int D>
MeshDict<D> parse_mesh_dict(std::string_view text);

template <int D>
MeshDict<D> load_mesh_dict(const std::string& path);

/// Vertex/cube dump of an existing connectivity (inverse of build_from_mesh
/// for connectivities that are not periodic).
template <int D>
MeshDict<D> to_mesh_dict(const Connectivity<D>& conn);

}  // namespace amr
