#include "amr/connectivity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace amr {

namespace {

template <int D>
std::array<int, D - 1> tangential_axes(int face) {
  std::array<int, D - 1> t{};
  int n = 0;
  for (int a = 0; a < D; ++a) {
    if (a != face_axis(face)) t[n++] = a;
  }
  return t;
}

/// Tree corners touching face f, ordered by their tangential bits.
template <int D>
std::array<int, kFaceChildren<D>> face_corners(int face) {
  std::array<int, kFaceChildren<D>> out{};
  int n = 0;
  for (int c = 0; c < kChildren<D>; ++c) {
    if (((c >> face_axis(face)) & 1) == face_side(face)) out[n++] = c;
  }
  return out;
}

template <int D>
std::array<std::int64_t, D> corner_coords(int corner) {
  std::array<std::int64_t, D> p{};
  for (int a = 0; a < D; ++a) p[a] = ((corner >> a) & 1) ? kRootLen : 0;
  return p;
}

template <int D>
std::array<std::int64_t, D> widen(const TreeCoords<D>& p) {
  std::array<std::int64_t, D> w{};
  for (int a = 0; a < D; ++a) w[a] = p[a];
  return w;
}

template <int D>
double jacobian_at_corner(const std::vector<Point<D>>& verts, const std::array<int, kChildren<D>>& cube,
                          int corner) {
  std::array<Point<D>, D> e{};
  for (int a = 0; a < D; ++a) {
    const int other = corner ^ (1 << a);
    const auto& lo = verts[cube[(corner >> a) & 1 ? other : corner]];
    const auto& hi = verts[cube[(corner >> a) & 1 ? corner : other]];
    for (int k = 0; k < D; ++k) e[a][k] = hi[k] - lo[k];
  }
  if constexpr (D == 2) {
    return e[0][0] * e[1][1] - e[0][1] * e[1][0];
  } else {
    return e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1]) -
           e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0]) +
           e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0]);
  }
}

double cross2(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

// Geometric overlap with positive measure between two boundary faces that
// were not matched topologically.
template <int D>
bool faces_overlap(const std::vector<Point<D>>& verts, const std::array<int, kFaceChildren<D>>& fa,
                   const std::array<int, kFaceChildren<D>>& fb) {
  if constexpr (D == 2) {
    const auto& p0 = verts[fa[0]];
    const auto& p1 = verts[fa[1]];
    const auto& q0 = verts[fb[0]];
    const auto& q1 = verts[fb[1]];
    const double dx = p1[0] - p0[0], dy = p1[1] - p0[1];
    const double len2 = dx * dx + dy * dy;
    const double tol = 1e-10 * len2;
    if (std::abs(cross2(dx, dy, q0[0] - p0[0], q0[1] - p0[1])) > tol) return false;
    if (std::abs(cross2(dx, dy, q1[0] - p0[0], q1[1] - p0[1])) > tol) return false;
    const double s0 = ((q0[0] - p0[0]) * dx + (q0[1] - p0[1]) * dy) / len2;
    const double s1 = ((q1[0] - p0[0]) * dx + (q1[1] - p0[1]) * dy) / len2;
    const double lo = std::max(0.0, std::min(s0, s1));
    const double hi = std::min(1.0, std::max(s0, s1));
    return hi - lo > 1e-9;
  } else {
    // Polygon order of a face: corners 0, 1, 3, 2.
    auto polygon = [&](const std::array<int, 4>& f) {
      return std::array<Point<3>, 4>{verts[f[0]], verts[f[1]], verts[f[3]], verts[f[2]]};
    };
    const auto a = polygon(fa);
    const auto b = polygon(fb);
    auto sub = [](const Point<3>& u, const Point<3>& v) { return Point<3>{u[0] - v[0], u[1] - v[1], u[2] - v[2]}; };
    auto cross = [](const Point<3>& u, const Point<3>& v) {
      return Point<3>{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
    };
    auto dot = [](const Point<3>& u, const Point<3>& v) { return u[0] * v[0] + u[1] * v[1] + u[2] * v[2]; };
    const auto n = cross(sub(a[1], a[0]), sub(a[3], a[0]));
    const double nn = std::sqrt(dot(n, n));
    if (nn == 0.0) return false;
    for (const auto& v : b) {
      if (std::abs(dot(n, sub(v, a[0]))) > 1e-9 * nn) return false;
    }
    auto strictly_inside = [&](const std::array<Point<3>, 4>& poly, const Point<3>& p) {
      for (int i = 0; i < 4; ++i) {
        const auto c = cross(sub(poly[(i + 1) % 4], poly[i]), sub(p, poly[i]));
        if (dot(c, n) <= 1e-12 * nn) return false;
      }
      return true;
    };
    auto centroid = [](const std::array<Point<3>, 4>& poly) {
      Point<3> c{};
      for (const auto& v : poly)
        for (int k = 0; k < 3; ++k) c[k] += 0.25 * v[k];
      return c;
    };
    auto probes = [&](const std::array<Point<3>, 4>& poly) {
      std::vector<Point<3>> pts{centroid(poly)};
      const auto c = pts[0];
      for (const auto& v : poly) {
        Point<3> p{};
        for (int k = 0; k < 3; ++k) p[k] = v[k] + 1e-6 * (c[k] - v[k]);
        pts.push_back(p);
      }
      return pts;
    };
    // Orient b consistently with a for the inside test.
    auto b_oriented = b;
    if (dot(cross(sub(b[1], b[0]), sub(b[3], b[0])), n) < 0) std::reverse(b_oriented.begin(), b_oriented.end());
    for (const auto& p : probes(b))
      if (strictly_inside(a, p)) return true;
    for (const auto& p : probes(a))
      if (strictly_inside(b_oriented, p)) return true;
    return false;
  }
}

}  // namespace

template <int D>
std::array<std::int64_t, D> apply_face_transform(int face, int neighbor_face, int orientation,
                                                 const std::array<std::int64_t, D>& p) {
  std::array<std::int64_t, D> q{};
  const int af = face_axis(face);
  const int ag = face_axis(neighbor_face);
  const std::int64_t depth = face_side(face) ? p[af] - kRootLen : -p[af];
  q[ag] = face_side(neighbor_face) ? kRootLen - depth : depth;
  const auto ta = tangential_axes<D>(face);
  const auto tb = tangential_axes<D>(neighbor_face);
  const bool swap = D == 3 && (orientation & 4);
  for (int j = 0; j < D - 1; ++j) {
    const int src = swap ? D - 2 - j : j;
    const std::int64_t v = p[ta[src]];
    q[tb[j]] = ((orientation >> j) & 1) ? kRootLen - v : v;
  }
  return q;
}

template <int D>
Connectivity<D>::Connectivity(std::vector<Vertex> vertices, std::vector<TreeVertices> tree_to_vertex,
                              std::vector<FaceArray> tree_to_tree, std::vector<FaceArray> tree_to_face)
    : vertices_(std::move(vertices)),
      tree_to_vertex_(std::move(tree_to_vertex)),
      tree_to_tree_(std::move(tree_to_tree)),
      tree_to_face_(std::move(tree_to_face)) {
  if (tree_to_tree_.size() != tree_to_vertex_.size() || tree_to_face_.size() != tree_to_vertex_.size())
    throw Error("connectivity: per-tree arrays differ in length");
  if (auto diag = validate(); !diag.empty()) throw Error("connectivity: " + diag.front());
}

template <int D>
FaceLink Connectivity<D>::neighbor(int tree, int face) const {
  const int code = tree_to_face_.at(tree)[face];
  return {tree_to_tree_[tree][face], code % kFaces<D>, code / kFaces<D>};
}

template <int D>
bool Connectivity<D>::is_boundary(int tree, int face) const {
  const auto link = neighbor(tree, face);
  return link.tree == tree && link.face == face && link.orientation == 0;
}

template <int D>
int Connectivity<D>::interior_face_pairs() const {
  int slots = 0;
  for (int t = 0; t < num_trees(); ++t)
    for (int f = 0; f < kFaces<D>; ++f)
      if (!is_boundary(t, f)) ++slots;
  return slots / 2;
}

template <int D>
int Connectivity<D>::boundary_faces() const {
  int n = 0;
  for (int t = 0; t < num_trees(); ++t)
    for (int f = 0; f < kFaces<D>; ++f)
      if (is_boundary(t, f)) ++n;
  return n;
}

template <int D>
std::optional<std::pair<int, TreeCoords<D>>> Connectivity<D>::transform_point(int tree, int face,
                                                                              const TreeCoords<D>& p) const {
  if (is_boundary(tree, face)) return std::nullopt;
  const auto link = neighbor(tree, face);
  const auto q = apply_face_transform<D>(face, link.face, link.orientation, widen<D>(p));
  TreeCoords<D> out{};
  for (int a = 0; a < D; ++a) out[a] = static_cast<std::int32_t>(q[a]);
  return std::pair{link.tree, out};
}

template <int D>
std::optional<std::pair<int, Quadrant<D>>> Connectivity<D>::transform_quadrant(int tree, int face,
                                                                              const Quadrant<D>& q) const {
  if (is_boundary(tree, face)) return std::nullopt;
  const auto link = neighbor(tree, face);
  std::array<std::int64_t, D> lo{}, hi{};
  const std::int64_t len = quadrant_len(q.level);
  for (int a = 0; a < D; ++a) {
    lo[a] = q.x[a];
    hi[a] = lo[a] + len;
  }
  const auto tlo = apply_face_transform<D>(face, link.face, link.orientation, lo);
  const auto thi = apply_face_transform<D>(face, link.face, link.orientation, hi);
  Quadrant<D> out;
  out.level = q.level;
  for (int a = 0; a < D; ++a) out.x[a] = static_cast<std::int32_t>(std::min(tlo[a], thi[a]));
  return std::pair{link.tree, out};
}

template <int D>
CanonicalCoordinate<D> Connectivity<D>::canonicalize(int tree, const TreeCoords<D>& p) const {
  std::vector<CanonicalCoordinate<D>> orbit{{tree, p}};
  for (std::size_t i = 0; i < orbit.size(); ++i) {
    const auto cur = orbit[i];
    for (int f = 0; f < kFaces<D>; ++f) {
      const auto plane = face_side(f) ? kRootLen : 0;
      if (cur.coords[face_axis(f)] != plane) continue;
      auto next = transform_point(cur.tree, f, cur.coords);
      if (!next) continue;
      CanonicalCoordinate<D> c{next->first, next->second};
      if (std::find(orbit.begin(), orbit.end(), c) == orbit.end()) orbit.push_back(c);
    }
  }
  return *std::min_element(orbit.begin(), orbit.end(), [](const auto& a, const auto& b) {
    if (a.tree != b.tree) return a.tree < b.tree;
    return a.coords < b.coords;
  });
}

template <int D>
typename Connectivity<D>::Vertex Connectivity<D>::map_reference(int tree, const Point<D>& ref) const {
  Vertex out{};
  const auto& tv = tree_to_vertex_.at(tree);
  for (int c = 0; c < kChildren<D>; ++c) {
    double w = 1.0;
    for (int a = 0; a < D; ++a) w *= ((c >> a) & 1) ? ref[a] : 1.0 - ref[a];
    const auto& v = vertices_[tv[c]];
    for (int k = 0; k < D; ++k) out[k] += w * v[k];
  }
  return out;
}

template <int D>
typename Connectivity<D>::Vertex Connectivity<D>::map_coords(int tree, const TreeCoords<D>& p) const {
  Point<D> ref{};
  for (int a = 0; a < D; ++a) ref[a] = static_cast<double>(p[a]) / kRootLen;
  return map_reference(tree, ref);
}

template <int D>
std::vector<std::string> Connectivity<D>::validate() const {
  std::vector<std::string> diag;
  const int nt = num_trees();
  const int nv = static_cast<int>(vertices_.size());
  for (int t = 0; t < nt; ++t) {
    for (int c = 0; c < kChildren<D>; ++c) {
      if (tree_to_vertex_[t][c] < 0 || tree_to_vertex_[t][c] >= nv)
        diag.push_back("tree " + std::to_string(t) + " corner " + std::to_string(c) + " has invalid vertex index");
    }
    for (int f = 0; f < kFaces<D>; ++f) {
      const int code = tree_to_face_[t][f];
      const int nb = tree_to_tree_[t][f];
      if (nb < 0 || nb >= nt || code < 0 || code >= kFaces<D> * kOrientations<D>) {
        diag.push_back("tree " + std::to_string(t) + " face " + std::to_string(f) + " has invalid link");
        continue;
      }
      const auto link = neighbor(t, f);
      if (link.tree == t && link.face == f) {
        if (link.orientation != 0)
          diag.push_back("boundary face " + std::to_string(t) + ":" + std::to_string(f) + " has non-identity orientation");
        continue;
      }
      const int back_code = tree_to_face_[link.tree][link.face];
      const FaceLink back{tree_to_tree_[link.tree][link.face], back_code % kFaces<D>, back_code / kFaces<D>};
      if (back.tree != t || back.face != f) {
        diag.push_back("face " + std::to_string(t) + ":" + std::to_string(f) + " is not linked back by its neighbor");
        continue;
      }
      // Round trip on the face corners and on a point beyond the face.
      std::vector<std::array<std::int64_t, D>> probes;
      for (int c : face_corners<D>(f)) probes.push_back(corner_coords<D>(c));
      auto beyond = probes.front();
      for (int a = 0; a < D; ++a) beyond[a] = (a == face_axis(f)) ? (face_side(f) ? kRootLen + 12345 : -12345) : 777 + 1000 * a;
      probes.push_back(beyond);
      for (const auto& p : probes) {
        const auto there = apply_face_transform<D>(f, link.face, link.orientation, p);
        const auto home = apply_face_transform<D>(link.face, f, back.orientation, there);
        if (home != p) {
          diag.push_back("face " + std::to_string(t) + ":" + std::to_string(f) + " orientation is not inverted by its neighbor");
          break;
        }
      }
    }
  }
  return diag;
}

template <int D>
Connectivity<D> build_brick(const std::array<int, D>& extents, const std::array<bool, D>& periodic) {
  for (int n : extents)
    if (n <= 0) throw Error("build_brick: extents must be positive");
  std::array<int, D> vext{};
  int nverts = 1, ntrees = 1;
  for (int a = 0; a < D; ++a) {
    vext[a] = extents[a] + 1;
    nverts *= vext[a];
    ntrees *= extents[a];
  }
  std::vector<Point<D>> verts(nverts);
  for (int v = 0; v < nverts; ++v) {
    int r = v;
    for (int a = 0; a < D; ++a) {
      verts[v][a] = r % vext[a];
      r /= vext[a];
    }
  }
  auto tree_index = [&](const std::array<int, D>& ijk) {
    int t = 0;
    for (int a = D - 1; a >= 0; --a) t = t * extents[a] + ijk[a];
    return t;
  };
  auto vertex_index = [&](const std::array<int, D>& ijk) {
    int v = 0;
    for (int a = D - 1; a >= 0; --a) v = v * vext[a] + ijk[a];
    return v;
  };
  std::vector<typename Connectivity<D>::TreeVertices> ttv(ntrees);
  std::vector<typename Connectivity<D>::FaceArray> ttt(ntrees), ttf(ntrees);
  for (int t = 0; t < ntrees; ++t) {
    std::array<int, D> ijk{};
    int r = t;
    for (int a = 0; a < D; ++a) {
      ijk[a] = r % extents[a];
      r /= extents[a];
    }
    for (int c = 0; c < kChildren<D>; ++c) {
      auto corner = ijk;
      for (int a = 0; a < D; ++a) corner[a] += (c >> a) & 1;
      ttv[t][c] = vertex_index(corner);
    }
    for (int f = 0; f < kFaces<D>; ++f) {
      const int a = face_axis(f);
      auto nb = ijk;
      nb[a] += face_side(f) ? 1 : -1;
      if (nb[a] < 0 || nb[a] >= extents[a]) {
        if (!periodic[a]) {
          ttt[t][f] = t;
          ttf[t][f] = f;
          continue;
        }
        nb[a] = (nb[a] + extents[a]) % extents[a];
      }
      ttt[t][f] = tree_index(nb);
      ttf[t][f] = encode_face<D>(opposite_face(f), 0);
    }
  }
  return Connectivity<D>(std::move(verts), std::move(ttv), std::move(ttt), std::move(ttf));
}

template <int D>
Connectivity<D> build_unit_cube() {
  std::array<int, D> ones{};
  ones.fill(1);
  return build_brick<D>(ones);
}

template <int D>
Connectivity<D> build_from_mesh(const std::vector<Point<D>>& vertices,
                                const std::vector<std::array<int, kChildren<D>>>& cubes) {
  const int nv = static_cast<int>(vertices.size());
  const int nt = static_cast<int>(cubes.size());
  if (nt == 0) throw Error("build_from_mesh: no cubes");
  for (int t = 0; t < nt; ++t) {
    auto sorted = cubes[t];
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() < 0 || sorted.back() >= nv)
      throw Error("build_from_mesh: cube " + std::to_string(t) + " references a missing vertex");
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw Error("build_from_mesh: cube " + std::to_string(t) + " is degenerate (repeated vertex)");
    for (int c = 0; c < kChildren<D>; ++c) {
      if (!(jacobian_at_corner<D>(vertices, cubes[t], c) > 0.0))
        throw Error("build_from_mesh: cube " + std::to_string(t) + " is inverted or degenerate at corner " +
                    std::to_string(c));
    }
  }

  using FaceKey = std::array<int, kFaceChildren<D>>;
  std::map<FaceKey, std::vector<std::pair<int, int>>> by_vertices;
  auto face_vertices = [&](int t, int f) {
    FaceKey k{};
    const auto fc = face_corners<D>(f);
    for (int j = 0; j < kFaceChildren<D>; ++j) k[j] = cubes[t][fc[j]];
    return k;
  };
  for (int t = 0; t < nt; ++t) {
    for (int f = 0; f < kFaces<D>; ++f) {
      auto k = face_vertices(t, f);
      std::sort(k.begin(), k.end());
      by_vertices[k].emplace_back(t, f);
    }
  }

  std::vector<typename Connectivity<D>::FaceArray> ttt(nt), ttf(nt);
  for (int t = 0; t < nt; ++t)
    for (int f = 0; f < kFaces<D>; ++f) {
      ttt[t][f] = t;
      ttf[t][f] = f;
    }

  auto find_orientation = [&](int ta, int fa, int tb, int fb) {
    const auto fca = face_corners<D>(fa);
    const auto fcb = face_corners<D>(fb);
    for (int o = 0; o < kOrientations<D>; ++o) {
      bool ok = true;
      for (int ca : fca) {
        const auto mapped = apply_face_transform<D>(fa, fb, o, corner_coords<D>(ca));
        const int v = cubes[ta][ca];
        int cb = -1;
        for (int c : fcb)
          if (cubes[tb][c] == v) cb = c;
        if (cb < 0 || mapped != corner_coords<D>(cb)) {
          ok = false;
          break;
        }
      }
      if (ok) return o;
    }
    throw Error("build_from_mesh: cubes " + std::to_string(ta) + " and " + std::to_string(tb) +
                " share a face with an unsupported vertex arrangement");
  };

  std::vector<std::pair<int, int>> unmatched;
  for (const auto& [key, slots] : by_vertices) {
    if (slots.size() > 2)
      throw Error("build_from_mesh: face shared by more than two cubes (cube " + std::to_string(slots[0].first) + ")");
    if (slots.size() == 1) {
      unmatched.push_back(slots[0]);
      continue;
    }
    const auto [ta, fa] = slots[0];
    const auto [tb, fb] = slots[1];
    ttt[ta][fa] = tb;
    ttf[ta][fa] = encode_face<D>(fb, find_orientation(ta, fa, tb, fb));
    ttt[tb][fb] = ta;
    ttf[tb][fb] = encode_face<D>(fa, find_orientation(tb, fb, ta, fa));
  }

  for (std::size_t i = 0; i < unmatched.size(); ++i) {
    for (std::size_t j = i + 1; j < unmatched.size(); ++j) {
      const auto [ta, fa] = unmatched[i];
      const auto [tb, fb] = unmatched[j];
      if (faces_overlap<D>(vertices, face_vertices(ta, fa), face_vertices(tb, fb)))
        throw Error("build_from_mesh: non-conforming face between cube " + std::to_string(ta) + " and cube " +
                    std::to_string(tb));
    }
  }

  std::vector<typename Connectivity<D>::TreeVertices> ttv(cubes.begin(), cubes.end());
  return Connectivity<D>(vertices, std::move(ttv), std::move(ttt), std::move(ttf));
}

template <int D>
MeshDict<D> parse_mesh_dict(std::string_view text) {
  const auto open = text.find('{');
  const auto close = text.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open)
    throw Error("mesh dict: no {...} block found");
  std::string body(text.substr(open, close - open + 1));
  std::replace(body.begin(), body.end(), '\'', '"');
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("mesh dict: ") + e.what());
  }
  if (!j.contains("vertices") || !j.contains("cubes")) throw Error("mesh dict: needs \"vertices\" and \"cubes\"");
  MeshDict<D> mesh;
  for (const auto& v : j.at("vertices")) {
    if (!v.is_array() || v.size() != D) throw Error("mesh dict: vertex with wrong dimension");
    Point<D> p{};
    for (int a = 0; a < D; ++a) p[a] = v[a].get<double>();
    mesh.vertices.push_back(p);
  }
  for (const auto& c : j.at("cubes")) {
    if (!c.is_array() || c.size() != kChildren<D>) throw Error("mesh dict: cube with wrong vertex count");
    std::array<int, kChildren<D>> cube{};
    for (int k = 0; k < kChildren<D>; ++k) cube[k] = c[k].get<int>();
    mesh.cubes.push_back(cube);
  }
  return mesh;
}

template <int D>
MeshDict<D> load_mesh_dict(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("mesh dict: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_mesh_dict<D>(ss.str());
}

template <int D>
MeshDict<D> to_mesh_dict(const Connectivity<D>& conn) {
  MeshDict<D> mesh;
  mesh.vertices = conn.vertices();
  for (int t = 0; t < conn.num_trees(); ++t) mesh.cubes.push_back(conn.tree_vertices(t));
  return mesh;
}

#define AMR_INSTANTIATE(D)                                                                                   \
  template std::array<std::int64_t, D> apply_face_transform<D>(int, int, int, const std::array<std::int64_t, D>&); \
  template class Connectivity<D>;                                                                            \
  template Connectivity<D> build_unit_cube<D>();                                                             \
  template Connectivity<D> build_brick<D>(const std::array<int, D>&, const std::array<bool, D>&);            \
  template Connectivity<D> build_from_mesh<D>(const std::vector<Point<D>>&,                                  \
                                              const std::vector<std::array<int, kChildren<D>>>&);            \
  template MeshDict<D> parse_mesh_dict<D>(std::string_view);                                                 \
  template MeshDict<D> load_mesh_dict<D>(const std::string&);                                                \
  template MeshDict<D> to_mesh_dict<D>(const Connectivity<D>&);

AMR_INSTANTIATE(2)
AMR_INSTANTIATE(3)

}  // namespace amr
