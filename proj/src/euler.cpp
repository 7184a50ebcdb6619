#include "amr/euler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "amr/quadrant.hpp"

namespace amr {

template <int D>
EulerState<D> from_primitive(const Primitive<D>& w, double gamma) {
  EulerState<D> u;
  u.rho = w.rho;
  double kinetic = 0;
  for (int a = 0; a < D; ++a) {
    u.mom[a] = w.rho * w.vel[a];
    kinetic += w.vel[a] * w.vel[a];
  }
  u.energy = w.p / (gamma - 1) + 0.5 * w.rho * kinetic;
  return u;
}

template <int D>
Primitive<D> to_primitive(const EulerState<D>& u, double gamma) {
  Primitive<D> w;
  w.rho = u.rho;
  double kinetic = 0;
  for (int a = 0; a < D; ++a) {
    w.vel[a] = u.mom[a] / u.rho;
    kinetic += u.mom[a] * w.vel[a];
  }
  w.p = (gamma - 1) * (u.energy - 0.5 * kinetic);
  return w;
}

template <int D>
bool is_physical(const EulerState<D>& u, double gamma) {
  if (!(u.rho > 0) || !std::isfinite(u.rho) || !std::isfinite(u.energy)) return false;
  for (double m : u.mom)
    if (!std::isfinite(m)) return false;
  const double p = to_primitive(u, gamma).p;
  return p > 0 && std::isfinite(p);
}

namespace {

template <int D>
EulerState<D> reflect(EulerState<D> u, int axis) {
  u.mom[axis] = -u.mom[axis];
  return u;
}

template <int D>
EulerState<D> flux_positive(const EulerState<D>& u, const Primitive<D>& w, int axis) {
  const double un = w.vel[axis];
  EulerState<D> f;
  f.rho = u.mom[axis];
  for (int a = 0; a < D; ++a) f.mom[a] = u.mom[a] * un;
  f.mom[axis] += w.p;
  f.energy = (u.energy + w.p) * un;
  return f;
}

template <int D>
EulerState<D> star_state(const EulerState<D>& u, const Primitive<D>& w, int axis, double s, double s_star) {
  const double un = w.vel[axis];
  const double factor = w.rho * (s - un) / (s - s_star);
  EulerState<D> out;
  out.rho = factor;
  for (int a = 0; a < D; ++a) out.mom[a] = factor * w.vel[a];
  out.mom[axis] = factor * s_star;
  out.energy = factor * (u.energy / w.rho + (s_star - un) * (s_star + w.p / (w.rho * (s - un))));
  return out;
}

template <int D>
EulerState<D> axpy(const EulerState<D>& f, double s, const EulerState<D>& star, const EulerState<D>& u) {
  EulerState<D> out;
  out.rho = f.rho + s * (star.rho - u.rho);
  for (int a = 0; a < D; ++a) out.mom[a] = f.mom[a] + s * (star.mom[a] - u.mom[a]);
  out.energy = f.energy + s * (star.energy - u.energy);
  return out;
}

template <int D>
EulerState<D> hllc_positive(const EulerState<D>& l, const EulerState<D>& r, int axis, double gamma) {
  const auto wl = to_primitive(l, gamma);
  const auto wr = to_primitive(r, gamma);
  const double cl = std::sqrt(gamma * wl.p / wl.rho);
  const double cr = std::sqrt(gamma * wr.p / wr.rho);
  const double ul = wl.vel[axis];
  const double ur = wr.vel[axis];
  const double sl = std::min(ul - cl, ur - cr);
  const double sr = std::max(ul + cl, ur + cr);
  if (sl >= 0) return flux_positive(l, wl, axis);
  if (sr <= 0) return flux_positive(r, wr, axis);
  const double s_star =
      (wr.p - wl.p + wl.rho * ul * (sl - ul) - wr.rho * ur * (sr - ur)) / (wl.rho * (sl - ul) - wr.rho * (sr - ur));
  if (s_star >= 0) return axpy(flux_positive(l, wl, axis), sl, star_state(l, wl, axis, sl, s_star), l);
  return axpy(flux_positive(r, wr, axis), sr, star_state(r, wr, axis, sr, s_star), r);
}

std::string format_point(const double* x, int d) {
  std::string s = "(";
  char buf[32];
  for (int a = 0; a < d; ++a) {
    std::snprintf(buf, sizeof buf, "%.6g", x[a]);
    s += (a ? ", " : "") + std::string(buf);
  }
  return s + ")";
}

}  // namespace

template <int D>
EulerState<D> euler_flux(const EulerState<D>& u, int axis, int sign, double gamma) {
  if (sign > 0) return flux_positive(u, to_primitive(u, gamma), axis);
  const auto m = reflect(u, axis);
  return reflect(flux_positive(m, to_primitive(m, gamma), axis), axis);
}

template <int D>
EulerState<D> hllc_flux(const EulerState<D>& left, const EulerState<D>& right, int axis, int sign, double gamma) {
  if (axis < 0 || axis >= D) throw Error("hllc_flux: bad axis");
  if (!is_physical(left, gamma) || !is_physical(right, gamma)) throw Error("hllc_flux: unphysical input state");
  if (sign > 0) return hllc_positive(left, right, axis, gamma);
  return reflect(hllc_positive(reflect(left, axis), reflect(right, axis), axis, gamma), axis);
}

template <int D>
double CellGeometry<D>::face_area(int axis) const {
  double a = 1;
  for (int b = 0; b < D; ++b)
    if (b != axis) a *= width[b];
  return a;
}

template <int D>
EulerSolver<D>::EulerSolver(Problem<D> problem) : problem_(std::move(problem)) {
  if (!problem_.conn) throw Error("euler: problem has no connectivity");
  const auto& conn = *problem_.conn;
  const int nt = conn.num_trees();
  if (problem_.boundary.empty()) problem_.boundary.assign(nt, {});
  if (static_cast<int>(problem_.boundary.size()) != nt) throw Error("euler: boundary table size mismatch");
  tree_lower_.resize(nt);
  tree_extent_.resize(nt);
  for (int t = 0; t < nt; ++t) {
    const auto& tv = conn.tree_vertices(t);
    const auto& lo = conn.vertices()[tv[0]];
    const auto& hi = conn.vertices()[tv[kChildren<D> - 1]];
    for (int a = 0; a < D; ++a) {
      tree_lower_[t][a] = lo[a] * problem_.scale;
      tree_extent_[t][a] = (hi[a] - lo[a]) * problem_.scale;
      if (!(tree_extent_[t][a] > 0)) throw Error("euler: tree " + std::to_string(t) + " is not positively oriented");
    }
    for (int c = 0; c < kChildren<D>; ++c) {
      const auto& v = conn.vertices()[tv[c]];
      for (int a = 0; a < D; ++a) {
        const double expect = ((c >> a) & 1) ? hi[a] : lo[a];
        if (std::abs(v[a] - expect) > 1e-12 * (1 + std::abs(expect)))
          throw Error("euler: tree " + std::to_string(t) + " is not an axis-aligned box");
      }
    }
  }
}

template <int D>
CellGeometry<D> EulerSolver<D>::cell(const Leaf<D>& leaf) const {
  CellGeometry<D> g;
  const double len = static_cast<double>(quadrant_len(leaf.quad.level)) / kRootLen;
  g.volume = 1;
  for (int a = 0; a < D; ++a) {
    const double ext = tree_extent_[leaf.tree][a];
    g.width[a] = ext * len;
    g.lower[a] = tree_lower_[leaf.tree][a] + ext * (static_cast<double>(leaf.quad.x[a]) / kRootLen);
    g.center[a] = g.lower[a] + 0.5 * g.width[a];
    g.volume *= g.width[a];
  }
  return g;
}

template <int D>
States<D> EulerSolver<D>::initialize(const Forest<D>& forest, Comm& comm, int sample_level) const {
  if (!problem_.initial) throw Error("euler: problem " + problem_.name + " has no initial data");
  States<D> out(forest.num_ranks());
  comm.run([&](int rank) {
    const auto& leaves = forest.leaves(rank);
    out[rank].resize(leaves.size());
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      const auto g = cell(leaves[i]);
      const int m = 1 << std::clamp(sample_level - leaves[i].quad.level, 0, 6);
      if (m == 1) {
        out[rank][i] = problem_.initial(g.center);
        continue;
      }
      int total = 1;
      for (int a = 0; a < D; ++a) total *= m;
      EulerState<D> sum{};
      for (int s = 0; s < total; ++s) {
        Point<D> x;
        for (int a = 0, r = s; a < D; ++a, r /= m) x[a] = g.lower[a] + (r % m + 0.5) / m * g.width[a];
        const auto u = problem_.initial(x);
        sum.rho += u.rho;
        for (int a = 0; a < D; ++a) sum.mom[a] += u.mom[a];
        sum.energy += u.energy;
      }
      sum.rho /= total;
      for (int a = 0; a < D; ++a) sum.mom[a] /= total;
      sum.energy /= total;
      out[rank][i] = sum;
    }
  });
  return out;
}

template <int D>
Marking EulerSolver<D>::initial_marking(const Forest<D>& forest, Comm& comm, int fine) const {
  Marking marks(forest.num_ranks());
  comm.run([&](int rank) {
    const auto& leaves = forest.leaves(rank);
    marks[rank].assign(leaves.size(), 0);
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      if (leaves[i].quad.level >= fine) continue;
      const auto g = cell(leaves[i]);
      const int m = 1 << std::min(fine - leaves[i].quad.level, 6);
      int total = 1;
      for (int a = 0; a < D; ++a) total *= m;
      double lo = std::numeric_limits<double>::infinity(), hi = 0;
      for (int s = 0; s < total; ++s) {
        Point<D> x;
        for (int a = 0, r = s; a < D; ++a, r /= m) x[a] = g.lower[a] + (r % m + 0.5) / m * g.width[a];
        const double rho = problem_.initial(x).rho;
        lo = std::min(lo, rho);
        hi = std::max(hi, rho);
      }
      if ((hi - lo) / lo > problem_.refine_threshold) marks[rank][i] = 1;
    }
  });
  return marks;
}

template <int D>
double EulerSolver<D>::stable_dt(const Forest<D>& forest, const States<D>& states, Comm& comm) const {
  const double gamma = problem_.gamma;
  std::vector<double> local(forest.num_ranks(), std::numeric_limits<double>::infinity());
  comm.run([&](int rank) {
    const auto& leaves = forest.leaves(rank);
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      const auto w = to_primitive(states[rank][i], gamma);
      const double c = std::sqrt(gamma * w.p / w.rho);
      const auto g = cell(leaves[i]);
      for (int a = 0; a < D; ++a) m = std::min(m, g.width[a] / (std::abs(w.vel[a]) + c));
    }
    local[rank] = m;
  });
  return problem_.cfl * comm.allreduce(local, [](double a, double b) { return std::min(a, b); });
}

template <int D>
EulerState<D> EulerSolver<D>::boundary_state(const EulerState<D>& inside, std::int32_t tree, int face) const {
  switch (problem_.boundary[tree][face]) {
    case BoundaryType::Reflective:
      return reflect(inside, face / 2);
    case BoundaryType::Outflow:
      return inside;
    case BoundaryType::Inflow:
      return problem_.inflow;
  }
  return inside;
}

template <int D>
double EulerSolver<D>::step(const Forest<D>& forest, const GhostLayers<D>& layers,
                            const std::vector<IntersectionTable<D>>& tables, States<D>& states, Comm& comm,
                            double dt_max) const {
  const double gamma = problem_.gamma;
  const auto ghost_states = ghost_exchange(layers, states, comm);
  const double dt = std::min(stable_dt(forest, states, comm), dt_max);
  if (!(dt > 1e-14) || !std::isfinite(dt)) throw Error("euler: time step underflow (dt = " + std::to_string(dt) + ")");

  States<D> next(forest.num_ranks());
  comm.run([&](int rank) {
    const auto& leaves = forest.leaves(rank);
    const auto& ghosts = layers[rank].ghosts;
    const auto n_local = static_cast<std::int32_t>(leaves.size());
    const auto& table = tables[rank];
    auto& out = next[rank];
    out.resize(leaves.size());
    for (std::int32_t i = 0; i < n_local; ++i) {
      const auto& ui = states[rank][i];
      const auto gi = cell(leaves[i]);
      EulerState<D> acc{};
      for (int f = 0; f < kFaces<D>; ++f) {
        const int axis = f / 2;
        for (const auto& e : table[i].face(f)) {
          EulerState<D> un;
          double area = gi.face_area(axis);
          if (e.neighbor < 0) {
            un = boundary_state(ui, leaves[i].tree, f);
          } else if (e.neighbor < n_local) {
            un = states[rank][e.neighbor];
            area = std::min(area, cell(leaves[e.neighbor]).face_area(axis));
          } else {
            un = ghost_states[rank][e.neighbor - n_local];
            area = std::min(area, cell(ghosts[e.neighbor - n_local].leaf).face_area(axis));
          }
          // Lower cell on the left so both sides evaluate the same flux.
          const bool upper = f & 1;
          const auto flux = upper ? hllc_flux(ui, un, axis, 1, gamma) : hllc_flux(un, ui, axis, 1, gamma);
          const double w = upper ? -area : area;
          acc.rho += w * flux.rho;
          for (int a = 0; a < D; ++a) acc.mom[a] += w * flux.mom[a];
          acc.energy += w * flux.energy;
        }
      }
      const double s = dt / gi.volume;
      auto& u = out[i];
      u.rho = ui.rho + s * acc.rho;
      for (int a = 0; a < D; ++a) u.mom[a] = ui.mom[a] + s * acc.mom[a];
      u.energy = ui.energy + s * acc.energy;
      if (!is_physical(u, gamma)) {
        const auto w = to_primitive(u, gamma);
        throw Error("euler: unphysical state at rank " + std::to_string(rank) + " leaf " + std::to_string(i) +
                    " (tree " + std::to_string(leaves[i].tree) + " level " + std::to_string(leaves[i].quad.level) +
                    " center " + format_point(gi.center.data(), D) + "): rho " + std::to_string(w.rho) + " p " +
                    std::to_string(w.p));
      }
    }
  });
  states = std::move(next);
  return dt;
}

template <int D>
Marking EulerSolver<D>::indicator(const Forest<D>& forest, const GhostLayers<D>& layers,
                                  const std::vector<IntersectionTable<D>>& tables, const States<D>& states,
                                  Comm& comm, int coarse, int fine) const {
  const auto ghost_states = ghost_exchange(layers, states, comm);
  Marking marks(forest.num_ranks());
  comm.run([&](int rank) {
    const auto& leaves = forest.leaves(rank);
    const auto n_local = static_cast<std::int32_t>(leaves.size());
    marks[rank].assign(leaves.size(), 0);
    for (std::int32_t i = 0; i < n_local; ++i) {
      const double ri = states[rank][i].rho;
      double jump = 0;
      for (int f = 0; f < kFaces<D>; ++f) {
        for (const auto& e : tables[rank][i].face(f)) {
          if (e.neighbor < 0) continue;
          const double rn = e.neighbor < n_local ? states[rank][e.neighbor].rho
                                                 : ghost_states[rank][e.neighbor - n_local].rho;
          jump = std::max(jump, std::abs(ri - rn) / std::min(ri, rn));
        }
      }
      const int level = leaves[i].quad.level;
      if (jump > problem_.refine_threshold && level < fine)
        marks[rank][i] = 1;
      else if (jump < problem_.coarsen_threshold && level > coarse)
        marks[rank][i] = -1;
    }
  });
  return marks;
}

template <int D>
Totals EulerSolver<D>::totals(const Forest<D>& forest, const States<D>& states) const {
  Totals t;
  t.momentum.assign(D, 0.0);
  for (int rank = 0; rank < forest.num_ranks(); ++rank) {
    const auto& leaves = forest.leaves(rank);
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      const double v = cell(leaves[i]).volume;
      const auto& u = states[rank][i];
      t.mass += u.rho * v;
      t.energy += u.energy * v;
      for (int a = 0; a < D; ++a) t.momentum[a] += u.mom[a] * v;
    }
  }
  return t;
}

template <int D>
void StateTransfer<D>::prepare(const std::vector<std::int64_t>& new_counts) {
  next_.assign(new_counts.size(), {});
  for (std::size_t p = 0; p < new_counts.size(); ++p) next_[p].resize(new_counts[p]);
}

template <int D>
void StateTransfer<D>::transfer(const AdaptEvent& e) {
  const auto& src = current_[e.rank];
  auto& dst = next_[e.rank];
  if (e.kind != AdaptEvent::Coarsen) {
    for (int k = 0; k < e.new_count; ++k) dst[e.new_first + k] = src[e.old_first];
    return;
  }
  EulerState<D> sum{};
  for (int k = 0; k < e.old_count; ++k) {
    const auto& u = src[e.old_first + k];
    sum.rho += u.rho;
    for (int a = 0; a < D; ++a) sum.mom[a] += u.mom[a];
    sum.energy += u.energy;
  }
  const double inv = 1.0 / e.old_count;
  sum.rho *= inv;
  for (int a = 0; a < D; ++a) sum.mom[a] *= inv;
  sum.energy *= inv;
  dst[e.new_first] = sum;
}

namespace {

// Physical faces on the lower / upper x end of the domain get the given
// types; every other physical face is a wall.
template <int D>
std::vector<std::array<BoundaryType, kFaces<D>>> x_boundaries(const Connectivity<D>& conn, BoundaryType lower,
                                                              BoundaryType upper) {
  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -xmin;
  for (const auto& v : conn.vertices()) {
    xmin = std::min(xmin, v[0]);
    xmax = std::max(xmax, v[0]);
  }
  std::vector<std::array<BoundaryType, kFaces<D>>> out(conn.num_trees());
  for (int t = 0; t < conn.num_trees(); ++t) {
    const auto& tv = conn.tree_vertices(t);
    out[t].fill(BoundaryType::Reflective);
    if (conn.vertices()[tv[0]][0] == xmin) out[t][0] = lower;
    if (conn.vertices()[tv[kChildren<D> - 1]][0] == xmax) out[t][1] = upper;
  }
  return out;
}

template <int D>
std::array<int, D> extents(int x, int rest = 1) {
  std::array<int, D> e;
  e.fill(rest);
  e[0] = x;
  return e;
}

}  // namespace

template <int D>
Problem<D> make_problem(const std::string& name, const Config& cfg) {
  Problem<D> pr;
  pr.name = name;
  pr.gamma = cfg.get("gamma", 1.4);
  pr.cfl = cfg.get("cfl", 0.4);
  pr.refine_threshold = cfg.get("refine_threshold", 0.1);
  pr.coarsen_threshold = cfg.get("coarsen_threshold", 0.02);
  const double gamma = pr.gamma;

  if (name == "sod") {
    const int nx = cfg.get("trees_x", 64);
    pr.conn = std::make_shared<Connectivity<D>>(build_brick<D>(extents<D>(nx)));
    pr.scale = 1.0 / nx;
    pr.end_time = cfg.get("end_time", 0.2);
    Primitive<D> l, r;
    l.rho = cfg.get("left_rho", 1.0);
    l.p = cfg.get("left_p", 1.0);
    r.rho = cfg.get("right_rho", 0.125);
    r.p = cfg.get("right_p", 0.1);
    const double x0 = cfg.get("interface_x", 0.5);
    const auto ul = from_primitive(l, gamma), ur = from_primitive(r, gamma);
    pr.initial = [=](const Point<D>& x) { return x[0] < x0 ? ul : ur; };
    pr.boundary = x_boundaries(*pr.conn, BoundaryType::Reflective, BoundaryType::Reflective);
  } else if (name == "shock_bubble") {
    pr.conn = std::make_shared<Connectivity<D>>(build_brick<D>(extents<D>(2)));
    pr.end_time = cfg.get("end_time", 0.25);
    Primitive<D> amb;
    amb.rho = cfg.get("ambient_rho", 1.0);
    amb.p = cfg.get("ambient_p", 1.0);
    // Post-shock state of a shock of Mach M running into the resting ambient gas.
    const double m = cfg.get("shock_mach", 1.22);
    const double c1 = std::sqrt(gamma * amb.p / amb.rho);
    Primitive<D> post;
    post.rho = amb.rho * (gamma + 1) * m * m / ((gamma - 1) * m * m + 2);
    post.p = amb.p * (1 + 2 * gamma / (gamma + 1) * (m * m - 1));
    post.vel[0] = m * c1 * (1 - amb.rho / post.rho);
    Primitive<D> bubble = amb;
    bubble.rho = cfg.get("bubble_rho", 0.1378);
    const double shock_x = cfg.get("shock_x", 0.1);
    const double radius = cfg.get("bubble_radius", 0.2);
    const Point<3> center{cfg.get("bubble_x", 0.5), cfg.get("bubble_y", 0.5), cfg.get("bubble_z", 0.5)};
    const auto u_amb = from_primitive(amb, gamma), u_post = from_primitive(post, gamma),
               u_bub = from_primitive(bubble, gamma);
    pr.inflow = u_post;
    pr.initial = [=](const Point<D>& x) {
      if (x[0] < shock_x) return u_post;
      double r2 = 0;
      for (int a = 0; a < D; ++a) r2 += (x[a] - center[a]) * (x[a] - center[a]);
      return r2 < radius * radius ? u_bub : u_amb;
    };
    pr.boundary = x_boundaries(*pr.conn, BoundaryType::Inflow, BoundaryType::Outflow);
  } else if (name == "forward_step") {
    const int nx = cfg.get("trees_x", 15), ny = cfg.get("trees_y", 5);
    const int sx = cfg.get("step_trees_x", 3), sy = cfg.get("step_trees_y", 1);
    const double h = cfg.get("tree_size", 0.2);
    const int nz = D == 3 ? 1 : 0;
    auto vid = [&](int i, int j, int k) { return i + (nx + 1) * (j + (ny + 1) * k); };
    std::vector<Point<D>> verts;
    for (int k = 0; k <= nz; ++k)
      for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i) {
          Point<D> v{};
          v[0] = i;
          v[1] = j;
          if constexpr (D == 3) v[2] = k;
          verts.push_back(v);
        }
    std::vector<std::array<int, kChildren<D>>> cubes;
    for (int k = 0; k < std::max(nz, 1); ++k)
      for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
          if (i >= sx && j < sy) continue;
          std::array<int, kChildren<D>> c;
          for (int n = 0; n < kChildren<D>; ++n) c[n] = vid(i + (n & 1), j + ((n >> 1) & 1), k + ((n >> 2) & 1));
          cubes.push_back(c);
        }
    pr.conn = std::make_shared<Connectivity<D>>(build_from_mesh<D>(verts, cubes));
    pr.scale = h;
    pr.end_time = cfg.get("end_time", 4.0);
    Primitive<D> in;
    in.rho = cfg.get("inflow_rho", 1.4);
    in.p = cfg.get("inflow_p", 1.0);
    in.vel[0] = cfg.get("inflow_mach", 3.0) * std::sqrt(gamma * in.p / in.rho);
    const auto u_in = from_primitive(in, gamma);
    pr.inflow = u_in;
    pr.initial = [=](const Point<D>&) { return u_in; };
    pr.boundary = x_boundaries(*pr.conn, BoundaryType::Inflow, BoundaryType::Outflow);
  } else {
    throw Error("unknown problem: " + name);
  }
  return pr;
}

#define AMR_INSTANTIATE(D)                                                                                  \
  template EulerState<D> from_primitive<D>(const Primitive<D>&, double);                                   \
  template Primitive<D> to_primitive<D>(const EulerState<D>&, double);                                     \
  template bool is_physical<D>(const EulerState<D>&, double);                                              \
  template EulerState<D> euler_flux<D>(const EulerState<D>&, int, int, double);                            \
  template EulerState<D> hllc_flux<D>(const EulerState<D>&, const EulerState<D>&, int, int, double);       \
  template struct CellGeometry<D>;                                                                          \
  template class EulerSolver<D>;                                                                            \
  template class StateTransfer<D>;                                                                          \
  template Problem<D> make_problem<D>(const std::string&, const Config&);

AMR_INSTANTIATE(2)
AMR_INSTANTIATE(3)

}  // namespace amr
