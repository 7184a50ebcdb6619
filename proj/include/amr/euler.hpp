// First-order finite-volume solver for the compressible Euler equations on
// forests of axis-aligned box trees.
#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "amr/config.hpp"
#include "amr/connectivity.hpp"
#include "amr/forest.hpp"
#include "amr/ghost.hpp"
#include "amr/meshiter.hpp"

namespace amr {

/// Conserved variables: density, momentum, total energy.
template <int D>
struct EulerState {
  double rho = 0;
  std::array<double, D> mom{};
  double energy = 0;

  friend bool operator==(const EulerState&, const EulerState&) = default;
};

template <int D>
using States = std::vector<std::vector<EulerState<D>>>;

template <int D>
struct Primitive {
  double rho = 0;
  std::array<double, D> vel{};
  double p = 0;
};

template <int D>
EulerState<D> from_primitive(const Primitive<D>& w, double gamma);
template <int D>
Primitive<D> to_primitive(const EulerState<D>& u, double gamma);
template <int D>
bool is_physical(const EulerState<D>& u, double gamma);

/// Exact flux F(u) . (sign * e_axis).
template <int D>
EulerState<D> euler_flux(const EulerState<D>& u, int axis, int sign, double gamma);

/// HLLC flux through a face with normal sign * e_axis, `left` on the side the
/// normal points away from. Davis wave speed bounds. Throws for unphysical input.
template <int D>
EulerState<D> hllc_flux(const EulerState<D>& left, const EulerState<D>& right, int axis, int sign, double gamma);

enum class BoundaryType { Reflective, Outflow, Inflow };

template <int D>
struct Problem {
  std::string name;
  std::shared_ptr<const Connectivity<D>> conn;
  /// Physical coordinates are connectivity vertex coordinates times scale.
  double scale = 1.0;
  double gamma = 1.4;
  /// Per tree and face; only consulted on physical boundaries.
  std::vector<std::array<BoundaryType, kFaces<D>>> boundary;
  EulerState<D> inflow{};
  std::function<EulerState<D>(const Point<D>&)> initial;
  double end_time = 0;
  double cfl = 0.4;
  double refine_threshold = 0.1;
  double coarsen_threshold = 0.02;
};

/// "sod", "shock_bubble" or "forward_step" with constants from `config`.
template <int D>
Problem<D> make_problem(const std::string& name, const Config& config);

template <int D>
struct CellGeometry {
  Point<D> lower{};
  Point<D> center{};
  std::array<double, D> width{};
  double volume = 0;

  /// Measure of a face normal to `axis`.
  double face_area(int axis) const;
};

struct Totals {
  double mass = 0;
  double energy = 0;
  std::vector<double> momentum;
};

template <int D>
class EulerSolver {
 public:
  /// Throws unless every tree is an axis-aligned box with positively oriented axes.
  explicit EulerSolver(Problem<D> problem);

  const Problem<D>& problem() const { return problem_; }
  CellGeometry<D> cell(const Leaf<D>& leaf) const;

  /// Problem initial data averaged over the centers of the level
  /// `sample_level` subcells of each leaf (at most 64 per axis); the cell
  /// center alone when the leaf is at least that fine.
  States<D> initialize(const Forest<D>& forest, Comm& comm, int sample_level = 0) const;

  /// Global stable step cfl * min(width / signal speed).
  double stable_dt(const Forest<D>& forest, const States<D>& states, Comm& comm) const;

  /// One forward Euler step of size min(stable_dt, dt_max); returns the step
  /// taken. Throws Error with the cell location on an unphysical update.
  double step(const Forest<D>& forest, const GhostLayers<D>& layers, const std::vector<IntersectionTable<D>>& tables,
              States<D>& states, Comm& comm, double dt_max = 1e300) const;

  /// Relative density jump indicator bounded by levels [coarse, fine].
  Marking indicator(const Forest<D>& forest, const GhostLayers<D>& layers,
                    const std::vector<IntersectionTable<D>>& tables, const States<D>& states, Comm& comm,
                    int coarse, int fine) const;

  /// +1 below level fine where the initial density varies by more than the
  /// refine threshold across the level `fine` subcells of a leaf.
  Marking initial_marking(const Forest<D>& forest, Comm& comm, int fine) const;

  /// Volume integrals summed in global leaf order.
  Totals totals(const Forest<D>& forest, const States<D>& states) const;

 private:
  EulerState<D> boundary_state(const EulerState<D>& inside, std::int32_t tree, int face) const;

  Problem<D> problem_;
  std::vector<Point<D>> tree_lower_;
  std::vector<std::array<double, D>> tree_extent_;
};

/// Carries cell states through adapt: children copy the parent, a parent
/// takes the average of its equal-volume children. Can be reused across
/// consecutive adapt calls.
template <int D>
class StateTransfer : public AdaptDataHandle {
 public:
  explicit StateTransfer(States<D> states) : current_(std::move(states)) {}

  void prepare(const std::vector<std::int64_t>& new_counts) override;
  void transfer(const AdaptEvent& event) override;
  void finish() override { current_ = std::move(next_); }
  States<D> take() { return std::move(current_); }

 private:
  States<D> current_;
  States<D> next_;
};

}  // namespace amr
