// Benchmark driver: rotating ball and Euler runs with per-phase timers,
// performance measures, CSV and VTK output.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "amr/balance.hpp"
#include "amr/comm.hpp"
#include "amr/config.hpp"
#include "amr/euler.hpp"
#include "amr/forest.hpp"

namespace amr {

struct BallParams {
  double inner = 0.15;
  double outer = 0.25;
};

/// Center of the ball at time t; one revolution per unit time.
template <int D>
Point<D> ball_center(double t);

/// +1 inside the band inner < |x_E - y(t)| < outer (x_E the barycenter of the
/// leaf, physical coordinates scaled by `scale`) below level fine, -1 outside
/// above level coarse.
template <int D>
Marking ball_indicator(const Forest<D>& forest, double t, int coarse, int fine, Comm& comm, double scale = 1.0,
                       BallParams params = {});

struct PerfRecord {
  int step = 0;
  double t = 0;
  double dt = 0;
  std::int64_t leaves = 0;
  double comm = 0;
  double solve = 0;
  double adapt = 0;
  double lb = 0;
  double ts = 0;
};

struct PhaseEta {
  double comm = 0;
  double solve = 0;
  double adapt = 0;
  double lb = 0;
  double ts = 0;
};

/// eta_i = (1/N) sum_n tau_i^n / |G^n|. Throws on an empty series.
PhaseEta eta(const std::vector<PerfRecord>& records);
/// Mean of the per-process eta values.
PhaseEta eta_average(const std::vector<std::vector<PerfRecord>>& per_process);
/// s = eta^L / eta^K per phase.
PhaseEta speedup(const PhaseEta& eta_l, const PhaseEta& eta_k);
/// e = (L / K) s per phase.
PhaseEta efficiency(const PhaseEta& speedup, int l, int k);

void write_csv(const std::string& path, const std::vector<PerfRecord>& records);
std::vector<PerfRecord> read_csv(const std::string& path);

/// Legacy ASCII VTK of the leaf mesh with cell data rank, level and, when
/// `rho` is non-empty, density.
template <int D>
void write_vtk(const std::string& path, const Forest<D>& forest, double scale,
               const std::vector<std::vector<double>>& rho = {});

struct RunOptions {
  std::string problem = "ball";  // "ball", "sod", "shock_bubble", "forward_step"
  int coarse = 0;
  int fine = 2;
  int ranks = 1;
  ExecMode mode = ExecMode::Serial;
  BalanceStrategy strategy = BalanceStrategy::Ripple;
  /// Steps to run; for Euler runs, non-positive means until the end time.
  int steps = 100;
  /// Ball steps per revolution.
  int rotation_steps = 100;
  /// Overrides the problem CFL number when positive.
  double cfl = 0;
  /// Macro brick for the ball problem; trailing entries ignored in 2D.
  std::array<int, 3> macro{8, 8, 8};
  /// Initial ball phase in revolutions.
  double phase = 0;
  /// VTK directory; empty writes nothing.
  std::string output_dir;
  int vtk_every = 10;
  std::string csv;
  Config problem_config;
  /// Also run the reference balance on a copy of every ball step and record
  /// its face visits.
  bool compare_monolithic = false;
};

struct StepStats {
  BalanceReport ripple;
  MonolithicReport monolithic;
  std::int64_t monolithic_compare_visits = -1;
  std::int64_t collectives = 0;
  std::int64_t messages = 0;
  std::uint64_t leaf_hash = 0;
};

template <int D>
struct RunResult {
  std::vector<PerfRecord> records;
  std::vector<StepStats> stats;
  std::vector<Leaf<D>> final_leaves;
  std::vector<EulerState<D>> final_states;
  /// Euler runs: conserved totals of the initial mesh, then after every step.
  std::vector<Totals> totals;
};

/// Order-sensitive hash of a global leaf sequence.
template <int D>
std::uint64_t leaf_hash(const std::vector<Leaf<D>>& leaves);

/// Steps: indicator -> balanced marking -> adapt -> partition.
template <int D>
RunResult<D> run_ball(const RunOptions& options);

/// Steps: ghost -> timestep -> indicator -> balanced marking -> adapt -> partition.
template <int D>
RunResult<D> run_euler(const RunOptions& options);

}  // namespace amr
