#include "amr/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "amr/ghost.hpp"
#include "amr/meshiter.hpp"

namespace amr {

template <int D>
Point<D> ball_center(double t) {
  Point<D> y{};
  y[0] = 0.5 + std::cos(2 * std::numbers::pi * t) / 3;
  y[1] = 0.5 + std::sin(2 * std::numbers::pi * t) / 3;
  if constexpr (D == 3) y[2] = 0.5;
  return y;
}

template <int D>
Marking ball_indicator(const Forest<D>& forest, double t, int coarse, int fine, Comm& comm, double scale,
                       BallParams params) {
  const auto y = ball_center<D>(t);
  const auto& conn = forest.connectivity();
  Marking marks(forest.num_ranks());
  comm.run([&](int rank) {
    const auto& leaves = forest.leaves(rank);
    marks[rank].assign(leaves.size(), 0);
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      const auto& q = leaves[i].quad;
      const double half = 0.5 * quadrant_len(q.level);
      Point<D> ref{};
      for (int a = 0; a < D; ++a) ref[a] = (q.x[a] + half) / kRootLen;
      const auto x = conn.map_reference(leaves[i].tree, ref);
      double r2 = 0;
      for (int a = 0; a < D; ++a) r2 += (x[a] * scale - y[a]) * (x[a] * scale - y[a]);
      const double r = std::sqrt(r2);
      const bool inside = params.inner < r && r < params.outer;
      if (inside && q.level < fine)
        marks[rank][i] = 1;
      else if (!inside && q.level > coarse)
        marks[rank][i] = -1;
    }
  });
  return marks;
}

PhaseEta eta(const std::vector<PerfRecord>& records) {
  if (records.empty()) throw Error("eta: empty record set");
  PhaseEta e;
  for (const auto& r : records) {
    if (r.leaves < 1) throw Error("eta: record with no leaves");
    const double g = static_cast<double>(r.leaves);
    e.comm += r.comm / g;
    e.solve += r.solve / g;
    e.adapt += r.adapt / g;
    e.lb += r.lb / g;
    e.ts += r.ts / g;
  }
  const double n = static_cast<double>(records.size());
  return {e.comm / n, e.solve / n, e.adapt / n, e.lb / n, e.ts / n};
}

PhaseEta eta_average(const std::vector<std::vector<PerfRecord>>& per_process) {
  if (per_process.empty()) throw Error("eta_average: no processes");
  PhaseEta sum;
  for (const auto& records : per_process) {
    const auto e = eta(records);
    sum.comm += e.comm;
    sum.solve += e.solve;
    sum.adapt += e.adapt;
    sum.lb += e.lb;
    sum.ts += e.ts;
  }
  const double l = static_cast<double>(per_process.size());
  return {sum.comm / l, sum.solve / l, sum.adapt / l, sum.lb / l, sum.ts / l};
}

PhaseEta speedup(const PhaseEta& l, const PhaseEta& k) {
  return {l.comm / k.comm, l.solve / k.solve, l.adapt / k.adapt, l.lb / k.lb, l.ts / k.ts};
}

PhaseEta efficiency(const PhaseEta& s, int l, int k) {
  const double f = static_cast<double>(l) / k;
  return {f * s.comm, f * s.solve, f * s.adapt, f * s.lb, f * s.ts};
}

void write_csv(const std::string& path, const std::vector<PerfRecord>& records) {
  std::FILE* out = std::fopen(path.c_str(), "w");
  if (!out) throw Error("cannot write " + path);
  std::fprintf(out, "step,t,dt,leaves,comm,solve,adapt,lb,ts\n");
  for (const auto& r : records)
    std::fprintf(out, "%d,%.17g,%.17g,%lld,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.t, r.dt,
                 static_cast<long long>(r.leaves), r.comm, r.solve, r.adapt, r.lb, r.ts);
  if (std::fclose(out) != 0) throw Error("error writing " + path);
}

std::vector<PerfRecord> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "step,t,dt,leaves,comm,solve,adapt,lb,ts")
    throw Error(path + ": unexpected CSV header");
  std::vector<PerfRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    PerfRecord r;
    long long leaves = 0;
    if (std::sscanf(line.c_str(), "%d,%lg,%lg,%lld,%lg,%lg,%lg,%lg,%lg", &r.step, &r.t, &r.dt, &leaves, &r.comm,
                    &r.solve, &r.adapt, &r.lb, &r.ts) != 9)
      throw Error(path + ": malformed row: " + line);
    r.leaves = leaves;
    out.push_back(r);
  }
  return out;
}

template <int D>
void write_vtk(const std::string& path, const Forest<D>& forest, double scale,
               const std::vector<std::vector<double>>& rho) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  const auto& conn = forest.connectivity();
  const std::int64_t n = forest.num_global();
  constexpr int K = kChildren<D>;
  out << "# vtk DataFile Version 3.0\nforest\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << n * K << " double\n";
  out.precision(17);
  for (int p = 0; p < forest.num_ranks(); ++p) {
    for (const auto& leaf : forest.leaves(p)) {
      const auto len = quadrant_len(leaf.quad.level);
      for (int c = 0; c < K; ++c) {
        TreeCoords<D> x;
        for (int a = 0; a < D; ++a) x[a] = leaf.quad.x[a] + (((c >> a) & 1) ? len : 0);
        const auto v = conn.map_coords(leaf.tree, x);
        for (int a = 0; a < 3; ++a) out << (a < D ? v[a] * scale : 0.0) << (a < 2 ? ' ' : '\n');
      }
    }
  }
  static constexpr int kOrder[8] = {0, 1, 3, 2, 4, 5, 7, 6};
  out << "CELLS " << n << ' ' << n * (K + 1) << '\n';
  for (std::int64_t i = 0; i < n; ++i) {
    out << K;
    for (int c = 0; c < K; ++c) out << ' ' << i * K + kOrder[c];
    out << '\n';
  }
  out << "CELL_TYPES " << n << '\n';
  for (std::int64_t i = 0; i < n; ++i) out << (D == 2 ? 9 : 12) << '\n';
  out << "CELL_DATA " << n << "\nSCALARS rank int 1\nLOOKUP_TABLE default\n";
  for (int p = 0; p < forest.num_ranks(); ++p)
    for (std::int64_t i = 0; i < forest.num_local(p); ++i) out << p << '\n';
  out << "SCALARS level int 1\nLOOKUP_TABLE default\n";
  for (int p = 0; p < forest.num_ranks(); ++p)
    for (const auto& leaf : forest.leaves(p)) out << int(leaf.quad.level) << '\n';
  if (!rho.empty()) {
    out << "SCALARS rho double 1\nLOOKUP_TABLE default\n";
    for (const auto& r : rho)
      for (double v : r) out << v << '\n';
  }
  if (!out) throw Error("error writing " + path);
}

template <int D>
std::uint64_t leaf_hash(const std::vector<Leaf<D>>& leaves) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& l : leaves) {
    mix(static_cast<std::uint64_t>(l.tree));
    for (int a = 0; a < D; ++a) mix(static_cast<std::uint32_t>(l.quad.x[a]));
    mix(static_cast<std::uint64_t>(l.quad.level));
  }
  return h;
}

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

void prepare_output(const RunOptions& o) {
  if (o.output_dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(o.output_dir, ec);
  if (ec) throw Error("cannot create output directory " + o.output_dir + ": " + ec.message());
}

std::string vtk_path(const RunOptions& o, int step) {
  char name[64];
  std::snprintf(name, sizeof name, "%s_%05d.vtk", o.problem.c_str(), step);
  return (std::filesystem::path(o.output_dir) / name).string();
}

bool wants_vtk(const RunOptions& o, int step, bool last) {
  return !o.output_dir.empty() && (last || (o.vtk_every > 0 && step % o.vtk_every == 0));
}

template <int D>
std::vector<IntersectionTable<D>> tables_of(const Forest<D>& forest, const GhostLayers<D>& layers, Comm& comm) {
  std::vector<IntersectionTable<D>> tables(forest.num_ranks());
  comm.run([&](int rank) { tables[rank] = build_intersections(forest, layers[rank], rank); });
  return tables;
}

// Balanced adaptation with the ghost layer and tables already built.
template <int D>
void balanced_step(Forest<D>& forest, const GhostLayers<D>& layers, const std::vector<IntersectionTable<D>>& tables,
                   Marking marking, Comm& comm, BalanceStrategy strategy, AdaptDataHandle* handle, StepStats& stats) {
  if (strategy == BalanceStrategy::Ripple) {
    stats.ripple = balanced_marking(forest, layers, tables, marking, comm);
    adapt(forest, marking, comm, handle, AdaptOptions{false});
    if (stats.ripple.fell_back) stats.monolithic = monolithic_balance(forest, comm, handle);
  } else {
    adapt(forest, marking, comm, handle, AdaptOptions{false});
    stats.monolithic = monolithic_balance(forest, comm, handle);
  }
}

void finish_step(Comm& comm, const Transcript& before, StepStats& stats) {
  stats.collectives = comm.transcript().collectives - before.collectives;
  stats.messages = comm.transcript().messages - before.messages;
}

}  // namespace

template <int D>
RunResult<D> run_ball(const RunOptions& o) {
  if (o.coarse < 0 || o.fine < o.coarse || o.fine > kMaxLevel<D>) throw Error("ball: need 0 <= c <= f <= max level");
  if (o.rotation_steps < 1) throw Error("ball: rotation_steps must be positive");
  prepare_output(o);
  std::array<int, D> ext;
  for (int a = 0; a < D; ++a) ext[a] = o.macro[a];
  const auto conn = std::make_shared<const Connectivity<D>>(build_brick<D>(ext));
  const double scale = 1.0 / o.macro[0];
  Comm comm(o.ranks, o.mode);
  auto forest = Forest<D>::uniform(conn, o.coarse, o.ranks);
  for (int k = 0; k < o.fine - o.coarse; ++k) {
    adapt_balanced(forest, ball_indicator(forest, o.phase, o.coarse, o.fine, comm, scale), comm, o.strategy);
    partition(forest, comm);
  }
  if (wants_vtk(o, 0, false)) write_vtk(vtk_path(o, 0), forest, scale);

  RunResult<D> result;
  const double dt = 1.0 / o.rotation_steps;
  for (int n = 1; n <= o.steps; ++n) {
    const double t = o.phase + n * dt;
    StepStats stats;
    const Transcript before = comm.transcript();
    PerfRecord rec;
    rec.step = n;
    rec.t = t;
    rec.dt = dt;
    if (o.compare_monolithic) {
      // Side computation on a copy, kept out of the transcript.
      Comm side(o.ranks);
      Forest<D> copy = forest;
      adapt(copy, ball_indicator(copy, t, o.coarse, o.fine, side, scale), side, nullptr, AdaptOptions{false});
      stats.monolithic_compare_visits = monolithic_balance(copy, side).face_visits;
    }

    const auto step_start = Clock::now();

    auto start = Clock::now();
    GhostLayers<D> layers;
    std::vector<IntersectionTable<D>> tables;
    if (o.strategy == BalanceStrategy::Ripple) {
      layers = build_ghost(forest, comm);
      tables = tables_of(forest, layers, comm);
    }
    rec.comm = since(start);

    start = Clock::now();
    auto marking = ball_indicator(forest, t, o.coarse, o.fine, comm, scale);
    balanced_step(forest, layers, tables, std::move(marking), comm, o.strategy, nullptr, stats);
    rec.adapt = since(start);

    start = Clock::now();
    partition(forest, comm);
    rec.lb = since(start);
    rec.ts = since(step_start);
    rec.leaves = forest.num_global();

    finish_step(comm, before, stats);
    stats.leaf_hash = leaf_hash(forest.gather());
    result.records.push_back(rec);
    result.stats.push_back(stats);
    if (wants_vtk(o, n, n == o.steps)) write_vtk(vtk_path(o, n), forest, scale);
  }
  if (!o.csv.empty()) write_csv(o.csv, result.records);
  result.final_leaves = forest.gather();
  return result;
}

template <int D>
RunResult<D> run_euler(const RunOptions& o) {
  auto problem = make_problem<D>(o.problem, o.problem_config);
  if (o.cfl > 0) problem.cfl = o.cfl;
  if (o.coarse < 0 || o.fine < o.coarse || o.fine > kMaxLevel<D>) throw Error("euler: need 0 <= c <= f <= max level");
  prepare_output(o);
  const EulerSolver<D> solver(problem);
  Comm comm(o.ranks, o.mode);
  auto forest = Forest<D>::uniform(problem.conn, o.coarse, o.ranks);
  auto states = solver.initialize(forest, comm, o.fine);
  // Initial refinement only refines; the data is resampled on every new mesh.
  for (int k = 0; k < o.fine - o.coarse; ++k) {
    const auto layers = build_ghost(forest, comm);
    const auto tables = tables_of(forest, layers, comm);
    auto marking = solver.indicator(forest, layers, tables, states, comm, o.coarse, o.fine);
    const auto features = solver.initial_marking(forest, comm, o.fine);
    for (std::size_t p = 0; p < marking.size(); ++p)
      for (std::size_t i = 0; i < marking[p].size(); ++i) marking[p][i] = std::max(marking[p][i], features[p][i]);
    StepStats ignored;
    balanced_step(forest, layers, tables, std::move(marking), comm, o.strategy, nullptr, ignored);
    partition(forest, comm);
    states = solver.initialize(forest, comm, o.fine);
  }
  auto density = [&] {
    std::vector<std::vector<double>> rho(states.size());
    for (std::size_t p = 0; p < states.size(); ++p)
      for (const auto& u : states[p]) rho[p].push_back(u.rho);
    return rho;
  };
  if (wants_vtk(o, 0, false)) write_vtk(vtk_path(o, 0), forest, problem.scale, density());

  RunResult<D> result;
  result.totals.push_back(solver.totals(forest, states));
  double t = 0;
  for (int n = 1; (o.steps <= 0 || n <= o.steps) && t < problem.end_time; ++n) {
    StepStats stats;
    const Transcript before = comm.transcript();
    PerfRecord rec;
    rec.step = n;
    const auto step_start = Clock::now();

    auto start = Clock::now();
    const auto layers = build_ghost(forest, comm);
    const auto tables = tables_of(forest, layers, comm);
    rec.comm = since(start);

    start = Clock::now();
    rec.dt = solver.step(forest, layers, tables, states, comm, problem.end_time - t);
    t += rec.dt;
    rec.t = t;
    rec.solve = since(start);

    start = Clock::now();
    auto marking = solver.indicator(forest, layers, tables, states, comm, o.coarse, o.fine);
    StateTransfer<D> transfer(std::move(states));
    balanced_step(forest, layers, tables, std::move(marking), comm, o.strategy, &transfer, stats);
    states = transfer.take();
    rec.adapt = since(start);

    start = Clock::now();
    const auto plan = partition(forest, comm);
    states = migrate(plan, states, comm);
    rec.lb = since(start);
    rec.ts = since(step_start);
    rec.leaves = forest.num_global();

    finish_step(comm, before, stats);
    stats.leaf_hash = leaf_hash(forest.gather());
    result.records.push_back(rec);
    result.stats.push_back(stats);
    result.totals.push_back(solver.totals(forest, states));
    const bool last = (o.steps > 0 && n == o.steps) || t >= problem.end_time;
    if (wants_vtk(o, n, last)) write_vtk(vtk_path(o, n), forest, problem.scale, density());
  }
  if (!o.csv.empty()) write_csv(o.csv, result.records);
  result.final_leaves = forest.gather();
  for (const auto& r : states) result.final_states.insert(result.final_states.end(), r.begin(), r.end());
  return result;
}

#define AMR_INSTANTIATE(D)                                                                                     \
  template Point<D> ball_center<D>(double);                                                                    \
  template Marking ball_indicator<D>(const Forest<D>&, double, int, int, Comm&, double, BallParams);          \
  template void write_vtk<D>(const std::string&, const Forest<D>&, double, const std::vector<std::vector<double>>&); \
  template std::uint64_t leaf_hash<D>(const std::vector<Leaf<D>>&);                                            \
  template RunResult<D> run_ball<D>(const RunOptions&);                                                        \
  template RunResult<D> run_euler<D>(const RunOptions&);

AMR_INSTANTIATE(2)
AMR_INSTANTIATE(3)

}  // namespace amr
