// amrbench <ball2d|ball3d|euler2d|euler3d> p c f out|none [options]
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "amr/bench.hpp"

using namespace amr;

namespace {

std::string euler_problem(int p) {
  switch (p) {
    case 0:
      return "sod";
    case 1:
      return "forward_step";
    case 2:
      return "shock_bubble";
  }
  throw Error("euler problem number must be 0 (sod), 1 (forward step) or 2 (shock bubble)");
}

int default_ranks() {
  const char* env = std::getenv("AMR_RANKS");
  return env ? std::max(1, std::atoi(env)) : 1;
}

void print_eta(const std::vector<PerfRecord>& records, int ranks) {
  if (records.empty()) {
    std::printf("no steps run\n");
    return;
  }
  const auto e = eta(records);
  std::printf("steps %zu  ranks %d  final leaves %lld\n", records.size(), ranks,
              static_cast<long long>(records.back().leaves));
  std::printf("%-6s %14s\n", "phase", "eta [s/leaf]");
  std::printf("%-6s %14.6e\n%-6s %14.6e\n%-6s %14.6e\n%-6s %14.6e\n%-6s %14.6e\n", "COMM", e.comm, "SOLVE", e.solve,
              "ADAPT", e.adapt, "LB", e.lb, "TS", e.ts);
}

template <int D>
int run(bool ball, const RunOptions& o, bool report_balance) {
  const auto result = ball ? run_ball<D>(o) : run_euler<D>(o);
  print_eta(result.records, o.ranks);
  if (report_balance) {
    int max_sweeps = 0, fallbacks = 0;
    std::int64_t ripple = 0, mono = 0;
    for (const auto& s : result.stats) {
      max_sweeps = std::max(max_sweeps, s.ripple.sweeps_used);
      fallbacks += s.ripple.fell_back;
      ripple += s.ripple.face_visits;
      mono += std::max<std::int64_t>(0, s.monolithic_compare_visits);
    }
    std::printf("max sweeps %d  fallbacks %d  ripple face visits %lld  monolithic face visits %lld\n", max_sweeps,
                fallbacks, static_cast<long long>(ripple), static_cast<long long>(mono));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive forest benchmark driver"};
  std::string variant, out;
  int problem = 2;
  RunOptions o;
  o.ranks = default_ranks();
  std::string balance = "ripple", config_path;
  std::vector<int> macro;
  std::uint64_t seed = 0;
  bool threads = false, compare = false;

  app.add_option("variant", variant, "ball2d, ball3d, euler2d or euler3d")
      ->required()
      ->check(CLI::IsMember({"ball2d", "ball3d", "euler2d", "euler3d"}));
  app.add_option("p", problem, "problem number (ball: 2; euler: 0 sod, 1 forward step, 2 shock bubble)")->required();
  app.add_option("c", o.coarse, "coarsest level")->required();
  app.add_option("f", o.fine, "finest level")->required();
  app.add_option("out", out, "VTK output directory or none")->required();
  app.add_option("--ranks", o.ranks, "simulated ranks (default $AMR_RANKS or 1)")->check(CLI::PositiveNumber);
  app.add_option("--balance", balance, "ripple or monolithic")->check(CLI::IsMember({"ripple", "monolithic"}));
  app.add_option("--steps", o.steps, "steps (euler: <= 0 runs to the end time)");
  app.add_option("--rotation-steps", o.rotation_steps, "ball steps per revolution");
  app.add_option("--cfl", o.cfl, "CFL number (default from the problem)");
  app.add_option("--csv", o.csv, "write per-step records");
  app.add_option("--seed", seed, "random initial ball phase; 0 starts at phase 0");
  app.add_option("--macro", macro, "macro brick extents for the ball problem")->expected(1, 3);
  app.add_option("--config", config_path, "problem constants (key = value)");
  app.add_option("--vtk-every", o.vtk_every, "VTK snapshot interval");
  app.add_flag("--threads", threads, "run every rank on its own thread");
  app.add_flag("--compare", compare, "count reference balance face visits on every ball step");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const bool ball = variant.rfind("ball", 0) == 0;
    const int dim = variant.find('3') != std::string::npos ? 3 : 2;
    o.strategy = balance == "ripple" ? BalanceStrategy::Ripple : BalanceStrategy::Monolithic;
    o.mode = threads ? ExecMode::Threaded : ExecMode::Serial;
    o.output_dir = out == "none" ? "" : out;
    o.compare_monolithic = compare;
    if (!macro.empty()) {
      o.macro.fill(macro.back());
      for (std::size_t i = 0; i < macro.size(); ++i) o.macro[i] = macro[i];
    }
    if (seed != 0) {
      std::mt19937_64 rng(seed);
      o.phase = std::uniform_real_distribution<double>(0, 1)(rng);
    }
    if (!config_path.empty()) o.problem_config = Config::load(config_path);
    if (ball) {
      if (problem != 2) throw Error("ball problem number must be 2");
      o.problem = "ball";
    } else {
      o.problem = euler_problem(problem);
    }
    return dim == 2 ? run<2>(ball, o, ball) : run<3>(ball, o, ball);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "amrbench: %s\n", e.what());
    return 1;
  }
}
