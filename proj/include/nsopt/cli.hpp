#pragma once

#include <functional>
#include <optional>
#include <string>

#include "nsopt/examples.hpp"
#include "nsopt/solver.hpp"

namespace nsopt::cli {

/// Built-in problem selector. `name` is one of: odl, quadratic, disk,
/// l1, circle, attack.
struct ProblemSpec {
  std::string name;
  Eigen::Index n = 10;      // odl
  Eigen::Index m = 1000;    // odl
  double theta = 0.3;       // odl
  int instance = 0;         // attack
};

/// A named problem plus the harness hooks the commands need: how to draw
/// restart starting points, how to draw gradient-check points, and how to
/// score a solution as a success.
struct BuiltProblem {
  Problem problem;
  VarStruct x0;
  std::function<VarStruct(Rng&)> sample_start;
  std::function<VarStruct(Rng&)> sample_point;
  std::function<bool(const Solution&)> success;
};

BuiltProblem build_problem(const ProblemSpec& spec, std::uint64_t seed);

/// solve --config <path> [--out <dir>] [--seed N]
/// Writes iterates.csv and solution.json under the output directory.
/// Exit codes: 0 Optimal, 2 MaxIter, 3 LineSearchFailure, 4 NonFinite,
/// 64 configuration error.
int cmd_solve(const std::string& config_path, std::optional<std::string> out_dir,
              std::optional<std::uint64_t> seed_override);

/// bench --suite <odl|analytic|attack> --restarts N ... Writes bench.csv:
/// one row per (problem, restart, gradient mode), matched restarts
/// adjacent. Restart starting points are drawn from per-restart seed
/// streams; rows are emitted in a fixed order regardless of scheduling.
int cmd_bench(const std::string& suite, int restarts, std::uint64_t seed,
              const ProblemSpec& params, const std::string& out_dir);

/// gradcheck --problem <name> [--trials N] [--h F] [--seed N]
/// Prints the worst relative difference between recorded gradients and
/// central differences over random points; exit 0 iff it is <= 1e-5.
int cmd_gradcheck(const std::string& problem, int trials, double h, std::uint64_t seed);

/// Full argv interface; returns the process exit code.
int run(int argc, const char* const* argv);

/// Full-precision scientific formatting used by all CSV output (17
/// significant digits, byte-stable across runs).
std::string fmt(double v);

}  // namespace nsopt::cli
