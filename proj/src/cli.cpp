#include "nsopt/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace nsopt::cli {

using nlohmann::json;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.16e", v);
  return buf;
}

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) { ok = true; break; }
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

ProblemSpec parse_problem_json(const json& obj) {
  if (!obj.is_object() || !obj.contains("name"))
    throw ConfigError("problem selector must be an object with a 'name'");
  ProblemSpec spec;
  spec.name = obj.at("name").get<std::string>();
  if (spec.name == "odl") {
    reject_unknown_keys(obj, {"name", "n", "m", "theta"}, "problem");
    if (obj.contains("n")) spec.n = obj.at("n").get<Eigen::Index>();
    if (obj.contains("m")) spec.m = obj.at("m").get<Eigen::Index>();
    if (obj.contains("theta")) spec.theta = obj.at("theta").get<double>();
  } else if (spec.name == "attack") {
    reject_unknown_keys(obj, {"name", "instance"}, "problem");
    if (obj.contains("instance")) spec.instance = obj.at("instance").get<int>();
  } else {
    reject_unknown_keys(obj, {"name"}, "problem");
  }
  return spec;
}

SolverOptions parse_options_json(const json& obj) {
  SolverOptions opts;
  if (obj.is_null()) return opts;
  if (!obj.is_object()) throw ConfigError("'options' must be an object");
  reject_unknown_keys(obj,
                      {"max_iter", "opt_tol", "viol_ineq_tol", "viol_eq_tol", "mu_init",
                       "mu_shrink", "steering_c_v", "steering_max_rounds", "wolfe_c1",
                       "wolfe_c2", "linesearch_max_evals", "grad_cache_size",
                       "grad_cache_radius", "curvature_skip_tol", "rng_seed"},
                      "options");
  auto get = [&](const char* k, auto& field) {
    if (obj.contains(k)) field = obj.at(k).get<std::decay_t<decltype(field)>>();
  };
  get("max_iter", opts.max_iter);
  get("opt_tol", opts.opt_tol);
  get("viol_ineq_tol", opts.viol_ineq_tol);
  get("viol_eq_tol", opts.viol_eq_tol);
  get("mu_init", opts.mu_init);
  get("mu_shrink", opts.mu_shrink);
  get("steering_c_v", opts.steering_c_v);
  get("steering_max_rounds", opts.steering_max_rounds);
  get("wolfe_c1", opts.wolfe_c1);
  get("wolfe_c2", opts.wolfe_c2);
  get("linesearch_max_evals", opts.linesearch_max_evals);
  get("grad_cache_size", opts.grad_cache_size);
  get("grad_cache_radius", opts.grad_cache_radius);
  get("curvature_skip_tol", opts.curvature_skip_tol);
  get("rng_seed", opts.rng_seed);
  opts.validate();
  return opts;
}

VarStruct struct_from_flat(const FlatVector& x, const VarSpace& space) {
  return unpack(x, space);
}

bool default_success(const Problem& p, const SolverOptions& opts, const Solution& sol) {
  (void)p;
  return sol.code == SolveCode::Optimal && sol.v_max <= opts.viol_eq_tol;
}

}  // namespace

BuiltProblem build_problem(const ProblemSpec& spec, std::uint64_t seed) {
  BuiltProblem bp;
  if (spec.name == "odl") {
    auto data = std::make_shared<ODLData>(gen_odl_data(spec.n, spec.m, spec.theta, seed));
    bp.problem = odl_problem(*data);
    const VarSpace space = bp.problem.space;
    Rng start = Rng::stream(seed, 1);
    bp.x0 = struct_from_flat(start.unit_sphere(spec.n), space);
    bp.sample_start = [space, n = spec.n](Rng& rng) {
      return unpack(rng.unit_sphere(n), space);
    };
    bp.sample_point = bp.sample_start;
    bp.success = [data](const Solution& sol) { return odl_success(sol, *data, 1e-2); };
    return bp;
  }
  if (spec.name == "attack") {
    auto instances = make_attack_instances(spec.instance + 1, seed);
    auto inst = std::make_shared<AttackInstance>(instances.back());
    bp.problem = toy_attack_problem(*inst);
    const VarSpace space = bp.problem.space;
    bp.x0 = unpack(inst->x, space);
    bp.sample_start = [space, inst](Rng& rng) {
      (void)rng;
      return unpack(inst->x, space);
    };
    bp.sample_point = [space, inst](Rng& rng) {
      return unpack(FlatVector(inst->x + 0.3 * rng.gaussian_vector(inst->x.size())), space);
    };
    bp.success = [inst](const Solution& sol) {
      const Eigen::VectorXd xt = sol.best_x.at("x_tilde").flat();
      return attack_distance(*inst, xt) - inst->epsilon <= 1e-6 &&
             attack_margin(*inst, xt) > 0.0;
    };
    return bp;
  }
  for (auto& entry : analytic_suite()) {
    if (entry.name != spec.name) continue;
    bp.problem = std::move(entry.problem);
    const VarSpace space = bp.problem.space;
    bp.x0 = entry.x0;
    const FlatVector x0_flat = pack(entry.x0, space);
    bp.sample_start = [space, x0_flat](Rng& rng) {
      return unpack(FlatVector(x0_flat + 0.5 * rng.gaussian_vector(x0_flat.size())), space);
    };
    bp.sample_point = [space, n = space.total_dim()](Rng& rng) {
      return unpack(rng.gaussian_vector(n), space);
    };
    const double f_star = entry.f_star;
    bp.success = [f_star](const Solution& sol) {
      return std::abs(sol.f - f_star) <= 1e-4 * (1.0 + std::abs(f_star)) && sol.v_max <= 1e-6;
    };
    return bp;
  }
  throw UnknownProblemError("unknown problem '" + spec.name + "'");
}

namespace {

int exit_code_for(SolveCode code) {
  switch (code) {
    case SolveCode::Optimal: return 0;
    case SolveCode::MaxIter: return 2;
    case SolveCode::LineSearchFailure: return 3;
    case SolveCode::NonFinite: return 4;
  }
  return 4;
}

void write_iterates_csv(const std::string& path, const Solution& sol) {
  std::ofstream out(path, std::ios::binary);
  out << "k,f,v_total,v_max,mu,stationarity,step,fn_evals\n";
  for (const auto& r : sol.iterate_log)
    out << r.k << ',' << fmt(r.f) << ',' << fmt(r.v_total) << ',' << fmt(r.v_max) << ','
        << fmt(r.mu) << ',' << fmt(r.stationarity) << ',' << fmt(r.step) << ','
        << r.fn_evals << '\n';
}

void write_solution_json(const std::string& path, const Problem& p, const Solution& sol,
                         double wall_time_s) {
  json vars = json::object();
  json shapes = json::object();
  for (const auto& e : p.space.entries()) {
    const Tensor& t = sol.best_x.at(e.name);
    std::vector<double> vals(t.flat().data(), t.flat().data() + t.size());
    vars[e.name] = vals;
    shapes[e.name] = e.shape;
  }
  json doc;
  doc["variables"] = vars;
  doc["shapes"] = shapes;
  doc["f"] = sol.f;
  doc["v_total"] = sol.v_total;
  doc["v_max"] = sol.v_max;
  doc["stationarity"] = sol.stationarity;
  doc["code"] = to_string(sol.code);
  doc["iterations"] = sol.iterate_log.size();
  doc["fn_evals"] = sol.fn_evals;
  doc["wall_time_s"] = wall_time_s;
  std::ofstream out(path, std::ios::binary);
  out << doc.dump(2) << '\n';
}

/// Runs jobs in waves of hardware threads; results keep submission order.
template <typename T>
std::vector<T> parallel_map(const std::vector<std::function<T()>>& jobs) {
  std::vector<T> results(jobs.size());
  const std::size_t width = std::max(1u, std::thread::hardware_concurrency());
  std::size_t next = 0;
  while (next < jobs.size()) {
    const std::size_t batch = std::min(width, jobs.size() - next);
    std::vector<std::future<T>> futs;
    futs.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i)
      futs.push_back(std::async(std::launch::async, jobs[next + i]));
    for (std::size_t i = 0; i < batch; ++i) results[next + i] = futs[i].get();
    next += batch;
  }
  return results;
}

struct BenchRow {
  std::string problem;
  int restart = 0;
  std::string mode;
  std::uint64_t seed = 0;
  Solution sol;
  bool success = false;
};

void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  out << "problem,restart,mode,seed,f,v_max,stationarity,code,iterations,success\n";
  for (const auto& r : rows)
    out << r.problem << ',' << r.restart << ',' << r.mode << ',' << r.seed << ','
        << fmt(r.sol.f) << ',' << fmt(r.sol.v_max) << ',' << fmt(r.sol.stationarity) << ','
        << to_string(r.sol.code) << ',' << r.sol.iterate_log.size() << ','
        << (r.success ? 1 : 0) << '\n';
}

std::uint64_t restart_seed(std::uint64_t base, int restart) {
  return base + (static_cast<std::uint64_t>(restart) + 2) * 0x9E3779B97F4A7C15ULL;
}

}  // namespace

int cmd_solve(const std::string& config_path, std::optional<std::string> out_dir,
              std::optional<std::uint64_t> seed_override) {
  json config;
  {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config file '" + config_path + "'");
    try {
      in >> config;
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config parse failure: ") + e.what());
    }
  }
  if (!config.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown_keys(config, {"problem", "options", "seed"}, "config");
  if (!config.contains("problem")) throw ConfigError("config is missing 'problem'");

  ProblemSpec spec;
  SolverOptions opts;
  std::uint64_t seed = 0;
  try {
    spec = parse_problem_json(config.at("problem"));
    opts = parse_options_json(config.contains("options") ? config.at("options") : json());
    if (config.contains("seed")) seed = config.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse failure: ") + e.what());
  }
  if (seed_override) seed = *seed_override;
  opts.rng_seed = seed;

  const std::string dir = out_dir.value_or("out");
  std::filesystem::create_directories(dir);

  BuiltProblem bp = build_problem(spec, seed);
  const auto t0 = std::chrono::steady_clock::now();
  const Solution sol = solve(bp.problem, opts, bp.x0);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_iterates_csv(dir + "/iterates.csv", sol);
  write_solution_json(dir + "/solution.json", bp.problem, sol, wall);
  std::cout << "code=" << to_string(sol.code) << " f=" << fmt(sol.f)
            << " v_max=" << fmt(sol.v_max) << " stationarity=" << fmt(sol.stationarity)
            << " iterations=" << sol.iterate_log.size() << '\n';
  return exit_code_for(sol.code);
}

int cmd_bench(const std::string& suite, int restarts, std::uint64_t seed,
              const ProblemSpec& params, const std::string& out_dir) {
  if (restarts < 1) throw ConfigError("restarts must be >= 1");
  SolverOptions opts;
  opts.rng_seed = seed;

  struct Job {
    std::string problem;
    int restart;
    std::string mode;
    std::uint64_t seed;
    GradientMode gmode;
    const Problem* prob;
    VarStruct x0;
    std::function<bool(const Solution&)> success;
  };
  std::vector<Job> jobs;

  // builders kept alive for the duration of the run
  std::vector<std::shared_ptr<ODLData>> odl_data;
  std::vector<std::shared_ptr<Problem>> problems;
  std::vector<std::shared_ptr<AttackInstance>> attack_instances;
  std::vector<SuiteEntry> suite_entries;

  if (suite == "odl") {
    odl_data.push_back(std::make_shared<ODLData>(
        gen_odl_data(params.n, params.m, params.theta, seed)));
    problems.push_back(std::make_shared<Problem>(odl_problem(*odl_data[0])));
    for (int r = 0; r < restarts; ++r) {
      Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(r) + 1);
      VarStruct x0 = unpack(rng.unit_sphere(params.n), problems[0]->space);
      auto success = [data = odl_data[0]](const Solution& s) {
        return odl_success(s, *data, 1e-2);
      };
      for (const char* mode : {"analytic", "autodiff"})
        jobs.push_back(Job{"odl", r, mode, restart_seed(seed, r),
                           std::string(mode) == "analytic" ? GradientMode::Analytic
                                                           : GradientMode::Autodiff,
                           problems[0].get(), x0, success});
    }
  } else if (suite == "analytic") {
    suite_entries = analytic_suite();
    for (const auto& entry : suite_entries) {
      const FlatVector base = pack(entry.x0, entry.problem.space);
      for (int r = 0; r < restarts; ++r) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(r) + 1);
        FlatVector x0 = base;
        if (r > 0) x0 += 0.5 * rng.gaussian_vector(base.size());
        const double f_star = entry.f_star;
        jobs.push_back(Job{entry.name, r, "autodiff", restart_seed(seed, r),
                           GradientMode::Autodiff, &entry.problem,
                           unpack(x0, entry.problem.space),
                           [f_star](const Solution& s) {
                             return std::abs(s.f - f_star) <= 1e-4 * (1.0 + std::abs(f_star)) &&
                                    s.v_max <= 1e-6;
                           }});
      }
    }
  } else if (suite == "attack") {
    auto instances = make_attack_instances(restarts, seed);
    for (int r = 0; r < restarts; ++r) {
      attack_instances.push_back(std::make_shared<AttackInstance>(instances[r]));
      auto inst = attack_instances.back();
      problems.push_back(std::make_shared<Problem>(toy_attack_problem(*inst)));
      jobs.push_back(Job{"attack" + std::to_string(r), r, "autodiff", inst->seed,
                         GradientMode::Autodiff, problems.back().get(),
                         unpack(inst->x, problems.back()->space),
                         [inst](const Solution& s) {
                           const Eigen::VectorXd xt = s.best_x.at("x_tilde").flat();
                           return attack_distance(*inst, xt) - inst->epsilon <= 1e-6 &&
                                  attack_margin(*inst, xt) > 0.0;
                         }});
    }
  } else {
    throw UnknownSuiteError("unknown suite '" + suite + "'");
  }

  std::vector<std::function<BenchRow()>> tasks;
  tasks.reserve(jobs.size());
  for (const auto& job : jobs) {
    tasks.push_back([&job, &opts]() {
      BenchRow row;
      row.problem = job.problem;
      row.restart = job.restart;
      row.mode = job.mode;
      row.seed = job.seed;
      row.sol = solve(*job.prob, opts, job.x0, job.gmode);
      row.success = job.success(row.sol);
      return row;
    });
  }
  const std::vector<BenchRow> rows = parallel_map(tasks);

  std::filesystem::create_directories(out_dir);
  write_bench_csv(out_dir + "/bench.csv", rows);

  int successes = 0;
  for (const auto& r : rows) successes += r.success ? 1 : 0;
  std::cout << "rows=" << rows.size() << " successes=" << successes << '\n';
  return 0;
}

int cmd_gradcheck(const std::string& problem, int trials, double h, std::uint64_t seed) {
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (!(h > 0.0)) throw ConfigError("h must be > 0");

  ProblemSpec spec;
  spec.name = problem;
  BuiltProblem bp = build_problem(spec, seed);

  double max_err = 0.0;
  for (int t = 0; t < trials; ++t) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(t) + 1);
    const VarStruct point = bp.sample_point(rng);
    const double err = gradient_check(bp.problem.program, bp.problem.space, point, h);
    max_err = std::max(max_err, err);
  }
  std::cout << "problem=" << problem << " trials=" << trials << " h=" << fmt(h)
            << " max_rel_error=" << fmt(max_err) << '\n';
  return max_err <= 1e-5 ? 0 : 1;
}

int run(int argc, const char* const* argv) {
  CLI::App app{"nonsmooth constrained optimization harness"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "print help");  // keep -h free for gradcheck --h

  auto* solve_cmd = app.add_subcommand("solve", "solve a configured problem");
  std::string config_path;
  std::string solve_out;
  std::uint64_t solve_seed = 0;
  bool solve_seed_set = false;
  solve_cmd->add_option("--config", config_path, "JSON run configuration")->required();
  solve_cmd->add_option("--out", solve_out, "output directory (default ./out)");
  solve_cmd->add_option("--seed", solve_seed, "override the config seed")
      ->each([&](const std::string&) { solve_seed_set = true; });

  auto* bench_cmd = app.add_subcommand("bench", "restart benchmark");
  std::string suite;
  int restarts = 1;
  std::uint64_t bench_seed = 0;
  ProblemSpec bench_params;
  std::string bench_out = "out";
  bench_cmd->add_option("--suite", suite, "odl | analytic | attack")->required();
  bench_cmd->add_option("--restarts", restarts, "number of restarts")->required();
  bench_cmd->add_option("--n", bench_params.n, "odl rows");
  bench_cmd->add_option("--m", bench_params.m, "odl columns");
  bench_cmd->add_option("--theta", bench_params.theta, "odl sparsity");
  bench_cmd->add_option("--seed", bench_seed, "base seed");
  bench_cmd->add_option("--out", bench_out, "output directory");

  auto* grad_cmd = app.add_subcommand("gradcheck", "gradients vs central differences");
  std::string grad_problem;
  int trials = 20;
  double h = 1e-6;
  std::uint64_t grad_seed = 0;
  grad_cmd->add_option("--problem", grad_problem, "problem name")->required();
  grad_cmd->add_option("--trials", trials, "random points per output");
  grad_cmd->add_option("--h", h, "central difference step");
  grad_cmd->add_option("--seed", grad_seed, "base seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << e.what() << '\n';
    return 64;
  }

  try {
    if (solve_cmd->parsed())
      return cmd_solve(config_path,
                       solve_out.empty() ? std::nullopt : std::optional(solve_out),
                       solve_seed_set ? std::optional(solve_seed) : std::nullopt);
    if (bench_cmd->parsed())
      return cmd_bench(suite, restarts, bench_seed, bench_params, bench_out);
    if (grad_cmd->parsed()) return cmd_gradcheck(grad_problem, trials, h, grad_seed);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 64;
  } catch (const Error& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 70;
  }
  return 64;
}

}  // namespace nsopt::cli
