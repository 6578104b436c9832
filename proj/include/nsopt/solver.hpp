#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "nsopt/problem.hpp"
#include "nsopt/qp.hpp"

namespace nsopt {

/// All solver constants, exposed with conventional defaults.
/// grad_cache_size == 0 means "auto": min(n + 1, 10).
struct SolverOptions {
  int max_iter = 1000;
  double opt_tol = 1e-8;
  double viol_ineq_tol = 1e-6;
  double viol_eq_tol = 1e-6;
  double mu_init = 1.0;
  double mu_shrink = 0.5;
  double steering_c_v = 0.1;
  int steering_max_rounds = 10;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.5;
  int linesearch_max_evals = 50;
  int grad_cache_size = 0;
  double grad_cache_radius = 1e-4;
  double curvature_skip_tol = 1e-10;
  std::uint64_t rng_seed = 0;  // recorded in run artifacts; the loop itself draws no randomness

  QPSettings qp;

  void validate() const;
  int effective_cache_size(Eigen::Index n) const;
};

enum class SolveCode { Optimal, MaxIter, LineSearchFailure, NonFinite };
const char* to_string(SolveCode c);

/// Ring buffer of (point, penalty gradient) pairs gathered at the current
/// penalty parameter. Flushed whenever mu changes.
class GradientCache {
public:
  explicit GradientCache(int capacity) : capacity_(capacity) {}

  void clear() { entries_.clear(); }
  void push(const FlatVector& x, const FlatVector& g);
  std::size_t size() const { return entries_.size(); }

  /// Gradients taken within `radius` of x, stacked as columns. The entry
  /// at x itself is always present by construction.
  Eigen::MatrixXd stack_near(const FlatVector& x, double radius) const;

  const std::deque<std::pair<FlatVector, FlatVector>>& entries() const { return entries_; }

private:
  int capacity_;
  std::deque<std::pair<FlatVector, FlatVector>> entries_;
};

/// Minimum norm over convex combinations of the cached gradients.
struct StationarityResult {
  double value = 0.0;
  Eigen::VectorXd sigma;
};

StationarityResult stationarity_measure(const GradientCache& cache, const FlatVector& x,
                                        double radius, const QPSettings& qp_settings);

/// Inverse-BFGS update of W with a curvature guard: when
/// s'y <= curvature_skip_tol * |s||y| the update is skipped and W is
/// returned unchanged. The result is symmetrized and satisfies W'y = s.
struct BfgsResult {
  Eigen::MatrixXd W;
  bool skipped = false;
};

BfgsResult bfgs_update(const Eigen::MatrixXd& W, const FlatVector& s, const FlatVector& y,
                       const SolverOptions& opts);

/// One probe of the line-search function: value and directional derivative.
struct LineProbe {
  double phi = 0.0;
  double dphi = 0.0;
};

struct LineSearchResult {
  double t = 0.0;
  int evals = 0;
  LineProbe at_t;
};

/// Weak-Wolfe line search on a 1-D function:
///   Armijo  phi(t) <= phi(0) + c1 t phi'(0)
///   Wolfe   phi'(t) >= c2 phi'(0)
/// Starts at t = 1, doubles until the Wolfe condition brackets, then
/// bisects. Throws NotDescentError if phi'(0) >= 0 and
/// LineSearchFailureError when the evaluation budget runs out.
LineSearchResult line_search_weak_wolfe(const std::function<LineProbe(double)>& probe,
                                        double phi0, double dphi0, const SolverOptions& opts);

/// Search direction from the steering QP
///   min_d  mu g'd + 0.5 d' W^-1 d + sum relu(ci + gi'd) + sum |ce + ge'd|
/// (slack-variable lowering). When the predicted violation reduction is
/// less than steering_c_v times that of the mu = 0 direction, mu is
/// shrunk and the QP re-solved, at most steering_max_rounds times.
struct SteeringResult {
  FlatVector d;
  double mu_new = 0.0;
  double predicted_reduction = 0.0;
  bool fallback = false;    // QP failed; d = -W * penalty gradient
  bool exhausted = false;   // rounds ran out with the test still failing
  int rounds = 0;
};

SteeringResult steering_direction(const Evaluation& eval, double mu, const Eigen::MatrixXd& W,
                                  const SolverOptions& opts);

/// Per-iteration record; the first eight fields are what iterates.csv
/// stores, the rest back the invariant checks.
struct IterateRecord {
  int k = 0;
  double f = 0.0;
  double v_total = 0.0;
  double v_max = 0.0;
  double mu = 0.0;
  double stationarity = 0.0;
  double step = 0.0;
  long fn_evals = 0;  // cumulative

  double phi0 = 0.0, dphi0 = 0.0, phi_t = 0.0, dphi_t = 0.0;
  bool steering_fallback = false;
  bool steering_exhausted = false;
  int steering_rounds = 0;
};

/// Observer hook for tests; called once per completed iteration with the
/// post-update state.
struct IterationInfo {
  int k = 0;
  const Eigen::MatrixXd& W;
  const FlatVector& s;
  const FlatVector& y;
  bool bfgs_skipped = false;
};
using IterationObserver = std::function<void(const IterationInfo&)>;

struct Solution {
  VarStruct best_x;
  double f = 0.0;
  double v_total = 0.0;
  double v_max = 0.0;
  double stationarity = 0.0;
  SolveCode code = SolveCode::MaxIter;
  std::vector<IterateRecord> iterate_log;
  long fn_evals = 0;

  // terminal state, kept so the reported stationarity can be reproduced
  FlatVector final_x;
  std::vector<std::pair<FlatVector, FlatVector>> final_cache;
};

bool feasible_within_tol(const Evaluation& eval, const SolverOptions& opts);

/// BFGS-SQP with penalty steering and weak-Wolfe line search.
/// Deterministic for fixed problem, options, starting point and mode.
Solution solve(const Problem& p, const SolverOptions& opts, const VarStruct& x0,
               GradientMode mode = GradientMode::Autodiff,
               const IterationObserver& observer = nullptr);

}  // namespace nsopt
