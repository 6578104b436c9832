#pragma once

#include <functional>
#include <optional>

#include "nsopt/autodiff.hpp"
#include "nsopt/varspace.hpp"

namespace nsopt {

/// Gradients of every output at a point, packed over the variable space.
/// Columns of grad_ci / grad_ce correspond to individual constraints.
struct GradientSet {
  FlatVector grad_f;
  Eigen::MatrixXd grad_ci;  // n x n_ineq
  Eigen::MatrixXd grad_ce;  // n x n_eq
};

/// Optional hand-coded gradient path, used to cross-check the recorded
/// gradients. Receives the unpacked point.
using AnalyticGradientFn = std::function<GradientSet(const VarStruct&)>;

enum class GradientMode { Autodiff, Analytic };

/// An optimization problem: minimize f(x) subject to ci(x) <= 0 and
/// ce(x) = 0, all defined by one tensor program over a variable space.
struct Problem {
  VarSpace space;
  TensorProgram program;
  Eigen::Index n_ineq = 0;
  Eigen::Index n_eq = 0;
  std::optional<AnalyticGradientFn> analytic;

  Eigen::Index dim() const { return space.total_dim(); }
};

/// Everything the solver needs at one point: values, gradients, and the
/// violation measures
///   v_total = sum max(0, ci) + sum |ce|
///   v_max   = max(max(0, ci), |ce|, 0).
struct Evaluation {
  FlatVector x;
  double f = 0.0;
  FlatVector grad_f;
  Eigen::VectorXd ci;
  Eigen::MatrixXd grad_ci;
  Eigen::VectorXd ce;
  Eigen::MatrixXd grad_ce;
  double v_total = 0.0;
  double v_max = 0.0;
};

/// One forward trace plus one backward pass per scalar output (or the
/// analytic gradient path when requested).
Evaluation eval_all(const Problem& p, const FlatVector& x,
                    GradientMode mode = GradientMode::Autodiff);

/// Exact penalty phi_mu(x) = mu * f(x) + v_total(x). The objective is the
/// scaled term, so steering only ever lowers mu toward feasibility.
double penalty_value(double mu, const Evaluation& eval);

/// Subgradient of phi_mu with the fixed kink conventions sign(0) = 0 and
/// ci = 0 contributing nothing. Accumulation order mirrors a reverse-mode
/// sweep of the composed expression (equality terms first, then
/// inequalities, objective last) so the two paths agree bitwise.
FlatVector penalty_gradient(double mu, const Evaluation& eval);

}  // namespace nsopt
