#pragma once

#include <Eigen/Core>

#include "nsopt/errors.hpp"

namespace nsopt {

/// Convex QP in standard form:
///   min 0.5 x'Px + q'x   s.t.  l <= Ax <= u
/// P must be symmetric positive semidefinite (within 1e-12); entries of
/// l/u may be -inf/+inf. Equality constraints are rows with l == u.
struct QPProblem {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd A;  // m x n; m == 0 means unconstrained
  Eigen::VectorXd l;
  Eigen::VectorXd u;
};

enum class QPStatus { Solved, MaxIter, PrimalInfeasible };

const char* to_string(QPStatus s);

/// Operator-splitting settings. Fixed step rho, over-relaxation alpha,
/// diagonal regularization sigma on P, absolute/relative convergence
/// tolerances, and a terminal polishing step that solves the
/// equality-constrained KKT system on constraints within
/// `polish_active_tol` of their bound.
struct QPSettings {
  double rho = 0.1;
  double alpha = 1.6;
  double sigma = 1e-6;
  double eps_abs = 1e-8;
  double eps_rel = 1e-8;
  double eps_infeasible = 1e-10;
  int max_iter = 20000;
  bool polish = true;
  double polish_active_tol = 1e-6;
};

struct QPSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd y;  // multipliers for the rows of A
  QPStatus status = QPStatus::MaxIter;
  int iterations = 0;
  double primal_res = 0.0;  // ||clamp(Ax,l,u) - Ax||_inf
  double dual_res = 0.0;    // ||Px + q + A'y||_inf
  double comp_res = 0.0;    // complementarity residual

  double objective(const QPProblem& p) const {
    return 0.5 * x.dot(p.P * x) + p.q.dot(x);
  }
};

/// ADMM solve. Deterministic for fixed inputs and settings. Throws
/// DimensionMismatchError for inconsistent sizes and NonPsdError when the
/// Cholesky factorization of P + sigma*I fails.
QPSolution solve_qp(const QPProblem& p, const QPSettings& settings = {});

/// Minimum-norm point of the convex hull of the columns of G:
///   min_sigma ||G sigma||_2  s.t.  sigma >= 0, sum sigma = 1.
/// Lowered to the standard form above with P = G'G. sigma is clamped to
/// the simplex on return.
struct SimplexResult {
  Eigen::VectorXd sigma;
  double value = 0.0;
};

SimplexResult solve_simplex_qp(const Eigen::MatrixXd& G, const QPSettings& settings = {});

/// Exhaustive test oracle: enumerates all 3^m lower/upper/inactive
/// assignments, solves each equality-constrained KKT system, and returns
/// the feasible candidate with the lowest objective. Requires a bounded
/// problem and m <= 20 (throws TooLargeError otherwise); throws
/// InfeasibleError when no assignment is feasible.
QPSolution active_set_oracle(const QPProblem& p);

}  // namespace nsopt
