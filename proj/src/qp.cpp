#include "nsopt/qp.hpp"

#include <algorithm>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/LU>

namespace nsopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void validate(const QPProblem& p) {
  const Eigen::Index n = p.P.rows();
  if (p.P.cols() != n || p.q.size() != n)
    throw DimensionMismatchError("qp: P/q dimensions inconsistent");
  if (p.A.rows() != p.l.size() || p.A.rows() != p.u.size())
    throw DimensionMismatchError("qp: A/l/u dimensions inconsistent");
  if (p.A.rows() > 0 && p.A.cols() != n)
    throw DimensionMismatchError("qp: A column count does not match P");
  if (n > 0 && (p.P - p.P.transpose()).lpNorm<Eigen::Infinity>() > 1e-12)
    throw NonPsdError("qp: P is not symmetric");
}

struct Residuals {
  double primal;
  double dual;
  double comp;
};

Residuals kkt_residuals(const QPProblem& p, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& y) {
  Residuals r{0.0, 0.0, 0.0};
  const Eigen::VectorXd ax = p.A.rows() > 0 ? Eigen::VectorXd(p.A * x) : Eigen::VectorXd();
  for (Eigen::Index i = 0; i < ax.size(); ++i) {
    const double clamped = std::min(std::max(ax[i], p.l[i]), p.u[i]);
    r.primal = std::max(r.primal, std::abs(clamped - ax[i]));
    const double yp = std::max(y[i], 0.0);
    const double yn = std::min(y[i], 0.0);
    const double cu = std::isfinite(p.u[i]) ? yp * std::abs(p.u[i] - ax[i]) : yp;
    const double cl = std::isfinite(p.l[i]) ? -yn * std::abs(ax[i] - p.l[i]) : -yn;
    r.comp = std::max(r.comp, std::max(cu, cl));
  }
  Eigen::VectorXd dual = p.P * x + p.q;
  if (p.A.rows() > 0) dual += p.A.transpose() * y;
  r.dual = dual.size() > 0 ? dual.lpNorm<Eigen::Infinity>() : 0.0;
  return r;
}

/// Equality-constrained KKT solve on the rows of A listed in `active`,
/// pinned at bound value b. Returns false if the saddle system is
/// singular or inconsistent.
bool kkt_solve(const Eigen::MatrixXd& P, const Eigen::VectorXd& q,
               const Eigen::MatrixXd& A, const std::vector<Eigen::Index>& active,
               const Eigen::VectorXd& b, Eigen::VectorXd& x_out,
               Eigen::VectorXd& lambda_out) {
  const Eigen::Index n = P.rows();
  const Eigen::Index k = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + k, n + k);
  K.topLeftCorner(n, n) = P;
  for (Eigen::Index j = 0; j < k; ++j) {
    K.block(n + j, 0, 1, n) = A.row(active[static_cast<std::size_t>(j)]);
    K.block(0, n + j, n, 1) = A.row(active[static_cast<std::size_t>(j)]).transpose();
  }
  Eigen::VectorXd rhs(n + k);
  rhs.head(n) = -q;
  rhs.tail(k) = b;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  if (!lu.isInvertible()) {
    // fall through to a least-squares attempt; verify consistency below
  }
  const Eigen::VectorXd sol = lu.solve(rhs);
  if ((K * sol - rhs).lpNorm<Eigen::Infinity>() > 1e-8 * (1.0 + rhs.lpNorm<Eigen::Infinity>()))
    return false;
  if (!sol.allFinite()) return false;
  x_out = sol.head(n);
  lambda_out = sol.tail(k);
  return true;
}

/// Re-solves the KKT system restricted to near-active constraints and
/// keeps the result when it improves the worst KKT residual.
void polish(const QPProblem& p, const QPSettings& s, QPSolution& sol) {
  const Eigen::Index m = p.A.rows();
  const Eigen::VectorXd ax = p.A * sol.x;
  std::vector<Eigen::Index> active;
  std::vector<double> bvals;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (std::isfinite(p.l[i]) && std::abs(ax[i] - p.l[i]) <= s.polish_active_tol) {
      active.push_back(i);
      bvals.push_back(p.l[i]);
    } else if (std::isfinite(p.u[i]) && std::abs(ax[i] - p.u[i]) <= s.polish_active_tol) {
      active.push_back(i);
      bvals.push_back(p.u[i]);
    }
  }
  Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(bvals.data(),
                                                        static_cast<Eigen::Index>(bvals.size()));
  Eigen::VectorXd xp, lambda;
  if (!kkt_solve(p.P, p.q, p.A, active, b, xp, lambda)) return;
  Eigen::VectorXd yp = Eigen::VectorXd::Zero(m);
  for (std::size_t j = 0; j < active.size(); ++j) yp[active[j]] = lambda[static_cast<Eigen::Index>(j)];

  const Residuals before = kkt_residuals(p, sol.x, sol.y);
  const Residuals after = kkt_residuals(p, xp, yp);
  const double worst_before = std::max(before.primal, before.dual);
  const double worst_after = std::max(after.primal, after.dual);
  if (worst_after < worst_before) {
    sol.x = xp;
    sol.y = yp;
  }
}

}  // namespace

const char* to_string(QPStatus s) {
  switch (s) {
    case QPStatus::Solved: return "Solved";
    case QPStatus::MaxIter: return "MaxIter";
    case QPStatus::PrimalInfeasible: return "PrimalInfeasible";
  }
  return "?";
}

QPSolution solve_qp(const QPProblem& p, const QPSettings& s) {
  validate(p);
  const Eigen::Index n = p.P.rows();
  const Eigen::Index m = p.A.rows();

  QPSolution sol;
  sol.x = Eigen::VectorXd::Zero(n);
  sol.y = Eigen::VectorXd::Zero(m);

  for (Eigen::Index i = 0; i < m; ++i) {
    if (p.l[i] > p.u[i] || p.l[i] == kInf || p.u[i] == -kInf) {
      sol.status = QPStatus::PrimalInfeasible;
      return sol;
    }
  }

  const Eigen::MatrixXd P = 0.5 * (p.P + p.P.transpose());
  {
    Eigen::LLT<Eigen::MatrixXd> psd_check(
        P + s.sigma * Eigen::MatrixXd::Identity(n, n));
    if (psd_check.info() != Eigen::Success)
      throw NonPsdError("qp: Cholesky of P + sigma*I failed");
  }

  if (m == 0) {
    // unconstrained: direct stationary point
    Eigen::LLT<Eigen::MatrixXd> llt(P);
    if (llt.info() == Eigen::Success) {
      sol.x = llt.solve(-p.q);
    } else {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(P);
      sol.x = ldlt.solve(-p.q);
    }
    const Residuals r = kkt_residuals(p, sol.x, sol.y);
    sol.primal_res = r.primal;
    sol.dual_res = r.dual;
    sol.comp_res = r.comp;
    sol.status = r.dual <= s.eps_abs && sol.x.allFinite() ? QPStatus::Solved : QPStatus::MaxIter;
    return sol;
  }

  const double rho = s.rho;
  const double alpha = s.alpha;

  Eigen::MatrixXd K = P + s.sigma * Eigen::MatrixXd::Identity(n, n) +
                      rho * p.A.transpose() * p.A;
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success)
    throw NonPsdError("qp: Cholesky of the reduced KKT matrix failed");

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd y_prev = y;

  bool converged = false;
  bool infeasible = false;
  int iter = 0;
  for (; iter < s.max_iter; ++iter) {
    const Eigen::VectorXd rhs = s.sigma * x - p.q + p.A.transpose() * (rho * z - y);
    const Eigen::VectorXd xt = llt.solve(rhs);
    const Eigen::VectorXd zt = p.A * xt;

    x = alpha * xt + (1.0 - alpha) * x;
    const Eigen::VectorXd zrelax = alpha * zt + (1.0 - alpha) * z;
    const Eigen::VectorXd w = zrelax + y / rho;
    z = w.cwiseMax(p.l).cwiseMin(p.u);
    y = y + rho * (zrelax - z);

    const Eigen::VectorXd ax = p.A * x;
    const double rp = (ax - z).lpNorm<Eigen::Infinity>();
    const Eigen::VectorXd px = P * x;
    const Eigen::VectorXd aty = p.A.transpose() * y;
    const double rd = (px + p.q + aty).lpNorm<Eigen::Infinity>();
    const double eps_p =
        s.eps_abs + s.eps_rel * std::max(ax.lpNorm<Eigen::Infinity>(), z.lpNorm<Eigen::Infinity>());
    const double eps_d = s.eps_abs + s.eps_rel * std::max({px.lpNorm<Eigen::Infinity>(),
                                                           p.q.size() ? p.q.lpNorm<Eigen::Infinity>() : 0.0,
                                                           aty.lpNorm<Eigen::Infinity>()});
    if (rp <= eps_p && rd <= eps_d) {
      converged = true;
      ++iter;
      break;
    }

    if ((iter + 1) % 25 == 0) {
      const Eigen::VectorXd dy = y - y_prev;
      const double dy_norm = dy.lpNorm<Eigen::Infinity>();
      if (dy_norm > 0.0) {
        const double aty_dy = (p.A.transpose() * dy).lpNorm<Eigen::Infinity>();
        double support = 0.0;
        bool certificate = true;
        for (Eigen::Index i = 0; i < m; ++i) {
          const double dp = std::max(dy[i], 0.0);
          const double dn = std::min(dy[i], 0.0);
          if (std::isfinite(p.u[i])) support += p.u[i] * dp;
          else if (dp > s.eps_infeasible * dy_norm) { certificate = false; break; }
          if (std::isfinite(p.l[i])) support += p.l[i] * dn;
          else if (dn < -s.eps_infeasible * dy_norm) { certificate = false; break; }
        }
        if (certificate && aty_dy <= s.eps_infeasible * dy_norm &&
            support <= -s.eps_infeasible * dy_norm) {
          infeasible = true;
          ++iter;
          break;
        }
      }
      y_prev = y;
    }
  }

  sol.x = x;
  sol.y = y;
  sol.iterations = iter;

  if (infeasible) {
    sol.status = QPStatus::PrimalInfeasible;
    return sol;
  }

  if (s.polish) polish(p, s, sol);

  const Residuals r = kkt_residuals(p, sol.x, sol.y);
  sol.primal_res = r.primal;
  sol.dual_res = r.dual;
  sol.comp_res = r.comp;
  sol.status = (r.primal <= s.eps_abs && r.dual <= s.eps_abs) ? QPStatus::Solved
                                                              : QPStatus::MaxIter;
  (void)converged;
  return sol;
}

SimplexResult solve_simplex_qp(const Eigen::MatrixXd& G, const QPSettings& s) {
  const Eigen::Index k = G.cols();
  if (k < 1) throw DimensionMismatchError("simplex qp: need at least one column");

  const Eigen::MatrixXd P = G.transpose() * G;
  SimplexResult result;

  if (k == 1) {
    // the simplex is a single point
    result.sigma = Eigen::VectorXd::Ones(1);
  } else {
    QPProblem qp;
    qp.P = P;
    qp.q = Eigen::VectorXd::Zero(k);
    qp.A = Eigen::MatrixXd::Zero(k + 1, k);
    qp.A.row(0).setOnes();
    qp.A.bottomRows(k) = Eigen::MatrixXd::Identity(k, k);
    qp.l = Eigen::VectorXd::Zero(k + 1);
    qp.l[0] = 1.0;
    qp.u = Eigen::VectorXd::Constant(k + 1, kInf);
    qp.u[0] = 1.0;
    const QPSolution sol = solve_qp(qp, s);
    result.sigma = sol.x.cwiseMax(0.0);
    const double total = result.sigma.sum();
    if (total > 1e-8) result.sigma /= total;
    else result.sigma.setConstant(1.0 / static_cast<double>(k));
  }

  result.value = std::sqrt(std::max(0.0, result.sigma.dot(P * result.sigma)));
  return result;
}

QPSolution active_set_oracle(const QPProblem& p) {
  validate(p);
  const Eigen::Index n = p.P.rows();
  const Eigen::Index m = p.A.rows();
  if (m > 20) throw TooLargeError("active-set oracle: more than 20 constraints");
  for (Eigen::Index i = 0; i < m; ++i)
    if (p.l[i] > p.u[i] || p.l[i] == kInf || p.u[i] == -kInf)
      throw InfeasibleError("active-set oracle: empty feasible set");

  const Eigen::MatrixXd P = 0.5 * (p.P + p.P.transpose());
  const double feas_tol = 1e-8;

  bool found = false;
  double best_obj = kInf;
  QPSolution best;
  best.x = Eigen::VectorXd::Zero(n);
  best.y = Eigen::VectorXd::Zero(m);

  std::vector<int> assign(static_cast<std::size_t>(m), 0);  // 0 inactive, 1 lower, 2 upper
  long long total = 1;
  for (Eigen::Index i = 0; i < m; ++i) total *= 3;

  for (long long code = 0; code < total; ++code) {
    long long c = code;
    bool valid = true;
    for (Eigen::Index i = 0; i < m; ++i) {
      assign[static_cast<std::size_t>(i)] = static_cast<int>(c % 3);
      c /= 3;
      if (assign[static_cast<std::size_t>(i)] == 1 && !std::isfinite(p.l[i])) valid = false;
      if (assign[static_cast<std::size_t>(i)] == 2 && !std::isfinite(p.u[i])) valid = false;
    }
    if (!valid) continue;

    std::vector<Eigen::Index> active;
    std::vector<double> bvals;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (assign[static_cast<std::size_t>(i)] == 1) { active.push_back(i); bvals.push_back(p.l[i]); }
      if (assign[static_cast<std::size_t>(i)] == 2) { active.push_back(i); bvals.push_back(p.u[i]); }
    }
    Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(
        bvals.data(), static_cast<Eigen::Index>(bvals.size()));
    Eigen::VectorXd x, lambda;
    if (!kkt_solve(P, p.q, p.A, active, b, x, lambda)) continue;

    const Eigen::VectorXd ax = p.A * x;
    bool feasible = true;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (ax[i] < p.l[i] - feas_tol || ax[i] > p.u[i] + feas_tol) { feasible = false; break; }
    }
    if (!feasible) continue;

    const double obj = 0.5 * x.dot(P * x) + p.q.dot(x);
    if (!found || obj < best_obj - 1e-15) {
      found = true;
      best_obj = obj;
      best.x = x;
      best.y.setZero();
      for (std::size_t j = 0; j < active.size(); ++j)
        best.y[active[j]] = lambda[static_cast<Eigen::Index>(j)];
    }
  }

  if (!found) throw InfeasibleError("active-set oracle: no feasible active set");
  const Residuals r = kkt_residuals(p, best.x, best.y);
  best.primal_res = r.primal;
  best.dual_res = r.dual;
  best.comp_res = r.comp;
  best.status = QPStatus::Solved;
  return best;
}

}  // namespace nsopt
