#include "nsopt/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

namespace nsopt {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void SolverOptions::validate() const {
  if (max_iter < 1) throw ConfigError("max_iter must be >= 1");
  if (!(opt_tol > 0.0)) throw ConfigError("opt_tol must be > 0");
  if (!(viol_ineq_tol > 0.0) || !(viol_eq_tol > 0.0))
    throw ConfigError("violation tolerances must be > 0");
  if (!(mu_init >= 0.0)) throw ConfigError("mu_init must be >= 0");
  if (!(mu_shrink > 0.0 && mu_shrink < 1.0)) throw ConfigError("mu_shrink must be in (0,1)");
  if (!(steering_c_v > 0.0 && steering_c_v < 1.0))
    throw ConfigError("steering_c_v must be in (0,1)");
  if (steering_max_rounds < 0) throw ConfigError("steering_max_rounds must be >= 0");
  if (!(wolfe_c1 > 0.0 && wolfe_c1 < wolfe_c2 && wolfe_c2 < 1.0))
    throw ConfigError("wolfe constants must satisfy 0 < c1 < c2 < 1");
  if (linesearch_max_evals < 1) throw ConfigError("linesearch_max_evals must be >= 1");
  if (grad_cache_size < 0) throw ConfigError("grad_cache_size must be >= 0");
  if (!(grad_cache_radius > 0.0)) throw ConfigError("grad_cache_radius must be > 0");
  if (!(curvature_skip_tol >= 0.0)) throw ConfigError("curvature_skip_tol must be >= 0");
}

int SolverOptions::effective_cache_size(Eigen::Index n) const {
  if (grad_cache_size > 0) return grad_cache_size;
  return static_cast<int>(std::min<Eigen::Index>(n + 1, 10));
}

const char* to_string(SolveCode c) {
  switch (c) {
    case SolveCode::Optimal: return "Optimal";
    case SolveCode::MaxIter: return "MaxIter";
    case SolveCode::LineSearchFailure: return "LineSearchFailure";
    case SolveCode::NonFinite: return "NonFinite";
  }
  return "?";
}

void GradientCache::push(const FlatVector& x, const FlatVector& g) {
  entries_.emplace_back(x, g);
  while (static_cast<int>(entries_.size()) > capacity_) entries_.pop_front();
}

Eigen::MatrixXd GradientCache::stack_near(const FlatVector& x, double radius) const {
  std::vector<const FlatVector*> cols;
  for (const auto& [xi, gi] : entries_)
    if ((xi - x).norm() <= radius) cols.push_back(&gi);
  Eigen::MatrixXd G(x.size(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) G.col(static_cast<Eigen::Index>(j)) = *cols[j];
  return G;
}

StationarityResult stationarity_measure(const GradientCache& cache, const FlatVector& x,
                                        double radius, const QPSettings& qp_settings) {
  const Eigen::MatrixXd G = cache.stack_near(x, radius);
  const SimplexResult r = solve_simplex_qp(G, qp_settings);
  return StationarityResult{r.value, r.sigma};
}

BfgsResult bfgs_update(const Eigen::MatrixXd& W, const FlatVector& s, const FlatVector& y,
                       const SolverOptions& opts) {
  if (s.size() != W.rows() || y.size() != W.rows())
    throw DimensionMismatchError("bfgs_update: dimension mismatch");
  const double sy = s.dot(y);
  if (sy <= opts.curvature_skip_tol * s.norm() * y.norm()) return {W, true};

  const double rho = 1.0 / sy;
  const Eigen::VectorXd wy = W * y;
  const double ywy = y.dot(wy);
  Eigen::MatrixXd out = W - rho * (s * wy.transpose() + wy * s.transpose()) +
                        (rho * rho * ywy + rho) * (s * s.transpose());
  out = 0.5 * (out + out.transpose());
  return {std::move(out), false};
}

LineSearchResult line_search_weak_wolfe(const std::function<LineProbe(double)>& probe,
                                        double phi0, double dphi0, const SolverOptions& opts) {
  if (dphi0 >= 0.0) throw NotDescentError("line search: directional derivative is not negative");

  double lo = 0.0;
  double hi = kInf;
  double t = 1.0;
  for (int evals = 1; evals <= opts.linesearch_max_evals; ++evals) {
    const LineProbe pr = probe(t);
    if (pr.phi > phi0 + opts.wolfe_c1 * t * dphi0) {
      hi = t;
    } else if (pr.dphi < opts.wolfe_c2 * dphi0) {
      lo = t;
    } else {
      return LineSearchResult{t, evals, pr};
    }
    t = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * t;
  }
  throw LineSearchFailureError("line search: evaluation budget exhausted");
}

namespace {

/// Slack-variable lowering of the steering QP. Variables are [d; s; r]
/// with s the inequality slacks and r the equality slacks.
struct SteeringQP {
  QPProblem qp;
  Eigen::Index n, p, q;

  SteeringQP(const Evaluation& ev, const Eigen::MatrixXd& h_inv) {
    n = ev.x.size();
    p = ev.ci.size();
    q = ev.ce.size();
    const Eigen::Index nv = n + p + q;
    const Eigen::Index m = 2 * p + 2 * q;

    qp.P = Eigen::MatrixXd::Zero(nv, nv);
    qp.P.topLeftCorner(n, n) = h_inv;
    qp.q = Eigen::VectorXd::Zero(nv);
    qp.q.segment(n, p).setOnes();
    qp.q.segment(n + p, q).setOnes();

    qp.A = Eigen::MatrixXd::Zero(m, nv);
    qp.l = Eigen::VectorXd::Constant(m, -kInf);
    qp.u = Eigen::VectorXd::Constant(m, kInf);
    Eigen::Index row = 0;
    for (Eigen::Index k = 0; k < p; ++k) {
      qp.A.block(row, 0, 1, n) = -ev.grad_ci.col(k).transpose();
      qp.A(row, n + k) = 1.0;
      qp.l[row] = ev.ci[k];
      ++row;
      qp.A(row, n + k) = 1.0;
      qp.l[row] = 0.0;
      ++row;
    }
    for (Eigen::Index j = 0; j < q; ++j) {
      qp.A.block(row, 0, 1, n) = -ev.grad_ce.col(j).transpose();
      qp.A(row, n + p + j) = 1.0;
      qp.l[row] = ev.ce[j];
      ++row;
      qp.A.block(row, 0, 1, n) = ev.grad_ce.col(j).transpose();
      qp.A(row, n + p + j) = 1.0;
      qp.l[row] = -ev.ce[j];
      ++row;
    }
  }

  FlatVector solve(const Evaluation& ev, double mu, const QPSettings& settings) {
    qp.q.head(n) = mu * ev.grad_f;
    const QPSolution sol = solve_qp(qp, settings);
    if (sol.status == QPStatus::PrimalInfeasible || !sol.x.allFinite())
      throw NonPsdError("steering QP unsolvable");
    return sol.x.head(n);
  }
};

/// Linearized total violation at step d.
double predicted_violation(const Evaluation& ev, const FlatVector& d) {
  double v = 0.0;
  for (Eigen::Index k = 0; k < ev.ci.size(); ++k)
    v += std::max(0.0, ev.ci[k] + ev.grad_ci.col(k).dot(d));
  for (Eigen::Index j = 0; j < ev.ce.size(); ++j)
    v += std::abs(ev.ce[j] + ev.grad_ce.col(j).dot(d));
  return v;
}

}  // namespace

SteeringResult steering_direction(const Evaluation& ev, double mu, const Eigen::MatrixXd& W,
                                  const SolverOptions& opts) {
  SteeringResult out;
  out.mu_new = mu;

  if (ev.ci.size() == 0 && ev.ce.size() == 0) {
    // the QP reduces to the quasi-Newton step on mu*f
    out.d = -(W * penalty_gradient(mu, ev));
    return out;
  }

  try {
    Eigen::LLT<Eigen::MatrixXd> llt(W);
    if (llt.info() != Eigen::Success) throw NonPsdError("W is not positive definite");
    Eigen::MatrixXd h_inv = llt.solve(Eigen::MatrixXd::Identity(W.rows(), W.cols()));
    h_inv = 0.5 * (h_inv + h_inv.transpose());

    SteeringQP steering(ev, h_inv);
    out.d = steering.solve(ev, mu, opts.qp);
    out.predicted_reduction = ev.v_total - predicted_violation(ev, out.d);
    if (ev.v_total == 0.0) return out;

    const FlatVector d0 = steering.solve(ev, 0.0, opts.qp);
    const double ref_reduction = ev.v_total - predicted_violation(ev, d0);

    while (out.predicted_reduction < opts.steering_c_v * ref_reduction &&
           out.rounds < opts.steering_max_rounds) {
      out.mu_new *= opts.mu_shrink;
      ++out.rounds;
      out.d = steering.solve(ev, out.mu_new, opts.qp);
      out.predicted_reduction = ev.v_total - predicted_violation(ev, out.d);
    }
    out.exhausted = out.predicted_reduction < opts.steering_c_v * ref_reduction;
    return out;
  } catch (const Error&) {
    out.fallback = true;
    out.mu_new = mu;
    out.d = -(W * penalty_gradient(mu, ev));
    out.predicted_reduction = ev.v_total - predicted_violation(ev, out.d);
    return out;
  }
}

bool feasible_within_tol(const Evaluation& eval, const SolverOptions& opts) {
  for (Eigen::Index i = 0; i < eval.ci.size(); ++i)
    if (eval.ci[i] > opts.viol_ineq_tol) return false;
  for (Eigen::Index j = 0; j < eval.ce.size(); ++j)
    if (std::abs(eval.ce[j]) > opts.viol_eq_tol) return false;
  return true;
}

namespace {

struct BestTracker {
  bool set = false;
  bool feasible = false;
  FlatVector x;
  double f = 0.0, v_total = 0.0, v_max = 0.0;

  void consider(const Evaluation& ev, bool feas) {
    bool take = false;
    if (!set) take = true;
    else if (feas && !feasible) take = true;
    else if (feas == feasible) take = feas ? ev.f < f : ev.v_max < v_max;
    if (take) {
      set = true;
      feasible = feas;
      x = ev.x;
      f = ev.f;
      v_total = ev.v_total;
      v_max = ev.v_max;
    }
  }
};

}  // namespace

Solution solve(const Problem& p, const SolverOptions& opts, const VarStruct& x0,
               GradientMode mode, const IterationObserver& observer) {
  opts.validate();
  const Eigen::Index n = p.dim();

  Solution sol;
  GradientCache cache(opts.effective_cache_size(n));
  BestTracker best;

  FlatVector x = pack(x0, p.space);
  Evaluation ev;
  long fn_evals = 0;
  double mu = opts.mu_init;

  auto finish = [&](SolveCode code, double stationarity) {
    sol.code = code;
    sol.stationarity = stationarity;
    sol.fn_evals = fn_evals;
    sol.final_x = x;
    sol.final_cache.assign(cache.entries().begin(), cache.entries().end());
    if (best.set) {
      sol.best_x = unpack(best.x, p.space);
      sol.f = best.f;
      sol.v_total = best.v_total;
      sol.v_max = best.v_max;
    } else {
      sol.best_x = x0;
    }
    return sol;
  };

  try {
    ev = eval_all(p, x, mode);
    ++fn_evals;
  } catch (const NonFiniteValueError&) {
    return finish(SolveCode::NonFinite, kInf);
  }
  best.consider(ev, feasible_within_tol(ev, opts));
  cache.push(x, penalty_gradient(mu, ev));

  StationarityResult stat =
      stationarity_measure(cache, x, opts.grad_cache_radius, opts.qp);
  if (feasible_within_tol(ev, opts) && stat.value <= opts.opt_tol)
    return finish(SolveCode::Optimal, stat.value);

  Eigen::MatrixXd W = Eigen::MatrixXd::Identity(n, n);

  for (int k = 1; k <= opts.max_iter; ++k) {
    SteeringResult steer = steering_direction(ev, mu, W, opts);
    if (steer.mu_new != mu) {
      mu = steer.mu_new;
      cache.clear();
      cache.push(x, penalty_gradient(mu, ev));
    }

    FlatVector g = penalty_gradient(mu, ev);
    FlatVector d = steer.d;
    double dphi0 = g.dot(d);
    if (!(dphi0 < 0.0)) {
      d = -(W * g);
      steer.fallback = true;
      dphi0 = g.dot(d);
      if (!(dphi0 < 0.0)) return finish(SolveCode::LineSearchFailure, stat.value);
    }
    const double phi0 = penalty_value(mu, ev);

    Evaluation trial_ev;
    auto probe = [&](double t) -> LineProbe {
      const FlatVector xt = x + t * d;
      trial_ev = eval_all(p, xt, mode);
      ++fn_evals;
      const FlatVector gt = penalty_gradient(mu, trial_ev);
      // line-search probes straddle kinks; their gradients sharpen the
      // stationarity measure at no extra evaluation cost
      cache.push(xt, gt);
      return LineProbe{penalty_value(mu, trial_ev), gt.dot(d)};
    };

    LineSearchResult ls;
    try {
      ls = line_search_weak_wolfe(probe, phi0, dphi0, opts);
    } catch (const NonFiniteValueError&) {
      return finish(SolveCode::NonFinite, stat.value);
    } catch (const NotDescentError&) {
      return finish(SolveCode::LineSearchFailure, stat.value);
    } catch (const LineSearchFailureError&) {
      return finish(SolveCode::LineSearchFailure, stat.value);
    }

    const FlatVector x_new = x + ls.t * d;
    const FlatVector s = ls.t * d;
    const FlatVector g_new = penalty_gradient(mu, trial_ev);
    const FlatVector y = g_new - g;

    BfgsResult up = bfgs_update(W, s, y, opts);
    W = std::move(up.W);

    x = x_new;
    ev = trial_ev;
    best.consider(ev, feasible_within_tol(ev, opts));
    // the accepted point is the last probe, so its gradient is cached already
    stat = stationarity_measure(cache, x, opts.grad_cache_radius, opts.qp);

    IterateRecord rec;
    rec.k = k;
    rec.f = ev.f;
    rec.v_total = ev.v_total;
    rec.v_max = ev.v_max;
    rec.mu = mu;
    rec.stationarity = stat.value;
    rec.step = ls.t;
    rec.fn_evals = fn_evals;
    rec.phi0 = phi0;
    rec.dphi0 = dphi0;
    rec.phi_t = ls.at_t.phi;
    rec.dphi_t = ls.at_t.dphi;
    rec.steering_fallback = steer.fallback;
    rec.steering_exhausted = steer.exhausted;
    rec.steering_rounds = steer.rounds;
    sol.iterate_log.push_back(rec);

    if (observer) observer(IterationInfo{k, W, s, y, up.skipped});

    if (feasible_within_tol(ev, opts) && stat.value <= opts.opt_tol)
      return finish(SolveCode::Optimal, stat.value);
    if (k >= opts.max_iter) return finish(SolveCode::MaxIter, stat.value);
  }
  return finish(SolveCode::MaxIter, stat.value);
}

}  // namespace nsopt
