#include "nsopt/problem.hpp"

namespace nsopt {

Evaluation eval_all(const Problem& p, const FlatVector& x, GradientMode mode) {
  if (x.size() != p.space.total_dim())
    throw LengthMismatchError("eval_all: point has the wrong dimension");

  const VarStruct vars = unpack(x, p.space);
  const Recording rec = evaluate_and_record(p.program, p.space, vars);
  if (static_cast<Eigen::Index>(rec.ci_ids.size()) != p.n_ineq ||
      static_cast<Eigen::Index>(rec.ce_ids.size()) != p.n_eq)
    throw ShapeMismatchError("eval_all: program produced an unexpected constraint count");

  Evaluation ev;
  ev.x = x;
  ev.f = rec.f();
  ev.ci = rec.ci();
  ev.ce = rec.ce();

  const Eigen::Index n = p.space.total_dim();
  if (mode == GradientMode::Analytic && p.analytic) {
    GradientSet gs = (*p.analytic)(vars);
    ev.grad_f = std::move(gs.grad_f);
    ev.grad_ci = std::move(gs.grad_ci);
    ev.grad_ce = std::move(gs.grad_ce);
  } else {
    ev.grad_f = rec.gradient(rec.f_id, p.space);
    ev.grad_ci.resize(n, p.n_ineq);
    for (Eigen::Index j = 0; j < p.n_ineq; ++j)
      ev.grad_ci.col(j) = rec.gradient(rec.ci_ids[static_cast<std::size_t>(j)], p.space);
    ev.grad_ce.resize(n, p.n_eq);
    for (Eigen::Index j = 0; j < p.n_eq; ++j)
      ev.grad_ce.col(j) = rec.gradient(rec.ce_ids[static_cast<std::size_t>(j)], p.space);
  }

  double v_total = 0.0;
  double v_max = 0.0;
  for (Eigen::Index i = 0; i < ev.ci.size(); ++i) {
    const double viol = ev.ci[i] > 0.0 ? ev.ci[i] : 0.0;
    v_total += viol;
    v_max = std::max(v_max, viol);
  }
  double eq_total = 0.0;
  for (Eigen::Index j = 0; j < ev.ce.size(); ++j) {
    const double viol = std::abs(ev.ce[j]);
    eq_total += viol;
    v_max = std::max(v_max, viol);
  }
  ev.v_total = v_total + eq_total;
  ev.v_max = v_max;
  return ev;
}

double penalty_value(double mu, const Evaluation& eval) {
  return mu * eval.f + eval.v_total;
}

FlatVector penalty_gradient(double mu, const Evaluation& eval) {
  FlatVector g = FlatVector::Zero(eval.x.size());
  for (Eigen::Index j = eval.ce.size() - 1; j >= 0; --j) {
    const double s = kernels::sign_of(eval.ce[j]);
    if (s != 0.0) g += s * eval.grad_ce.col(j);
  }
  for (Eigen::Index i = eval.ci.size() - 1; i >= 0; --i) {
    if (eval.ci[i] > 0.0) g += eval.grad_ci.col(i);
  }
  g += mu * eval.grad_f;
  return g;
}

}  // namespace nsopt
