#include "nsopt/examples.hpp"

#include <cmath>

#include <Eigen/QR>

namespace nsopt {

ODLData gen_odl_data(Eigen::Index n, Eigen::Index m, double theta, std::uint64_t seed) {
  if (n < 1 || m < n) throw ConfigError("odl: need m >= n >= 1");
  if (!(theta > 0.0 && theta < 1.0)) throw ConfigError("odl: theta must be in (0,1)");

  Rng rng = Rng::stream(seed, 0);
  Eigen::MatrixXd gauss(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) gauss(i, j) = rng.gaussian();

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  Eigen::MatrixXd Q = qr.householderQ();
  const Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j)
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);

  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (rng.uniform() < theta) X(i, j) = rng.gaussian();

  ODLData data;
  data.Y = Q * X;
  data.n = n;
  data.m = m;
  data.theta = theta;
  data.truth = Q;
  return data;
}

Problem odl_problem(const ODLData& data) {
  const Eigen::Index n = data.n;
  const double inv_m = 1.0 / static_cast<double>(data.m);
  const Tensor y_tensor = Tensor::matrix(data.Y);
  const Tensor yt_tensor = Tensor::matrix(data.Y.transpose());

  Problem p;
  p.space = VarSpace::define({{"q", {n, 1}}});
  p.n_ineq = 0;
  p.n_eq = 1;
  p.program = [yt_tensor, inv_m](Tape& tape, const TracedVars& v) {
    TracedTensor q = v["q"];
    TracedTensor yt{&tape, tape.constant(yt_tensor)};
    TracedTensor f = inv_m * norm1(matmul(yt, q));
    TracedTensor ce = sqnorm2(q) - 1.0;
    return ProgramOutputs{f, {}, {ce}};
  };
  p.analytic = [y_tensor, yt_tensor, inv_m, n](const VarStruct& vars) {
    const Tensor& q = vars.at("q");
    const Tensor z = kernels::matmul(yt_tensor, q);
    const Tensor w = kernels::smul(inv_m, kernels::sign(z));
    GradientSet gs;
    gs.grad_f = kernels::matmul(y_tensor, w).flat();
    gs.grad_ci.resize(n, 0);
    gs.grad_ce = kernels::smul(2.0, q).flat();
    return gs;
  };
  return p;
}

bool odl_success(const Solution& sol, const ODLData& data, double tol) {
  const Eigen::VectorXd q = sol.best_x.at("q").flat();
  if (std::abs(q.squaredNorm() - 1.0) > 1e-6) return false;
  const Eigen::VectorXd corr = data.truth.transpose() * q;
  return corr.cwiseAbs().maxCoeff() >= 1.0 - tol;
}

namespace {

Problem quadratic_problem(const Eigen::VectorXd& d, const Eigen::VectorXd& a) {
  Problem p;
  const Eigen::Index n = d.size();
  p.space = VarSpace::define({{"x", {n}}});
  const Tensor dt = Tensor::vector(d);
  const Tensor at = Tensor::vector(a);
  p.program = [dt, at](Tape& tape, const TracedVars& v) {
    TracedTensor x = v["x"];
    TracedTensor dc{&tape, tape.constant(dt)};
    TracedTensor ac{&tape, tape.constant(at)};
    TracedTensor u = x - ac;
    TracedTensor f = 0.5 * dot(dc, u * u);
    return ProgramOutputs{f, {}, {}};
  };
  return p;
}

}  // namespace

std::vector<SuiteEntry> analytic_suite() {
  std::vector<SuiteEntry> suite;

  {
    // 0.5 sum d_i (x_i - a_i)^2
    Eigen::VectorXd d(5), a(5);
    d << 1.0, 2.0, 3.0, 4.0, 5.0;
    a << 1.0, -0.5, 2.0, 0.3, -1.0;
    SuiteEntry e;
    e.name = "quadratic";
    e.problem = quadratic_problem(d, a);
    e.x0.values.emplace("x", Tensor({5}));
    e.f_star = 0.0;
    e.x_star = a;
    suite.push_back(std::move(e));
  }

  {
    // min ||x - (2,2)||^2  s.t.  ||x||^2 <= 1; optimum is the radial
    // projection, f* = (2 sqrt(2) - 1)^2
    SuiteEntry e;
    e.name = "disk";
    Problem p;
    p.space = VarSpace::define({{"x", {2}}});
    p.n_ineq = 1;
    Eigen::VectorXd target(2);
    target << 2.0, 2.0;
    const Tensor tt = Tensor::vector(target);
    p.program = [tt](Tape& tape, const TracedVars& v) {
      TracedTensor x = v["x"];
      TracedTensor c{&tape, tape.constant(tt)};
      TracedTensor f = sqnorm2(x - c);
      TracedTensor ci = sqnorm2(x) - 1.0;
      return ProgramOutputs{f, {ci}, {}};
    };
    e.problem = std::move(p);
    Eigen::VectorXd x0(2);
    x0 << 0.1, 0.0;
    e.x0.values.emplace("x", Tensor::vector(x0));
    e.f_star = (2.0 * std::sqrt(2.0) - 1.0) * (2.0 * std::sqrt(2.0) - 1.0);
    Eigen::VectorXd xs(2);
    xs << std::sqrt(2.0) / 2.0, std::sqrt(2.0) / 2.0;
    e.x_star = xs;
    suite.push_back(std::move(e));
  }

  {
    // min ||Ax - b||_1 with nonsingular A and b = A x_target, so f* = 0
    SuiteEntry e;
    e.name = "l1";
    const Eigen::Index n = 4;
    Rng rng = Rng::stream(20240017, 0);
    Eigen::MatrixXd A(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) A(i, j) = rng.gaussian();
    Eigen::VectorXd xt(n);
    xt << 1.0, -2.0, 0.5, 3.0;
    const Eigen::VectorXd b = A * xt;
    Problem p;
    p.space = VarSpace::define({{"x", {n}}});
    const Tensor at = Tensor::matrix(A);
    const Tensor bt = Tensor::vector(b);
    p.program = [at, bt](Tape& tape, const TracedVars& v) {
      TracedTensor x = v["x"];
      TracedTensor ac{&tape, tape.constant(at)};
      TracedTensor bc{&tape, tape.constant(bt)};
      TracedTensor f = norm1(matmul(ac, x) - bc);
      return ProgramOutputs{f, {}, {}};
    };
    e.problem = std::move(p);
    e.x0.values.emplace("x", Tensor({n}));
    e.f_star = 0.0;
    e.x_star = xt;
    suite.push_back(std::move(e));
  }

  {
    // min x1 + x2  s.t.  x1^2 + x2^2 = 1; optimum (-s, -s) with
    // s = sqrt(2)/2, f* = -sqrt(2)
    SuiteEntry e;
    e.name = "circle";
    Problem p;
    p.space = VarSpace::define({{"x", {2}}});
    p.n_eq = 1;
    p.program = [](Tape& tape, const TracedVars& v) {
      (void)tape;
      TracedTensor x = v["x"];
      TracedTensor f = sum(x);
      TracedTensor ce = sqnorm2(x) - 1.0;
      return ProgramOutputs{f, {}, {ce}};
    };
    e.problem = std::move(p);
    Eigen::VectorXd x0(2);
    x0 << 0.8, -0.2;
    e.x0.values.emplace("x", Tensor::vector(x0));
    e.f_star = -std::sqrt(2.0);
    Eigen::VectorXd xs(2);
    xs << -std::sqrt(2.0) / 2.0, -std::sqrt(2.0) / 2.0;
    e.x_star = xs;
    suite.push_back(std::move(e));
  }

  return suite;
}

Eigen::VectorXd TinyNet::forward(const Eigen::VectorXd& in) const {
  Eigen::VectorXd h = in;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = layers[l].first * h + layers[l].second;
    if (l + 1 < layers.size()) h = h.cwiseMax(0.0);
  }
  return h;
}

TinyNet make_tiny_net(const std::vector<Eigen::Index>& dims, Rng& rng) {
  TinyNet net;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const Eigen::Index fan_in = dims[l];
    const Eigen::Index fan_out = dims[l + 1];
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Eigen::MatrixXd W(fan_out, fan_in);
    for (Eigen::Index i = 0; i < fan_out; ++i)
      for (Eigen::Index j = 0; j < fan_in; ++j) W(i, j) = scale * rng.gaussian();
    Eigen::VectorXd b(fan_out);
    for (Eigen::Index i = 0; i < fan_out; ++i) b[i] = scale * rng.gaussian();
    net.layers.emplace_back(std::move(W), std::move(b));
  }
  return net;
}

double attack_margin(const AttackInstance& inst, const Eigen::VectorXd& x_tilde) {
  const Eigen::VectorXd z = inst.classifier.forward(x_tilde);
  double other = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < z.size(); ++i)
    if (i != inst.y) other = std::max(other, z[i]);
  return other - z[inst.y];
}

double attack_distance(const AttackInstance& inst, const Eigen::VectorXd& x_tilde) {
  return (inst.feature_net.forward(inst.x) - inst.feature_net.forward(x_tilde)).norm();
}

std::optional<Eigen::VectorXd> attack_witness(const AttackInstance& inst, double min_margin,
                                              int samples_per_radius) {
  Rng rng = Rng::stream(inst.seed, 7777);
  const Eigen::Index n = inst.x.size();
  const double radii[] = {0.25, 0.5, 0.75, 1.0, 1.5, 2.0};
  for (double radius : radii) {
    for (int i = 0; i < samples_per_radius; ++i) {
      const Eigen::VectorXd dir = rng.unit_sphere(n);
      const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(n));
      const Eigen::VectorXd cand = inst.x + r * dir;
      if (attack_distance(inst, cand) <= inst.epsilon - 1e-9 &&
          attack_margin(inst, cand) >= min_margin)
        return cand;
    }
  }
  return std::nullopt;
}

std::vector<AttackInstance> make_attack_instances(int count, std::uint64_t base_seed) {
  std::vector<AttackInstance> out;
  for (std::uint64_t candidate = 0; candidate < 1000 && static_cast<int>(out.size()) < count;
       ++candidate) {
    Rng rng = Rng::stream(base_seed, candidate);
    AttackInstance inst;
    inst.classifier = make_tiny_net({8, 16, 3}, rng);
    inst.feature_net = make_tiny_net({8, 8, 8}, rng);
    inst.x = rng.gaussian_vector(8);
    inst.epsilon = 0.5;
    inst.seed = candidate;

    const Eigen::VectorXd z = inst.classifier.forward(inst.x);
    Eigen::Index y;
    z.maxCoeff(&y);
    inst.y = static_cast<int>(y);

    const double clean_margin = attack_margin(inst, inst.x);
    if (clean_margin > -0.02 || clean_margin < -1.0) continue;
    if (!attack_witness(inst)) continue;
    out.push_back(std::move(inst));
  }
  if (static_cast<int>(out.size()) < count)
    throw ConfigError("attack: could not generate enough instances");
  return out;
}

Problem toy_attack_problem(const AttackInstance& inst) {
  const Eigen::Index n = inst.x.size();
  Problem p;
  p.space = VarSpace::define({{"x_tilde", {n}}});
  p.n_ineq = 1;
  p.n_eq = 0;

  const Tensor w1c = Tensor::matrix(inst.classifier.layers[0].first);
  const Tensor b1c = Tensor::vector(inst.classifier.layers[0].second);
  const Tensor w2c = Tensor::matrix(inst.classifier.layers[1].first);
  const Tensor b2c = Tensor::vector(inst.classifier.layers[1].second);
  const Tensor w1f = Tensor::matrix(inst.feature_net.layers[0].first);
  const Tensor b1f = Tensor::vector(inst.feature_net.layers[0].second);
  const Tensor w2f = Tensor::matrix(inst.feature_net.layers[1].first);
  const Tensor b2f = Tensor::vector(inst.feature_net.layers[1].second);
  const Tensor phi_x = Tensor::vector(inst.feature_net.forward(inst.x));

  const Eigen::Index n_logits = inst.classifier.layers[1].first.rows();
  Eigen::VectorXd ey = Eigen::VectorXd::Zero(n_logits);
  ey[inst.y] = 1.0;
  std::vector<Eigen::VectorXd> others;
  for (Eigen::Index i = 0; i < n_logits; ++i) {
    if (static_cast<int>(i) == inst.y) continue;
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n_logits);
    e[i] = 1.0;
    others.push_back(std::move(e));
  }
  const Tensor ey_t = Tensor::vector(ey);
  const Tensor e1_t = Tensor::vector(others.at(0));
  const Tensor e2_t = Tensor::vector(others.at(1));
  const double eps = inst.epsilon;

  p.program = [=](Tape& tape, const TracedVars& v) {
    TracedTensor xt = v["x_tilde"];
    auto c = [&tape](const Tensor& t) { return TracedTensor{&tape, tape.constant(t)}; };

    TracedTensor h = relu(matmul(c(w1c), xt) + c(b1c));
    TracedTensor z = matmul(c(w2c), h) + c(b2c);
    TracedTensor zy = dot(z, c(ey_t));
    TracedTensor zo = max(dot(z, c(e1_t)), dot(z, c(e2_t)));
    TracedTensor f = zy - zo;  // minus the margin loss

    TracedTensor ph = relu(matmul(c(w1f), xt) + c(b1f));
    TracedTensor pz = matmul(c(w2f), ph) + c(b2f);
    TracedTensor ci = norm2(pz - c(phi_x)) - eps;
    return ProgramOutputs{f, {ci}, {}};
  };
  return p;
}

}  // namespace nsopt
