#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nsopt/problem.hpp"
#include "nsopt/rng.hpp"
#include "nsopt/solver.hpp"

namespace nsopt {

// ---------------------------------------------------------------------------
// Orthogonal dictionary learning:
//   min_q (1/m) ||q'Y||_1   s.t.  ||q||_2 = 1
// ---------------------------------------------------------------------------

struct ODLData {
  Eigen::MatrixXd Y;      // n x m data matrix
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  double theta = 0.0;     // sparsity rate used in generation
  Eigen::MatrixXd truth;  // orthogonal mixing matrix, for scoring only
};

/// Y = Q X with Q a seeded random orthogonal matrix (QR of a standard
/// Gaussian matrix, signs fixed so the factorization is unique) and X a
/// Bernoulli(theta)-Gaussian sparse matrix. Deterministic per seed.
ODLData gen_odl_data(Eigen::Index n, Eigen::Index m, double theta, std::uint64_t seed);

/// Builds the problem over variable space {"q": [n,1]} with one equality
/// constraint q'q - 1. Hand-coded gradients ((1/m) Y sign(Y'q) and 2q)
/// are attached for the consistency harness; they use the same tensor
/// kernels as the recorded trace and match its gradients bit for bit
/// wherever no entry of Y'q is zero.
Problem odl_problem(const ODLData& data);

/// True iff the solve recovered a signed column of the mixing matrix:
/// max_i |(truth' q)_i| >= 1 - tol and |q'q - 1| <= 1e-6.
bool odl_success(const Solution& sol, const ODLData& data, double tol);

// ---------------------------------------------------------------------------
// Analytic problems with known optima
// ---------------------------------------------------------------------------

struct SuiteEntry {
  std::string name;
  Problem problem;
  VarStruct x0;  // the suite's fixed starting point
  double f_star = 0.0;
  std::optional<FlatVector> x_star;
};

/// Four fixed problems: an unconstrained quadratic, the projection onto
/// the unit disk of (2,2), a nonsmooth L1 fit with an exact solution, and
/// the linear objective on the unit circle.
std::vector<SuiteEntry> analytic_suite();

// ---------------------------------------------------------------------------
// Desk-scale perceptual attack on fixed ReLU networks:
//   min_xt -L(classifier(xt), y)  s.t.  ||phi(x) - phi(xt)||_2 <= eps
// with the margin loss L(z, y) = max_{i != y} z_i - z_y.
// ---------------------------------------------------------------------------

/// Frozen fully connected network with ReLU between layers and a linear
/// last layer.
struct TinyNet {
  std::vector<std::pair<Eigen::MatrixXd, Eigen::VectorXd>> layers;

  Eigen::VectorXd forward(const Eigen::VectorXd& in) const;
};

/// Weights drawn from seeded Gaussians scaled by 1/sqrt(fan_in).
TinyNet make_tiny_net(const std::vector<Eigen::Index>& dims, Rng& rng);

struct AttackInstance {
  Eigen::VectorXd x;   // clean input (correctly classified)
  int y = 0;           // true label
  double epsilon = 0.5;
  TinyNet classifier;   // 8 -> 16 -> 3
  TinyNet feature_net;  // 8 -> 8 -> 8
  std::uint64_t seed = 0;
};

/// Margin loss of the classifier at x_tilde; negative means still
/// correctly classified.
double attack_margin(const AttackInstance& inst, const Eigen::VectorXd& x_tilde);

/// Feature distance ||phi(x) - phi(x_tilde)||_2.
double attack_distance(const AttackInstance& inst, const Eigen::VectorXd& x_tilde);

/// Deterministic sampling search for a feasible point with margin at
/// least `min_margin`. A returned point is a direct existence
/// certificate; it does not touch any solver code.
std::optional<Eigen::VectorXd> attack_witness(const AttackInstance& inst,
                                              double min_margin = 1e-2,
                                              int samples_per_radius = 8000);

/// Seeded instances, filtered so the clean point is classified with some
/// margin to spare and a feasible adversarial point is known to exist.
std::vector<AttackInstance> make_attack_instances(int count, std::uint64_t base_seed);

/// Variable space {"x_tilde": shape of x}; objective -L on the classifier
/// logits; one inequality constraint ||phi(x) - phi(xt)||_2 - eps <= 0.
Problem toy_attack_problem(const AttackInstance& inst);

}  // namespace nsopt
