#pragma once

// Entropy-regularized optimal transport between the two endpoint marginals of
// an edge:
//
//   d(mu1, mu2) = min <Theta, M> - tau H(M)   s.t.  M 1 = mu1, M^T 1 = mu2.
//
// The optimal coupling is diag(v1) K diag(v2) with K = exp(-Theta / tau); the
// dual potentials nu_k = tau log v_k, projected onto the tangent space, are
// the gradients of d with respect to mu1 and mu2 ("Wasserstein messages").

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "wam/dense.hpp"

namespace wam {

enum class SinkhornMode {
  plain,       // alternating scaling of v1, v2 in the probability domain
  log_domain,  // log-sum-exp updates of the potentials
  automatic,   // log_domain when tau < 0.02 max|Theta|, plain otherwise
};

struct SinkhornOptions {
  double tol = 1e-8;  // L1 marginal violation
  std::size_t max_iters = 10000;
  SinkhornMode mode = SinkhornMode::plain;
  // Scaling iterations before switching to Newton's method on the semi-dual
  // (0 = never). Scaling contracts slowly when the coupling is nearly
  // deterministic; Newton converges quadratically there.
  std::size_t newton_after = 2;
  std::size_t newton_max_iters = 200;
};

struct DualPotentials {
  std::vector<double> nu1;
  std::vector<double> nu2;
};

// Precomputed per-edge data for repeated solves at fixed tau.
class GibbsKernel {
 public:
  GibbsKernel(const Matrix& cost, double tau, SinkhornMode mode = SinkhornMode::plain);

  const Matrix& cost() const { return cost_; }
  const Matrix& kernel() const { return kernel_; }
  double tau() const { return tau_; }
  bool log_domain() const { return log_domain_; }
  std::size_t size() const { return cost_.rows(); }

 private:
  Matrix cost_;
  Matrix kernel_;
  double tau_;
  bool log_domain_;
};

struct ScalingSolution {
  DualPotentials duals;  // gauge: mean(nu1) == mean(nu2)
  std::size_t iterations = 0;  // scaling plus Newton iterations
  double residual = 0.0;  // ||M1 - mu1||_1 + ||M^T 1 - mu2||_1
  bool used_newton = false;
};

/// Core solver. `warm` seeds the second potential; `coupling`, when given,
/// receives the converged coupling. Throws ConvergenceError when max_iters is
/// exhausted and StabilityError on kernel underflow or non-finite scalings.
ScalingSolution solve_scaling(const GibbsKernel& kernel, std::span<const double> mu1,
                              std::span<const double> mu2, const SinkhornOptions& options,
                              const DualPotentials* warm = nullptr, Matrix* coupling = nullptr);

struct SinkhornResult {
  Matrix coupling;
  DualPotentials duals;
  std::size_t iterations = 0;
  double residual = 0.0;
};

SinkhornResult sinkhorn(const Matrix& cost, std::span<const double> mu1, std::span<const double> mu2,
                        double tau, const SinkhornOptions& options = {},
                        const DualPotentials* warm_start = nullptr);

/// exp((nu1_i + nu2_j - Theta_ij) / tau).
Matrix coupling_from_duals(const Matrix& cost, const DualPotentials& duals, double tau);

/// <Theta, M> - tau H(M).
double primal_objective(const Matrix& cost, const Matrix& coupling, double tau);

/// <mu, nu> - tau sum exp((A^T nu - Theta) / tau). At the optimum this equals
/// the smoothed distance minus tau (the coupling has unit mass).
double dual_objective(const Matrix& cost, std::span<const double> mu1, std::span<const double> mu2,
                      const DualPotentials& duals, double tau);

double smoothed_edge_distance(const Matrix& cost, std::span<const double> mu1, std::span<const double> mu2,
                              double tau, const SinkhornOptions& options = {});

struct WassersteinMessage {
  std::vector<double> grad1;  // gradient w.r.t. mu1, tangent
  std::vector<double> grad2;  // gradient w.r.t. mu2, tangent
  double distance = 0.0;
  std::optional<Matrix> coupling;
  std::size_t sinkhorn_iters = 0;
};

WassersteinMessage wasserstein_message(const Matrix& cost, std::span<const double> mu1,
                                       std::span<const double> mu2, double tau,
                                       const SinkhornOptions& options = {}, bool keep_coupling = false);

}  // namespace wam
