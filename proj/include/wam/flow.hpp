#pragma once

// Assignment flow for MAP inference: multiplicative updates
//
//   W_i <- W_i^(1+alpha) * exp(-h grad_i E_tau(W)) / <., .>
//
// starting at the barycenter, where grad E_tau is assembled from per-edge
// Wasserstein messages. alpha > 0 adds entropy descent which drives every row
// to a simplex vertex.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "wam/model.hpp"
#include "wam/simplex.hpp"
#include "wam/sinkhorn.hpp"

namespace wam {

struct FlowParams {
  double tau = 0.1;                // smoothing of the local distances
  double alpha = 0.5;              // rounding strength
  double step = 0.5;               // h
  double entropy_threshold = 1e-3; // on H(W) / (m log n)
  std::size_t max_iters = 1000;
  double epsilon_floor = default_epsilon_floor;
  SinkhornOptions sinkhorn;
  bool warm_start = true;
  bool record_energies = false;    // E_tau and rounded energy in the trace
  std::size_t threads = 1;
  double divergence_limit = 1e6;   // abort when |grad| exceeds this
};

/// Throws InvalidInput if a parameter is out of range.
void validate(const FlowParams& params);

struct FlowRecord {
  std::size_t iteration = 0;
  double normalized_entropy = 0.0;
  std::optional<double> smoothed_energy;
  std::optional<double> rounded_energy;
  double max_row_change = 0.0;  // max_i ||W_i^(k) - W_i^(k-1)||_1
  std::size_t sinkhorn_iterations = 0;  // summed over edges, gradient solve only
  std::size_t newton_edges = 0;         // edges that needed the Newton phase
};

using FlowTrace = std::vector<FlowRecord>;

enum class FlowStatus { converged, max_iters };

struct FlowResult {
  Labeling labeling;
  AssignmentMatrix assignment;
  FlowTrace trace;
  FlowStatus status = FlowStatus::max_iters;
  std::size_t iterations = 0;
};

/// Called once per edge solve with (flow iteration, edge, marginal residual).
using EdgeObserver = std::function<void(std::size_t, std::size_t, double)>;

// Flow state bound to one model: per-edge Gibbs kernels and warm-start
// potentials. Not thread-safe; parallelism is internal.
class AssignmentFlow {
 public:
  AssignmentFlow(const GraphicalModel& model, FlowParams params);

  const GraphicalModel& model() const { return model_; }
  const FlowParams& params() const { return params_; }

  /// grad E_tau(W), one tangent row per node.
  Matrix gradient(const AssignmentMatrix& w);

  /// E_tau(W) = sum_i <theta_i, W_i> + sum_e d_e(W_i, W_j). The per-edge
  /// distances stay available through last_distances().
  double smoothed_energy(const AssignmentMatrix& w);

  /// One multiplicative update followed by the positivity safeguard.
  AssignmentMatrix step(const AssignmentMatrix& w);

  FlowResult solve(const std::optional<AssignmentMatrix>& initial = std::nullopt);

  std::span<const double> last_distances() const { return distances_; }
  void set_edge_observer(EdgeObserver observer) { observer_ = std::move(observer); }
  void reset_warm_start();

 private:
  void solve_edges(const AssignmentMatrix& w, bool want_distance);
  std::size_t total_edge_iterations() const;
  std::size_t total_newton_edges() const;

  const GraphicalModel& model_;
  FlowParams params_;
  std::vector<GibbsKernel> kernels_;
  std::vector<DualPotentials> warm_;
  std::vector<double> messages_;   // per edge: grad1 (n) then grad2 (n)
  std::vector<double> distances_;  // per edge, from the last solve
  std::vector<std::size_t> edge_iters_;
  std::vector<unsigned char> edge_newton_;
  std::size_t iteration_ = 0;
  EdgeObserver observer_;
};

/// grad E_tau via one Sinkhorn solve per edge (no warm start).
Matrix energy_gradient(const GraphicalModel& model, const AssignmentMatrix& w, double tau,
                       const SinkhornOptions& options = {});

/// Gradient in the form for symmetric pairwise matrices: each node sums
/// grad_1 d(W_i, W_j) over its neighbors, solving every edge from both
/// sides. Throws InvalidInput if some pairwise matrix is not symmetric.
Matrix energy_gradient_symmetric(const GraphicalModel& model, const AssignmentMatrix& w, double tau,
                                 const SinkhornOptions& options = {});

double smoothed_energy(const GraphicalModel& model, const AssignmentMatrix& w, double tau,
                       const SinkhornOptions& options = {});

/// Row-wise W^(1+alpha) exp(-h grad) / Z, without safeguard.
AssignmentMatrix multiplicative_update(const AssignmentMatrix& w, const Matrix& gradient, double alpha,
                                       double step);

AssignmentMatrix flow_step(const GraphicalModel& model, const AssignmentMatrix& w, const FlowParams& params);

FlowResult solve(const GraphicalModel& model, const FlowParams& params,
                 const std::optional<AssignmentMatrix>& initial = std::nullopt);

/// Per-row argmax; ties go to the smallest label.
Labeling round_assignment(const AssignmentMatrix& w);

double rounded_energy(const GraphicalModel& model, const AssignmentMatrix& w);

}  // namespace wam
