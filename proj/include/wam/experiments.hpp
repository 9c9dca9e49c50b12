#pragma once

// Experiment harness: the triangle study, Monte-Carlo parameter sweeps over
// random triangle models, image labeling with Potts / non-Potts priors, and
// numerical gradient checks.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wam/flow.hpp"
#include "wam/image.hpp"
#include "wam/model.hpp"
#include "wam/oracles.hpp"

namespace wam {

/// Binary triangle model whose local polytope optimum is fractional
/// (mu = 1/2 at every node) while the discrete optimum is (1, 0, 0).
GraphicalModel triangle_model();

struct TriangleFlowRow {
  double alpha = 0.0;
  std::array<double, 3> mu{};  // W_i(1) per node
  std::size_t iterations = 0;
  FlowStatus status = FlowStatus::max_iters;
  Labeling labeling;
};

struct TriangleReport {
  BruteForceResult brute_force;
  K3LpResult marginal;
  K3LpResult local;
  std::vector<TriangleFlowRow> flows;
};

/// Runs the flow on triangle_model() once per alpha, other parameters from
/// `base`.
TriangleReport run_triangle(const FlowParams& base, std::span<const double> alphas);
void print_triangle_report(std::ostream& out, const TriangleReport& report);

struct SweepConfig {
  std::size_t sample_count = 10000;
  std::uint64_t seed = 1;
  std::vector<double> tau_grid;
  std::vector<double> alpha_grid;
  double step = 0.5;
  double entropy_threshold = 1e-3;
  std::size_t max_iters = 600;
  double success_rel_tol = 0.01;
  SinkhornOptions sinkhorn;
  std::size_t threads = 1;
};

struct SweepRecord {
  double tau = 0.0;
  double alpha = 0.0;
  double success_rate = 0.0;    // fraction with |E - E*| <= rel_tol |E*|
  double avg_iterations = 0.0;  // over all samples, timeouts count max_iters
  double timeout_rate = 0.0;
  std::size_t failures = 0;     // samples aborted by a numerical error
};

/// |energy - optimum| <= rel_tol |optimum|, or <= 1e-6 when |optimum| < 1e-6.
bool energy_success(double energy, double optimum, double rel_tol);

/// Sample s of the sweep is sample_k3_model(Rng(seed, s)) for every grid
/// point. Records are in tau-major order.
std::vector<SweepRecord> run_sweep_k3(const SweepConfig& config);
void write_sweep_csv(std::ostream& out, std::span<const SweepRecord> records);

struct VertexStatistics {
  std::size_t samples = 0;
  std::vector<std::size_t> counts;  // one per k3_local_vertices() entry
  double fraction(std::size_t v) const { return static_cast<double>(counts[v]) / static_cast<double>(samples); }
};

/// How often each local polytope vertex is the LP optimum over random models.
VertexStatistics k3_vertex_statistics(std::size_t samples, std::uint64_t seed, std::size_t threads = 1);
void write_vertex_statistics_csv(std::ostream& out, const VertexStatistics& stats);

// Synthetic scene with the five direction labels. The left half holds
// horizontal bands alternating top (0) and bottom (1), the right half
// vertical bands alternating left (3) and right (4); consecutive bands are
// separated by 2-pixel center (2) lines, so the similar-colored pairs {0,1}
// and {3,4} never touch. A fixed fraction of the pixels, drawn without
// replacement, is replaced by the color of a uniformly sampled label.
struct FiveRegionBenchmark {
  std::size_t width = 0;
  std::size_t height = 0;
  Palette palette;
  std::vector<std::size_t> truth;
  Image noisy;
};

Palette direction_palette();
/// Potts-like costs 0.1 with 1.0 for the transitions {0,1} and {3,4}.
Matrix direction_prior();
FiveRegionBenchmark make_five_region_benchmark(std::size_t width, std::size_t height, double corrupt_fraction,
                                               std::uint64_t seed);

double labeling_accuracy(std::span<const std::size_t> truth, std::span<const std::size_t> labels);
/// Number of N4-adjacent pixel pairs labeled {0,1} or {3,4}.
std::size_t count_forbidden_transitions(std::span<const std::size_t> labels, std::size_t width, std::size_t height);

FlowResult label_image(const Image& image, const Palette& palette, double rho, Neighborhood neighborhood,
                       const Matrix& prior, const FlowParams& params);

/// Parses "potts:<w>" or reads an n x n matrix of reals from a file.
Matrix parse_prior(const std::string& spec, std::size_t labels);

struct GradcheckReport {
  std::size_t trials = 0;
  double max_message_error = 0.0;   // directional derivative of one edge distance
  double max_gradient_error = 0.0;  // directional derivative of E_tau
  bool passed = false;
  std::string failure;  // set when a numerical error stopped the check
};

/// Central differences (step delta) against the analytic gradients on random
/// instances. Errors are |fd - <g, u>| / (||g|| ||u||); passes below
/// `threshold`.
GradcheckReport run_gradcheck(std::size_t labels, double tau, std::size_t trials, std::uint64_t seed,
                              double delta = 1e-5, double threshold = 1e-3);

}  // namespace wam
