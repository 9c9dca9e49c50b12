#include "wam/flow.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "wam/error.hpp"
#include "wam/parallel.hpp"

namespace wam {

void validate(const FlowParams& p) {
  if (!(p.tau > 0.0) || !std::isfinite(p.tau)) throw InvalidInput("tau must be positive");
  if (!(p.alpha >= 0.0) || !std::isfinite(p.alpha)) throw InvalidInput("alpha must be non-negative");
  if (!(p.step > 0.0) || !std::isfinite(p.step)) throw InvalidInput("step must be positive");
  if (!(p.entropy_threshold > 0.0)) throw InvalidInput("entropy threshold must be positive");
  if (p.max_iters == 0) throw InvalidInput("max_iters must be positive");
  if (!(p.epsilon_floor > 0.0)) throw InvalidInput("epsilon floor must be positive");
  if (!(p.sinkhorn.tol > 0.0) || p.sinkhorn.max_iters == 0) throw InvalidInput("invalid Sinkhorn options");
}

AssignmentFlow::AssignmentFlow(const GraphicalModel& model, FlowParams params)
    : model_(model), params_(std::move(params)) {
  validate(params_);
  kernels_.reserve(model_.edge_count());
  for (std::size_t e = 0; e < model_.edge_count(); ++e)
    kernels_.emplace_back(model_.pairwise(e), params_.tau, params_.sinkhorn.mode);
  warm_.resize(model_.edge_count());
  messages_.resize(model_.edge_count() * 2 * model_.label_count());
  distances_.resize(model_.edge_count());
  edge_iters_.resize(model_.edge_count());
  edge_newton_.resize(model_.edge_count());
}

std::size_t AssignmentFlow::total_edge_iterations() const {
  std::size_t total = 0;
  for (std::size_t v : edge_iters_) total += v;
  return total;
}

std::size_t AssignmentFlow::total_newton_edges() const {
  std::size_t total = 0;
  for (unsigned char v : edge_newton_) total += v;
  return total;
}

void AssignmentFlow::reset_warm_start() {
  for (auto& d : warm_) d = {};
}

void AssignmentFlow::solve_edges(const AssignmentMatrix& w, bool want_distance) {
  const std::size_t n = model_.label_count();
  std::vector<double> residuals(observer_ ? model_.edge_count() : 0);
  ++iteration_;

  parallel_for(model_.edge_count(), params_.threads, [&](std::size_t e) {
    const Edge& edge = model_.graph().edge(e);
    Matrix coupling;
    ScalingSolution sol;
    try {
      sol = solve_scaling(kernels_[e], w.row(edge.first), w.row(edge.second), params_.sinkhorn,
                          params_.warm_start ? &warm_[e] : nullptr, want_distance ? &coupling : nullptr);
    } catch (const ConvergenceError& err) {
      throw FlowError("edge " + std::to_string(e) + " (" + std::to_string(edge.first) + "," +
                          std::to_string(edge.second) + "): " + err.what(),
                      e, false);
    } catch (const Error& err) {
      throw FlowError("edge " + std::to_string(e) + " (" + std::to_string(edge.first) + "," +
                          std::to_string(edge.second) + "): " + err.what(),
                      e);
    }
    double* g1 = messages_.data() + e * 2 * n;
    double* g2 = g1 + n;
    std::copy(sol.duals.nu1.begin(), sol.duals.nu1.end(), g1);
    std::copy(sol.duals.nu2.begin(), sol.duals.nu2.end(), g2);
    project_tangent_inplace({g1, n});
    project_tangent_inplace({g2, n});
    if (want_distance) distances_[e] = primal_objective(kernels_[e].cost(), coupling, params_.tau);
    if (!residuals.empty()) residuals[e] = sol.residual;
    edge_iters_[e] = sol.iterations;
    edge_newton_[e] = sol.used_newton;
    if (params_.warm_start) warm_[e] = std::move(sol.duals);
  });

  if (observer_)
    for (std::size_t e = 0; e < residuals.size(); ++e) observer_(iteration_, e, residuals[e]);
}

Matrix AssignmentFlow::gradient(const AssignmentMatrix& w) {
  const std::size_t m = model_.node_count();
  const std::size_t n = model_.label_count();
  if (w.rows() != m || w.cols() != n) throw InvalidInput("assignment shape does not match model");
  solve_edges(w, false);

  Matrix grad(m, n);
  parallel_for(m, params_.threads, [&](std::size_t i) {
    auto row = grad.row(i);
    const auto theta = model_.unary(i);
    std::copy(theta.begin(), theta.end(), row.begin());
    project_tangent_inplace(row);
    // Adjacency is in edge-index order, which fixes the summation order.
    for (const Incidence& inc : model_.graph().neighbors(i)) {
      const double* msg = messages_.data() + inc.edge * 2 * n + (inc.is_first ? 0 : n);
      for (std::size_t k = 0; k < n; ++k) row[k] += msg[k];
    }
  });

  for (std::size_t i = 0; i < m; ++i)
    for (double v : grad.row(i))
      if (!(std::abs(v) <= params_.divergence_limit))
        throw FlowError("gradient magnitude exceeds " + std::to_string(params_.divergence_limit) + " at node " +
                        std::to_string(i) + "; use a smaller step or a larger tau");
  return grad;
}

double AssignmentFlow::smoothed_energy(const AssignmentMatrix& w) {
  if (w.rows() != model_.node_count() || w.cols() != model_.label_count())
    throw InvalidInput("assignment shape does not match model");
  solve_edges(w, true);
  double energy = 0.0;
  for (std::size_t i = 0; i < model_.node_count(); ++i) {
    const auto theta = model_.unary(i);
    const auto row = w.row(i);
    for (std::size_t k = 0; k < theta.size(); ++k) energy += theta[k] * row[k];
  }
  for (double d : distances_) energy += d;
  return energy;
}

AssignmentMatrix AssignmentFlow::step(const AssignmentMatrix& w) {
  AssignmentMatrix next = multiplicative_update(w, gradient(w), params_.alpha, params_.step);
  normalize_safeguard_inplace(next, params_.epsilon_floor);
  return next;
}

FlowResult AssignmentFlow::solve(const std::optional<AssignmentMatrix>& initial) {
  const std::size_t m = model_.node_count();
  const std::size_t n = model_.label_count();
  AssignmentMatrix w = initial ? *initial : barycenter(m, n);
  if (w.rows() != m || w.cols() != n) throw InvalidInput("initial assignment shape does not match model");
  if (!is_assignment(w, 1e-9)) throw InvalidInput("initial assignment is not row-stochastic and positive");

  FlowResult result;
  for (std::size_t k = 1; k <= params_.max_iters; ++k) {
    AssignmentMatrix next = step(w);
    FlowRecord rec;
    rec.iteration = k;
    rec.sinkhorn_iterations = total_edge_iterations();
    rec.newton_edges = total_newton_edges();
    rec.normalized_entropy = normalized_entropy(next);
    for (std::size_t i = 0; i < m; ++i) {
      double change = 0.0;
      for (std::size_t l = 0; l < n; ++l) change += std::abs(next(i, l) - w(i, l));
      rec.max_row_change = std::max(rec.max_row_change, change);
    }
    if (params_.record_energies) {
      rec.smoothed_energy = smoothed_energy(next);
      rec.rounded_energy = rounded_energy(model_, next);
    }
    result.trace.push_back(rec);
    w = std::move(next);
    result.iterations = k;
    if (rec.normalized_entropy < params_.entropy_threshold) {
      result.status = FlowStatus::converged;
      break;
    }
  }
  result.labeling = round_assignment(w);
  result.assignment = std::move(w);
  return result;
}

Matrix energy_gradient(const GraphicalModel& model, const AssignmentMatrix& w, double tau,
                       const SinkhornOptions& options) {
  FlowParams params;
  params.tau = tau;
  params.sinkhorn = options;
  params.warm_start = false;
  AssignmentFlow flow(model, params);
  return flow.gradient(w);
}

Matrix energy_gradient_symmetric(const GraphicalModel& model, const AssignmentMatrix& w, double tau,
                                 const SinkhornOptions& options) {
  const std::size_t n = model.label_count();
  for (std::size_t e = 0; e < model.edge_count(); ++e)
    if (model.pairwise(e) != model.pairwise(e).transposed())
      throw InvalidInput("energy_gradient_symmetric: edge " + std::to_string(e) + " is not symmetric");
  Matrix grad(model.node_count(), n);
  for (std::size_t i = 0; i < model.node_count(); ++i) {
    auto row = grad.row(i);
    const auto theta = model.unary(i);
    std::copy(theta.begin(), theta.end(), row.begin());
    project_tangent_inplace(row);
    for (const Incidence& inc : model.graph().neighbors(i)) {
      const SinkhornResult r = sinkhorn(model.pairwise(inc.edge), w.row(i), w.row(inc.neighbor), tau, options);
      const auto g = project_tangent(r.duals.nu1);
      for (std::size_t k = 0; k < n; ++k) row[k] += g[k];
    }
  }
  return grad;
}

double smoothed_energy(const GraphicalModel& model, const AssignmentMatrix& w, double tau,
                       const SinkhornOptions& options) {
  FlowParams params;
  params.tau = tau;
  params.sinkhorn = options;
  params.warm_start = false;
  AssignmentFlow flow(model, params);
  return flow.smoothed_energy(w);
}

AssignmentMatrix multiplicative_update(const AssignmentMatrix& w, const Matrix& gradient, double alpha,
                                       double step) {
  if (gradient.rows() != w.rows() || gradient.cols() != w.cols())
    throw InvalidInput("multiplicative_update: shape mismatch");
  AssignmentMatrix next(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    auto out = next.row(i);
    const auto in = w.row(i);
    const auto g = gradient.row(i);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < out.size(); ++k) {
      out[k] = (1.0 + alpha) * std::log(in[k]) - step * g[k];
      top = std::max(top, out[k]);
    }
    double z = 0.0;
    for (double& v : out) {
      v = std::exp(v - top);
      z += v;
    }
    for (double& v : out) v /= z;
  }
  return next;
}

AssignmentMatrix flow_step(const GraphicalModel& model, const AssignmentMatrix& w, const FlowParams& params) {
  FlowParams p = params;
  p.warm_start = false;
  AssignmentFlow flow(model, p);
  return flow.step(w);
}

FlowResult solve(const GraphicalModel& model, const FlowParams& params, const std::optional<AssignmentMatrix>& initial) {
  AssignmentFlow flow(model, params);
  return flow.solve(initial);
}

Labeling round_assignment(const AssignmentMatrix& w) {
  Labeling labels(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const auto row = w.row(i);
    labels[i] = static_cast<Label>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return labels;
}

double rounded_energy(const GraphicalModel& model, const AssignmentMatrix& w) {
  return discrete_energy(model, round_assignment(w));
}

}  // namespace wam
