#pragma once

// Exact reference solutions: exhaustive minimization of small models and the
// marginal / local polytopes of binary models on the triangle graph in the
// minimal parameterization (mu_1, mu_2, mu_3, mu_12, mu_13, mu_23).

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "wam/model.hpp"

namespace wam {

/// Largest label space brute_force_min accepts.
inline constexpr std::size_t brute_force_capacity = std::size_t{1} << 24;

struct BruteForceResult {
  Labeling labeling;
  double energy = 0.0;
};

/// Global minimum over all labelings, ties broken lexicographically.
/// Throws CapacityError when n^m exceeds brute_force_capacity.
BruteForceResult brute_force_min(const GraphicalModel& model);

struct K3MinimalPoint {
  std::array<double, 6> mu{};

  std::array<double, 3> node_marginals() const { return {mu[0], mu[1], mu[2]}; }
  bool operator==(const K3MinimalPoint&) const = default;
};

/// Local polytope rows a^T mu <= b: for each edge ij,
/// -mu_ij <= 0, mu_ij - mu_i <= 0, mu_ij - mu_j <= 0, mu_i + mu_j - mu_ij <= 1.
struct LinearInequality {
  std::array<double, 6> a{};
  double b = 0.0;
};
const std::array<LinearInequality, 12>& k3_local_constraints();

/// The four triangle inequalities that cut the local polytope down to the
/// marginal polytope.
const std::array<LinearInequality, 4>& k3_triangle_constraints();

bool k3_is_local_feasible(const K3MinimalPoint& p, double tol = 1e-12);
bool k3_is_marginal_feasible(const K3MinimalPoint& p, double tol = 1e-12);

/// Throws InvalidInput unless labeling has three binary entries.
K3MinimalPoint k3_embed(std::span<const Label> labeling);

/// Vertices of the local polytope, found by exhaustive enumeration of six
/// active rows: the 8 binary embeddings in labeling order, then the
/// fractional ones in lexicographic coordinate order. Computed once.
const std::vector<K3MinimalPoint>& k3_local_vertices();

/// The 8 binary embeddings, ordered like the labelings (0,0,0), (0,0,1), ...
const std::vector<K3MinimalPoint>& k3_marginal_vertices();

// Linear objective <c, mu> + offset that equals <theta, mu> in the
// overcomplete representation. Keeps the model parameters so that values at
// binary points can be evaluated with exactly the summation of
// discrete_energy.
struct K3Objective {
  std::array<double, 6> c{};
  double offset = 0.0;

  double linear(const K3MinimalPoint& p) const;
  /// Same function, evaluated term by term in the overcomplete expansion.
  double evaluate(const K3MinimalPoint& p) const;

  std::array<std::array<double, 2>, 3> unary{};
  std::array<std::array<double, 4>, 3> pairwise{};  // theta(0,0), (0,1), (1,0), (1,1)
};

/// Throws InvalidInput unless the model is binary on edges {01, 02, 12}.
K3Objective k3_objective(const GraphicalModel& model);

struct K3LpResult {
  K3MinimalPoint point;
  double value = 0.0;
  std::size_t vertex_index = 0;  // into the scanned vertex list
};

/// Minimum over the local polytope vertices; ties go to the earlier vertex.
K3LpResult lp_local(const GraphicalModel& model);
/// Minimum over the marginal polytope vertices.
K3LpResult lp_marginal(const GraphicalModel& model);

}  // namespace wam
