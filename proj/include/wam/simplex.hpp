#pragma once

// Geometry of the relative interior of the probability simplex and of the
// assignment manifold (row-stochastic, strictly positive matrices).

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "wam/dense.hpp"

namespace wam {

/// Rows of an assignment matrix sum to one within this tolerance.
inline constexpr double row_sum_tolerance = 1e-12;

/// Default positivity floor used by normalize_safeguard.
inline constexpr double default_epsilon_floor = 1e-10;

/// Row-stochastic matrix with strictly positive entries, one row per node.
using AssignmentMatrix = Matrix;

/// x - mean(x) * 1. Throws InvalidInput on non-finite entries or n < 2.
std::vector<double> project_tangent(std::span<const double> x);
void project_tangent_inplace(std::span<double> x);

/// (p * exp(x)) / <p, exp(x)>, evaluated with the maximum of x subtracted.
std::vector<double> lift(std::span<const double> p, std::span<const double> x);

/// P_T(log(q / p)). Throws DegenerateInput when an entry of p or q is below
/// `floor`.
std::vector<double> lift_inverse(std::span<const double> p, std::span<const double> q,
                                 double floor = std::numeric_limits<double>::min());

double entropy(std::span<const double> p);
double entropy(const AssignmentMatrix& w);

/// H(W) / (m log n), in [0, 1].
double normalized_entropy(const AssignmentMatrix& w);

/// Replaces every row that has an entry below `epsilon` by
/// (row - min(row) + epsilon) / sum. Other rows are left untouched.
/// Returns the number of rectified rows.
std::size_t normalize_safeguard_inplace(AssignmentMatrix& w, double epsilon = default_epsilon_floor);
AssignmentMatrix normalize_safeguard(AssignmentMatrix w, double epsilon = default_epsilon_floor);

AssignmentMatrix barycenter(std::size_t nodes, std::size_t labels);

/// Checks shape, finiteness, positivity and row sums.
bool is_assignment(const AssignmentMatrix& w, double tolerance = row_sum_tolerance);

}  // namespace wam
