#include "wam/oracles.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "wam/error.hpp"

namespace wam {

BruteForceResult brute_force_min(const GraphicalModel& model) {
  const std::size_t m = model.node_count();
  const std::size_t n = model.label_count();
  std::size_t total = 1;
  for (std::size_t i = 0; i < m; ++i) {
    if (total > brute_force_capacity / n)
      throw CapacityError("brute_force_min: label space exceeds 2^24 configurations");
    total *= n;
  }

  // Odometer with the last node fastest enumerates labelings in
  // lexicographic order, so a strict comparison keeps the smallest tie.
  Labeling x(m, 0);
  BruteForceResult best{x, discrete_energy(model, x)};
  for (std::size_t count = 1; count < total; ++count) {
    std::size_t i = m;
    while (i-- > 0) {
      if (++x[i] < n) break;
      x[i] = 0;
    }
    const double e = discrete_energy(model, x);
    if (e < best.energy) best = {x, e};
  }
  return best;
}

namespace {

// Variable order: mu1, mu2, mu3, mu12, mu13, mu23.
constexpr std::array<std::array<std::size_t, 3>, 3> kEdges = {{{0, 1, 3}, {0, 2, 4}, {1, 2, 5}}};

std::array<LinearInequality, 12> make_local_constraints() {
  std::array<LinearInequality, 12> rows{};
  std::size_t r = 0;
  for (const auto& [i, j, ij] : kEdges) {
    rows[r].a[ij] = -1.0;
    rows[r++].b = 0.0;
    rows[r].a[ij] = 1.0;
    rows[r].a[i] = -1.0;
    rows[r++].b = 0.0;
    rows[r].a[ij] = 1.0;
    rows[r].a[j] = -1.0;
    rows[r++].b = 0.0;
    rows[r].a[i] = 1.0;
    rows[r].a[j] = 1.0;
    rows[r].a[ij] = -1.0;
    rows[r++].b = 1.0;
  }
  return rows;
}

std::array<LinearInequality, 4> make_triangle_constraints() {
  std::array<LinearInequality, 4> rows{};
  rows[0].a = {1, 1, 1, -1, -1, -1};
  rows[0].b = 1.0;
  rows[1].a = {-1, 0, 0, 1, 1, -1};
  rows[2].a = {0, -1, 0, 1, -1, 1};
  rows[3].a = {0, 0, -1, -1, 1, 1};
  return rows;
}

template <std::size_t N>
bool satisfies(const std::array<LinearInequality, N>& rows, const K3MinimalPoint& p, double tol) {
  for (const auto& row : rows) {
    double lhs = 0.0;
    for (std::size_t k = 0; k < 6; ++k) lhs += row.a[k] * p.mu[k];
    if (lhs > row.b + tol) return false;
  }
  return true;
}

std::vector<K3MinimalPoint> enumerate_local_vertices() {
  const auto& rows = k3_local_constraints();
  constexpr double dedupe_tol = 1e-9;
  std::vector<K3MinimalPoint> found;

  // Every 6-subset of the 12 rows, via a bitmask.
  for (unsigned mask = 0; mask < (1u << 12); ++mask) {
    if (__builtin_popcount(mask) != 6) continue;
    Eigen::Matrix<double, 6, 6> a;
    Eigen::Matrix<double, 6, 1> b;
    int r = 0;
    for (int k = 0; k < 12; ++k) {
      if (!(mask & (1u << k))) continue;
      for (int c = 0; c < 6; ++c) a(r, c) = rows[k].a[c];
      b(r) = rows[k].b;
      ++r;
    }
    Eigen::FullPivLU<Eigen::Matrix<double, 6, 6>> lu(a);
    if (lu.rank() < 6) continue;
    const Eigen::Matrix<double, 6, 1> x = lu.solve(b);
    K3MinimalPoint p;
    for (int c = 0; c < 6; ++c) p.mu[c] = std::abs(x(c)) < dedupe_tol ? 0.0 : x(c);
    if (!satisfies(rows, p, dedupe_tol)) continue;
    const bool duplicate = std::any_of(found.begin(), found.end(), [&](const K3MinimalPoint& q) {
      for (int c = 0; c < 6; ++c)
        if (std::abs(p.mu[c] - q.mu[c]) > dedupe_tol) return false;
      return true;
    });
    if (!duplicate) found.push_back(p);
  }

  auto is_binary = [](const K3MinimalPoint& p) {
    return std::all_of(p.mu.begin(), p.mu.end(), [](double v) { return v == 0.0 || std::abs(v - 1.0) < 1e-9; });
  };
  std::vector<K3MinimalPoint> ordered;
  for (const auto& v : k3_marginal_vertices()) {
    const bool present = std::any_of(found.begin(), found.end(), [&](const K3MinimalPoint& q) {
      for (int c = 0; c < 6; ++c)
        if (std::abs(v.mu[c] - q.mu[c]) > dedupe_tol) return false;
      return true;
    });
    if (!present) throw Error("k3_local_vertices: binary vertex missing from enumeration");
    ordered.push_back(v);
  }
  std::vector<K3MinimalPoint> fractional;
  for (const auto& p : found)
    if (!is_binary(p)) fractional.push_back(p);
  std::sort(fractional.begin(), fractional.end(),
            [](const K3MinimalPoint& x, const K3MinimalPoint& y) { return x.mu < y.mu; });
  ordered.insert(ordered.end(), fractional.begin(), fractional.end());
  return ordered;
}

}  // namespace

const std::array<LinearInequality, 12>& k3_local_constraints() {
  static const auto rows = make_local_constraints();
  return rows;
}

const std::array<LinearInequality, 4>& k3_triangle_constraints() {
  static const auto rows = make_triangle_constraints();
  return rows;
}

bool k3_is_local_feasible(const K3MinimalPoint& p, double tol) { return satisfies(k3_local_constraints(), p, tol); }

bool k3_is_marginal_feasible(const K3MinimalPoint& p, double tol) {
  return satisfies(k3_local_constraints(), p, tol) && satisfies(k3_triangle_constraints(), p, tol);
}

K3MinimalPoint k3_embed(std::span<const Label> x) {
  if (x.size() != 3 || std::any_of(x.begin(), x.end(), [](Label l) { return l > 1; }))
    throw InvalidInput("k3_embed: need a binary labeling of three nodes");
  K3MinimalPoint p;
  for (std::size_t i = 0; i < 3; ++i) p.mu[i] = static_cast<double>(x[i]);
  for (const auto& [i, j, ij] : kEdges) p.mu[ij] = p.mu[i] * p.mu[j];
  return p;
}

const std::vector<K3MinimalPoint>& k3_marginal_vertices() {
  static const std::vector<K3MinimalPoint> vertices = [] {
    std::vector<K3MinimalPoint> v;
    for (Label a = 0; a < 2; ++a)
      for (Label b = 0; b < 2; ++b)
        for (Label c = 0; c < 2; ++c) {
          const Label x[3] = {a, b, c};
          v.push_back(k3_embed(x));
        }
    return v;
  }();
  return vertices;
}

const std::vector<K3MinimalPoint>& k3_local_vertices() {
  static const std::vector<K3MinimalPoint> vertices = enumerate_local_vertices();
  return vertices;
}

double K3Objective::linear(const K3MinimalPoint& p) const {
  double v = offset;
  for (std::size_t k = 0; k < 6; ++k) v += c[k] * p.mu[k];
  return v;
}

double K3Objective::evaluate(const K3MinimalPoint& p) const {
  // Same term order as discrete_energy: unaries by node, then edges.
  double v = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    v += unary[i][0] * (1.0 - p.mu[i]);
    v += unary[i][1] * p.mu[i];
  }
  for (std::size_t e = 0; e < 3; ++e) {
    const auto& [i, j, ij] = kEdges[e];
    v += pairwise[e][0] * (1.0 - p.mu[i] - p.mu[j] + p.mu[ij]);
    v += pairwise[e][1] * (p.mu[j] - p.mu[ij]);
    v += pairwise[e][2] * (p.mu[i] - p.mu[ij]);
    v += pairwise[e][3] * p.mu[ij];
  }
  return v;
}

K3Objective k3_objective(const GraphicalModel& model) {
  if (model.node_count() != 3 || model.label_count() != 2 || model.edge_count() != 3)
    throw InvalidInput("k3_objective: need a binary model on the triangle graph");
  K3Objective obj;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto theta = model.unary(i);
    obj.unary[i] = {theta[0], theta[1]};
    obj.offset += theta[0];
    obj.c[i] += theta[1] - theta[0];
  }
  for (std::size_t e = 0; e < 3; ++e) {
    const auto& [i, j, ij] = kEdges[e];
    const Edge& edge = model.graph().edge(e);
    if (edge.first != i || edge.second != j)
      throw InvalidInput("k3_objective: edges must be added in the order (0,1), (0,2), (1,2)");
    const Matrix& t = model.pairwise(e);
    obj.pairwise[e] = {t(0, 0), t(0, 1), t(1, 0), t(1, 1)};
    // (1-mi)(1-mj) t00 + (1-mi) mj t01 + mi (1-mj) t10 + mi mj t11 with mi mj -> mij.
    obj.offset += t(0, 0);
    obj.c[i] += t(1, 0) - t(0, 0);
    obj.c[j] += t(0, 1) - t(0, 0);
    obj.c[ij] += t(0, 0) - t(0, 1) - t(1, 0) + t(1, 1);
  }
  return obj;
}

namespace {

K3LpResult scan(const K3Objective& obj, const std::vector<K3MinimalPoint>& vertices) {
  K3LpResult best{vertices.front(), obj.evaluate(vertices.front()), 0};
  for (std::size_t v = 1; v < vertices.size(); ++v) {
    const double value = obj.evaluate(vertices[v]);
    if (value < best.value) best = {vertices[v], value, v};
  }
  return best;
}

}  // namespace

K3LpResult lp_local(const GraphicalModel& model) { return scan(k3_objective(model), k3_local_vertices()); }

K3LpResult lp_marginal(const GraphicalModel& model) { return scan(k3_objective(model), k3_marginal_vertices()); }

}  // namespace wam
