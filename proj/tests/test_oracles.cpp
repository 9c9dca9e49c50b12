#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "wam/error.hpp"
#include "wam/experiments.hpp"
#include "wam/oracles.hpp"
#include "wam/random.hpp"

using namespace wam;

namespace {

double lhs(const LinearInequality& row, const K3MinimalPoint& p) {
  double s = 0.0;
  for (std::size_t k = 0; k < 6; ++k) s += row.a[k] * p.mu[k];
  return s;
}

Labeling labeling_of(std::size_t code, std::size_t m, std::size_t n) {
  Labeling x(m);
  for (std::size_t i = 0; i < m; ++i) {
    x[m - 1 - i] = code % n;
    code /= n;
  }
  return x;
}

}  // namespace

TEST_CASE("brute force on small models") {
  const auto tri = brute_force_min(triangle_model());
  CHECK(tri.labeling == Labeling{1, 0, 0});
  CHECK(tri.energy == discrete_energy(triangle_model(), tri.labeling));

  GraphicalModel zero(3, 3);
  zero.add_edge(0, 2, Matrix(3, 3));
  const auto z = brute_force_min(zero);
  CHECK(z.labeling == Labeling{0, 0, 0});
  CHECK(z.energy == 0.0);

  GraphicalModel chain(2, 2);
  const double t1[2] = {0, 1};
  const double t2[2] = {1, 0};
  chain.set_unary(0, t1);
  chain.set_unary(1, t2);
  chain.add_edge(0, 1, potts_pairwise(2, 1.0));
  const auto c = brute_force_min(chain);
  CHECK(c.labeling == Labeling{0, 0});
  CHECK(c.energy == 1.0);
}

TEST_CASE("brute force agrees with a naive enumeration") {
  for (std::size_t s = 0; s < 50; ++s) {
    Rng rng(123, s);
    const auto model = sample_grid_model(rng, 2, 3);
    const auto r = brute_force_min(model);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t code = 0; code < 64; ++code) best = std::min(best, discrete_energy(model, labeling_of(code, 6, 2)));
    CHECK(r.energy == best);
    CHECK(discrete_energy(model, r.labeling) == r.energy);
  }
}

TEST_CASE("brute force capacity") {
  CHECK_NOTHROW(brute_force_min(GraphicalModel(24, 2)));
  CHECK_THROWS_AS(brute_force_min(GraphicalModel(25, 2)), CapacityError);
  CHECK_THROWS_AS(brute_force_min(GraphicalModel(40, 7)), CapacityError);
}

TEST_CASE("embedding of binary labelings") {
  const Labeling zero{0, 0, 0};
  const Labeling ones{1, 1, 1};
  const Labeling first{1, 0, 0};
  CHECK(k3_embed(zero).mu == std::array<double, 6>{0, 0, 0, 0, 0, 0});
  CHECK(k3_embed(ones).mu == std::array<double, 6>{1, 1, 1, 1, 1, 1});
  CHECK(k3_embed(first).mu == std::array<double, 6>{1, 0, 0, 0, 0, 0});
  const Labeling bad{0, 2, 0};
  CHECK_THROWS_AS(k3_embed(bad), InvalidInput);
  const Labeling too_short{0, 1};
  CHECK_THROWS_AS(k3_embed(too_short), InvalidInput);
}

TEST_CASE("local polytope vertices") {
  const auto& v = k3_local_vertices();
  REQUIRE(v.size() == 12);
  for (std::size_t code = 0; code < 8; ++code) CHECK(v[code] == k3_embed(labeling_of(code, 3, 2)));
  CHECK(k3_marginal_vertices().size() == 8);

  for (std::size_t k = 0; k < 12; ++k) {
    CHECK(k3_is_local_feasible(v[k]));
    // A vertex has six linearly independent active constraints.
    Eigen::MatrixXd active(0, 6);
    for (const auto& row : k3_local_constraints())
      if (std::abs(lhs(row, v[k]) - row.b) <= 1e-12) {
        active.conservativeResize(active.rows() + 1, 6);
        for (int c = 0; c < 6; ++c) active(active.rows() - 1, c) = row.a[c];
      }
    CHECK(Eigen::FullPivLU<Eigen::MatrixXd>(active).rank() == 6);
  }
  for (std::size_t k = 8; k < 12; ++k) {
    for (double m : v[k].node_marginals()) CHECK(m == 0.5);
    bool violates = false;
    for (const auto& row : k3_triangle_constraints()) violates |= lhs(row, v[k]) - row.b > 1e-9;
    CHECK(violates);
    CHECK_FALSE(k3_is_marginal_feasible(v[k]));
  }
  for (std::size_t k = 0; k < 8; ++k) CHECK(k3_is_marginal_feasible(v[k]));
}

TEST_CASE("objective in the minimal parameterization") {
  GraphicalModel zero(3, 2);
  for (auto [i, j] : {std::pair{0, 1}, {0, 2}, {1, 2}}) zero.add_edge(i, j, Matrix(2, 2));
  const auto oz = k3_objective(zero);
  for (double c : oz.c) CHECK(c == 0.0);
  CHECK(oz.offset == 0.0);

  GraphicalModel unary(3, 2);
  const double a[3] = {0.5, -1.0, 2.0};
  const double b[3] = {1.5, 3.0, -2.0};
  for (std::size_t i = 0; i < 3; ++i) {
    const double t[2] = {a[i], b[i]};
    unary.set_unary(i, t);
  }
  for (auto [i, j] : {std::pair{0, 1}, {0, 2}, {1, 2}}) unary.add_edge(i, j, Matrix(2, 2));
  const auto ou = k3_objective(unary);
  for (std::size_t i = 0; i < 3; ++i) CHECK(ou.c[i] == doctest::Approx(b[i] - a[i]));
  CHECK(ou.offset == doctest::Approx(a[0] + a[1] + a[2]));

  for (std::size_t s = 0; s < 200; ++s) {
    Rng rng(5, s);
    const auto model = s == 0 ? triangle_model() : sample_k3_model(rng);
    const auto obj = k3_objective(model);
    for (std::size_t code = 0; code < 8; ++code) {
      const auto x = labeling_of(code, 3, 2);
      CHECK(obj.evaluate(k3_embed(x)) == discrete_energy(model, x));
      CHECK(obj.linear(k3_embed(x)) == doctest::Approx(discrete_energy(model, x)).epsilon(1e-12));
    }
    // Linear in mu: check at a midpoint.
    K3MinimalPoint mid;
    const auto p = k3_embed(labeling_of(1, 3, 2));
    const auto q = k3_embed(labeling_of(6, 3, 2));
    for (std::size_t k = 0; k < 6; ++k) mid.mu[k] = 0.5 * (p.mu[k] + q.mu[k]);
    CHECK(obj.linear(mid) == doctest::Approx(0.5 * (obj.linear(p) + obj.linear(q))).epsilon(1e-12));
    CHECK(obj.evaluate(mid) == doctest::Approx(obj.linear(mid)).epsilon(1e-12));
  }

  CHECK_THROWS_AS(k3_objective(GraphicalModel(3, 3)), InvalidInput);
  GraphicalModel chain(3, 2);
  chain.add_edge(0, 1, Matrix(2, 2));
  CHECK_THROWS_AS(k3_objective(chain), InvalidInput);
}

TEST_CASE("triangle model LP solutions") {
  const auto local = lp_local(triangle_model());
  const auto marginal = lp_marginal(triangle_model());
  CHECK(local.point.node_marginals() == std::array<double, 3>{0.5, 0.5, 0.5});
  CHECK(marginal.point.node_marginals() == std::array<double, 3>{1.0, 0.0, 0.0});
  CHECK(marginal.value == brute_force_min(triangle_model()).energy);
  CHECK(local.value < marginal.value);
}

TEST_CASE("local LP is a relaxation of the marginal LP") {
  for (std::size_t s = 0; s < 2000; ++s) {
    Rng rng(77, s);
    const auto model = sample_k3_model(rng);
    const auto local = lp_local(model);
    const auto marginal = lp_marginal(model);
    CHECK(local.value <= marginal.value);
    CHECK(marginal.value == brute_force_min(model).energy);
    CHECK(local.vertex_index < 12);
  }
}

TEST_CASE("separable models have integral local optima") {
  Rng rng(3);
  GraphicalModel model(3, 2);
  Labeling expected(3);
  for (std::size_t i = 0; i < 3; ++i) {
    const double t[2] = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    model.set_unary(i, t);
    expected[i] = t[1] < t[0] ? 1 : 0;
  }
  for (auto [i, j] : {std::pair{0, 1}, {0, 2}, {1, 2}}) model.add_edge(i, j, Matrix(2, 2));
  const auto local = lp_local(model);
  const auto marginal = lp_marginal(model);
  CHECK(local.value == doctest::Approx(marginal.value));
  CHECK(local.point == k3_embed(expected));
  CHECK(marginal.point == k3_embed(expected));
}
