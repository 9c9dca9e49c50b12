#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "wam/error.hpp"
#include "wam/experiments.hpp"
#include "wam/flow.hpp"
#include "wam/random.hpp"
#include "wam/simplex.hpp"

using namespace wam;

namespace {

AssignmentMatrix random_assignment(Rng& rng, std::size_t m, std::size_t n) {
  AssignmentMatrix w(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    auto row = w.row(i);
    for (auto& v : row) v = rng.uniform(0.05, 1.0);
    const double s = std::accumulate(row.begin(), row.end(), 0.0);
    for (auto& v : row) v /= s;
  }
  return w;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

GraphicalModel random_potts_grid(Rng& rng, std::size_t rows, std::size_t cols, std::size_t labels) {
  GraphicalModel model(rows * cols, labels);
  std::vector<double> theta(labels);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    for (auto& v : theta) v = rng.uniform(0, 1);
    model.set_unary(i, theta);
  }
  for (std::size_t y = 0; y < rows; ++y)
    for (std::size_t x = 0; x < cols; ++x) {
      const std::size_t p = y * cols + x;
      if (x + 1 < cols) model.add_edge(p, p + 1, potts_pairwise(labels, rng.uniform(0.1, 1)));
      if (y + 1 < rows) model.add_edge(p, p + cols, potts_pairwise(labels, rng.uniform(0.1, 1)));
    }
  return model;
}

}  // namespace

TEST_CASE("parameter validation") {
  FlowParams p;
  CHECK_NOTHROW(validate(p));
  p.tau = 0;
  CHECK_THROWS_AS(validate(p), InvalidInput);
  p = {};
  p.alpha = -0.1;
  CHECK_THROWS_AS(validate(p), InvalidInput);
  p = {};
  p.step = 0;
  CHECK_THROWS_AS(validate(p), InvalidInput);
  p = {};
  p.max_iters = 0;
  CHECK_THROWS_AS(validate(p), InvalidInput);
}

TEST_CASE("edgeless gradient is the projected unary") {
  GraphicalModel model(2, 3);
  const double a[3] = {1, 2, 6};
  const double b[3] = {0, 0, 3};
  model.set_unary(0, a);
  model.set_unary(1, b);
  Rng rng(1);
  const auto g = energy_gradient(model, random_assignment(rng, 2, 3), 0.1);
  CHECK(g(0, 0) == -2.0);
  CHECK(g(0, 1) == -1.0);
  CHECK(g(0, 2) == 3.0);
  CHECK(g(1, 2) == 2.0);
}

TEST_CASE("symmetric gradient form matches the edgewise form") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto model = random_potts_grid(rng, 2, 3, 3);
    const auto w = random_assignment(rng, 6, 3);
    SinkhornOptions o;
    o.tol = 1e-13;
    const auto g = energy_gradient(model, w, 0.1, o);
    const auto gs = energy_gradient_symmetric(model, w, 0.1, o);
    CHECK(max_abs_diff(g.values(), gs.values()) <= 1e-8);
  }
  Rng r2(4);
  const auto k3 = sample_k3_model(r2);
  CHECK_THROWS_AS(energy_gradient_symmetric(k3, barycenter(3, 2), 0.1), InvalidInput);
}

TEST_CASE("equal marginals on a symmetric two-node model give equal messages") {
  GraphicalModel model(2, 3);
  model.add_edge(0, 1, potts_pairwise(3, 1.0));
  const auto g = energy_gradient(model, barycenter(2, 3), 0.1);
  CHECK(max_abs_diff(g.row(0), g.row(1)) <= 1e-12);
}

TEST_CASE("gradient rows are tangent and invariant to constant cost shifts") {
  Rng rng(5);
  auto model = sample_grid_model(rng, 2, 2);
  const auto w = random_assignment(rng, 4, 2);
  SinkhornOptions o;
  o.tol = 1e-13;
  const auto g = energy_gradient(model, w, 0.1, o);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(g(i, 0) + g(i, 1)) <= 1e-12);

  GraphicalModel shifted(4, 2);
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<double> u(model.unary(i).begin(), model.unary(i).end());
    for (auto& v : u) v += 3.0;
    shifted.set_unary(i, u);
  }
  for (std::size_t e = 0; e < model.edge_count(); ++e) {
    Matrix t = model.pairwise(e);
    for (auto& v : t.values()) v += 5.0;
    shifted.add_edge(model.graph().edge(e).first, model.graph().edge(e).second, t);
  }
  CHECK(max_abs_diff(g.values(), energy_gradient(shifted, w, 0.1, o).values()) <= 1e-8);
}

TEST_CASE("energy gradient matches central differences") {
  Rng rng(19);
  SinkhornOptions o;
  o.tol = 1e-13;
  const double delta = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    const auto model = sample_k3_model(rng);
    const auto w = random_assignment(rng, 3, 2);
    Matrix u(3, 2);
    for (std::size_t i = 0; i < 3; ++i) {
      u(i, 0) = rng.uniform(-1, 1);
      u(i, 1) = -u(i, 0);
    }
    AssignmentMatrix plus = w, minus = w;
    for (std::size_t k = 0; k < w.size(); ++k) {
      plus.values()[k] += delta * u.values()[k];
      minus.values()[k] -= delta * u.values()[k];
    }
    const double fd = (smoothed_energy(model, plus, 0.1, o) - smoothed_energy(model, minus, 0.1, o)) / (2 * delta);
    const auto g = energy_gradient(model, w, 0.1, o);
    const double an = std::inner_product(g.values().begin(), g.values().end(), u.values().begin(), 0.0);
    CHECK(std::abs(fd - an) <= 1e-4 * std::max(1.0, std::abs(an)));
  }
}

TEST_CASE("smoothed energy at the barycenter of a zero model") {
  GraphicalModel model(3, 3);
  model.add_edge(0, 1, Matrix(3, 3));
  model.add_edge(1, 2, Matrix(3, 3));
  // Each edge contributes -tau * 2 log 3 from the independent coupling.
  CHECK(smoothed_energy(model, barycenter(3, 3), 0.1) == doctest::Approx(-0.1 * 4 * std::log(3.0)));
  GraphicalModel unary_only(2, 3);
  CHECK(smoothed_energy(unary_only, barycenter(2, 3), 0.1) == 0.0);
}

TEST_CASE("rounded energy of an integral assignment") {
  const auto model = triangle_model();
  AssignmentMatrix w(3, 2, 0.0);
  w(0, 1) = w(1, 0) = w(2, 0) = 1.0;
  const Labeling x{1, 0, 0};
  CHECK(round_assignment(w) == x);
  CHECK(rounded_energy(model, w) == discrete_energy(model, x));
  AssignmentMatrix tie(1, 3, 1.0 / 3);
  CHECK(round_assignment(tie)[0] == 0);
}

TEST_CASE("flow step on a zero model without rounding is a fixed point") {
  Rng rng(2);
  const auto w = random_assignment(rng, 3, 4);
  FlowParams p;
  p.alpha = 0;
  p.sinkhorn.tol = 1e-13;
  const GraphicalModel edgeless(3, 4);
  CHECK(max_abs_diff(flow_step(edgeless, w, p).values(), w.values()) <= 1e-15);

  // With zero-cost edges the entropic messages vanish only at the barycenter.
  GraphicalModel model(3, 4);
  model.add_edge(0, 1, Matrix(4, 4));
  model.add_edge(1, 2, Matrix(4, 4));
  const auto c = barycenter(3, 4);
  CHECK(max_abs_diff(flow_step(model, c, p).values(), c.values()) <= 1e-15);
}

TEST_CASE("alpha = 0 is the plain geometric Euler step") {
  Rng rng(8);
  const auto model = sample_k3_model(rng);
  const auto w = random_assignment(rng, 3, 2);
  const auto g = energy_gradient(model, w, 0.1);
  const auto next = multiplicative_update(w, g, 0.0, 0.3);
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<double> v(2);
    for (std::size_t k = 0; k < 2; ++k) v[k] = -0.3 * g(i, k);
    CHECK(max_abs_diff(next.row(i), lift(w.row(i), v)) <= 1e-15);
  }
}

TEST_CASE("update equals the lifted step in tangent coordinates") {
  for (std::size_t s = 0; s < 100; ++s) {
    Rng rng(606, s);
    const std::size_t n = 2 + rng.below(4);
    const auto model = random_potts_grid(rng, 2, 2, n);
    const auto w = random_assignment(rng, 4, n);
    const double alpha = rng.uniform(0, 1);
    const double h = rng.uniform(0.05, 0.5);
    const auto g = energy_gradient(model, w, 0.1);
    const auto next = multiplicative_update(w, g, alpha, h);
    const std::vector<double> c(n, 1.0 / static_cast<double>(n));
    for (std::size_t i = 0; i < 4; ++i) {
      const auto lhs = lift_inverse(c, next.row(i));
      const auto v = lift_inverse(c, w.row(i));
      std::vector<double> rhs(n);
      for (std::size_t k = 0; k < n; ++k) rhs[k] = (1 + alpha) * v[k] - h * g(i, k);
      CHECK(max_abs_diff(lhs, rhs) <= 1e-12);
    }
  }
}

TEST_CASE("plain Euler steps descend on smooth random models") {
  for (std::size_t s = 0; s < 20; ++s) {
    Rng rng(800, s);
    const auto model = sample_k3_model(rng);
    FlowParams p;
    p.alpha = 0.0;
    p.step = 0.01;
    p.tau = 0.3;
    p.max_iters = 200;
    p.entropy_threshold = 1e-300;
    p.record_energies = true;
    p.sinkhorn.tol = 1e-12;
    AssignmentFlow flow(model, p);
    double prev = flow.smoothed_energy(barycenter(3, 2));
    for (const auto& rec : flow.solve().trace) {
      CHECK(*rec.smoothed_energy <= prev + 1e-9);
      prev = *rec.smoothed_energy;
    }
  }
}

TEST_CASE("single strongly biased node picks its cheap label") {
  GraphicalModel model(1, 2);
  const double theta[2] = {0, 10};
  model.set_unary(0, theta);
  for (double alpha : {0.1, 0.5, 1.0}) {
    FlowParams p;
    p.alpha = alpha;
    const auto r = solve(model, p);
    CHECK(r.status == FlowStatus::converged);
    CHECK(r.labeling == Labeling{0});
  }
}

TEST_CASE("pure entropy descent on a zero model converges to a vertex") {
  GraphicalModel model(3, 3);
  model.add_edge(0, 1, Matrix(3, 3));
  model.add_edge(1, 2, Matrix(3, 3));
  Rng rng(10);
  FlowParams p;
  p.alpha = 0.5;
  p.max_iters = 2000;
  const auto r = solve(model, p, random_assignment(rng, 3, 3));
  CHECK(r.status == FlowStatus::converged);
  for (std::size_t k = 1; k < r.trace.size(); ++k)
    CHECK(r.trace[k].normalized_entropy <= r.trace[k - 1].normalized_entropy + 1e-12);
  CHECK(r.trace.back().normalized_entropy < p.entropy_threshold);
}

TEST_CASE("triangle model flow finds the discrete optimum") {
  FlowParams p;
  p.tau = 0.1;
  p.alpha = 0.5;
  p.step = 0.5;
  p.entropy_threshold = 1e-3;
  p.record_energies = true;
  const auto r = solve(triangle_model(), p);
  CHECK(r.status == FlowStatus::converged);
  CHECK(r.labeling == Labeling{1, 0, 0});
  CHECK(r.iterations <= 100);
  CHECK(r.assignment(0, 1) > 0.99);
  CHECK(r.trace.back().rounded_energy.value() == discrete_energy(triangle_model(), r.labeling));

  // E_tau first decreases, then rises while rounding takes over.
  std::size_t best = 0;
  for (std::size_t k = 0; k < r.trace.size(); ++k)
    if (*r.trace[k].smoothed_energy < *r.trace[best].smoothed_energy) best = k;
  CHECK(best + 1 < r.trace.size());
}

TEST_CASE("max_iters produces a timeout status") {
  FlowParams p;
  p.max_iters = 1;
  const auto r = solve(triangle_model(), p);
  CHECK(r.status == FlowStatus::max_iters);
  CHECK(r.iterations == 1);
  CHECK(r.trace.size() == 1);
}

TEST_CASE("flow results do not depend on the thread count") {
  Rng rng(14);
  const auto model = random_potts_grid(rng, 6, 6, 4);
  FlowParams p;
  p.alpha = 0.2;
  p.threads = 1;
  const auto a = solve(model, p);
  p.threads = 4;
  const auto b = solve(model, p);
  CHECK(a.iterations == b.iterations);
  CHECK(a.labeling == b.labeling);
  CHECK(a.assignment == b.assignment);
}

TEST_CASE("warm start does not change the trajectory beyond solver tolerance") {
  Rng rng(15);
  const auto model = random_potts_grid(rng, 3, 3, 3);
  FlowParams p;
  p.alpha = 0.3;
  p.sinkhorn.tol = 1e-12;
  const auto a = solve(model, p);
  p.warm_start = false;
  const auto b = solve(model, p);
  CHECK(a.labeling == b.labeling);
  CHECK(max_abs_diff(a.assignment.values(), b.assignment.values()) <= 1e-6);
}

TEST_CASE("edge observer sees every solve") {
  Rng rng(16);
  const auto model = random_potts_grid(rng, 2, 2, 2);
  FlowParams p;
  p.max_iters = 5;
  p.entropy_threshold = 1e-12;
  AssignmentFlow flow(model, p);
  std::size_t calls = 0;
  flow.set_edge_observer([&](std::size_t, std::size_t e, double residual) {
    ++calls;
    CHECK(e < model.edge_count());
    CHECK(residual <= p.sinkhorn.tol);
  });
  flow.solve();
  CHECK(calls == 5 * model.edge_count());
}

TEST_CASE("divergence guard aborts with a flow error") {
  GraphicalModel model(1, 2);
  const double theta[2] = {0, 1e9};
  model.set_unary(0, theta);
  FlowParams p;
  CHECK_THROWS_AS(solve(model, p), FlowError);
}

TEST_CASE("edge failures name the edge") {
  Rng rng(17);
  const auto model = sample_k3_model(rng);
  FlowParams p;
  p.sinkhorn.max_iters = 1;
  p.sinkhorn.newton_after = 0;
  p.sinkhorn.tol = 1e-15;
  p.warm_start = false;
  try {
    solve(model, p);
    FAIL("expected FlowError");
  } catch (const FlowError& e) {
    CHECK(e.edge() < model.edge_count());
    CHECK_FALSE(e.numerical());
    CHECK(std::string(e.what()).find("edge") != std::string::npos);
  }
}

TEST_CASE("initial assignment is validated") {
  FlowParams p;
  CHECK_THROWS_AS(solve(triangle_model(), p, AssignmentMatrix(3, 3, 1.0 / 3)), InvalidInput);
  CHECK_THROWS_AS(solve(triangle_model(), p, AssignmentMatrix(3, 2, 0.7)), InvalidInput);
}
