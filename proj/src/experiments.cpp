#include "wam/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "wam/error.hpp"
#include "wam/parallel.hpp"
#include "wam/random.hpp"

namespace wam {

GraphicalModel triangle_model() {
  GraphicalModel model(3, 2);
  const double u1[2] = {-0.2261, 0.2261};
  const double u2[2] = {-0.4449, 0.4449};
  const double u3[2] = {-0.3202, 0.3202};
  model.set_unary(0, u1);
  model.set_unary(1, u2);
  model.set_unary(2, u3);
  auto mat = [](double a, double b, double c, double d) {
    Matrix t(2, 2);
    t(0, 0) = a;
    t(0, 1) = b;
    t(1, 0) = c;
    t(1, 1) = d;
    return t;
  };
  model.add_edge(0, 1, mat(-0.9184, -1.6252, -1.8891, -0.9807));
  model.add_edge(0, 2, mat(0.3590, 0.0958, -1.8668, 1.5193));
  model.add_edge(1, 2, mat(1.2147, -1.5215, -0.3302, -0.0459));
  return model;
}

TriangleReport run_triangle(const FlowParams& base, std::span<const double> alphas) {
  const GraphicalModel model = triangle_model();
  TriangleReport report;
  report.brute_force = brute_force_min(model);
  report.marginal = lp_marginal(model);
  report.local = lp_local(model);
  for (double alpha : alphas) {
    FlowParams params = base;
    params.alpha = alpha;
    const FlowResult r = solve(model, params);
    TriangleFlowRow row;
    row.alpha = alpha;
    for (std::size_t i = 0; i < 3; ++i) row.mu[i] = r.assignment(i, 1);
    row.iterations = r.iterations;
    row.status = r.status;
    row.labeling = r.labeling;
    report.flows.push_back(row);
  }
  return report;
}

void print_triangle_report(std::ostream& out, const TriangleReport& report) {
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%-12.6g", v);
    return std::string(buf);
  };
  out << "method              mu1         mu2         mu3         iterations\n";
  const auto m = report.marginal.point.node_marginals();
  out << "marginal polytope   " << fmt(m[0]) << fmt(m[1]) << fmt(m[2]) << "-\n";
  const auto l = report.local.point.node_marginals();
  out << "local polytope      " << fmt(l[0]) << fmt(l[1]) << fmt(l[2]) << "-\n";
  for (const auto& row : report.flows) {
    char head[32];
    std::snprintf(head, sizeof head, "flow alpha=%-8.3g ", row.alpha);
    out << head << fmt(row.mu[0]) << fmt(row.mu[1]) << fmt(row.mu[2]) << row.iterations
        << (row.status == FlowStatus::converged ? "" : " (max iters)") << '\n';
  }
  out << "brute force labeling " << report.brute_force.labeling[0] << ' ' << report.brute_force.labeling[1] << ' '
      << report.brute_force.labeling[2] << ", energy " << report.brute_force.energy << '\n';
}

bool energy_success(double energy, double optimum, double rel_tol) {
  const double scale = std::abs(optimum);
  if (scale < 1e-6) return std::abs(energy - optimum) <= 1e-6;
  return std::abs(energy - optimum) <= rel_tol * scale;
}

std::vector<SweepRecord> run_sweep_k3(const SweepConfig& config) {
  if (config.tau_grid.empty() || config.alpha_grid.empty()) throw InvalidInput("sweep: empty parameter grid");
  if (config.sample_count == 0) throw InvalidInput("sweep: need at least one sample");
  const std::size_t grid = config.tau_grid.size() * config.alpha_grid.size();

  // Integer tallies per grid point keep the reduction order-independent.
  struct Tally {
    std::size_t success = 0, iterations = 0, timeouts = 0, failures = 0;
  };
  const std::size_t chunks = std::max<std::size_t>(1, std::min(config.threads, config.sample_count));
  std::vector<std::vector<Tally>> partial(chunks, std::vector<Tally>(grid));
  const std::size_t per_chunk = (config.sample_count + chunks - 1) / chunks;

  parallel_for(chunks, chunks, [&](std::size_t c) {
    auto& tally = partial[c];
    const std::size_t begin = c * per_chunk;
    const std::size_t end = std::min(config.sample_count, begin + per_chunk);
    for (std::size_t s = begin; s < end; ++s) {
      Rng rng(config.seed, s);
      const GraphicalModel model = sample_k3_model(rng);
      const double optimum = brute_force_min(model).energy;
      std::size_t g = 0;
      for (double tau : config.tau_grid) {
        for (double alpha : config.alpha_grid) {
          FlowParams params;
          params.tau = tau;
          params.alpha = alpha;
          params.step = config.step;
          params.entropy_threshold = config.entropy_threshold;
          params.max_iters = config.max_iters;
          params.sinkhorn = config.sinkhorn;
          Tally& t = tally[g++];
          try {
            const FlowResult r = solve(model, params);
            t.iterations += r.iterations;
            if (r.status == FlowStatus::max_iters) ++t.timeouts;
            if (energy_success(discrete_energy(model, r.labeling), optimum, config.success_rel_tol)) ++t.success;
          } catch (const Error&) {
            ++t.failures;
            t.iterations += config.max_iters;
          }
        }
      }
    }
  });

  std::vector<SweepRecord> records;
  records.reserve(grid);
  const double count = static_cast<double>(config.sample_count);
  std::size_t g = 0;
  for (double tau : config.tau_grid) {
    for (double alpha : config.alpha_grid) {
      Tally total;
      for (const auto& p : partial) {
        total.success += p[g].success;
        total.iterations += p[g].iterations;
        total.timeouts += p[g].timeouts;
        total.failures += p[g].failures;
      }
      ++g;
      records.push_back({tau, alpha, total.success / count, total.iterations / count, total.timeouts / count,
                         total.failures});
    }
  }
  return records;
}

namespace {

std::string g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

void write_sweep_csv(std::ostream& out, std::span<const SweepRecord> records) {
  out << "tau,alpha,success_rate,avg_iterations,timeout_rate\n";
  for (const auto& r : records)
    out << g6(r.tau) << ',' << g6(r.alpha) << ',' << g6(r.success_rate) << ',' << g6(r.avg_iterations) << ','
        << g6(r.timeout_rate) << '\n';
}

VertexStatistics k3_vertex_statistics(std::size_t samples, std::uint64_t seed, std::size_t threads) {
  const std::size_t vertices = k3_local_vertices().size();
  const std::size_t chunks = std::max<std::size_t>(1, std::min(threads, samples));
  std::vector<std::vector<std::size_t>> partial(chunks, std::vector<std::size_t>(vertices, 0));
  const std::size_t per_chunk = (samples + chunks - 1) / chunks;
  parallel_for(chunks, chunks, [&](std::size_t c) {
    const std::size_t begin = c * per_chunk;
    const std::size_t end = std::min(samples, begin + per_chunk);
    for (std::size_t s = begin; s < end; ++s) {
      Rng rng(seed, s);
      ++partial[c][lp_local(sample_k3_model(rng)).vertex_index];
    }
  });
  VertexStatistics stats;
  stats.samples = samples;
  stats.counts.assign(vertices, 0);
  for (const auto& p : partial)
    for (std::size_t v = 0; v < vertices; ++v) stats.counts[v] += p[v];
  return stats;
}

void write_vertex_statistics_csv(std::ostream& out, const VertexStatistics& stats) {
  out << "vertex,mu1,mu2,mu3,mu12,mu13,mu23,fraction\n";
  const auto& vertices = k3_local_vertices();
  for (std::size_t v = 0; v < vertices.size(); ++v) {
    out << v;
    for (double x : vertices[v].mu) out << ',' << g6(x);
    out << ',' << g6(stats.fraction(v)) << '\n';
  }
}

Palette direction_palette() {
  // dark blue, light blue, cyan, orange, yellow; quantized to 8 bits.
  const double rgb[5][3] = {{0.2392, 0.1490, 0.6588},
                            {0.1961, 0.4824, 0.9882},
                            {0.0941, 0.7490, 0.7098},
                            {0.8196, 0.7490, 0.1529},
                            {0.9765, 0.9804, 0.0784}};
  Palette palette;
  for (const auto& c : rgb) {
    std::vector<double> color;
    for (double v : c) color.push_back(std::round(v * 255.0) / 255.0);
    palette.push_back(color);
  }
  return palette;
}

Matrix direction_prior() {
  Matrix theta = potts_pairwise(5, 0.1);
  theta(0, 1) = theta(1, 0) = 1.0;
  theta(3, 4) = theta(4, 3) = 1.0;
  return theta;
}

FiveRegionBenchmark make_five_region_benchmark(std::size_t width, std::size_t height, double corrupt_fraction,
                                               std::uint64_t seed) {
  if (width < 3 || height < 3) throw InvalidInput("five-region benchmark needs at least 3x3 pixels");
  if (!(corrupt_fraction >= 0.0 && corrupt_fraction <= 1.0)) throw InvalidInput("corrupt fraction must be in [0,1]");
  FiveRegionBenchmark bench;
  bench.width = width;
  bench.height = height;
  bench.palette = direction_palette();
  bench.truth.resize(width * height);
  // Left half: horizontal bands alternating top (0) and bottom (1). Right
  // half: vertical bands alternating left (3) and right (4). Consecutive
  // bands are separated by thin center (2) lines, so the confusable pairs
  // {0,1} and {3,4} never touch.
  constexpr std::size_t band = 12;
  constexpr std::size_t line = 2;
  constexpr std::size_t period = band + line;
  auto label_at = [&](std::size_t along, std::size_t first, std::size_t second) -> std::size_t {
    const std::size_t phase = along % period;
    if (phase >= band) return 2;
    return (along / period) % 2 == 0 ? first : second;
  };
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      bench.truth[y * width + x] = 2 * x < width ? label_at(y, 0, 1) : label_at(x - (width + 1) / 2, 3, 4);

  std::vector<std::size_t> observed = bench.truth;
  Rng rng(seed, 0);
  std::vector<std::size_t> order(observed.size());
  std::iota(order.begin(), order.end(), 0);
  const auto corrupt = static_cast<std::size_t>(std::llround(corrupt_fraction * static_cast<double>(order.size())));
  for (std::size_t k = 0; k < corrupt; ++k) {
    std::swap(order[k], order[k + rng.below(order.size() - k)]);
    observed[order[k]] = rng.below(bench.palette.size());
  }
  bench.noisy = render_labels(width, height, observed, bench.palette);
  return bench;
}

double labeling_accuracy(std::span<const std::size_t> truth, std::span<const std::size_t> labels) {
  if (truth.size() != labels.size() || truth.empty()) throw InvalidInput("labeling_accuracy: size mismatch");
  std::size_t hits = 0;
  for (std::size_t k = 0; k < truth.size(); ++k) hits += truth[k] == labels[k];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::size_t count_forbidden_transitions(std::span<const std::size_t> labels, std::size_t width, std::size_t height) {
  if (labels.size() != width * height) throw InvalidInput("count_forbidden_transitions: size mismatch");
  auto forbidden = [](std::size_t a, std::size_t b) {
    if (a > b) std::swap(a, b);
    return (a == 0 && b == 1) || (a == 3 && b == 4);
  };
  std::size_t count = 0;
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t p = y * width + x;
      if (x + 1 < width) count += forbidden(labels[p], labels[p + 1]);
      if (y + 1 < height) count += forbidden(labels[p], labels[p + width]);
    }
  return count;
}

FlowResult label_image(const Image& image, const Palette& palette, double rho, Neighborhood neighborhood,
                       const Matrix& prior, const FlowParams& params) {
  if (prior.rows() != palette.size() || prior.cols() != palette.size())
    throw InvalidInput("prior is " + std::to_string(prior.rows()) + "x" + std::to_string(prior.cols()) +
                       " but the palette has " + std::to_string(palette.size()) + " labels");
  const GraphicalModel model = model_from_image(image, palette, rho, neighborhood, prior);
  return solve(model, params);
}

Matrix parse_prior(const std::string& spec, std::size_t labels) {
  if (spec.rfind("potts:", 0) == 0) {
    const std::string w = spec.substr(6);
    std::size_t used = 0;
    double weight = 0.0;
    try {
      weight = std::stod(w, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != w.size()) throw InvalidInput("invalid Potts weight '" + w + "'");
    return potts_pairwise(labels, weight);
  }
  std::ifstream in(spec);
  if (!in) throw InvalidInput("cannot open prior matrix '" + spec + "'");
  Matrix theta(labels, labels);
  for (double& v : theta.values())
    if (!(in >> v) || !std::isfinite(v))
      throw InvalidInput("prior matrix '" + spec + "' must hold " + std::to_string(labels * labels) + " reals");
  double extra;
  if (in >> extra) throw InvalidInput("prior matrix '" + spec + "' has more than n*n values");
  return theta;
}

namespace {

std::vector<double> random_interior_point(Rng& rng, std::size_t n) {
  std::vector<double> p(n);
  double z = 0.0;
  for (double& v : p) {
    v = -std::log(1.0 - rng.uniform());
    z += v;
  }
  // Mixing with the barycenter keeps entries away from zero.
  for (double& v : p) v = 0.5 * v / z + 0.5 / static_cast<double>(n);
  return p;
}

double gaussian(Rng& rng) {
  const double u1 = 1.0 - rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

std::vector<double> random_unit_tangent(Rng& rng, std::size_t n) {
  std::vector<double> u(n);
  for (double& v : u) v = gaussian(rng);
  project_tangent_inplace(u);
  double norm = 0.0;
  for (double v : u) norm += v * v;
  norm = std::sqrt(norm);
  for (double& v : u) v /= norm;
  return u;
}

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * y[k];
  return s;
}

}  // namespace

GradcheckReport run_gradcheck(std::size_t labels, double tau, std::size_t trials, std::uint64_t seed, double delta,
                              double threshold) {
  if (labels < 2) throw InvalidInput("gradcheck: need at least two labels");
  if (!(tau > 0.0)) throw InvalidInput("gradcheck: tau must be positive");
  GradcheckReport report;
  SinkhornOptions tight;
  tight.tol = 1e-13;
  tight.max_iters = 200000;

  try {
    for (std::size_t t = 0; t < trials; ++t) {
      Rng rng(seed, t);
      const std::size_t n = labels;

      Matrix cost(n, n);
      for (double& v : cost.values()) v = rng.uniform(-2.0, 2.0);
      const auto p = random_interior_point(rng, n);
      const auto q = random_interior_point(rng, n);
      const WassersteinMessage msg = wasserstein_message(cost, p, q, tau, tight);
      for (int side = 0; side < 2; ++side) {
        const auto u = random_unit_tangent(rng, n);
        std::vector<double> plus = side == 0 ? p : q, minus = plus;
        for (std::size_t k = 0; k < n; ++k) {
          plus[k] += delta * u[k];
          minus[k] -= delta * u[k];
        }
        const double fd = side == 0 ? (smoothed_edge_distance(cost, plus, q, tau, tight) -
                                       smoothed_edge_distance(cost, minus, q, tau, tight)) / (2.0 * delta)
                                    : (smoothed_edge_distance(cost, p, plus, tau, tight) -
                                       smoothed_edge_distance(cost, p, minus, tau, tight)) / (2.0 * delta);
        const auto& g = side == 0 ? msg.grad1 : msg.grad2;
        const double err = std::abs(fd - dot(g, u)) / std::max(norm2(g), 1e-300);
        report.max_message_error = std::max(report.max_message_error, err);
      }

      GraphicalModel model(3, n);
      std::vector<double> theta(n);
      for (std::size_t i = 0; i < 3; ++i) {
        for (double& v : theta) v = rng.uniform(-1.0, 1.0);
        model.set_unary(i, theta);
      }
      for (auto [i, j] : {std::pair<std::size_t, std::size_t>{0, 1}, {0, 2}, {1, 2}}) {
        Matrix pw(n, n);
        for (double& v : pw.values()) v = rng.uniform(-2.0, 2.0);
        model.add_edge(i, j, pw);
      }
      AssignmentMatrix w(3, n), dir(3, n);
      for (std::size_t i = 0; i < 3; ++i) {
        const auto row = random_interior_point(rng, n);
        std::copy(row.begin(), row.end(), w.row(i).begin());
        const auto u = random_unit_tangent(rng, n);
        for (std::size_t k = 0; k < n; ++k) dir(i, k) = u[k] / std::sqrt(3.0);
      }
      const Matrix grad = energy_gradient(model, w, tau, tight);
      AssignmentMatrix plus = w, minus = w;
      for (std::size_t k = 0; k < w.size(); ++k) {
        plus.values()[k] += delta * dir.values()[k];
        minus.values()[k] -= delta * dir.values()[k];
      }
      const double fd =
          (smoothed_energy(model, plus, tau, tight) - smoothed_energy(model, minus, tau, tight)) / (2.0 * delta);
      const double err = std::abs(fd - dot(grad.values(), dir.values())) / std::max(norm2(grad.values()), 1e-300);
      report.max_gradient_error = std::max(report.max_gradient_error, err);
      ++report.trials;
    }
  } catch (const Error& err) {
    report.failure = err.what();
    report.passed = false;
    return report;
  }
  report.passed = report.max_message_error < threshold && report.max_gradient_error < threshold;
  return report;
}

}  // namespace wam
