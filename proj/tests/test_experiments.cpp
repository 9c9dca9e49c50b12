#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "wam/error.hpp"
#include "wam/experiments.hpp"

using namespace wam;

TEST_CASE("energy success test") {
  CHECK(energy_success(-1.0, -1.0, 0.01));
  CHECK(energy_success(-0.991, -1.0, 0.01));
  CHECK_FALSE(energy_success(-0.98, -1.0, 0.01));
  CHECK(energy_success(5e-7, 0.0, 0.01));
  CHECK_FALSE(energy_success(2e-6, 0.0, 0.01));
}

TEST_CASE("triangle report") {
  FlowParams base;
  base.tau = 0.1;
  base.step = 0.5;
  base.entropy_threshold = 1e-3;
  const std::vector<double> alphas{0.2, 0.5, 0.9};
  const auto report = run_triangle(base, alphas);
  CHECK(report.brute_force.labeling == Labeling{1, 0, 0});
  CHECK(report.local.point.node_marginals() == std::array<double, 3>{0.5, 0.5, 0.5});
  REQUIRE(report.flows.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(report.flows[k].labeling == Labeling{1, 0, 0});
    CHECK(report.flows[k].mu[0] > 0.99);
    CHECK(report.flows[k].mu[1] < 1e-2);
    CHECK(report.flows[k].mu[2] < 1e-2);
  }
  CHECK(report.flows[0].iterations > report.flows[1].iterations);
  CHECK(report.flows[1].iterations > report.flows[2].iterations);

  std::ostringstream out;
  print_triangle_report(out, report);
  CHECK(out.str().find("local polytope") != std::string::npos);
  CHECK(out.str().find("marginal polytope") != std::string::npos);
  CHECK(out.str().find("alpha=0.9") != std::string::npos);
}

TEST_CASE("sweep is deterministic across thread counts and grid points") {
  SweepConfig config;
  config.sample_count = 60;
  config.seed = 3;
  config.tau_grid = {0.15, 0.2};
  config.alpha_grid = {0.3, 0.6};
  config.threads = 1;
  const auto a = run_sweep_k3(config);
  config.threads = 3;
  const auto b = run_sweep_k3(config);
  REQUIRE(a.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(a[k].success_rate == b[k].success_rate);
    CHECK(a[k].avg_iterations == b[k].avg_iterations);
    CHECK(a[k].timeout_rate == b[k].timeout_rate);
    CHECK(a[k].success_rate >= 0.0);
    CHECK(a[k].success_rate <= 1.0);
  }
  CHECK(a[0].tau == 0.15);
  CHECK(a[1].alpha == 0.6);
  CHECK(a[2].tau == 0.2);

  // A grid point sees the same models whatever else is on the grid.
  config.tau_grid = {0.2};
  config.alpha_grid = {0.6};
  const auto single = run_sweep_k3(config);
  CHECK(single[0].success_rate == a[3].success_rate);
  CHECK(single[0].avg_iterations == a[3].avg_iterations);

  std::ostringstream csv;
  write_sweep_csv(csv, a);
  std::istringstream lines(csv.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header == "tau,alpha,success_rate,avg_iterations,timeout_rate");
  std::size_t rows = 0;
  for (std::string line; std::getline(lines, line);) ++rows;
  CHECK(rows == 4);
}

TEST_CASE("sweep without rounding times out") {
  SweepConfig config;
  config.sample_count = 20;
  config.tau_grid = {0.5};
  config.alpha_grid = {0.0};
  const auto r = run_sweep_k3(config);
  CHECK(r[0].timeout_rate == 1.0);
  CHECK(r[0].avg_iterations == 600.0);
}

TEST_CASE("vertex statistics") {
  const auto a = k3_vertex_statistics(5000, 9, 1);
  const auto b = k3_vertex_statistics(5000, 9, 4);
  CHECK(a.counts == b.counts);
  CHECK(std::accumulate(a.counts.begin(), a.counts.end(), std::size_t{0}) == 5000);
  std::ostringstream csv;
  write_vertex_statistics_csv(csv, a);
  CHECK(csv.str().rfind("vertex,mu1,mu2,mu3,mu12,mu13,mu23,fraction\n", 0) == 0);
}

TEST_CASE("five-region benchmark layout") {
  const auto bench = make_five_region_benchmark(64, 48, 0.4, 1);
  CHECK(bench.truth.size() == 64 * 48);
  CHECK(bench.noisy.width == 64);
  CHECK(bench.noisy.channels == 3);
  CHECK(bench.palette.size() == 5);
  CHECK(count_forbidden_transitions(bench.truth, 64, 48) == 0);
  std::array<std::size_t, 5> counts{};
  for (auto l : bench.truth) ++counts[l];
  for (auto c : counts) CHECK(c > 0);

  const auto clean = make_five_region_benchmark(64, 48, 0.0, 1);
  const auto again = make_five_region_benchmark(64, 48, 0.4, 1);
  CHECK(again.noisy.features == bench.noisy.features);
  std::size_t changed = 0;
  for (std::size_t p = 0; p < bench.truth.size() * 3; p += 3)
    changed += bench.noisy.features[p] != clean.noisy.features[p] ||
               bench.noisy.features[p + 1] != clean.noisy.features[p + 1] ||
               bench.noisy.features[p + 2] != clean.noisy.features[p + 2];
  // 40% of the pixels are resampled; a fifth of those keep their color.
  CHECK(changed > 0.28 * bench.truth.size());
  CHECK(changed < 0.36 * bench.truth.size());
}

TEST_CASE("accuracy and forbidden transitions") {
  const std::vector<std::size_t> truth{0, 1, 2, 3};
  const std::vector<std::size_t> labels{0, 1, 2, 4};
  CHECK(labeling_accuracy(truth, labels) == 0.75);
  // 2x2 grid: only the pairs {0,1} and {3,4} count.
  CHECK(count_forbidden_transitions(labels, 2, 2) == 1);
  const std::vector<std::size_t> vertical{3, 0, 4, 0};
  CHECK(count_forbidden_transitions(vertical, 2, 2) == 1);
  CHECK_THROWS_AS(labeling_accuracy(truth, std::vector<std::size_t>{0}), InvalidInput);
}

TEST_CASE("direction prior") {
  const auto p = direction_prior();
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      const bool bad = (i == 0 && j == 1) || (i == 1 && j == 0) || (i == 3 && j == 4) || (i == 4 && j == 3);
      CHECK(p(i, j) == (i == j ? 0.0 : bad ? 1.0 : 0.1));
    }
}

TEST_CASE("prior specifications") {
  CHECK(parse_prior("potts:0.25", 3) == potts_pairwise(3, 0.25));
  CHECK_THROWS_AS(parse_prior("potts:abc", 3), InvalidInput);
  const std::string path = "wam_test_prior.mat";
  {
    std::ofstream out(path);
    out << "0 1\n2 0\n";
  }
  const auto m = parse_prior(path, 2);
  CHECK(m(1, 0) == 2.0);
  CHECK_THROWS(parse_prior(path, 3));
  std::remove(path.c_str());
  CHECK_THROWS(parse_prior("does-not-exist.mat", 2));
}

TEST_CASE("noiseless palette image is labeled exactly") {
  const auto bench = make_five_region_benchmark(24, 16, 0.0, 1);
  FlowParams p;
  p.tau = 0.05;
  p.alpha = 0.2;
  p.step = 0.5;
  const auto r = label_image(bench.noisy, bench.palette, 0.1, Neighborhood::n4, potts_pairwise(5, 0.0), p);
  CHECK(r.status == FlowStatus::converged);
  CHECK(r.labeling == bench.truth);
}

TEST_CASE("gradient self-check") {
  const auto a = run_gradcheck(4, 0.1, 50, 1);
  CHECK(a.passed);
  CHECK(a.trials == 50);
  CHECK(a.max_message_error < 1e-4);
  CHECK(a.max_gradient_error < 1e-4);
  CHECK(run_gradcheck(2, 0.5, 20, 2).passed);

  const auto tiny = run_gradcheck(4, 1e-6, 5, 1);
  CHECK_FALSE(tiny.passed);
  CHECK_THROWS_AS(run_gradcheck(1, 0.1, 5, 1), InvalidInput);
}
