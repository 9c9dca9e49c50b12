// Command-line front end for the assignment-flow MAP solver.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "wam/error.hpp"
#include "wam/experiments.hpp"
#include "wam/flow.hpp"
#include "wam/image.hpp"
#include "wam/model_io.hpp"
#include "wam/oracles.hpp"
#include "wam/parallel.hpp"

namespace {

enum Exit { ok = 0, usage = 1, not_converged = 2, numerical = 3 };

struct FlowFlags {
  double tau = 0.1;
  double alpha = 0.5;
  double step = 0.5;
  double threshold = 1e-3;
  std::size_t max_iters = 1000;
  double sinkhorn_tol = 1e-8;
  std::size_t sinkhorn_max_iters = 10000;
  std::string sinkhorn_mode = "plain";
  std::size_t newton_after = wam::SinkhornOptions{}.newton_after;
  std::size_t threads = 1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--tau", tau, "smoothing parameter")->check(CLI::PositiveNumber);
    cmd->add_option("--alpha", alpha, "rounding parameter")->check(CLI::NonNegativeNumber);
    cmd->add_option("--step", step, "step size h")->check(CLI::PositiveNumber);
    cmd->add_option("--threshold", threshold, "normalized entropy threshold")->check(CLI::PositiveNumber);
    cmd->add_option("--max-iters", max_iters, "flow iteration cap")->check(CLI::PositiveNumber);
    cmd->add_option("--sinkhorn-tol", sinkhorn_tol, "L1 marginal tolerance")->check(CLI::PositiveNumber);
    cmd->add_option("--sinkhorn-max-iters", sinkhorn_max_iters)->check(CLI::PositiveNumber);
    cmd->add_option("--sinkhorn-mode", sinkhorn_mode)->check(CLI::IsMember({"plain", "log", "auto"}));
    cmd->add_option("--newton-after", newton_after, "scaling iterations before the Newton phase (0 = never)");
    cmd->add_option("--threads", threads, "worker threads (0 = all cores)");
  }

  wam::FlowParams params() const {
    wam::FlowParams p;
    p.tau = tau;
    p.alpha = alpha;
    p.step = step;
    p.entropy_threshold = threshold;
    p.max_iters = max_iters;
    p.sinkhorn.tol = sinkhorn_tol;
    p.sinkhorn.max_iters = sinkhorn_max_iters;
    p.sinkhorn.newton_after = newton_after;
    p.sinkhorn.mode = sinkhorn_mode == "log"    ? wam::SinkhornMode::log_domain
                      : sinkhorn_mode == "auto" ? wam::SinkhornMode::automatic
                                                : wam::SinkhornMode::plain;
    p.threads = threads == 0 ? wam::default_thread_count() : threads;
    return p;
  }
};

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw wam::InvalidInput("invalid grid value '" + item + "'");
    values.push_back(v);
  }
  if (values.empty()) throw wam::InvalidInput("empty grid");
  return values;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw wam::InvalidInput("cannot write '" + path + "'");
  return out;
}

std::string g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_trace(const std::string& path, const wam::FlowTrace& trace, bool energies) {
  auto out = open_output(path);
  out << "iter,norm_entropy";
  if (energies) out << ",e_tau,rounded_energy";
  out << '\n';
  for (const auto& r : trace) {
    out << r.iteration << ',' << g6(r.normalized_entropy);
    if (energies) out << ',' << g6(r.smoothed_energy.value_or(0.0)) << ',' << g6(r.rounded_energy.value_or(0.0));
    out << '\n';
  }
}

int status_exit(wam::FlowStatus status) { return status == wam::FlowStatus::converged ? ok : not_converged; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"assignment flow MAP solver for pairwise graphical models"};
  app.require_subcommand(1);

  // solve
  auto* solve_cmd = app.add_subcommand("solve", "run the flow on a model file");
  std::string model_path, labels_path, trace_path;
  bool energies = false;
  FlowFlags solve_flags;
  solve_cmd->add_option("model", model_path, "model file")->required();
  solve_cmd->add_option("-o,--output", labels_path, "labels output, one index per line")->required();
  solve_cmd->add_option("--trace", trace_path, "per-iteration trace CSV");
  solve_cmd->add_flag("--energies", energies, "record E_tau and rounded energy in the trace");
  solve_flags.attach(solve_cmd);

  // triangle
  auto* triangle_cmd = app.add_subcommand("triangle", "triangle model: marginal LP, local LP and flow");
  FlowFlags triangle_flags;
  triangle_cmd->add_option("--tau", triangle_flags.tau)->check(CLI::PositiveNumber);
  triangle_cmd->add_option("--step", triangle_flags.step)->check(CLI::PositiveNumber);
  triangle_cmd->add_option("--threshold", triangle_flags.threshold)->check(CLI::PositiveNumber);
  std::string triangle_alphas = "0.2,0.5,0.9";
  triangle_cmd->add_option("--alphas", triangle_alphas, "comma-separated rounding parameters");

  // sweep-k3
  auto* sweep_cmd = app.add_subcommand("sweep-k3", "Monte-Carlo parameter sweep over random triangle models");
  wam::SweepConfig sweep;
  std::string tau_grid, alpha_grid, sweep_out, vertex_out;
  std::size_t sweep_threads = 0;
  sweep_cmd->add_option("--samples", sweep.sample_count)->required()->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--seed", sweep.seed)->required();
  sweep_cmd->add_option("--tau-grid", tau_grid)->required();
  sweep_cmd->add_option("--alpha-grid", alpha_grid)->required();
  sweep_cmd->add_option("--step", sweep.step)->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--threshold", sweep.entropy_threshold)->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--max-iters", sweep.max_iters)->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--success-tol", sweep.success_rel_tol, "relative energy error counted as success");
  sweep_cmd->add_option("--threads", sweep_threads, "worker threads (0 = all cores)");
  sweep_cmd->add_option("-o,--output", sweep_out, "sweep CSV")->required();
  sweep_cmd->add_option("--vertex-stats", vertex_out, "local-LP vertex statistics CSV");

  // label-image
  auto* label_cmd = app.add_subcommand("label-image", "label an image with a palette and a pairwise prior");
  std::string input_path, palette_path, prior_spec = "potts:1", neighborhood = "n4", label_out, render_out,
                                         truth_path;
  double rho = 1.0;
  FlowFlags label_flags;
  label_cmd->add_option("--input", input_path, "PGM or PPM image")->required();
  label_cmd->add_option("--palette", palette_path, "palette file")->required();
  label_cmd->add_option("--rho", rho, "unary scaling")->check(CLI::PositiveNumber);
  label_cmd->add_option("--prior", prior_spec, "potts:<w> or a file with an n x n matrix");
  label_cmd->add_option("--neighborhood", neighborhood)->check(CLI::IsMember({"n4", "n8"}));
  label_cmd->add_option("-o,--output", label_out, "label-index PGM")->required();
  label_cmd->add_option("--render", render_out, "palette-colored PPM/PGM");
  label_cmd->add_option("--truth", truth_path, "ground-truth label PGM; prints accuracy");
  label_flags.attach(label_cmd);

  // five-region
  auto* bench_cmd = app.add_subcommand("five-region", "write the synthetic five-region benchmark");
  std::size_t bench_w = 128, bench_h = 128;
  double bench_noise = 0.4;
  std::uint64_t bench_seed = 1;
  std::string bench_image, bench_palette, bench_truth, bench_prior;
  bench_cmd->add_option("--width", bench_w)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--height", bench_h)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--noise", bench_noise, "fraction of resampled pixels")->check(CLI::Range(0.0, 1.0));
  bench_cmd->add_option("--seed", bench_seed);
  bench_cmd->add_option("--image", bench_image, "noisy PPM output")->required();
  bench_cmd->add_option("--palette", bench_palette, "palette output")->required();
  bench_cmd->add_option("--truth", bench_truth, "ground-truth label PGM output");
  bench_cmd->add_option("--prior", bench_prior, "direction prior matrix output");

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of the Wasserstein gradients");
  std::size_t grad_labels = 4, grad_trials = 50;
  double grad_tau = 0.1;
  std::uint64_t grad_seed = 1;
  grad_cmd->add_option("--labels", grad_labels)->check(CLI::Range(std::size_t{2}, std::size_t{1000}));
  grad_cmd->add_option("--tau", grad_tau)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--trials", grad_trials)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--seed", grad_seed);

  // oracle
  auto* oracle_cmd = app.add_subcommand("oracle", "exhaustive minimization of a small model");
  std::string oracle_path;
  oracle_cmd->add_option("model", oracle_path, "model file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : usage;
  }

  try {
    if (*solve_cmd) {
      const wam::GraphicalModel model = wam::read_model_file(model_path);
      wam::FlowParams params = solve_flags.params();
      params.record_energies = energies;
      const wam::FlowResult r = wam::solve(model, params);
      auto out = open_output(labels_path);
      for (wam::Label l : r.labeling) out << l << '\n';
      if (!trace_path.empty()) write_trace(trace_path, r.trace, energies);
      std::cerr << (r.status == wam::FlowStatus::converged ? "converged" : "max iterations reached") << " after "
                << r.iterations << " iterations, energy " << wam::discrete_energy(model, r.labeling) << '\n';
      return status_exit(r.status);
    }
    if (*triangle_cmd) {
      const auto alphas = parse_grid(triangle_alphas);
      const auto report = wam::run_triangle(triangle_flags.params(), alphas);
      wam::print_triangle_report(std::cout, report);
      return ok;
    }
    if (*sweep_cmd) {
      sweep.tau_grid = parse_grid(tau_grid);
      sweep.alpha_grid = parse_grid(alpha_grid);
      sweep.threads = sweep_threads == 0 ? wam::default_thread_count() : sweep_threads;
      const auto records = wam::run_sweep_k3(sweep);
      auto out = open_output(sweep_out);
      wam::write_sweep_csv(out, records);
      const auto stats = wam::k3_vertex_statistics(sweep.sample_count, sweep.seed, sweep.threads);
      std::cout << "vertex_stats";
      for (std::size_t v = 0; v < stats.counts.size(); ++v) std::cout << ' ' << g6(stats.fraction(v));
      std::cout << '\n';
      if (!vertex_out.empty()) {
        auto vout = open_output(vertex_out);
        wam::write_vertex_statistics_csv(vout, stats);
      }
      for (const auto& r : records)
        if (r.failures) std::cerr << "tau " << r.tau << " alpha " << r.alpha << ": " << r.failures
                                  << " samples aborted by numerical errors\n";
      return ok;
    }
    if (*label_cmd) {
      const wam::Image image = wam::read_pnm_file(input_path);
      const wam::Palette palette = wam::read_palette_file(palette_path, image.channels);
      const wam::Matrix prior = wam::parse_prior(prior_spec, palette.size());
      const auto hood = neighborhood == "n8" ? wam::Neighborhood::n8 : wam::Neighborhood::n4;
      const wam::FlowResult r = wam::label_image(image, palette, rho, hood, prior, label_flags.params());
      {
        auto out = open_output(label_out);
        wam::write_label_pgm(out, image.width, image.height, r.labeling);
      }
      if (!render_out.empty())
        wam::write_pnm_file(render_out, wam::render_labels(image.width, image.height, r.labeling, palette));
      std::size_t scaling = 0, newton = 0;
      for (const auto& rec : r.trace) {
        scaling += rec.sinkhorn_iterations;
        newton += rec.newton_edges;
      }
      std::cerr << (r.status == wam::FlowStatus::converged ? "converged" : "max iterations reached") << " after "
                << r.iterations << " iterations (" << scaling << " edge solver iterations, " << newton
                << " Newton fallbacks)\n";
      if (!truth_path.empty()) {
        std::ifstream in(truth_path, std::ios::binary);
        if (!in) throw wam::InvalidInput("cannot open '" + truth_path + "'");
        std::size_t tw = 0, th = 0;
        const auto truth = wam::read_label_pgm(in, tw, th);
        if (tw != image.width || th != image.height) throw wam::InvalidInput("truth image size mismatch");
        std::cout << "accuracy " << g6(wam::labeling_accuracy(truth, r.labeling)) << '\n';
      }
      return status_exit(r.status);
    }
    if (*bench_cmd) {
      const auto bench = wam::make_five_region_benchmark(bench_w, bench_h, bench_noise, bench_seed);
      wam::write_pnm_file(bench_image, bench.noisy);
      {
        auto out = open_output(bench_palette);
        wam::write_palette(out, bench.palette);
      }
      if (!bench_truth.empty()) {
        auto out = open_output(bench_truth);
        wam::write_label_pgm(out, bench.width, bench.height, bench.truth);
      }
      if (!bench_prior.empty()) {
        auto out = open_output(bench_prior);
        const wam::Matrix prior = wam::direction_prior();
        for (std::size_t r = 0; r < prior.rows(); ++r) {
          for (std::size_t c = 0; c < prior.cols(); ++c) out << (c ? " " : "") << prior(r, c);
          out << '\n';
        }
      }
      return ok;
    }
    if (*grad_cmd) {
      const auto report = wam::run_gradcheck(grad_labels, grad_tau, grad_trials, grad_seed);
      std::cout << "trials " << report.trials << "\nmax message rel. error " << g6(report.max_message_error)
                << "\nmax gradient rel. error " << g6(report.max_gradient_error) << '\n';
      if (!report.failure.empty()) std::cout << "numerical failure: " << report.failure << '\n';
      std::cout << (report.passed ? "PASS" : "FAIL") << '\n';
      return report.passed ? ok : numerical;
    }
    if (*oracle_cmd) {
      const wam::GraphicalModel model = wam::read_model_file(oracle_path);
      const auto best = wam::brute_force_min(model);
      for (std::size_t i = 0; i < best.labeling.size(); ++i) std::cout << (i ? " " : "") << best.labeling[i];
      std::cout << "\nenergy " << best.energy << '\n';
      return ok;
    }
  } catch (const wam::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return usage;
  } catch (const wam::FlowError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.numerical() ? numerical : not_converged;
  } catch (const wam::ConvergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return not_converged;
  } catch (const wam::StabilityError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return numerical;
  } catch (const wam::CapacityError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return usage;
  } catch (const wam::InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return usage;
  } catch (const wam::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return numerical;
  }
  return ok;
}
