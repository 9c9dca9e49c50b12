#include "wam/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "wam/error.hpp"
#include "wam/simplex.hpp"

namespace wam {
namespace {

bool kernel_underflows(const Matrix& k) {
  const std::size_t n = k.rows();
  for (std::size_t i = 0; i < n; ++i) {
    bool row_alive = false;
    bool col_alive = false;
    for (std::size_t j = 0; j < n; ++j) {
      row_alive |= k(i, j) > 0.0;
      col_alive |= k(j, i) > 0.0;
    }
    if (!row_alive || !col_alive) return true;
  }
  return false;
}

void check_marginals(std::span<const double> mu1, std::span<const double> mu2, std::size_t n) {
  if (mu1.size() != n || mu2.size() != n) throw InvalidInput("sinkhorn: marginal size does not match cost");
  for (std::size_t k = 0; k < n; ++k)
    if (!(mu1[k] > 0.0) || !(mu2[k] > 0.0) || !std::isfinite(mu1[k]) || !std::isfinite(mu2[k]))
      throw DegenerateInput("sinkhorn: marginals must be strictly positive");
  const double s1 = std::accumulate(mu1.begin(), mu1.end(), 0.0);
  const double s2 = std::accumulate(mu2.begin(), mu2.end(), 0.0);
  if (std::abs(s1 - s2) > 1e-9 * std::max(s1, s2)) throw InvalidInput("sinkhorn: marginals have different mass");
}

void balance_gauge(DualPotentials& d) {
  double m1 = 0.0, m2 = 0.0;
  for (double v : d.nu1) m1 += v;
  for (double v : d.nu2) m2 += v;
  const double shift = 0.5 * (m1 - m2) / static_cast<double>(d.nu1.size());
  for (double& v : d.nu1) v -= shift;
  for (double& v : d.nu2) v += shift;
}

double log_sum_exp(std::span<const double> x) {
  const double top = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(top)) return top;
  double s = 0.0;
  for (double v : x) s += std::exp(v - top);
  return top + std::log(s);
}

[[noreturn]] void throw_unconverged(std::size_t iters, double residual) {
  throw ConvergenceError("sinkhorn: no convergence after " + std::to_string(iters) +
                             " iterations (marginal residual " + std::to_string(residual) + ")",
                         residual);
}

// Newton ascent on the semi-dual
//   F(g) = <mu2, g> - tau sum_i mu1_i log sum_j exp((g_j - Theta_ij) / tau),
// with f eliminated so that the row marginals hold exactly.
class SemiDualNewton {
 public:
  // Returns true on convergence; g is updated in place, f and the coupling
  // rows p (M_ij = mu1_i p_ij) correspond to the final g.
  bool run(const Matrix& cost, const Matrix* kernel, double tau, std::span<const double> mu1,
           std::span<const double> mu2, std::vector<double>& g, const SinkhornOptions& opt);

  std::vector<double> f;
  std::vector<double> p;
  double residual = 0.0;
  std::size_t iterations = 0;

 private:
  double evaluate(const Matrix& cost, double tau, std::span<const double> mu1, std::span<const double> mu2,
                  const std::vector<double>& gv, std::vector<double>& fv, std::vector<double>& pv,
                  std::vector<double>& colv, double& res);
  bool solve_damped(std::size_t m, double damping);

  std::vector<double> col_, buf_, trial_, f_trial_, p_trial_, col_trial_;
  std::vector<double> h_, rhs_, scale_, step_;
  std::vector<std::size_t> free_;
  std::vector<double> colf_, log_mu1_, rest_;
  const Matrix* kernel_ = nullptr;
};

double SemiDualNewton::evaluate(const Matrix& cost, double tau, std::span<const double> mu1,
                                std::span<const double> mu2, const std::vector<double>& gv,
                                std::vector<double>& fv, std::vector<double>& pv, std::vector<double>& colv,
                                double& res) {
  const std::size_t n = cost.rows();
  // Column factors exp((g_j - max g) / tau) times the precomputed kernel give
  // each row with n exponentials in total; rows that underflow fall back to
  // log-sum-exp.
  double gmax = -std::numeric_limits<double>::infinity();
  for (double v : gv) gmax = std::max(gmax, v);
  if (kernel_)
    for (std::size_t j = 0; j < n; ++j) colf_[j] = std::exp((gv[j] - gmax) / tau);
  double value = 0.0;
  std::fill(colv.begin(), colv.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = pv.data() + i * n;
    double z = 0.0;
    double lse = 0.0;
    if (kernel_) {
      const double* k = kernel_->values().data() + i * n;
      for (std::size_t j = 0; j < n; ++j) z += row[j] = k[j] * colf_[j];
      lse = gmax / tau + std::log(z);
    }
    if (!(z > 1e-280) || !std::isfinite(z)) {
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        buf_[j] = (gv[j] - cost(i, j)) / tau;
        top = std::max(top, buf_[j]);
      }
      z = 0.0;
      for (std::size_t j = 0; j < n; ++j) z += row[j] = std::exp(buf_[j] - top);
      lse = top + std::log(z);
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] *= inv;
      colv[j] += mu1[i] * row[j];
    }
    fv[i] = tau * (log_mu1_[i] - lse);
    value -= tau * mu1[i] * lse;
  }
  res = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    value += mu2[j] * gv[j];
    res += std::abs(colv[j] - mu2[j]);
  }
  return value;
}

// Solves (S H S + damping I) y = S rhs, step = S y, by Cholesky in place.
bool SemiDualNewton::solve_damped(std::size_t m, double damping) {
  for (std::size_t a = 0; a < m; ++a) scale_[a] = 1.0 / std::sqrt(std::max(h_[a * m + a], 1e-300));
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) h_[a * m + b] *= scale_[a] * scale_[b];
    h_[a * m + a] += damping;
    rhs_[a] *= scale_[a];
  }
  for (std::size_t k = 0; k < m; ++k) {
    double d = h_[k * m + k];
    for (std::size_t t = 0; t < k; ++t) d -= h_[k * m + t] * h_[k * m + t];
    if (!(d > 0.0)) return false;
    d = std::sqrt(d);
    h_[k * m + k] = d;
    for (std::size_t r = k + 1; r < m; ++r) {
      double v = h_[r * m + k];
      for (std::size_t t = 0; t < k; ++t) v -= h_[r * m + t] * h_[k * m + t];
      h_[r * m + k] = v / d;
    }
  }
  for (std::size_t k = 0; k < m; ++k) {
    double v = rhs_[k];
    for (std::size_t t = 0; t < k; ++t) v -= h_[k * m + t] * step_[t];
    step_[k] = v / h_[k * m + k];
  }
  for (std::size_t k = m; k-- > 0;) {
    double v = step_[k];
    for (std::size_t t = k + 1; t < m; ++t) v -= h_[t * m + k] * step_[t];
    step_[k] = v / h_[k * m + k];
  }
  for (std::size_t a = 0; a < m; ++a) {
    step_[a] *= scale_[a];
    if (!std::isfinite(step_[a])) return false;
  }
  return true;
}

bool SemiDualNewton::run(const Matrix& cost, const Matrix* kernel, double tau, std::span<const double> mu1,
                         std::span<const double> mu2, std::vector<double>& g, const SinkhornOptions& opt) {
  const std::size_t n = cost.rows();
  kernel_ = kernel;
  colf_.resize(n);
  log_mu1_.resize(n);
  for (std::size_t i = 0; i < n; ++i) log_mu1_[i] = std::log(mu1[i]);
  const std::size_t m = n - 1;
  f.resize(n);
  p.resize(n * n);
  p_trial_.resize(n * n);
  for (auto* v : {&col_, &buf_, &trial_, &f_trial_, &col_trial_, &rest_}) v->resize(n);
  for (auto* v : {&rhs_, &scale_, &step_}) v->resize(m);
  h_.resize(m * m);
  iterations = 0;

  // Gauge: the step leaves the potential of the heaviest column unchanged.
  const std::size_t fixed = static_cast<std::size_t>(std::max_element(mu2.begin(), mu2.end()) - mu2.begin());
  free_.clear();
  for (std::size_t j = 0; j < n; ++j)
    if (j != fixed) free_.push_back(j);
  // Larger steps change coupling entries by more than e^20; they only come
  // from nearly singular directions of the Hessian.
  const double max_step = 20.0 * tau;

  double value = evaluate(cost, tau, mu1, mu2, g, f, p, col_, residual);
  while (residual > opt.tol && iterations < opt.newton_max_iters) {
    ++iterations;
    // -Hessian = (1/tau) sum_i mu1_i (diag p_i - p_i p_i^T). The diagonal uses
    // p_a (sum_{b != a} p_b) since p_a - p_a^2 cancels for concentrated rows.
    std::fill(h_.begin(), h_.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = p.data() + i * n;
      const double weight = mu1[i] / tau;
      double prefix = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        rest_[j] = prefix;
        prefix += row[j];
      }
      double suffix = 0.0;
      for (std::size_t j = n; j-- > 0;) {
        rest_[j] += suffix;
        suffix += row[j];
      }
      for (std::size_t a = 0; a < m; ++a) {
        const double pa = weight * row[free_[a]];
        double* hrow = h_.data() + a * m;
        hrow[a] += pa * rest_[free_[a]];
        for (std::size_t b = a + 1; b < m; ++b) hrow[b] -= pa * row[free_[b]];
      }
    }
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = a + 1; b < m; ++b) h_[b * m + a] = h_[a * m + b];
    for (std::size_t a = 0; a < m; ++a) rhs_[a] = mu2[free_[a]] - col_[free_[a]];
    // Damping proportional to the residual keeps the step an ascent direction
    // when weakly coupled label blocks make the Hessian nearly singular, and
    // vanishes fast enough to retain quadratic convergence.
    if (!solve_damped(m, 1e-2 * residual)) break;
    double largest = 0.0;
    for (double v : step_) largest = std::max(largest, std::abs(v));
    const double cap = largest > max_step ? max_step / largest : 1.0;

    double t = cap;
    bool accepted = false;
    const double slack = 4.0 * std::numeric_limits<double>::epsilon() * (std::abs(value) + 1.0);
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      trial_ = g;
      for (std::size_t a = 0; a < m; ++a) trial_[free_[a]] += t * step_[a];
      double r_new = 0.0;
      const double v_new = evaluate(cost, tau, mu1, mu2, trial_, f_trial_, p_trial_, col_trial_, r_new);
      if (std::isfinite(v_new) && (v_new > value || (v_new >= value - slack && r_new < residual))) {
        g.swap(trial_);
        f.swap(f_trial_);
        p.swap(p_trial_);
        col_.swap(col_trial_);
        value = v_new;
        residual = r_new;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  return residual <= opt.tol;
}

ScalingSolution finish_with_newton(const GibbsKernel& gk, std::span<const double> mu1, std::span<const double> mu2,
                                   std::vector<double> g, std::size_t scaling_iters, const SinkhornOptions& opt,
                                   Matrix* coupling) {
  thread_local SemiDualNewton nt;
  const Matrix& cost = gk.cost();
  const bool ok = nt.run(cost, gk.log_domain() ? nullptr : &gk.kernel(), gk.tau(), mu1, mu2, g, opt);
  const std::size_t total = scaling_iters + nt.iterations;
  if (!std::isfinite(nt.residual)) throw StabilityError("sinkhorn: non-finite potentials in Newton phase");
  if (!ok) throw_unconverged(total, nt.residual);
  const std::size_t n = cost.rows();
  ScalingSolution sol;
  sol.iterations = total;
  sol.used_newton = true;
  // Residual of the coupling M_ij = mu1_i p_ij, which equals
  // exp((f_i + g_j - Theta_ij) / tau) up to rounding.
  double r = nt.residual;
  for (std::size_t i = 0; i < n; ++i) {
    double rs = 0.0;
    for (std::size_t j = 0; j < n; ++j) rs += mu1[i] * nt.p[i * n + j];
    r += std::abs(rs - mu1[i]);
  }
  sol.residual = r;
  if (coupling) {
    *coupling = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) (*coupling)(i, j) = mu1[i] * nt.p[i * n + j];
  }
  sol.duals.nu1 = nt.f;
  sol.duals.nu2 = std::move(g);
  balance_gauge(sol.duals);
  return sol;
}

ScalingSolution solve_plain(const GibbsKernel& gk, std::span<const double> mu1, std::span<const double> mu2,
                            const SinkhornOptions& opt, const DualPotentials* warm, Matrix* coupling) {
  const std::size_t n = gk.size();
  const Matrix& k = gk.kernel();
  const double tau = gk.tau();
  std::vector<double> v1(n), v2(n, 1.0), kv2(n), ktv1(n);
  if (warm && warm->nu2.size() == n) {
    bool ok = true;
    for (std::size_t j = 0; j < n; ++j) {
      v2[j] = std::exp(warm->nu2[j] / tau);
      ok &= std::isfinite(v2[j]) && v2[j] > 0.0;
    }
    if (!ok) std::fill(v2.begin(), v2.end(), 1.0);
  }

  auto mul = [&](const std::vector<double>& v, std::vector<double>& out) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += k(i, j) * v[j];
      out[i] = s;
    }
  };
  auto mul_t = [&](const std::vector<double>& v, std::vector<double>& out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j] += k(i, j) * v[i];
  };

  ScalingSolution sol;
  mul(v2, kv2);
  double residual = std::numeric_limits<double>::infinity();
  std::size_t it = 0;
  while (it < opt.max_iters) {
    ++it;
    for (std::size_t i = 0; i < n; ++i) v1[i] = mu1[i] / kv2[i];
    mul_t(v1, ktv1);
    for (std::size_t j = 0; j < n; ++j) v2[j] = mu2[j] / ktv1[j];
    mul(v2, kv2);
    residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) residual += std::abs(v1[i] * kv2[i] - mu1[i]);
    if (!std::isfinite(residual))
      throw StabilityError("sinkhorn: scaling vectors left the representable range; "
                           "increase tau or use log-domain mode");
    if (residual <= opt.tol) break;
    if (opt.newton_after && it >= opt.newton_after) break;
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (!(v1[j] > 0.0) || !(v2[j] > 0.0) || !std::isfinite(v1[j]) || !std::isfinite(v2[j]))
      throw StabilityError("sinkhorn: degenerate scaling vector; increase tau or use log-domain mode");
  }
  if (residual > opt.tol) {
    if (!opt.newton_after) throw_unconverged(it, residual);
    std::vector<double> g(n);
    for (std::size_t j = 0; j < n; ++j) g[j] = tau * std::log(v2[j]);
    return finish_with_newton(gk, mu1, mu2, std::move(g), it, opt, coupling);
  }

  mul_t(v1, ktv1);
  double col_residual = 0.0;
  for (std::size_t j = 0; j < n; ++j) col_residual += std::abs(v2[j] * ktv1[j] - mu2[j]);

  sol.iterations = it;
  sol.residual = residual + col_residual;
  sol.duals.nu1.resize(n);
  sol.duals.nu2.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    sol.duals.nu1[i] = tau * std::log(v1[i]);
    sol.duals.nu2[i] = tau * std::log(v2[i]);
  }
  balance_gauge(sol.duals);
  if (coupling) {
    *coupling = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) (*coupling)(i, j) = v1[i] * k(i, j) * v2[j];
  }
  return sol;
}

ScalingSolution solve_log(const GibbsKernel& gk, std::span<const double> mu1, std::span<const double> mu2,
                          const SinkhornOptions& opt, const DualPotentials* warm, Matrix* coupling) {
  const std::size_t n = gk.size();
  const Matrix& cost = gk.cost();
  const double tau = gk.tau();
  std::vector<double> f(n, 0.0), g(n, 0.0), buf(n), log_mu1(n), log_mu2(n);
  for (std::size_t k = 0; k < n; ++k) {
    log_mu1[k] = std::log(mu1[k]);
    log_mu2[k] = std::log(mu2[k]);
  }
  if (warm && warm->nu2.size() == n && std::all_of(warm->nu2.begin(), warm->nu2.end(),
                                                     [](double v) { return std::isfinite(v); }))
    g = warm->nu2;

  auto row_mass_residual = [&]() {
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += std::exp((f[i] + g[j] - cost(i, j)) / tau);
      r += std::abs(s - mu1[i]);
    }
    return r;
  };

  double residual = std::numeric_limits<double>::infinity();
  std::size_t it = 0;
  while (it < opt.max_iters) {
    ++it;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) buf[j] = (g[j] - cost(i, j)) / tau;
      f[i] = tau * (log_mu1[i] - log_sum_exp(buf));
    }
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) buf[i] = (f[i] - cost(i, j)) / tau;
      g[j] = tau * (log_mu2[j] - log_sum_exp(buf));
    }
    residual = row_mass_residual();
    if (!std::isfinite(residual)) throw StabilityError("sinkhorn: non-finite potentials in log-domain mode");
    if (residual <= opt.tol) break;
    if (opt.newton_after && it >= opt.newton_after) break;
  }
  if (residual > opt.tol) {
    if (!opt.newton_after) throw_unconverged(it, residual);
    return finish_with_newton(gk, mu1, mu2, std::move(g), it, opt, coupling);
  }

  double col_residual = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp((f[i] + g[j] - cost(i, j)) / tau);
    col_residual += std::abs(s - mu2[j]);
  }

  ScalingSolution sol;
  sol.iterations = it;
  sol.residual = residual + col_residual;
  sol.duals.nu1 = std::move(f);
  sol.duals.nu2 = std::move(g);
  balance_gauge(sol.duals);
  if (coupling) *coupling = coupling_from_duals(cost, sol.duals, tau);
  return sol;
}

}  // namespace

GibbsKernel::GibbsKernel(const Matrix& cost, double tau, SinkhornMode mode)
    : cost_(cost), kernel_(cost.rows(), cost.cols()), tau_(tau), log_domain_(false) {
  if (cost.rows() != cost.cols() || cost.rows() < 2) throw InvalidInput("sinkhorn: cost must be square, n >= 2");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidInput("sinkhorn: tau must be positive and finite");
  double max_abs = 0.0;
  for (double v : cost.values()) {
    if (!std::isfinite(v)) throw InvalidInput("sinkhorn: non-finite cost");
    max_abs = std::max(max_abs, std::abs(v));
  }
  log_domain_ = mode == SinkhornMode::log_domain || (mode == SinkhornMode::automatic && tau < 0.02 * max_abs);
  for (std::size_t i = 0; i < cost.size(); ++i) kernel_.values()[i] = std::exp(-cost.values()[i] / tau);
}

ScalingSolution solve_scaling(const GibbsKernel& kernel, std::span<const double> mu1,
                              std::span<const double> mu2, const SinkhornOptions& options,
                              const DualPotentials* warm, Matrix* coupling) {
  check_marginals(mu1, mu2, kernel.size());
  if (kernel.log_domain()) return solve_log(kernel, mu1, mu2, options, warm, coupling);
  if (kernel_underflows(kernel.kernel()))
    throw StabilityError("sinkhorn: kernel exp(-cost/tau) has an all-zero row or column; "
                         "increase tau or use log-domain mode");
  return solve_plain(kernel, mu1, mu2, options, warm, coupling);
}

SinkhornResult sinkhorn(const Matrix& cost, std::span<const double> mu1, std::span<const double> mu2,
                        double tau, const SinkhornOptions& options, const DualPotentials* warm_start) {
  GibbsKernel kernel(cost, tau, options.mode);
  SinkhornResult result;
  ScalingSolution sol = solve_scaling(kernel, mu1, mu2, options, warm_start, &result.coupling);
  result.duals = std::move(sol.duals);
  result.iterations = sol.iterations;
  result.residual = sol.residual;
  return result;
}

Matrix coupling_from_duals(const Matrix& cost, const DualPotentials& duals, double tau) {
  const std::size_t n = cost.rows();
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = std::exp((duals.nu1[i] + duals.nu2[j] - cost(i, j)) / tau);
  return m;
}

double primal_objective(const Matrix& cost, const Matrix& coupling, double tau) {
  double linear = 0.0;
  double neg_entropy = 0.0;
  for (std::size_t k = 0; k < cost.size(); ++k) {
    const double m = coupling.values()[k];
    linear += cost.values()[k] * m;
    if (m > 0.0) neg_entropy += m * std::log(m);
  }
  return linear + tau * neg_entropy;
}

double dual_objective(const Matrix& cost, std::span<const double> mu1, std::span<const double> mu2,
                      const DualPotentials& duals, double tau) {
  const std::size_t n = cost.rows();
  double value = 0.0;
  for (std::size_t k = 0; k < n; ++k) value += mu1[k] * duals.nu1[k] + mu2[k] * duals.nu2[k];
  double mass = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) mass += std::exp((duals.nu1[i] + duals.nu2[j] - cost(i, j)) / tau);
  return value - tau * mass;
}

double smoothed_edge_distance(const Matrix& cost, std::span<const double> mu1, std::span<const double> mu2,
                              double tau, const SinkhornOptions& options) {
  const SinkhornResult r = sinkhorn(cost, mu1, mu2, tau, options);
  return primal_objective(cost, r.coupling, tau);
}

WassersteinMessage wasserstein_message(const Matrix& cost, std::span<const double> mu1,
                                       std::span<const double> mu2, double tau,
                                       const SinkhornOptions& options, bool keep_coupling) {
  SinkhornResult r = sinkhorn(cost, mu1, mu2, tau, options);
  WassersteinMessage msg;
  msg.grad1 = project_tangent(r.duals.nu1);
  msg.grad2 = project_tangent(r.duals.nu2);
  msg.distance = primal_objective(cost, r.coupling, tau);
  msg.sinkhorn_iters = r.iterations;
  if (keep_coupling) msg.coupling = std::move(r.coupling);
  return msg;
}

}  // namespace wam
