#include "wam/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wam/error.hpp"

namespace wam {

void project_tangent_inplace(std::span<double> x) {
  if (x.size() < 2) throw InvalidInput("project_tangent: need at least two entries");
  double sum = 0.0;
  for (double v : x) {
    if (!std::isfinite(v)) throw InvalidInput("project_tangent: non-finite entry");
    sum += v;
  }
  const double mean = sum / static_cast<double>(x.size());
  for (double& v : x) v -= mean;
}

std::vector<double> project_tangent(std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  project_tangent_inplace(out);
  return out;
}

std::vector<double> lift(std::span<const double> p, std::span<const double> x) {
  if (p.size() != x.size() || p.empty()) throw InvalidInput("lift: size mismatch");
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!std::isfinite(x[k]) || !std::isfinite(p[k])) throw InvalidInput("lift: non-finite entry");
    if (!(p[k] > 0.0)) throw InvalidInput("lift: base point must be strictly positive");
    top = std::max(top, x[k]);
  }
  std::vector<double> out(p.size());
  double z = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    out[k] = p[k] * std::exp(x[k] - top);
    z += out[k];
  }
  for (double& v : out) v /= z;
  return out;
}

std::vector<double> lift_inverse(std::span<const double> p, std::span<const double> q, double floor) {
  if (p.size() != q.size() || p.size() < 2) throw InvalidInput("lift_inverse: size mismatch");
  std::vector<double> out(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!(p[k] >= floor) || !(q[k] >= floor) || !(p[k] > 0.0) || !(q[k] > 0.0))
      throw DegenerateInput("lift_inverse: entry below positivity floor");
    out[k] = std::log(q[k] / p[k]);
  }
  project_tangent_inplace(out);
  return out;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

double entropy(const AssignmentMatrix& w) {
  double h = 0.0;
  for (std::size_t i = 0; i < w.rows(); ++i) h += entropy(w.row(i));
  return h;
}

double normalized_entropy(const AssignmentMatrix& w) {
  if (w.rows() == 0 || w.cols() < 2) throw InvalidInput("normalized_entropy: empty assignment");
  return entropy(w) / (static_cast<double>(w.rows()) * std::log(static_cast<double>(w.cols())));
}

std::size_t normalize_safeguard_inplace(AssignmentMatrix& w, double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidInput("normalize_safeguard: epsilon must be positive");
  std::size_t rectified = 0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    auto row = w.row(i);
    const double lo = *std::min_element(row.begin(), row.end());
    if (!(lo < epsilon)) continue;
    double z = 0.0;
    for (double& v : row) {
      v = v - lo + epsilon;
      z += v;
    }
    for (double& v : row) v /= z;
    ++rectified;
  }
  return rectified;
}

AssignmentMatrix normalize_safeguard(AssignmentMatrix w, double epsilon) {
  normalize_safeguard_inplace(w, epsilon);
  return w;
}

AssignmentMatrix barycenter(std::size_t nodes, std::size_t labels) {
  if (labels == 0) throw InvalidInput("barycenter: no labels");
  return AssignmentMatrix(nodes, labels, 1.0 / static_cast<double>(labels));
}

bool is_assignment(const AssignmentMatrix& w, double tolerance) {
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double sum = 0.0;
    for (double v : w.row(i)) {
      if (!std::isfinite(v) || !(v > 0.0)) return false;
      sum += v;
    }
    if (std::abs(sum - 1.0) > tolerance) return false;
  }
  return true;
}

}  // namespace wam
