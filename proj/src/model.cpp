#include "wam/model.hpp"

#include <cmath>
#include <string>

#include "wam/error.hpp"
#include "wam/image.hpp"
#include "wam/random.hpp"

namespace wam {

Graph::Graph(std::size_t node_count) : adjacency_(node_count) {}

bool Graph::has_edge(std::size_t i, std::size_t j) const {
  if (i >= node_count() || j >= node_count()) return false;
  for (const auto& inc : adjacency_[i])
    if (inc.neighbor == j) return true;
  return false;
}

std::size_t Graph::add_edge(std::size_t i, std::size_t j) {
  if (i >= node_count() || j >= node_count())
    throw InvalidInput("edge (" + std::to_string(i) + "," + std::to_string(j) + ") references a missing node");
  if (i == j) throw InvalidInput("self-loop at node " + std::to_string(i));
  if (i > j) std::swap(i, j);
  // Degrees are small in practice, so a linear scan is fine.
  if (has_edge(i, j))
    throw InvalidInput("duplicate edge (" + std::to_string(i) + "," + std::to_string(j) + ")");
  const std::size_t e = edges_.size();
  edges_.push_back({i, j});
  adjacency_[i].push_back({j, e, true});
  adjacency_[j].push_back({i, e, false});
  return e;
}

GraphicalModel::GraphicalModel(std::size_t node_count, std::size_t label_count)
    : graph_(node_count), labels_(label_count), unaries_(node_count, label_count, 0.0) {
  if (node_count == 0) throw InvalidInput("model needs at least one node");
  if (label_count < 2) throw InvalidInput("model needs at least two labels");
}

void GraphicalModel::set_unary(std::size_t node, std::span<const double> theta) {
  if (node >= node_count()) throw InvalidInput("unary for missing node " + std::to_string(node));
  if (theta.size() != labels_) throw InvalidInput("unary of node " + std::to_string(node) + " has wrong length");
  auto row = unaries_.row(node);
  for (std::size_t k = 0; k < labels_; ++k) {
    if (!std::isfinite(theta[k])) throw InvalidInput("non-finite unary at node " + std::to_string(node));
    row[k] = theta[k];
  }
}

std::size_t GraphicalModel::add_edge(std::size_t i, std::size_t j, const Matrix& theta) {
  if (theta.rows() != labels_ || theta.cols() != labels_)
    throw InvalidInput("pairwise matrix for edge (" + std::to_string(i) + "," + std::to_string(j) +
                       ") has wrong shape");
  for (double v : theta.values())
    if (!std::isfinite(v)) throw InvalidInput("non-finite pairwise entry");
  const std::size_t e = graph_.add_edge(i, j);
  pairwise_.push_back(i < j ? theta : theta.transposed());
  return e;
}

double discrete_energy(const GraphicalModel& model, std::span<const Label> labeling) {
  if (labeling.size() != model.node_count()) throw InvalidInput("labeling length does not match node count");
  const std::size_t n = model.label_count();
  double energy = 0.0;
  for (std::size_t i = 0; i < labeling.size(); ++i) {
    if (labeling[i] >= n) throw InvalidInput("label out of range at node " + std::to_string(i));
    energy += model.unary(i)[labeling[i]];
  }
  for (std::size_t e = 0; e < model.edge_count(); ++e) {
    const Edge& edge = model.graph().edge(e);
    energy += model.pairwise(e)(labeling[edge.first], labeling[edge.second]);
  }
  return energy;
}

Matrix potts_pairwise(std::size_t labels, double weight) {
  if (labels < 2) throw InvalidInput("potts_pairwise: need at least two labels");
  if (!std::isfinite(weight)) throw InvalidInput("potts_pairwise: non-finite weight");
  Matrix theta(labels, labels, weight);
  for (std::size_t k = 0; k < labels; ++k) theta(k, k) = 0.0;
  return theta;
}

GraphicalModel model_from_image(const Image& image, const Palette& palette, double rho,
                                Neighborhood neighborhood, const Matrix& pairwise) {
  if (image.pixel_count() == 0) throw InvalidInput("model_from_image: empty image");
  if (palette.size() < 2) throw InvalidInput("model_from_image: palette needs at least two entries");
  if (!(rho > 0.0)) throw InvalidInput("model_from_image: rho must be positive");
  for (const auto& color : palette)
    if (color.size() != image.channels) throw InvalidInput("model_from_image: palette/image channel mismatch");

  GraphicalModel model(image.pixel_count(), palette.size());
  std::vector<double> theta(palette.size());
  for (std::size_t p = 0; p < image.pixel_count(); ++p) {
    const double* f = image.pixel(p);
    for (std::size_t k = 0; k < palette.size(); ++k) {
      double dist = 0.0;
      for (std::size_t c = 0; c < image.channels; ++c) dist += std::abs(f[c] - palette[k][c]);
      theta[k] = dist / rho;
    }
    model.set_unary(p, theta);
  }

  const std::size_t w = image.width;
  const std::size_t h = image.height;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      if (x + 1 < w) model.add_edge(p, p + 1, pairwise);
      if (y + 1 < h) model.add_edge(p, p + w, pairwise);
      if (neighborhood == Neighborhood::n8 && y + 1 < h) {
        if (x + 1 < w) model.add_edge(p, p + w + 1, pairwise);
        if (x > 0) model.add_edge(p, p + w - 1, pairwise);
      }
    }
  }
  return model;
}

namespace {

void sample_binary_unaries(Rng& rng, GraphicalModel& model) {
  for (std::size_t i = 0; i < model.node_count(); ++i) {
    const double p = rng.uniform();
    const double theta[2] = {(1.0 - p) - 0.5, p - 0.5};
    model.set_unary(i, theta);
  }
}

Matrix sample_binary_pairwise(Rng& rng) {
  Matrix theta(2, 2);
  for (double& v : theta.values()) v = rng.uniform(-2.0, 2.0);
  return theta;
}

}  // namespace

GraphicalModel sample_k3_model(Rng& rng) {
  GraphicalModel model(3, 2);
  sample_binary_unaries(rng, model);
  model.add_edge(0, 1, sample_binary_pairwise(rng));
  model.add_edge(0, 2, sample_binary_pairwise(rng));
  model.add_edge(1, 2, sample_binary_pairwise(rng));
  return model;
}

GraphicalModel sample_grid_model(Rng& rng, std::size_t rows, std::size_t cols) {
  GraphicalModel model(rows * cols, 2);
  sample_binary_unaries(rng, model);
  for (std::size_t y = 0; y < rows; ++y)
    for (std::size_t x = 0; x < cols; ++x) {
      const std::size_t p = y * cols + x;
      if (x + 1 < cols) model.add_edge(p, p + 1, sample_binary_pairwise(rng));
      if (y + 1 < rows) model.add_edge(p, p + cols, sample_binary_pairwise(rng));
    }
  return model;
}

}  // namespace wam
