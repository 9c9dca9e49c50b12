#pragma once

// Pairwise discrete graphical models: topology, parameters and the discrete
// labeling energy.

#include <cstddef>
#include <span>
#include <vector>

#include "wam/dense.hpp"

namespace wam {

class Rng;
struct Image;
using Palette = std::vector<std::vector<double>>;

using Label = std::size_t;
using Labeling = std::vector<Label>;

struct Edge {
  std::size_t first;   // smaller node index
  std::size_t second;  // larger node index
};

struct Incidence {
  std::size_t neighbor;
  std::size_t edge;
  bool is_first;  // this node is the row endpoint of the edge matrix
};

// Undirected simple graph. Edges are stored with the canonical orientation
// first < second; adjacency lists are in edge-index order.
class Graph {
 public:
  explicit Graph(std::size_t node_count = 0);

  /// Adds {i, j}. Returns the edge index; throws InvalidInput on self-loops,
  /// duplicates, or out-of-range nodes.
  std::size_t add_edge(std::size_t i, std::size_t j);

  std::size_t node_count() const { return adjacency_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  const Edge& edge(std::size_t e) const { return edges_[e]; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::span<const Incidence> neighbors(std::size_t i) const { return adjacency_[i]; }
  std::size_t degree(std::size_t i) const { return adjacency_[i].size(); }
  bool has_edge(std::size_t i, std::size_t j) const;

 private:
  std::vector<Edge> edges_;
  std::vector<std::vector<Incidence>> adjacency_;
};

class GraphicalModel {
 public:
  GraphicalModel(std::size_t node_count, std::size_t label_count);

  void set_unary(std::size_t node, std::span<const double> theta);

  /// Adds edge {i, j} with cost matrix theta (rows index the label at i).
  /// If i > j the matrix is transposed so that storage is canonical.
  std::size_t add_edge(std::size_t i, std::size_t j, const Matrix& theta);

  const Graph& graph() const { return graph_; }
  std::size_t node_count() const { return graph_.node_count(); }
  std::size_t edge_count() const { return graph_.edge_count(); }
  std::size_t label_count() const { return labels_; }

  std::span<const double> unary(std::size_t node) const { return unaries_.row(node); }
  const Matrix& unaries() const { return unaries_; }
  /// Cost matrix of edge e, rows = label at graph().edge(e).first.
  const Matrix& pairwise(std::size_t e) const { return pairwise_[e]; }

 private:
  Graph graph_;
  std::size_t labels_;
  Matrix unaries_;
  std::vector<Matrix> pairwise_;
};

/// Sum of unary and pairwise terms. Throws InvalidInput on a bad labeling.
double discrete_energy(const GraphicalModel& model, std::span<const Label> labeling);

/// weight * (1 - delta_kr).
Matrix potts_pairwise(std::size_t labels, double weight);

enum class Neighborhood { n4, n8 };

/// Grid model with unaries ||f(i) - palette[k]||_1 / rho and a copy of
/// `pairwise` on each grid edge. Node index = row-major pixel index.
GraphicalModel model_from_image(const Image& image, const Palette& palette, double rho,
                                Neighborhood neighborhood, const Matrix& pairwise);

/// Random binary model on the triangle graph: unaries (1-p, p) - 1/2 with
/// p ~ U[0,1], pairwise entries ~ U[-2,2].
GraphicalModel sample_k3_model(Rng& rng);

/// Random binary model on a rows x cols N4 grid with the same parameter
/// distributions as sample_k3_model.
GraphicalModel sample_grid_model(Rng& rng, std::size_t rows, std::size_t cols);

}  // namespace wam
