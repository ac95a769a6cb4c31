#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <utility>
#include <vector>

namespace snet {

// Undirected simple graph given as an explicit edge list.
// Edges are stored as (i, j) with i < j, sorted lexicographically.
struct EdgeSet {
  std::size_t n_vertices = 0;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
};

// Realization of the Gilbert model: every one of the n(n-1)/2 candidate
// edges is included independently with probability p.
EdgeSet realize_gilbert(std::size_t n, double p, std::uint64_t seed);

// Generalized model: edge {i, j} (i < j) included with probability
// prob(i, j). The table must be square with entries in [0, 1]; the
// diagonal is ignored. With a constant table this reproduces
// realize_gilbert for the same seed.
EdgeSet realize_generalized(const Eigen::MatrixXd& prob, std::uint64_t seed);

// Layered feed-forward random graph G(V, p[i->j, k->h]).
// pair_probability(i, k, j, h) is the probability of a connection from
// neuron k of layer i to neuron h of layer j. It must be 0 for intra-layer
// and non-adjacent-layer pairs.
struct LayeredGraphSpec {
  std::vector<std::size_t> layer_sizes;
  std::function<double(std::size_t, std::size_t, std::size_t, std::size_t)>
      pair_probability;
};

struct LayeredEdge {
  std::uint32_t src_layer, src_unit, dst_layer, dst_unit;
  friend bool operator==(const LayeredEdge&, const LayeredEdge&) = default;
};

struct LayeredGraph {
  std::vector<std::size_t> layer_sizes;
  std::vector<LayeredEdge> edges;
};

// Draws each candidate adjacent-layer edge independently with its pair
// probability. Deterministic per (spec, seed). Throws if pair_probability
// is nonzero anywhere the feed-forward constraint requires zero.
LayeredGraph realize_layered(const LayeredGraphSpec& spec, std::uint64_t seed);

struct FeedForwardReport {
  bool ok = true;
  std::vector<LayeredEdge> violations;  // intra-layer or layer-skipping edges
};

// Never throws; lists every edge violating the feed-forward property.
FeedForwardReport validate_feedforward(const LayeredGraph& graph);

// Text format: header `layers: m_1 m_2 ... m_n`, then one `i k j h` line
// per directed edge (0-based).
void write_layered_graph(std::ostream& os, const LayeredGraph& graph);
LayeredGraph read_layered_graph(std::istream& is);

// Text format: header `vertices: n`, then one `i j` line per edge.
void write_edge_set(std::ostream& os, const EdgeSet& set);
EdgeSet read_edge_set(std::istream& is);

}  // namespace snet
