#include "snet/graph.hpp"

#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "snet/rng.hpp"

namespace snet {

namespace {

// Flat index of the unordered pair (i, j), i < j, among all n(n-1)/2 pairs.
std::uint64_t pair_index(std::size_t n, std::size_t i, std::size_t j) {
  return static_cast<std::uint64_t>(i) * n - i * (i + 1) / 2 + (j - i - 1);
}

}  // namespace

EdgeSet realize_gilbert(std::size_t n, double p, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("realize_gilbert: n must be >= 1");
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("realize_gilbert: p must be in [0, 1]");

  EdgeSet set;
  set.n_vertices = n;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (rng::uniform(seed, pair_index(n, i, j)) < p) {
        set.edges.emplace_back(static_cast<std::uint32_t>(i),
                               static_cast<std::uint32_t>(j));
      }
    }
  }
  return set;
}

EdgeSet realize_generalized(const Eigen::MatrixXd& prob, std::uint64_t seed) {
  if (prob.rows() != prob.cols() || prob.rows() < 1)
    throw std::invalid_argument("realize_generalized: table must be square");
  const std::size_t n = static_cast<std::size_t>(prob.rows());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;  // diagonal ignored
      const double p = prob(i, j);
      if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument(
            "realize_generalized: entries must be in [0, 1]");
    }
  }

  EdgeSet set;
  set.n_vertices = n;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (rng::uniform(seed, pair_index(n, i, j)) < prob(i, j)) {
        set.edges.emplace_back(static_cast<std::uint32_t>(i),
                               static_cast<std::uint32_t>(j));
      }
    }
  }
  return set;
}

LayeredGraph realize_layered(const LayeredGraphSpec& spec, std::uint64_t seed) {
  const std::size_t n_layers = spec.layer_sizes.size();
  if (n_layers < 2)
    throw std::invalid_argument("realize_layered: need at least 2 layers");
  for (std::size_t m : spec.layer_sizes)
    if (m < 1)
      throw std::invalid_argument("realize_layered: empty layer");
  if (!spec.pair_probability)
    throw std::invalid_argument("realize_layered: missing pair_probability");

  // The constraint holds by construction for the realized edges; here we
  // reject specs that claim nonzero probability where it must be zero.
  for (std::size_t i = 0; i < n_layers; ++i) {
    for (std::size_t j = 0; j < n_layers; ++j) {
      if (j == i + 1) continue;
      for (std::size_t k = 0; k < spec.layer_sizes[i]; ++k) {
        for (std::size_t h = 0; h < spec.layer_sizes[j]; ++h) {
          if (spec.pair_probability(i, k, j, h) != 0.0)
            throw std::invalid_argument(
                "realize_layered: pair_probability must be 0 between "
                "non-adjacent or identical layers");
        }
      }
    }
  }

  LayeredGraph graph;
  graph.layer_sizes = spec.layer_sizes;
  std::uint64_t candidate = 0;
  for (std::size_t i = 0; i + 1 < n_layers; ++i) {
    for (std::size_t k = 0; k < spec.layer_sizes[i]; ++k) {
      for (std::size_t h = 0; h < spec.layer_sizes[i + 1]; ++h) {
        const double p = spec.pair_probability(i, k, i + 1, h);
        if (!(p >= 0.0 && p <= 1.0))
          throw std::invalid_argument(
              "realize_layered: probability outside [0, 1]");
        if (rng::uniform(seed, candidate) < p) {
          graph.edges.push_back({static_cast<std::uint32_t>(i),
                                 static_cast<std::uint32_t>(k),
                                 static_cast<std::uint32_t>(i + 1),
                                 static_cast<std::uint32_t>(h)});
        }
        ++candidate;
      }
    }
  }
  return graph;
}

FeedForwardReport validate_feedforward(const LayeredGraph& graph) {
  FeedForwardReport report;
  for (const LayeredEdge& e : graph.edges) {
    if (e.dst_layer != e.src_layer + 1) report.violations.push_back(e);
  }
  report.ok = report.violations.empty();
  return report;
}

void write_layered_graph(std::ostream& os, const LayeredGraph& graph) {
  os << "layers:";
  for (std::size_t m : graph.layer_sizes) os << ' ' << m;
  os << '\n';
  for (const LayeredEdge& e : graph.edges)
    os << e.src_layer << ' ' << e.src_unit << ' ' << e.dst_layer << ' '
       << e.dst_unit << '\n';
}

LayeredGraph read_layered_graph(std::istream& is) {
  LayeredGraph graph;
  std::string line;
  if (!std::getline(is, line) || line.rfind("layers:", 0) != 0)
    throw std::runtime_error("layered graph: missing `layers:` header");
  std::istringstream header(line.substr(7));
  std::size_t m;
  while (header >> m) graph.layer_sizes.push_back(m);
  if (graph.layer_sizes.empty())
    throw std::runtime_error("layered graph: empty layer list");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    LayeredEdge e;
    if (!(row >> e.src_layer >> e.src_unit >> e.dst_layer >> e.dst_unit))
      throw std::runtime_error("layered graph: malformed edge line");
    graph.edges.push_back(e);
  }
  return graph;
}

void write_edge_set(std::ostream& os, const EdgeSet& set) {
  os << "vertices: " << set.n_vertices << '\n';
  for (const auto& [i, j] : set.edges) os << i << ' ' << j << '\n';
}

EdgeSet read_edge_set(std::istream& is) {
  EdgeSet set;
  std::string line;
  if (!std::getline(is, line) || line.rfind("vertices:", 0) != 0)
    throw std::runtime_error("edge set: missing `vertices:` header");
  set.n_vertices = std::stoull(line.substr(9));
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::uint32_t i, j;
    if (!(row >> i >> j))
      throw std::runtime_error("edge set: malformed edge line");
    set.edges.emplace_back(i, j);
  }
  return set;
}

}  // namespace snet
