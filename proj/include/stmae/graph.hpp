#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

#include "stmae/rng.hpp"
#include "stmae/tensor.hpp"

namespace stmae {

/// Undirected weighted edge, stored with u < v.
struct Edge {
    std::size_t u = 0;
    std::size_t v = 0;
    double weight = 1.0;

    friend bool operator==(const Edge&, const Edge&) = default;
};

/// Undirected weighted graph with a dense symmetric adjacency.
///
/// Invariants: adjacency[u][v] > 0 exactly when {u, v} is an edge, the
/// diagonal is zero, endpoints are in range and no undirected edge repeats.
class Graph {
public:
    Graph() = default;
    /// Validates and canonicalizes the edge list (u < v). Throws
    /// std::invalid_argument on self loops, out-of-range endpoints,
    /// duplicates or non-positive weights.
    Graph(std::size_t n_nodes, std::vector<Edge> edges);

    std::size_t n_nodes() const { return n_; }
    std::size_t n_edges() const { return edges_.size(); }
    const std::vector<Edge>& edges() const { return edges_; }
    /// Dense N x N adjacency, row-major.
    const std::vector<double>& adjacency() const { return adj_; }
    Tensor adjacency_tensor() const { return Tensor::from({n_, n_}, adj_); }

    double weight(std::size_t u, std::size_t v) const { return adj_[u * n_ + v]; }
    bool has_edge(std::size_t u, std::size_t v) const { return u != v && weight(u, v) > 0.0; }
    const std::vector<std::size_t>& neighbors(std::size_t u) const { return nbrs_[u]; }
    std::size_t degree(std::size_t u) const { return nbrs_[u].size(); }

private:
    std::size_t n_ = 0;
    std::vector<Edge> edges_;
    std::vector<double> adj_;
    std::vector<std::vector<std::size_t>> nbrs_;
};

/// Node2vec walk parameters. walk_length counts nodes on the path.
struct WalkConfig {
    double p = 1.0;
    double q = 1.0;
    std::size_t walk_length = 8;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

/// Default kernel bandwidth: standard deviation of the off-diagonal distances.
double default_sigma(std::span<const double> distances, std::size_t n);

/// Keeps edge {u, v} with weight exp(-d^2 / sigma^2) when that weight is at
/// least epsilon. Distances must be square, symmetric, nonnegative, with a
/// zero diagonal; infinite distances never produce edges.
Graph gaussian_threshold_graph(std::span<const double> distances, std::size_t n, double sigma,
                               double epsilon);

/// Row-stochastic propagation matrix D^-1 (A + I) as an [N, N] tensor.
Tensor normalize_adjacency(const Graph& g);
/// Same normalization applied to a (possibly learned) dense adjacency;
/// differentiable in `adjacency`.
Tensor normalize_adjacency(const Tensor& adjacency);

/// row_softmax(relu(E E^T)) for node embeddings E of shape [N, d].
Tensor adaptive_adjacency(const Tensor& node_embeddings);

/// Keeps the k largest off-diagonal entries of each row (ties to the lower
/// column index), then symmetrizes with max(w_uv, w_vu). Requires 1 <= k < N.
Graph sparsify_topk(const Tensor& dense, std::size_t k);

/// Node2vec second-order walk starting at `root`. The first hop is drawn in
/// proportion to edge weight; later hops from v (arrived from t) weight each
/// neighbor x by w(v, x) / p if x == t, w(v, x) if x neighbors t, and
/// w(v, x) / q otherwise. Throws std::invalid_argument for an isolated root.
std::vector<std::size_t> biased_random_walk(const Graph& g, std::size_t root,
                                            const WalkConfig& cfg, Rng& rng);

/// Unnormalized next-hop weights used by biased_random_walk, one per entry of
/// g.neighbors(current). `previous` is empty for the first hop.
std::vector<double> transition_weights(const Graph& g, std::size_t current,
                                       std::optional<std::size_t> previous,
                                       const WalkConfig& cfg);

// Files ---------------------------------------------------------------------

/// CSV with header "u,v,weight", one undirected edge per row.
void write_edge_csv(const std::filesystem::path& file, const Graph& g);
Graph read_edge_csv(const std::filesystem::path& file, std::size_t n_nodes);
/// N rows of N comma-separated distances.
std::vector<double> read_distance_csv(const std::filesystem::path& file, std::size_t& n_out);

}  // namespace stmae
