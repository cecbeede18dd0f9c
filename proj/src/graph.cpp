#include "stmae/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "stmae/csv.hpp"

namespace stmae {

Graph::Graph(std::size_t n_nodes, std::vector<Edge> edges)
    : n_(n_nodes), adj_(n_nodes * n_nodes, 0.0), nbrs_(n_nodes) {
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (auto& e : edges) {
        if (e.u >= n_ || e.v >= n_)
            throw std::invalid_argument("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                                        ") out of range for " + std::to_string(n_) + " nodes");
        if (e.u == e.v) throw std::invalid_argument("self loop at node " + std::to_string(e.u));
        if (!(e.weight > 0.0) || !std::isfinite(e.weight))
            throw std::invalid_argument("edge weight must be positive and finite");
        if (e.u > e.v) std::swap(e.u, e.v);
        if (!seen.emplace(e.u, e.v).second)
            throw std::invalid_argument("duplicate edge (" + std::to_string(e.u) + "," +
                                        std::to_string(e.v) + ")");
        adj_[e.u * n_ + e.v] = e.weight;
        adj_[e.v * n_ + e.u] = e.weight;
        nbrs_[e.u].push_back(e.v);
        nbrs_[e.v].push_back(e.u);
    }
    edges_ = std::move(edges);
    for (auto& nb : nbrs_) std::sort(nb.begin(), nb.end());
}

void WalkConfig::validate() const {
    if (!(p > 0.0)) throw std::invalid_argument("walk p must be > 0");
    if (!(q > 0.0)) throw std::invalid_argument("walk q must be > 0");
    if (walk_length < 2) throw std::invalid_argument("walk_length must be >= 2");
}

double default_sigma(std::span<const double> distances, std::size_t n) {
    double s = 0.0, ss = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double d = distances[i * n + j];
            if (i == j || !std::isfinite(d)) continue;
            s += d;
            ss += d * d;
            ++count;
        }
    if (count < 2) return 1.0;
    const double m = s / static_cast<double>(count);
    return std::sqrt(std::max(0.0, ss / static_cast<double>(count) - m * m));
}

Graph gaussian_threshold_graph(std::span<const double> distances, std::size_t n, double sigma,
                               double epsilon) {
    if (distances.size() != n * n)
        throw std::invalid_argument("distance matrix must be " + std::to_string(n) + "x" +
                                    std::to_string(n));
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be > 0");
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must be in [0, 1)");
    for (std::size_t i = 0; i < n; ++i) {
        if (distances[i * n + i] != 0.0)
            throw std::invalid_argument("distance diagonal must be zero at node " + std::to_string(i));
        for (std::size_t j = 0; j < n; ++j) {
            const double d = distances[i * n + j];
            if (d < 0.0 || std::isnan(d))
                throw std::invalid_argument("negative distance at (" + std::to_string(i) + "," +
                                            std::to_string(j) + ")");
            if (d != distances[j * n + i])
                throw std::invalid_argument("asymmetric distances at (" + std::to_string(i) + "," +
                                            std::to_string(j) + ")");
        }
    }
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = distances[i * n + j];
            if (!std::isfinite(d)) continue;
            const double w = std::exp(-(d * d) / (sigma * sigma));
            if (w >= epsilon && w > 0.0) edges.push_back({i, j, w});
        }
    return Graph(n, std::move(edges));
}

Tensor normalize_adjacency(const Graph& g) {
    const std::size_t n = g.n_nodes();
    std::vector<double> out(n * n);
    const auto& a = g.adjacency();
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 1.0;
        for (std::size_t j = 0; j < n; ++j) deg += a[i * n + j];
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = (a[i * n + j] + (i == j)) / deg;
    }
    return Tensor::from({n, n}, std::move(out));
}

Tensor normalize_adjacency(const Tensor& adjacency) {
    if (adjacency.rank() != 2 || adjacency.dim(0) != adjacency.dim(1))
        throw ShapeError("normalize_adjacency: expected square matrix, got " +
                         shape_str(adjacency.shape()));
    const std::size_t n = adjacency.dim(0);
    std::vector<double> eye(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 1.0;
    Tensor with_loops = add(adjacency, Tensor::from({n, n}, std::move(eye)));
    return div(with_loops, sum_last(with_loops, true));
}

Tensor adaptive_adjacency(const Tensor& node_embeddings) {
    if (node_embeddings.rank() != 2 || node_embeddings.dim(1) < 1)
        throw ShapeError("adaptive_adjacency: expected [N, d], got " +
                         shape_str(node_embeddings.shape()));
    return row_softmax(relu(matmul(node_embeddings, transpose(node_embeddings))));
}

Graph sparsify_topk(const Tensor& dense, std::size_t k) {
    if (dense.rank() != 2 || dense.dim(0) != dense.dim(1))
        throw ShapeError("sparsify_topk: expected square matrix, got " + shape_str(dense.shape()));
    const std::size_t n = dense.dim(0);
    if (k < 1 || k >= n)
        throw std::invalid_argument("sparsify_topk: k must be in [1, N-1], got k=" +
                                    std::to_string(k) + " for N=" + std::to_string(n));
    const auto& w = dense.data();
    std::vector<double> kept(n * n, 0.0);
    std::vector<std::size_t> cols;
    for (std::size_t u = 0; u < n; ++u) {
        cols.clear();
        for (std::size_t v = 0; v < n; ++v)
            if (v != u) cols.push_back(v);
        std::stable_sort(cols.begin(), cols.end(),
                         [&](std::size_t a, std::size_t b) { return w[u * n + a] > w[u * n + b]; });
        for (std::size_t i = 0; i < k; ++i) kept[u * n + cols[i]] = w[u * n + cols[i]];
    }
    std::vector<Edge> edges;
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = u + 1; v < n; ++v) {
            const double x = std::max(kept[u * n + v], kept[v * n + u]);
            if (x > 0.0) edges.push_back({u, v, x});
        }
    return Graph(n, std::move(edges));
}

std::vector<double> transition_weights(const Graph& g, std::size_t current,
                                       std::optional<std::size_t> previous,
                                       const WalkConfig& cfg) {
    const auto& nb = g.neighbors(current);
    std::vector<double> w(nb.size());
    for (std::size_t i = 0; i < nb.size(); ++i) {
        const std::size_t x = nb[i];
        double alpha = 1.0;
        if (previous) {
            if (x == *previous) alpha = 1.0 / cfg.p;
            else if (g.has_edge(x, *previous)) alpha = 1.0;
            else alpha = 1.0 / cfg.q;
        }
        w[i] = g.weight(current, x) * alpha;
    }
    return w;
}

std::vector<std::size_t> biased_random_walk(const Graph& g, std::size_t root,
                                            const WalkConfig& cfg, Rng& rng) {
    cfg.validate();
    if (root >= g.n_nodes()) throw std::invalid_argument("walk root out of range");
    if (g.degree(root) == 0)
        throw std::invalid_argument("walk root " + std::to_string(root) + " is isolated");
    std::vector<std::size_t> path{root};
    std::optional<std::size_t> previous;
    while (path.size() < cfg.walk_length) {
        const std::size_t cur = path.back();
        const auto& nb = g.neighbors(cur);
        if (nb.empty()) break;
        auto w = transition_weights(g, cur, previous, cfg);
        const double total = std::accumulate(w.begin(), w.end(), 0.0);
        double r = uniform01(rng) * total;
        std::size_t pick = nb.size() - 1;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (r < w[i]) {
                pick = i;
                break;
            }
            r -= w[i];
        }
        previous = cur;
        path.push_back(nb[pick]);
    }
    return path;
}

void write_edge_csv(const std::filesystem::path& file, const Graph& g) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << "u,v,weight\n";
    for (const auto& e : g.edges()) out << e.u << ',' << e.v << ',' << csv::format_double(e.weight) << '\n';
}

Graph read_edge_csv(const std::filesystem::path& file, std::size_t n_nodes) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(file.string() + ": empty edge file");
    auto header = csv::split(line);
    if (header != std::vector<std::string>{"u", "v", "weight"})
        throw std::runtime_error(file.string() + ": expected header u,v,weight");
    std::vector<Edge> edges;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        ++row;
        auto cells = csv::split(line);
        if (cells.size() != 3)
            throw std::runtime_error(file.string() + ": row " + std::to_string(row) +
                                     " has " + std::to_string(cells.size()) + " columns, expected 3");
        const double u = csv::parse_cell(cells[0], file, row, 1);
        const double v = csv::parse_cell(cells[1], file, row, 2);
        const double w = csv::parse_cell(cells[2], file, row, 3);
        if (u < 0 || v < 0 || u != std::floor(u) || v != std::floor(v))
            throw std::runtime_error(file.string() + ": row " + std::to_string(row) +
                                     " has a non-integer node id");
        edges.push_back({static_cast<std::size_t>(u), static_cast<std::size_t>(v), w});
    }
    return Graph(n_nodes, std::move(edges));
}

std::vector<double> read_distance_csv(const std::filesystem::path& file, std::size_t& n_out) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::vector<double> values;
    std::string line;
    std::size_t row = 0, n = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        ++row;
        auto cells = csv::split(line);
        if (row == 1) n = cells.size();
        if (cells.size() != n)
            throw std::runtime_error(file.string() + ": row " + std::to_string(row) + " has " +
                                     std::to_string(cells.size()) + " columns, expected " +
                                     std::to_string(n));
        for (std::size_t c = 0; c < cells.size(); ++c)
            values.push_back(csv::parse_cell(cells[c], file, row, c + 1));
    }
    if (row != n)
        throw std::runtime_error(file.string() + ": distance matrix has " + std::to_string(row) +
                                 " rows and " + std::to_string(n) + " columns");
    n_out = n;
    return values;
}

}  // namespace stmae
