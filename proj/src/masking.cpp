#include "stmae/masking.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

namespace stmae {

namespace {

void check_ratio(double p_s) {
    if (!(p_s >= 0.0 && p_s <= 1.0))
        throw std::invalid_argument("spatial masking ratio must be in [0, 1], got " +
                                    std::to_string(p_s));
}

}  // namespace

std::size_t spatial_mask_target(std::size_t n_edges, double p_s) {
    check_ratio(p_s);
    if (p_s == 0.0) return 0;
    auto target = static_cast<std::size_t>(std::llround(static_cast<double>(n_edges) * p_s));
    target = std::max<std::size_t>(target, 1);
    if (target > n_edges) {
        std::clog << "warning: spatial mask target " << target << " exceeds " << n_edges
                  << " edges; capping\n";
        target = n_edges;
    }
    return target;
}

SpatialMask sample_spatial_mask(const Graph& g, double p_s, const WalkConfig& cfg, Rng& rng) {
    cfg.validate();
    SpatialMask out;
    const std::size_t target = spatial_mask_target(g.n_edges(), p_s);
    if (target == 0) return out;
    if (g.n_edges() == 0) throw std::invalid_argument("spatial masking needs at least one edge");

    std::vector<std::size_t> candidates;
    for (std::size_t u = 0; u < g.n_nodes(); ++u)
        if (g.degree(u) > 0) candidates.push_back(u);
    std::vector<std::size_t> fresh = candidates;

    // Every walk of length >= 2 has a positive chance of covering any edge,
    // so the loop ends with probability one; the cap only guards bugs.
    const std::size_t max_walks = 10000 * (g.n_edges() + 1);
    for (std::size_t w = 0; out.edges.size() < target; ++w) {
        if (w == max_walks) throw std::runtime_error("spatial masking failed to reach its target");
        std::size_t root;
        if (!fresh.empty()) {
            const auto i = uniform_index(rng, fresh.size());
            root = fresh[i];
            fresh.erase(fresh.begin() + static_cast<std::ptrdiff_t>(i));
        } else {
            root = candidates[uniform_index(rng, candidates.size())];
        }
        auto path = biased_random_walk(g, root, cfg, rng);
        std::size_t used = 1;
        for (; used < path.size() && out.edges.size() < target; ++used)
            out.edges.insert(edge_key(path[used - 1], path[used]));
        path.resize(used);
        out.walks.push_back(std::move(path));
    }
    return out;
}

EdgeSet sample_uniform_spatial_mask(const Graph& g, double p_s, Rng& rng) {
    const std::size_t target = spatial_mask_target(g.n_edges(), p_s);
    EdgeSet out;
    if (target == 0) return out;
    // Partial Fisher-Yates over edge indices.
    std::vector<std::size_t> idx(g.n_edges());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < target; ++i) {
        const auto j = i + uniform_index(rng, idx.size() - i);
        std::swap(idx[i], idx[j]);
        const auto& e = g.edges()[idx[i]];
        out.insert(edge_key(e.u, e.v));
    }
    return out;
}

Tensor apply_spatial_mask(const Graph& g, const EdgeSet& masked) {
    const std::size_t n = g.n_nodes();
    std::vector<double> adj = g.adjacency();
    for (const auto& [u, v] : masked) {
        if (u >= n || v >= n || !g.has_edge(u, v))
            throw std::invalid_argument("masked edge (" + std::to_string(u) + "," +
                                        std::to_string(v) + ") is not in the graph");
        adj[u * n + v] = 0.0;
        adj[v * n + u] = 0.0;
    }
    return Tensor::from({n, n}, std::move(adj));
}

Tensor mask_adjacency(const Tensor& adjacency, const EdgeSet& masked) {
    if (adjacency.rank() != 2 || adjacency.dim(0) != adjacency.dim(1))
        throw ShapeError("mask_adjacency: expected square matrix, got " +
                         shape_str(adjacency.shape()));
    if (masked.empty()) return adjacency;
    const std::size_t n = adjacency.dim(0);
    std::vector<std::uint8_t> zero(n * n, 0);
    for (const auto& [u, v] : masked) {
        if (u >= n || v >= n) throw std::invalid_argument("masked edge out of range");
        zero[u * n + v] = zero[v * n + u] = 1;
    }
    return where(zero, adjacency.shape(), Tensor::scalar(0.0), adjacency);
}

std::vector<bool> sample_temporal_mask(std::size_t n_patches, double p_t, Rng& rng) {
    if (n_patches < 1) throw std::invalid_argument("temporal masking needs at least one patch");
    if (!(p_t >= 0.0 && p_t < 1.0))
        throw std::invalid_argument("temporal masking ratio must be in [0, 1), got " +
                                    std::to_string(p_t));
    std::vector<bool> mask(n_patches);
    for (std::size_t i = 0; i < n_patches; ++i) mask[i] = uniform01(rng) < p_t;
    if (std::all_of(mask.begin(), mask.end(), [](bool b) { return b; })) mask.back() = false;
    return mask;
}

std::vector<bool> sample_uniform_temporal_mask(std::size_t steps, double p_t, Rng& rng) {
    return sample_temporal_mask(steps, p_t, rng);
}

std::vector<bool> expand_patch_mask(const std::vector<bool>& patch_mask, std::size_t patch_length) {
    std::vector<bool> steps;
    steps.reserve(patch_mask.size() * patch_length);
    for (bool m : patch_mask) steps.insert(steps.end(), patch_length, m);
    return steps;
}

Tensor apply_temporal_mask(const Tensor& x_emb, const std::vector<bool>& patch_mask,
                           std::size_t patch_length, const Tensor& mask_token) {
    if (x_emb.rank() != 3 && x_emb.rank() != 4)
        throw ShapeError("apply_temporal_mask: expected [H,N,D] or [B,H,N,D], got " +
                         shape_str(x_emb.shape()));
    const bool batched = x_emb.rank() == 4;
    const std::size_t h = x_emb.dim(batched ? 1 : 0);
    const std::size_t d = x_emb.shape().back();
    if (patch_length < 1 || patch_mask.size() * patch_length != h)
        throw ShapeError("apply_temporal_mask: " + std::to_string(patch_mask.size()) +
                         " patches of length " + std::to_string(patch_length) +
                         " do not cover " + shape_str(x_emb.shape()));
    if (mask_token.shape() != Shape{d})
        throw ShapeError("apply_temporal_mask: token shape " + shape_str(mask_token.shape()) +
                         " does not match embedding width " + std::to_string(d));
    if (std::none_of(patch_mask.begin(), patch_mask.end(), [](bool b) { return b; })) return x_emb;

    const auto steps = expand_patch_mask(patch_mask, patch_length);
    const std::size_t batch = batched ? x_emb.dim(0) : 1;
    const std::size_t per_step = x_emb.numel() / (batch * h);
    std::vector<std::uint8_t> pick(x_emb.numel());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < h; ++t)
            std::fill_n(pick.begin() + static_cast<std::ptrdiff_t>((b * h + t) * per_step), per_step,
                        steps[t] ? 1 : 0);
    return where(pick, x_emb.shape(), mask_token, x_emb);
}

nlohmann::json MaskPlan::to_json() const {
    nlohmann::json j;
    j["p_s"] = p_s;
    j["p_t"] = p_t;
    j["patch_length"] = patch_length;
    auto& edges = j["masked_edges"] = nlohmann::json::array();
    for (const auto& [u, v] : masked_edges) edges.push_back({u, v});
    auto& bits = j["patch_mask"] = nlohmann::json::array();
    for (bool b : patch_mask) bits.push_back(b ? 1 : 0);
    j["walks"] = walks;
    return j;
}

MaskPlan MaskPlan::from_json(const nlohmann::json& j) {
    MaskPlan plan;
    plan.p_s = j.at("p_s").get<double>();
    plan.p_t = j.at("p_t").get<double>();
    plan.patch_length = j.at("patch_length").get<std::size_t>();
    for (const auto& e : j.at("masked_edges"))
        plan.masked_edges.insert(edge_key(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>()));
    for (const auto& b : j.at("patch_mask")) plan.patch_mask.push_back(b.get<int>() != 0);
    if (j.contains("walks")) plan.walks = j.at("walks").get<std::vector<std::vector<std::size_t>>>();
    return plan;
}

}  // namespace stmae
