#pragma once

#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "stmae/graph.hpp"
#include "stmae/rng.hpp"
#include "stmae/tensor.hpp"

namespace stmae {

/// Undirected edge key with first < second.
using EdgeKey = std::pair<std::size_t, std::size_t>;
using EdgeSet = std::set<EdgeKey>;

inline EdgeKey edge_key(std::size_t u, std::size_t v) {
    return u < v ? EdgeKey{u, v} : EdgeKey{v, u};
}

/// Number of edges to mask: round-to-nearest of n_edges * p_s, at least one
/// when p_s > 0, never more than n_edges.
std::size_t spatial_mask_target(std::size_t n_edges, double p_s);

struct SpatialMask {
    EdgeSet edges;
    /// Walk paths in sampling order; the last one is cut where the target
    /// count was reached. Every masked edge is a consecutive pair on a walk.
    std::vector<std::vector<std::size_t>> walks;
};

/// Walk-based relation masking. Roots are drawn uniformly among nodes with
/// at least one neighbor, without replacement until every such node has been
/// used, then with replacement.
SpatialMask sample_spatial_mask(const Graph& g, double p_s, const WalkConfig& cfg, Rng& rng);

/// Uniform sample of spatial_mask_target(|E|, p_s) distinct edges.
EdgeSet sample_uniform_spatial_mask(const Graph& g, double p_s, Rng& rng);

/// Copy of g's adjacency with both (u, v) and (v, u) zeroed for every masked
/// edge. Throws std::invalid_argument for an edge not in g.
Tensor apply_spatial_mask(const Graph& g, const EdgeSet& masked);
/// Zeroes the masked entries of a dense (possibly learned) adjacency;
/// gradients flow to the surviving entries only.
Tensor mask_adjacency(const Tensor& adjacency, const EdgeSet& masked);

/// Independent Bernoulli(p_t) draw per patch; when every draw is true the
/// last patch is forced visible.
std::vector<bool> sample_temporal_mask(std::size_t n_patches, double p_t, Rng& rng);
/// Per-timestep variant (patch length 1).
std::vector<bool> sample_uniform_temporal_mask(std::size_t steps, double p_t, Rng& rng);

/// Replaces every position of each masked patch with the shared token.
/// x_emb is [H, N, D] or [B, H, N, D]; token is [D]; H = patches * patch_length.
Tensor apply_temporal_mask(const Tensor& x_emb, const std::vector<bool>& patch_mask,
                           std::size_t patch_length, const Tensor& mask_token);

/// Per-timestep expansion of a patch bitmap.
std::vector<bool> expand_patch_mask(const std::vector<bool>& patch_mask, std::size_t patch_length);

/// Everything sampled for one pretraining step.
struct MaskPlan {
    EdgeSet masked_edges;
    std::vector<bool> patch_mask;
    double p_s = 0.0;
    double p_t = 0.0;
    std::size_t patch_length = 1;
    std::vector<std::vector<std::size_t>> walks;

    nlohmann::json to_json() const;
    static MaskPlan from_json(const nlohmann::json& j);
};

}  // namespace stmae
