#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "stmae/masking.hpp"
#include "stmae/params.hpp"

using namespace stmae;

namespace {

Graph random_graph_with_edges(std::size_t n, std::size_t n_edges, std::uint64_t seed) {
    Rng rng = make_stream(seed, "mask-graph");
    std::vector<EdgeKey> all;
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = u + 1; v < n; ++v) all.emplace_back(u, v);
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n_edges; ++i) {
        const auto j = i + uniform_index(rng, all.size() - i);
        std::swap(all[i], all[j]);
        edges.push_back({all[i].first, all[i].second, 0.2 + uniform01(rng)});
    }
    return Graph(n, edges);
}

bool on_some_walk(const EdgeKey& e, const std::vector<std::vector<std::size_t>>& walks) {
    for (const auto& w : walks)
        for (std::size_t i = 1; i < w.size(); ++i)
            if (edge_key(w[i - 1], w[i]) == e) return true;
    return false;
}

}  // namespace

TEST_CASE("mask target rounding") {
    CHECK(spatial_mask_target(10, 0.0) == 0);
    CHECK(spatial_mask_target(10, 0.3) == 3);
    CHECK(spatial_mask_target(10, 0.25) == 3);  // round half away from zero
    CHECK(spatial_mask_target(10, 1.0) == 10);
    CHECK(spatial_mask_target(3, 0.1) == 1);    // at least one when p_s > 0
    CHECK(spatial_mask_target(50, 0.7) == 35);
}

TEST_CASE("walk-based spatial mask hits its target on walk edges") {
    Graph g = random_graph_with_edges(8, 10, 1);
    WalkConfig cfg;
    Rng rng = make_stream(0, "spatial");
    CHECK(sample_spatial_mask(g, 0.0, cfg, rng).edges.empty());

    SpatialMask m = sample_spatial_mask(g, 0.3, cfg, rng);
    CHECK(m.edges.size() == 3);
    for (const auto& e : m.edges) {
        CHECK(g.has_edge(e.first, e.second));
        CHECK(on_some_walk(e, m.walks));
    }

    Graph big = random_graph_with_edges(20, 50, 2);
    for (int k = 0; k <= 10; ++k) {
        const double p_s = k / 10.0;
        SpatialMask mk = sample_spatial_mask(big, p_s, cfg, rng);
        CHECK(mk.edges.size() == std::min<std::size_t>(50, std::llround(50 * p_s)));
        // Replaying the recorded walks reproduces the mask exactly.
        EdgeSet replay;
        for (const auto& w : mk.walks)
            for (std::size_t i = 1; i < w.size(); ++i) {
                CHECK(big.has_edge(w[i - 1], w[i]));
                replay.insert(edge_key(w[i - 1], w[i]));
            }
        CHECK(replay == mk.edges);
    }
}

TEST_CASE("spatial mask is reproducible for a fixed seed") {
    Graph g = random_graph_with_edges(12, 20, 3);
    WalkConfig cfg{0.5, 2.0, 6, 0};
    Rng a = make_stream(9, "spatial"), b = make_stream(9, "spatial");
    CHECK(sample_spatial_mask(g, 0.5, cfg, a).edges == sample_spatial_mask(g, 0.5, cfg, b).edges);
}

TEST_CASE("spatial mask on an edgeless graph is capped to empty") {
    Graph g(3, {});
    Rng rng = make_stream(0, "spatial");
    // The target is capped at |E| = 0 with a warning.
    CHECK(sample_spatial_mask(g, 0.5, WalkConfig{}, rng).edges.empty());
    CHECK(sample_uniform_spatial_mask(g, 0.5, rng).empty());
    CHECK(sample_spatial_mask(g, 0.0, WalkConfig{}, rng).edges.empty());
}

TEST_CASE("apply_spatial_mask") {
    Graph g = random_graph_with_edges(10, 20, 4);
    Tensor untouched = apply_spatial_mask(g, {});
    CHECK(std::vector<double>(untouched.data().begin(), untouched.data().end()) == g.adjacency());

    Graph pair(2, {{0, 1, 0.7}});
    Tensor zero = apply_spatial_mask(pair, {edge_key(0, 1)});
    for (double v : zero.data()) CHECK(v == 0.0);
    CHECK(pair.weight(0, 1) == 0.7);

    Rng rng = make_stream(1, "spatial");
    EdgeSet masked = sample_spatial_mask(g, 0.4, WalkConfig{}, rng).edges;
    Tensor m = apply_spatial_mask(g, masked);
    const std::size_t n = g.n_nodes();
    std::vector<double> restored(m.data().begin(), m.data().end());
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = 0; v < n; ++v) {
            const bool hit = masked.count(edge_key(u, v)) && u != v;
            if (hit) {
                CHECK(m.data()[u * n + v] == 0.0);
                restored[u * n + v] = g.weight(u, v);
            } else {
                CHECK(m.data()[u * n + v] == g.adjacency()[u * n + v]);
            }
        }
    CHECK(restored == g.adjacency());

    CHECK_THROWS_AS(apply_spatial_mask(pair, {edge_key(0, 0)}), std::invalid_argument);
    Graph triangle_missing(3, {{0, 1, 1.0}});
    CHECK_THROWS_AS(apply_spatial_mask(triangle_missing, {edge_key(1, 2)}), std::invalid_argument);
}

TEST_CASE("mask_adjacency zeroes entries and blocks their gradient") {
    ParameterTree p;
    p.add("a", Tensor::from({3, 3}, {0, 1, 2, 1, 0, 3, 2, 3, 0}));
    Tensor out = mask_adjacency(p.get("a"), {edge_key(0, 2)});
    CHECK(out.at({0, 2}) == 0.0);
    CHECK(out.at({2, 0}) == 0.0);
    CHECK(out.at({1, 2}) == 3.0);
    p.zero_grad();
    sum(out).backward();
    CHECK(p.get("a").grad()[2] == 0.0);
    CHECK(p.get("a").grad()[5] == 1.0);
}

TEST_CASE("uniform spatial mask") {
    Graph g = random_graph_with_edges(8, 10, 5);
    Rng rng = make_stream(0, "uniform");
    CHECK(sample_uniform_spatial_mask(g, 0.0, rng).empty());
    CHECK(sample_uniform_spatial_mask(g, 1.0, rng).size() == 10);
    CHECK(sample_uniform_spatial_mask(g, 0.5, rng).size() == 5);

    // Chi-square over all C(10, 5) = 252 subsets.
    std::map<EdgeSet, std::size_t> counts;
    const std::size_t draws = 252 * 100;
    for (std::size_t i = 0; i < draws; ++i) ++counts[sample_uniform_spatial_mask(g, 0.5, rng)];
    CHECK(counts.size() == 252);
    const double expected = static_cast<double>(draws) / 252.0;
    double chi2 = 0.0;
    for (const auto& [_, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
    // 251 degrees of freedom: the 0.99 quantile is about 305.
    CHECK(chi2 < 305.0);
}

TEST_CASE("temporal patch mask") {
    Rng rng = make_stream(0, "temporal");
    auto none = sample_temporal_mask(6, 0.0, rng);
    CHECK(none.size() == 6);
    for (bool b : none) CHECK_FALSE(b);
    CHECK_THROWS_AS(sample_temporal_mask(6, 1.0, rng), std::invalid_argument);
    CHECK_THROWS_AS(sample_temporal_mask(0, 0.3, rng), std::invalid_argument);

    // Mean masked fraction at p_t = 0.5. The all-masked guard turns one of
    // 64 outcomes into five masked patches, shifting the mean by -1/384.
    const std::size_t draws = 100000;
    double masked = 0.0;
    std::size_t all_visible_guard = 0;
    for (std::size_t i = 0; i < draws; ++i) {
        auto m = sample_temporal_mask(6, 0.5, rng);
        std::size_t c = 0;
        for (bool b : m) c += b;
        masked += static_cast<double>(c) / 6.0;
        if (c == 6) ++all_visible_guard;
    }
    CHECK(all_visible_guard == 0);
    CHECK(std::fabs(masked / draws - 0.5) < 0.01);
}

TEST_CASE("uniform temporal mask") {
    Rng rng = make_stream(0, "temporal-uniform");
    for (bool b : sample_uniform_temporal_mask(12, 0.0, rng)) CHECK_FALSE(b);
    const std::size_t draws = 100000;
    double total = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
        auto m = sample_uniform_temporal_mask(12, 0.25, rng);
        REQUIRE(m.size() == 12);
        for (bool b : m) total += b;
    }
    CHECK(std::fabs(total / draws - 3.0) < 0.05);
    for (int i = 0; i < 1000; ++i) {
        auto m = sample_uniform_temporal_mask(2, 0.95, rng);
        CHECK_FALSE((m[0] && m[1]));
    }
}

TEST_CASE("apply_temporal_mask") {
    const std::size_t h = 4, n = 3, d = 2;
    std::vector<double> v(h * n * d);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * static_cast<double>(i + 1);
    Tensor x = Tensor::from({h, n, d}, v);

    ParameterTree p;
    p.add("token", Tensor::from({d}, {0.0, 0.0}));
    Tensor same = apply_temporal_mask(x, {false, false}, 2, p.get("token"));
    CHECK(std::vector<double>(same.data().begin(), same.data().end()) == v);

    Tensor masked = apply_temporal_mask(x, {true, false}, 2, p.get("token"));
    for (std::size_t i = 0; i < h * n * d; ++i) {
        const bool in_first_patch = i < 2 * n * d;
        CHECK(masked.data()[i] == (in_first_patch ? 0.0 : v[i]));
    }

    p.zero_grad();
    sum(masked).backward();
    CHECK(p.get("token").grad()[0] == 2.0 * n);
    CHECK(p.get("token").grad()[1] == 2.0 * n);

    auto check = finite_diff_check(
        [&](ParameterTree& t) {
            return sum(square(apply_temporal_mask(x, {false, true}, 2, t.get("token"))));
        },
        p);
    CHECK(check.max_rel_error < 1e-4);

    // Batched input broadcasts the same plan over the batch.
    Tensor xb = Tensor::from({2, h, n, d}, std::vector<double>(2 * v.size(), 1.0));
    Tensor mb = apply_temporal_mask(xb, {false, true}, 2, Tensor::from({d}, {5.0, 6.0}));
    CHECK(mb.at({1, 3, 2, 1}) == 6.0);
    CHECK(mb.at({1, 1, 2, 1}) == 1.0);

    CHECK_THROWS_AS(apply_temporal_mask(x, {true, false, false}, 2, p.get("token")), ShapeError);
    CHECK_THROWS_AS(apply_temporal_mask(x, {true, false}, 2, Tensor::zeros({3})), ShapeError);
}

TEST_CASE("mask plan json round trip") {
    MaskPlan plan;
    plan.masked_edges = {edge_key(0, 3), edge_key(1, 2)};
    plan.patch_mask = {true, false, true};
    plan.p_s = 0.3;
    plan.p_t = 0.4;
    plan.patch_length = 2;
    plan.walks = {{0, 3, 2, 1}};
    MaskPlan back = MaskPlan::from_json(plan.to_json());
    CHECK(back.masked_edges == plan.masked_edges);
    CHECK(back.patch_mask == plan.patch_mask);
    CHECK(back.p_s == plan.p_s);
    CHECK(back.p_t == plan.p_t);
    CHECK(back.patch_length == plan.patch_length);
    CHECK(back.walks == plan.walks);
}
