#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "stmae/masking.hpp"
#include "stmae/model.hpp"

using namespace stmae;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

EncoderConfig small_config(std::size_t n, std::size_t d, std::size_t h = 12, std::size_t f = 12) {
    EncoderConfig c;
    c.n_nodes = n;
    c.hidden_dim = d;
    c.history = h;
    c.horizon = f;
    return c;
}

Tensor random_tensor(Rng& rng, Shape shape) {
    std::vector<double> v(numel_of(shape));
    for (auto& x : v) x = 2 * uniform01(rng) - 1;
    return Tensor::from(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("parameter shapes and initialization range") {
    EncoderConfig c = small_config(5, 8);
    Rng rng = make_stream(0, "init");
    Model m(c, rng);
    CHECK(m.param("embed.weight").shape() == Shape{1, 8});
    CHECK(m.param("encoder.update.weight").shape() == Shape{16, 8});
    CHECK(m.param("decoder.spatial.weight").shape() == Shape{8, 8});
    CHECK(m.param("decoder.temporal.weight").shape() == Shape{8, 12});
    CHECK(m.param("predictor.out.weight").shape() == Shape{8, 12});
    CHECK(m.param("mask_token").shape() == Shape{8});
    CHECK_FALSE(m.params().contains("graph.node_embeddings"));
    const double bound = 1.0 / std::sqrt(8.0);
    for (const auto& [path, t] : m.params())
        for (double v : t.data()) CHECK(std::fabs(v) <= bound);

    c.graph_mode = GraphMode::adaptive;
    c.node_embed_dim = 3;
    Model a(c, rng);
    CHECK(a.param("graph.node_embeddings").shape() == Shape{5, 3});
    EncoderConfig bad = small_config(5, 8);
    bad.patch_length = 5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("embed_input") {
    EncoderConfig c = small_config(1, 2, 1, 1);
    c.patch_length = 1;
    Model m = Model::zeros(c);
    Tensor x = Tensor::from({1, 1, 1}, {3.0});
    for (double v : values(m.embed_input(x))) CHECK(v == 0.0);
    m.param("embed.weight").mutable_data()[0] = 1.0;
    m.param("embed.weight").mutable_data()[1] = -1.0;
    CHECK(values(m.embed_input(x)) == std::vector<double>{3.0, -3.0});
    CHECK_THROWS_AS(m.embed_input(Tensor::zeros({1, 2, 1})), ShapeError);
}

TEST_CASE("encoder with zero weights returns a zero state") {
    EncoderConfig c = small_config(5, 8);
    Model m = Model::zeros(c);
    Rng rng = make_stream(1, "x");
    Tensor s = m.encoder_forward(random_tensor(rng, {12, 5, 8}), Graph(5, {{0, 1, 1.0}}).adjacency_tensor());
    CHECK(s.shape() == Shape{5, 8});
    for (double v : s.data()) CHECK(v == 0.0);
}

TEST_CASE("encoder without edges keeps nodes independent") {
    EncoderConfig c = small_config(4, 3, 6, 6);
    Rng rng = make_stream(2, "init");
    Model m(c, rng);
    Tensor adj = Tensor::zeros({4, 4});
    Tensor x = random_tensor(rng, {6, 4, 3});
    Tensor base = m.encoder_forward(x, adj);
    std::vector<double> perturbed = values(x);
    for (std::size_t t = 0; t < 6; ++t) perturbed[(t * 4 + 2) * 3 + 1] += 0.5;  // node 2
    Tensor moved = m.encoder_forward(Tensor::from({6, 4, 3}, perturbed), adj);
    for (std::size_t n = 0; n < 4; ++n)
        for (std::size_t d = 0; d < 3; ++d) {
            if (n == 2) continue;
            CHECK(moved.at({n, d}) == base.at({n, d}));
        }
    bool node2_changed = false;
    for (std::size_t d = 0; d < 3; ++d) node2_changed |= moved.at({2, d}) != base.at({2, d});
    CHECK(node2_changed);
}

TEST_CASE("encoder is permutation equivariant") {
    const std::size_t n = 5, h = 4, d = 3;
    EncoderConfig c = small_config(n, d, h, h);
    Rng rng = make_stream(3, "init");
    Model m(c, rng);
    Graph g(n, {{0, 1, 0.5}, {1, 2, 1.0}, {2, 3, 0.7}, {3, 4, 0.2}, {0, 4, 0.9}});
    Tensor x = random_tensor(rng, {h, n, d});
    const std::size_t perm[] = {3, 0, 4, 1, 2};  // new node i is old node perm[i]

    std::vector<Edge> edges;
    std::vector<std::size_t> inverse(n);
    for (std::size_t i = 0; i < n; ++i) inverse[perm[i]] = i;
    for (const auto& e : g.edges()) edges.push_back({inverse[e.u], inverse[e.v], e.weight});
    Graph gp(n, edges);
    std::vector<double> xp(x.numel());
    for (std::size_t t = 0; t < h; ++t)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < d; ++k) xp[(t * n + i) * d + k] = x.at({t, perm[i], k});

    Tensor s = m.encoder_forward(x, g.adjacency_tensor());
    Tensor sp = m.encoder_forward(Tensor::from({h, n, d}, xp), gp.adjacency_tensor());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k)
            CHECK(sp.at({i, k}) == doctest::Approx(s.at({perm[i], k})).epsilon(1e-13));
}

TEST_CASE("spatial decoder") {
    EncoderConfig c = small_config(2, 1);
    Model m = Model::zeros(c);
    for (double v : values(m.spatial_decoder(Tensor::zeros({2, 1})))) CHECK(v == 0.5);
    m.param("decoder.spatial.weight").mutable_data()[0] = 1.0;
    Tensor a = m.spatial_decoder(Tensor::from({2, 1}, {1, 2}));
    CHECK(a.at({0, 0}) == doctest::Approx(0.7310585786300049).epsilon(1e-13));
    CHECK(a.at({0, 1}) == doctest::Approx(0.8807970779778823).epsilon(1e-13));
    CHECK(a.at({1, 0}) == doctest::Approx(0.8807970779778823).epsilon(1e-13));
    CHECK(a.at({1, 1}) == doctest::Approx(0.9820137900379085).epsilon(1e-13));

    EncoderConfig big = small_config(6, 4);
    Rng rng = make_stream(4, "init");
    Model r(big, rng);
    Tensor ar = r.spatial_decoder(random_tensor(rng, {6, 4}));
    for (std::size_t u = 0; u < 6; ++u)
        for (std::size_t v = 0; v < 6; ++v) {
            CHECK(std::fabs(ar.at({u, v}) - ar.at({v, u})) < 1e-12);
            CHECK(ar.at({u, v}) > 0.0);
            CHECK(ar.at({u, v}) < 1.0);
        }
}

TEST_CASE("temporal decoder") {
    EncoderConfig c = small_config(1, 1, 2, 2);
    Model m = Model::zeros(c);
    for (double v : values(m.temporal_decoder(Tensor::from({1, 1}, {3.0})))) CHECK(v == 0.0);
    // Stored [in, out], so the 1 -> 2 map is the row [1, -1].
    m.param("decoder.temporal.weight").mutable_data()[0] = 1.0;
    m.param("decoder.temporal.weight").mutable_data()[1] = -1.0;
    Tensor out = m.temporal_decoder(Tensor::from({1, 1}, {3.0}));
    CHECK(out.shape() == Shape{2, 1, 1});
    CHECK(values(out) == std::vector<double>{3.0, -3.0});
}

TEST_CASE("predictor") {
    EncoderConfig c = small_config(3, 4);
    Model m = Model::zeros(c);
    auto bias = m.param("predictor.out.bias").mutable_data();
    for (std::size_t i = 0; i < bias.size(); ++i) bias[i] = static_cast<double>(i);
    Rng rng = make_stream(5, "s");
    Tensor y = m.predictor(random_tensor(rng, {3, 4}));
    CHECK(y.shape() == Shape{12, 3, 1});
    for (std::size_t f = 0; f < 12; ++f)
        for (std::size_t n = 0; n < 3; ++n) CHECK(y.at({f, n, 0}) == static_cast<double>(f));
}

TEST_CASE("forecast") {
    EncoderConfig c = small_config(4, 5);
    Rng rng = make_stream(6, "init");
    Model m(c, rng);
    Graph g(4, {{0, 1, 1.0}, {2, 3, 0.5}});
    Tensor x = random_tensor(rng, {12, 4, 1});
    Tensor y1 = m.forecast(x, g);
    CHECK(y1.shape() == Shape{12, 4, 1});
    CHECK(values(y1) == values(m.forecast(x, g)));

    // The mask token never enters the unmasked path.
    m.param("mask_token").mutable_data()[0] = 123.0;
    CHECK(values(y1) == values(m.forecast(x, g)));

    // Batched and unbatched agree.
    Tensor xb = Tensor::from({2, 12, 4, 1}, [&] {
        std::vector<double> v = values(x);
        v.insert(v.end(), v.begin(), v.end());
        return v;
    }());
    Tensor yb = m.forecast(xb, g);
    CHECK(yb.shape() == Shape{2, 12, 4, 1});
    for (std::size_t i = 0; i < y1.numel(); ++i) {
        CHECK(yb.data()[i] == doctest::Approx(y1.data()[i]).epsilon(1e-14));
        CHECK(yb.data()[y1.numel() + i] == doctest::Approx(y1.data()[i]).epsilon(1e-14));
    }
}

TEST_CASE("adaptive mode with zero embeddings gives uniform rows") {
    EncoderConfig c = small_config(4, 3);
    c.graph_mode = GraphMode::adaptive;
    Model m = Model::zeros(c);
    Tensor a = m.adjacency(Graph(4, {}));
    for (double v : a.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("model checkpoint round trip") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "stmae_test_model";
    fs::create_directories(dir);
    EncoderConfig c = small_config(4, 3);
    c.graph_mode = GraphMode::adaptive;
    Rng rng = make_stream(7, "init");
    Model m(c, rng);
    save_model(m, dir / "m");
    Model back = load_model(dir / "m");
    CHECK(back.params().fingerprint() == m.params().fingerprint());
    CHECK(back.config().to_json() == m.config().to_json());

    Model clone = m.clone();
    clone.param("mask_token").mutable_data()[0] += 1.0;
    CHECK(clone.params().fingerprint() != m.params().fingerprint());
    fs::remove_all(dir);
}
