#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "stmae/data.hpp"

using namespace stmae;

namespace {

Dataset series(std::size_t t, std::size_t n, std::size_t c) {
    Dataset d;
    d.n_steps = t;
    d.n_nodes = n;
    d.n_features = c;
    d.values.resize(t * n * c);
    for (std::size_t i = 0; i < d.values.size(); ++i) d.values[i] = std::sin(0.37 * i) + 0.01 * i;
    std::vector<Edge> edges;
    for (std::size_t u = 1; u < n; ++u) edges.push_back({u - 1, u, 1.0});
    d.graph = Graph(n, edges);
    return d;
}

SynthConfig small_synth(std::uint64_t seed) {
    SynthConfig c;
    c.n_nodes = 6;
    c.n_steps = 400;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_CASE("synthesize is seed deterministic") {
    Dataset a = synthesize(small_synth(3));
    Dataset b = synthesize(small_synth(3));
    CHECK(a.values == b.values);
    CHECK(a.graph.adjacency() == b.graph.adjacency());
    CHECK(a.graph.n_edges() > 0);
    CHECK(synthesize(small_synth(4)).values != a.values);
    CHECK(a.n_steps == 400);
    CHECK(a.values.size() == 400 * 6);
    for (double v : a.values) CHECK(v >= 0.0);
}

TEST_CASE("synthesize without dynamics is constant") {
    SynthConfig c = small_synth(1);
    c.coupling = 0.0;
    c.season_amplitude = 0.0;
    c.noise_std = 0.0;
    c.base_level = 0.0;
    for (double v : synthesize(c).values) CHECK(v == 0.0);
}

TEST_CASE("synthesize stays bounded over a long horizon") {
    SynthConfig c = small_synth(2);
    c.n_steps = 5000;
    c.coupling = 0.9;
    double biggest = 0.0;
    for (double v : synthesize(c).values) biggest = std::max(biggest, std::fabs(v));
    CHECK(biggest < 1e6);

    SynthConfig bad = small_synth(2);
    bad.n_nodes = 1;
    CHECK_THROWS(synthesize(bad));
    bad = small_synth(2);
    bad.n_steps = 100;
    CHECK_THROWS(synthesize(bad));
}

TEST_CASE("zscore on a two-point series") {
    Dataset d = series(2, 1, 1);
    d.values = {0.0, 10.0};
    auto [z, norm] = zscore_fit_apply(d, 1.0);
    CHECK(norm.mean[0] == 5.0);
    CHECK(norm.stddev[0] == 5.0);
    CHECK(z.values == std::vector<double>{-1.0, 1.0});
}

TEST_CASE("zscore standardizes the training portion and inverts") {
    Dataset d = series(200, 3, 2);
    auto [z, norm] = zscore_fit_apply(d, 0.6);
    CHECK(norm.n_features() == 2);
    const std::size_t rows = 120;
    for (std::size_t c = 0; c < 2; ++c) {
        double s = 0.0, ss = 0.0;
        std::size_t n = 0;
        for (std::size_t t = 0; t < rows; ++t)
            for (std::size_t k = 0; k < 3; ++k) {
                s += z.at(t, k, c);
                ++n;
            }
        const double m = s / n;
        for (std::size_t t = 0; t < rows; ++t)
            for (std::size_t k = 0; k < 3; ++k) ss += (z.at(t, k, c) - m) * (z.at(t, k, c) - m);
        CHECK(std::fabs(m) < 1e-10);
        CHECK(std::fabs(std::sqrt(ss / n) - 1.0) < 1e-10);
    }
    std::vector<double> back = z.values;
    norm.invert(back);
    for (std::size_t i = 0; i < back.size(); ++i) CHECK(std::fabs(back[i] - d.values[i]) < 1e-12);

    Dataset flat = series(10, 1, 1);
    flat.values.assign(10, 2.0);
    CHECK_THROWS(fit_zscore(flat, 0.6));
}

TEST_CASE("normalization ignores values outside the training rows") {
    Dataset d = series(100, 2, 1);
    Normalization before = fit_zscore(d, 0.6);
    for (std::size_t i = 60 * 2; i < d.values.size(); ++i) d.values[i] = 1e6 + i;
    Normalization after = fit_zscore(d, 0.6);
    CHECK(before.mean == after.mean);
    CHECK(before.stddev == after.stddev);
}

TEST_CASE("make_windows") {
    Dataset d = series(100, 2, 1);
    auto w = make_windows(d, 12, 12);
    CHECK(w.size() == 77);
    for (const auto& p : w) {
        CHECK(p.x.shape() == Shape{12, 2, 1});
        CHECK(p.y.shape() == Shape{12, 2, 1});
        CHECK(p.x.at({0, 1, 0}) == d.at(p.t0, 1, 0));
        CHECK(p.y.at({0, 1, 0}) == d.at(p.t0 + 12, 1, 0));
    }
    CHECK(make_windows(series(24, 2, 1), 12, 12).size() == 1);
    CHECK_THROWS(make_windows(series(23, 2, 1), 12, 12));
}

TEST_CASE("chrono_split") {
    auto windows_of = [](std::size_t count) {
        return make_windows(series(count + 3, 1, 1), 2, 2);
    };
    Split s = chrono_split(windows_of(100));
    CHECK(s.train.size() == 60);
    CHECK(s.val.size() == 20);
    CHECK(s.test.size() == 20);
    CHECK(s.train.back().t0 < s.val.front().t0);
    CHECK(s.val.back().t0 < s.test.front().t0);
    for (const auto* part : {&s.train, &s.val, &s.test})
        for (std::size_t i = 1; i < part->size(); ++i) CHECK((*part)[i - 1].t0 < (*part)[i].t0);

    Split ten = chrono_split(windows_of(10));
    CHECK(ten.train.size() == 6);
    CHECK(ten.val.size() == 2);
    CHECK(ten.test.size() == 2);
    Split odd = chrono_split(windows_of(13));
    CHECK(odd.train.size() + odd.val.size() + odd.test.size() == 13);
    CHECK_THROWS(chrono_split(windows_of(4)));
}

TEST_CASE("subsample and stack") {
    auto w = make_windows(series(60, 2, 1), 4, 4);
    auto sub = subsample_windows(w, 10);
    CHECK(sub.size() == 10);
    for (std::size_t i = 1; i < sub.size(); ++i) CHECK(sub[i - 1].t0 < sub[i].t0);
    CHECK(subsample_windows(w, 1000).size() == w.size());

    const std::size_t which[] = {3, 0};
    Batch b = stack_windows(w, which);
    CHECK(b.x.shape() == Shape{2, 4, 2, 1});
    CHECK(b.x.at({0, 0, 1, 0}) == w[3].x.at({0, 1, 0}));
    CHECK(b.y.at({1, 3, 0, 0}) == w[0].y.at({3, 0, 0}));
}

TEST_CASE("csv round trip and rejection") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "stmae_test_data";
    fs::remove_all(dir);
    fs::create_directories(dir);
    Dataset d = synthesize(small_synth(5));
    auto files = DatasetFiles::in_directory(dir);
    save_csv(d, files);
    {
        std::ifstream in(files.values);
        std::string header;
        std::getline(in, header);
        CHECK(header.rfind("n0_f0,n1_f0,", 0) == 0);
    }
    Dataset back = load_csv(files);
    CHECK(back.n_steps == d.n_steps);
    CHECK(back.n_nodes == d.n_nodes);
    REQUIRE(back.values.size() == d.values.size());
    for (std::size_t i = 0; i < d.values.size(); ++i) CHECK(std::fabs(back.values[i] - d.values[i]) < 1e-9);
    CHECK(back.graph.n_edges() == d.graph.n_edges());

    auto write = [&](const std::string& meta, const std::string& values) {
        std::ofstream(files.meta) << meta;
        std::ofstream(files.values) << values;
        std::ofstream(files.edges) << "u,v,weight\n0,1,1.0\n";
    };
    write(R"({"n_nodes": 6, "n_features": 1, "period_seconds": 300})",
          "a,b,c,d,e\n1,2,3,4,5\n");
    try {
        load_csv(files);
        FAIL("expected a column-count error");
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        CHECK(msg.find('6') != std::string::npos);
        CHECK(msg.find('5') != std::string::npos);
    }
    write(R"({"n_nodes": 2, "n_features": 1, "period_seconds": 300})", "n0_f0,n1_f0\n1,x\n");
    CHECK_THROWS(load_csv(files));
    fs::remove_all(dir);
}
