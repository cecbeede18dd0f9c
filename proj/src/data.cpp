#include "stmae/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "stmae/csv.hpp"
#include "stmae/rng.hpp"

namespace stmae {

namespace {

double standard_normal(Rng& rng) {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

void Normalization::apply(std::span<double> values) const {
    const std::size_t c = n_features();
    for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = (values[i] - mean[i % c]) / stddev[i % c];
}

void Normalization::invert(std::span<double> values) const {
    const std::size_t c = n_features();
    for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = values[i] * stddev[i % c] + mean[i % c];
}

nlohmann::json Normalization::to_json() const { return {{"mean", mean}, {"stddev", stddev}}; }

void Dataset::validate() const {
    if (values.size() != n_steps * n_nodes * n_features)
        throw std::invalid_argument("dataset holds " + std::to_string(values.size()) +
                                    " values, expected T*N*C = " +
                                    std::to_string(n_steps * n_nodes * n_features));
    if (graph.n_nodes() != n_nodes)
        throw std::invalid_argument("dataset graph has " + std::to_string(graph.n_nodes()) +
                                    " nodes, series has " + std::to_string(n_nodes));
}

Dataset synthesize(const SynthConfig& cfg) {
    if (cfg.n_nodes < 2) throw std::invalid_argument("synthesize: n_nodes must be >= 2");
    if (cfg.n_steps < 200) throw std::invalid_argument("synthesize: T must be >= 200");
    if (cfg.n_features < 1) throw std::invalid_argument("synthesize: n_features must be >= 1");
    if (!(cfg.coupling >= 0.0 && cfg.coupling < 1.0))
        throw std::invalid_argument("synthesize: coupling must be in [0, 1)");
    if (cfg.season_period < 1) throw std::invalid_argument("synthesize: season_period must be >= 1");

    const std::size_t n = cfg.n_nodes, c = cfg.n_features;
    Rng geo = make_stream(cfg.seed, "data-graph");
    Graph graph;
    for (int attempt = 0;; ++attempt) {
        if (attempt == 10)
            throw std::runtime_error("synthesize: no edges after 10 point draws; raise epsilon");
        std::vector<double> xy(2 * n);
        for (auto& v : xy) v = uniform01(geo);
        std::vector<double> dist(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                dist[i * n + j] = std::hypot(xy[2 * i] - xy[2 * j], xy[2 * i + 1] - xy[2 * j + 1]);
        graph = gaussian_threshold_graph(dist, n, default_sigma(dist, n), cfg.epsilon);
        if (graph.n_edges() > 0) break;
    }

    Rng rng = make_stream(cfg.seed, "data-series");
    std::vector<double> phase(n * c), amp(n * c);
    for (std::size_t i = 0; i < n * c; ++i) {
        phase[i] = 2.0 * std::numbers::pi * uniform01(rng);
        amp[i] = 0.5 + uniform01(rng);
    }
    const auto prop = normalize_adjacency(graph);
    const auto& p = prop.data();

    Dataset out;
    out.n_steps = cfg.n_steps;
    out.n_nodes = n;
    out.n_features = c;
    out.values.assign(cfg.n_steps * n * c, 0.0);
    const double omega = 2.0 * std::numbers::pi / static_cast<double>(cfg.season_period);
    for (std::size_t t = 1; t < cfg.n_steps; ++t) {
        const double* prev = out.values.data() + (t - 1) * n * c;
        double* cur = out.values.data() + t * n * c;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t f = 0; f < c; ++f) {
                double mix = 0.0;
                for (std::size_t j = 0; j < n; ++j) mix += p[i * n + j] * prev[j * c + f];
                const double season =
                    amp[i * c + f] * std::sin(omega * static_cast<double>(t) + phase[i * c + f]);
                cur[i * c + f] = cfg.coupling * mix + cfg.season_amplitude * season +
                                 cfg.noise_std * standard_normal(rng);
            }
    }
    const double lo = *std::min_element(out.values.begin(), out.values.end());
    for (auto& v : out.values) v = v - lo + cfg.base_level;
    out.graph = std::move(graph);
    return out;
}

Normalization fit_zscore(const Dataset& data, double train_fraction) {
    data.validate();
    if (!(train_fraction > 0.0 && train_fraction <= 1.0))
        throw std::invalid_argument("train fraction must be in (0, 1]");
    const auto rows = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(data.n_steps)));
    if (rows == 0) throw std::invalid_argument("z-score: training portion is empty");
    const std::size_t c = data.n_features, per_row = data.n_nodes * c;
    Normalization norm;
    norm.mean.assign(c, 0.0);
    norm.stddev.assign(c, 0.0);
    const double count = static_cast<double>(rows * data.n_nodes);
    for (std::size_t i = 0; i < rows * per_row; ++i) norm.mean[i % c] += data.values[i];
    for (auto& m : norm.mean) m /= count;
    for (std::size_t i = 0; i < rows * per_row; ++i) {
        const double d = data.values[i] - norm.mean[i % c];
        norm.stddev[i % c] += d * d;
    }
    for (std::size_t f = 0; f < c; ++f) {
        norm.stddev[f] = std::sqrt(norm.stddev[f] / count);
        if (!(norm.stddev[f] > 0.0))
            throw std::invalid_argument("z-score: feature " + std::to_string(f) +
                                        " is constant on the training portion");
    }
    return norm;
}

Dataset apply_zscore(const Dataset& data, const Normalization& norm) {
    if (norm.n_features() != data.n_features)
        throw std::invalid_argument("z-score: feature count mismatch");
    Dataset out = data;
    norm.apply(out.values);
    return out;
}

std::pair<Dataset, Normalization> zscore_fit_apply(const Dataset& data, double train_fraction) {
    auto norm = fit_zscore(data, train_fraction);
    return {apply_zscore(data, norm), norm};
}

std::vector<WindowPair> make_windows(const Dataset& data, std::size_t history, std::size_t horizon) {
    data.validate();
    if (history < 1 || horizon < 1) throw std::invalid_argument("history and horizon must be >= 1");
    if (data.n_steps < history + horizon)
        throw std::invalid_argument("series has " + std::to_string(data.n_steps) +
                                    " steps, windows need at least H + F = " +
                                    std::to_string(history + horizon));
    const std::size_t row = data.n_nodes * data.n_features;
    std::vector<WindowPair> out;
    const std::size_t count = data.n_steps - history - horizon + 1;
    out.reserve(count);
    for (std::size_t t0 = 0; t0 < count; ++t0) {
        auto first = data.values.begin() + static_cast<std::ptrdiff_t>(t0 * row);
        auto mid = first + static_cast<std::ptrdiff_t>(history * row);
        auto last = mid + static_cast<std::ptrdiff_t>(horizon * row);
        out.push_back({Tensor::from({history, data.n_nodes, data.n_features}, {first, mid}),
                       Tensor::from({horizon, data.n_nodes, data.n_features}, {mid, last}), t0});
    }
    return out;
}

Split chrono_split(std::vector<WindowPair> windows) {
    if (windows.size() < 5)
        throw std::invalid_argument("chronological split needs at least 5 windows, got " +
                                    std::to_string(windows.size()));
    std::stable_sort(windows.begin(), windows.end(),
                     [](const WindowPair& a, const WindowPair& b) { return a.t0 < b.t0; });
    const std::size_t n = windows.size();
    const std::size_t n_train = n * 6 / 10, n_val = n * 2 / 10;
    Split s;
    auto it = std::make_move_iterator(windows.begin());
    s.train.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(it + static_cast<std::ptrdiff_t>(n_train),
                 it + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(it + static_cast<std::ptrdiff_t>(n_train + n_val),
                  std::make_move_iterator(windows.end()));
    return s;
}

std::vector<WindowPair> subsample_windows(const std::vector<WindowPair>& windows, std::size_t count) {
    if (count >= windows.size()) return windows;
    std::vector<WindowPair> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(windows[i * windows.size() / count]);
    return out;
}

Batch stack_windows(const std::vector<WindowPair>& windows, std::span<const std::size_t> which) {
    if (which.empty()) throw std::invalid_argument("stack_windows: empty batch");
    const Shape xs = windows.at(which[0]).x.shape(), ys = windows.at(which[0]).y.shape();
    std::vector<double> x, y;
    x.reserve(which.size() * numel_of(xs));
    y.reserve(which.size() * numel_of(ys));
    for (auto i : which) {
        const auto& w = windows.at(i);
        x.insert(x.end(), w.x.data().begin(), w.x.data().end());
        y.insert(y.end(), w.y.data().begin(), w.y.data().end());
    }
    Shape bx = xs, by = ys;
    bx.insert(bx.begin(), which.size());
    by.insert(by.begin(), which.size());
    return {Tensor::from(std::move(bx), std::move(x)), Tensor::from(std::move(by), std::move(y))};
}

DatasetFiles DatasetFiles::in_directory(const std::filesystem::path& dir) {
    return {dir / "values.csv", dir / "edges.csv", dir / "meta.json"};
}

void save_csv(const Dataset& data, const DatasetFiles& files) {
    data.validate();
    {
        std::ofstream out(files.values);
        if (!out) throw std::runtime_error("cannot write " + files.values.string());
        for (std::size_t n = 0; n < data.n_nodes; ++n)
            for (std::size_t c = 0; c < data.n_features; ++c)
                out << (n + c ? "," : "") << 'n' << n << "_f" << c;
        out << '\n';
        const std::size_t row = data.n_nodes * data.n_features;
        for (std::size_t t = 0; t < data.n_steps; ++t) {
            for (std::size_t i = 0; i < row; ++i)
                out << (i ? "," : "") << csv::format_double(data.values[t * row + i]);
            out << '\n';
        }
    }
    write_edge_csv(files.edges, data.graph);
    std::ofstream meta(files.meta);
    if (!meta) throw std::runtime_error("cannot write " + files.meta.string());
    meta << nlohmann::json{{"n_nodes", data.n_nodes},
                           {"n_features", data.n_features},
                           {"period_seconds", data.period_seconds}}
                .dump(2)
         << '\n';
}

Dataset load_csv(const DatasetFiles& files) {
    std::ifstream meta_in(files.meta);
    if (!meta_in) throw std::runtime_error("cannot open " + files.meta.string());
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(files.meta.string() + ": " + e.what());
    }
    Dataset out;
    try {
        out.n_nodes = meta.at("n_nodes").get<std::size_t>();
        out.n_features = meta.at("n_features").get<std::size_t>();
        out.period_seconds = meta.value("period_seconds", 300.0);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(files.meta.string() + ": " + e.what());
    }
    if (out.n_nodes < 1 || out.n_features < 1)
        throw std::runtime_error(files.meta.string() + ": n_nodes and n_features must be >= 1");

    std::ifstream in(files.values);
    if (!in) throw std::runtime_error("cannot open " + files.values.string());
    const std::size_t expected = out.n_nodes * out.n_features;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(files.values.string() + ": empty file");
    const auto header = csv::split(line);
    if (header.size() != expected)
        throw std::runtime_error(files.values.string() + ": expected " + std::to_string(expected) +
                                 " columns (n_nodes * n_features), found " +
                                 std::to_string(header.size()));
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        ++row;
        const auto cells = csv::split(line);
        if (cells.size() != expected)
            throw std::runtime_error(files.values.string() + ": row " + std::to_string(row) +
                                     " has " + std::to_string(cells.size()) +
                                     " columns, expected " + std::to_string(expected));
        for (std::size_t c = 0; c < cells.size(); ++c)
            out.values.push_back(csv::parse_cell(cells[c], files.values, row, c + 1));
    }
    out.n_steps = row;
    out.graph = read_edge_csv(files.edges, out.n_nodes);
    return out;
}

}  // namespace stmae
