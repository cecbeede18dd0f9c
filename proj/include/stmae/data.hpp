#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "stmae/graph.hpp"
#include "stmae/tensor.hpp"

namespace stmae {

/// Per-feature z-score statistics.
struct Normalization {
    std::vector<double> mean;
    std::vector<double> stddev;

    std::size_t n_features() const { return mean.size(); }
    /// In-place transform of values laid out with the feature axis last.
    void apply(std::span<double> values) const;
    void invert(std::span<double> values) const;

    nlohmann::json to_json() const;
};

/// A [T, N, C] series on a graph.
struct Dataset {
    std::size_t n_steps = 0;     // T
    std::size_t n_nodes = 0;     // N
    std::size_t n_features = 0;  // C
    std::vector<double> values;  // row-major [T, N, C]
    double period_seconds = 300.0;
    Graph graph;

    double at(std::size_t t, std::size_t n, std::size_t c) const {
        return values[(t * n_nodes + n) * n_features + c];
    }
    void validate() const;
};

struct SynthConfig {
    std::size_t n_nodes = 20;
    std::size_t n_steps = 3000;
    std::size_t n_features = 1;
    std::uint64_t seed = 0;
    double coupling = 0.9;           // a, must be in [0, 1)
    double season_amplitude = 1.0;   // s
    double noise_std = 0.3;          // sigma_n
    std::size_t season_period = 288; // one day of 5-minute steps
    double epsilon = 0.4;            // Gaussian kernel threshold
    double base_level = 10.0;        // added after shifting the minimum to zero
};

/// Linear graph diffusion plus per-node daily seasonality and Gaussian noise,
/// on a random geometric graph over uniform points in the unit square.
/// Throws std::runtime_error if ten point draws all give an edgeless graph.
Dataset synthesize(const SynthConfig& cfg);

/// Statistics from the first floor(train_fraction * T) steps only.
Normalization fit_zscore(const Dataset& data, double train_fraction);
Dataset apply_zscore(const Dataset& data, const Normalization& norm);
std::pair<Dataset, Normalization> zscore_fit_apply(const Dataset& data, double train_fraction);

struct WindowPair {
    Tensor x;  // [H, N, C]
    Tensor y;  // [F, N, C]
    std::size_t t0 = 0;
};

/// Stride-1 windows, one per start index in [0, T - H - F].
std::vector<WindowPair> make_windows(const Dataset& data, std::size_t history, std::size_t horizon);

struct Split {
    std::vector<WindowPair> train;
    std::vector<WindowPair> val;
    std::vector<WindowPair> test;
};

/// 6:2:2 by start index: floor(60%), floor(20%), remainder.
Split chrono_split(std::vector<WindowPair> windows);

/// Keeps `count` windows at evenly spaced positions, preserving order.
std::vector<WindowPair> subsample_windows(const std::vector<WindowPair>& windows, std::size_t count);

struct Batch {
    Tensor x;  // [B, H, N, C]
    Tensor y;  // [B, F, N, C]
};

Batch stack_windows(const std::vector<WindowPair>& windows, std::span<const std::size_t> which);

// Files ---------------------------------------------------------------------

struct DatasetFiles {
    std::filesystem::path values;  // values.csv
    std::filesystem::path edges;   // edges.csv
    std::filesystem::path meta;    // meta.json

    static DatasetFiles in_directory(const std::filesystem::path& dir);
};

void save_csv(const Dataset& data, const DatasetFiles& files);
/// Values CSV columns are node-major ("n0_f0,n0_f1,..."). Rejects a column
/// count that disagrees with the meta file and any non-numeric cell.
Dataset load_csv(const DatasetFiles& files);

}  // namespace stmae
