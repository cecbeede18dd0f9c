#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stmae/training.hpp"

namespace stmae {

struct AblationRow {
    Variant variant = Variant::full;
    std::uint64_t seed = 0;
    MetricReport test;
    SamplerAudit audit;
    double pretrain_spatial_sum = 0.0;
    double pretrain_temporal_sum = 0.0;
    std::size_t pretrain_steps = 0;
};

/// Mean and sample standard deviation across seeds. The deviation is absent
/// for a single seed; MAPE is absent when no seed defined it.
struct Dispersion {
    double mean = 0.0;
    std::optional<double> stddev;
};

struct VariantSummary {
    Variant variant = Variant::full;
    Dispersion mae;
    Dispersion rmse;
    std::optional<Dispersion> mape;
};

struct AblationTable {
    std::vector<AblationRow> rows;  // variant-major, seeds in the given order
    std::vector<VariantSummary> summary;
};

Dispersion summarize(const std::vector<double>& values);

/// Trains baseline, NT, NS, U and full for every seed on the same split with
/// the base config's epoch budget; reports test metrics.
AblationTable run_ablation(const PreparedData& data, const RunConfig& base,
                           const std::vector<std::uint64_t>& seeds);

/// "variant,seed,mae,rmse,mape", one row per run.
std::string ablation_csv(const AblationTable& table);
/// One row per variant with mean and std columns.
std::string ablation_summary_csv(const AblationTable& table);

struct Heatmap {
    std::vector<double> p_s;
    std::vector<double> p_t;
    std::vector<std::vector<double>> val_mae;  // [p_s index][p_t index], seed mean
    std::size_t argmin_s = 0;
    std::size_t argmin_t = 0;

    nlohmann::json to_json() const;
};

/// One two-stage run per (p_s, p_t, seed). Grid values must lie in [0.2, 0.8].
Heatmap sensitivity_sweep(const PreparedData& data, const RunConfig& base,
                          const std::vector<double>& ps_grid, const std::vector<double>& pt_grid,
                          const std::vector<std::uint64_t>& seeds);

/// Header row holds the p_t values, first column the p_s values.
std::string heatmap_csv(const Heatmap& map);

}  // namespace stmae
