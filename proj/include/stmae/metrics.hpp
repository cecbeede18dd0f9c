#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stmae/data.hpp"
#include "stmae/tensor.hpp"

namespace stmae {

/// Targets with |y| below this (original units) are left out of MAPE.
inline constexpr double kMapeThreshold = 1e-3;

struct StepMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> mape_percent;  // absent when every target is below threshold
};

struct MetricReport {
    std::vector<StepMetrics> per_step;
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> mape_percent;  // mean over steps where defined
    std::size_t n_eval_points = 0;
    std::string variant;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
};

/// Per-horizon-step MAE, RMSE and MAPE. Shapes are [F, N, C] or [B, F, N, C];
/// when `denorm` is given both tensors are mapped back to original units
/// first.
MetricReport metrics(const Tensor& prediction, const Tensor& target,
                     const Normalization* denorm = nullptr);

/// "step,mae,rmse,mape" header plus one row per horizon step, ascending.
/// An undefined MAPE is an empty cell.
std::string per_step_table(const MetricReport& report);

}  // namespace stmae
