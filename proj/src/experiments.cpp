#include "stmae/experiments.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "stmae/csv.hpp"

namespace stmae {

Dispersion summarize(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("summarize: no values");
    Dispersion d;
    for (double v : values) d.mean += v;
    d.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - d.mean) * (v - d.mean);
        d.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return d;
}

AblationTable run_ablation(const PreparedData& data, const RunConfig& base,
                           const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw std::invalid_argument("run_ablation: at least one seed required");
    AblationTable table;
    for (Variant v : kAllVariants) {
        std::vector<double> mae, rmse, mape;
        for (auto seed : seeds) {
            RunConfig cfg = base;
            cfg.variant = v;
            cfg.seed = seed;
            auto run = run_two_stage(cfg, data);
            table.rows.push_back({v, seed, run.test_report, run.audit, run.pretrain_spatial_sum,
                                  run.pretrain_temporal_sum, run.pretrain_steps});
            mae.push_back(run.test_report.mae);
            rmse.push_back(run.test_report.rmse);
            if (run.test_report.mape_percent) mape.push_back(*run.test_report.mape_percent);
        }
        VariantSummary s{v, summarize(mae), summarize(rmse), std::nullopt};
        if (!mape.empty()) s.mape = summarize(mape);
        table.summary.push_back(s);
    }
    return table;
}

std::string ablation_csv(const AblationTable& table) {
    std::ostringstream out;
    out << "variant,seed,mae,rmse,mape\n";
    for (const auto& r : table.rows) {
        out << to_string(r.variant) << ',' << r.seed << ',' << csv::format_double(r.test.mae) << ','
            << csv::format_double(r.test.rmse) << ',';
        if (r.test.mape_percent) out << csv::format_double(*r.test.mape_percent);
        out << '\n';
    }
    return out.str();
}

std::string ablation_summary_csv(const AblationTable& table) {
    auto cell = [](const std::optional<double>& v) {
        return v ? csv::format_double(*v) : std::string();
    };
    std::ostringstream out;
    out << "variant,mae_mean,mae_std,rmse_mean,rmse_std,mape_mean,mape_std\n";
    for (const auto& s : table.summary) {
        out << to_string(s.variant) << ',' << csv::format_double(s.mae.mean) << ','
            << cell(s.mae.stddev) << ',' << csv::format_double(s.rmse.mean) << ','
            << cell(s.rmse.stddev) << ',';
        if (s.mape) out << csv::format_double(s.mape->mean) << ',' << cell(s.mape->stddev);
        else out << ',';
        out << '\n';
    }
    return out.str();
}

nlohmann::json Heatmap::to_json() const {
    return {{"p_s", p_s},
            {"p_t", p_t},
            {"val_mae", val_mae},
            {"argmin", {{"p_s", p_s.at(argmin_s)},
                        {"p_t", p_t.at(argmin_t)},
                        {"val_mae", val_mae.at(argmin_s).at(argmin_t)}}}};
}

Heatmap sensitivity_sweep(const PreparedData& data, const RunConfig& base,
                          const std::vector<double>& ps_grid, const std::vector<double>& pt_grid,
                          const std::vector<std::uint64_t>& seeds) {
    if (ps_grid.empty() || pt_grid.empty()) throw std::invalid_argument("sweep: empty grid");
    if (seeds.empty()) throw std::invalid_argument("sweep: at least one seed required");
    for (const auto* grid : {&ps_grid, &pt_grid})
        for (double r : *grid)
            if (!(r >= 0.2 && r <= 0.8))
                throw std::invalid_argument("sweep: ratio " + csv::format_double(r) +
                                            " outside [0.2, 0.8]");
    Heatmap map{ps_grid, pt_grid, {}, 0, 0};
    map.val_mae.assign(ps_grid.size(), std::vector<double>(pt_grid.size(), 0.0));
    for (std::size_t i = 0; i < ps_grid.size(); ++i)
        for (std::size_t j = 0; j < pt_grid.size(); ++j) {
            double total = 0.0;
            for (auto seed : seeds) {
                RunConfig cfg = base;
                cfg.p_s = ps_grid[i];
                cfg.p_t = pt_grid[j];
                cfg.seed = seed;
                total += run_two_stage(cfg, data).val_report.mae;
            }
            map.val_mae[i][j] = total / static_cast<double>(seeds.size());
            if (map.val_mae[i][j] < map.val_mae[map.argmin_s][map.argmin_t]) {
                map.argmin_s = i;
                map.argmin_t = j;
            }
        }
    return map;
}

std::string heatmap_csv(const Heatmap& map) {
    std::ostringstream out;
    out << "p_s\\p_t";
    for (double t : map.p_t) out << ',' << csv::format_double(t);
    out << '\n';
    for (std::size_t i = 0; i < map.p_s.size(); ++i) {
        out << csv::format_double(map.p_s[i]);
        for (double v : map.val_mae[i]) out << ',' << csv::format_double(v);
        out << '\n';
    }
    return out.str();
}

}  // namespace stmae
