#include "stmae/metrics.hpp"

#include <cmath>
#include <sstream>

#include "stmae/csv.hpp"

namespace stmae {

MetricReport metrics(const Tensor& prediction, const Tensor& target, const Normalization* denorm) {
    if (prediction.shape() != target.shape())
        throw ShapeError("metrics: prediction " + shape_str(prediction.shape()) +
                         " vs target " + shape_str(target.shape()));
    if (prediction.rank() != 3 && prediction.rank() != 4)
        throw ShapeError("metrics: expected [F,N,C] or [B,F,N,C], got " +
                         shape_str(prediction.shape()));
    std::vector<double> yhat(prediction.data().begin(), prediction.data().end());
    std::vector<double> y(target.data().begin(), target.data().end());
    if (denorm) {
        if (denorm->n_features() != prediction.shape().back())
            throw ShapeError("metrics: normalization has " + std::to_string(denorm->n_features()) +
                             " features, tensors have " + std::to_string(prediction.shape().back()));
        denorm->invert(yhat);
        denorm->invert(y);
    }
    const bool batched = prediction.rank() == 4;
    const std::size_t batch = batched ? prediction.dim(0) : 1;
    const std::size_t steps = prediction.dim(batched ? 1 : 0);
    const std::size_t inner = prediction.numel() / (batch * steps);

    MetricReport report;
    report.n_eval_points = prediction.numel();
    report.per_step.resize(steps);
    for (std::size_t h = 0; h < steps; ++h) {
        double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
        std::size_t pct_count = 0;
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * steps + h) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
                const double e = yhat[base + i] - y[base + i];
                abs_sum += std::fabs(e);
                sq_sum += e * e;
                if (std::fabs(y[base + i]) >= kMapeThreshold) {
                    pct_sum += std::fabs(e) / std::fabs(y[base + i]);
                    ++pct_count;
                }
            }
        }
        const double n = static_cast<double>(batch * inner);
        auto& s = report.per_step[h];
        s.mae = abs_sum / n;
        s.rmse = std::sqrt(sq_sum / n);
        if (pct_count) s.mape_percent = 100.0 * pct_sum / static_cast<double>(pct_count);
    }
    double mape_sum = 0.0;
    std::size_t mape_steps = 0;
    for (const auto& s : report.per_step) {
        report.mae += s.mae;
        report.rmse += s.rmse;
        if (s.mape_percent) {
            mape_sum += *s.mape_percent;
            ++mape_steps;
        }
    }
    report.mae /= static_cast<double>(steps);
    report.rmse /= static_cast<double>(steps);
    if (mape_steps) report.mape_percent = mape_sum / static_cast<double>(mape_steps);
    return report;
}

nlohmann::json MetricReport::to_json() const {
    auto opt = [](const std::optional<double>& v) -> nlohmann::json {
        return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    nlohmann::json steps = nlohmann::json::array();
    for (std::size_t i = 0; i < per_step.size(); ++i)
        steps.push_back({{"step", i + 1},
                         {"mae", per_step[i].mae},
                         {"rmse", per_step[i].rmse},
                         {"mape", opt(per_step[i].mape_percent)}});
    return {{"variant", variant},
            {"seed", seed},
            {"n_eval_points", n_eval_points},
            {"overall", {{"mae", mae}, {"rmse", rmse}, {"mape", opt(mape_percent)}}},
            {"per_step", steps}};
}

std::string per_step_table(const MetricReport& report) {
    std::ostringstream out;
    out << "step,mae,rmse,mape\n";
    for (std::size_t i = 0; i < report.per_step.size(); ++i) {
        const auto& s = report.per_step[i];
        out << i + 1 << ',' << csv::format_double(s.mae) << ',' << csv::format_double(s.rmse) << ',';
        if (s.mape_percent) out << csv::format_double(*s.mape_percent);
        out << '\n';
    }
    return out.str();
}

}  // namespace stmae
