#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "stmae/metrics.hpp"
#include "stmae/rng.hpp"

using namespace stmae;

TEST_CASE("metric examples") {
    Tensor y = Tensor::from({1, 2, 1}, {10, 20});
    CHECK(metrics(y, y).mae == 0.0);
    CHECK(metrics(y, y).rmse == 0.0);
    CHECK(*metrics(y, y).mape_percent == 0.0);

    MetricReport r = metrics(Tensor::from({1, 2, 1}, {11, 23}), y);
    CHECK(r.mae == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(r.rmse == doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));

    MetricReport p = metrics(Tensor::from({1, 2, 1}, {11, 18}), y);
    CHECK(*p.mape_percent == doctest::Approx(10.0).epsilon(1e-13));
}

TEST_CASE("mape skips small targets and is absent when nothing qualifies") {
    Tensor y = Tensor::from({2, 2, 1}, {10, 0.0, 0.0, 1e-4});
    Tensor yhat = Tensor::from({2, 2, 1}, {11, 5.0, 1.0, 2.0});
    MetricReport r = metrics(yhat, y);
    REQUIRE(r.per_step.size() == 2);
    CHECK(*r.per_step[0].mape_percent == doctest::Approx(10.0));
    CHECK_FALSE(r.per_step[1].mape_percent.has_value());
    CHECK(r.per_step[0].mae == 3.0);  // small targets still count for MAE
    CHECK(*r.mape_percent == doctest::Approx(10.0));
}

TEST_CASE("metrics agree with a naive loop") {
    Rng rng = make_stream(0, "metrics");
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t b = 1 + uniform_index(rng, 3), f = 1 + uniform_index(rng, 4),
                          n = 1 + uniform_index(rng, 5);
        std::vector<double> yv(b * f * n), pv(b * f * n);
        for (std::size_t i = 0; i < yv.size(); ++i) {
            yv[i] = uniform01(rng) < 0.1 ? 0.0 : 4 * uniform01(rng) - 2;
            pv[i] = 4 * uniform01(rng) - 2;
        }
        MetricReport r = metrics(Tensor::from({b, f, n, 1}, pv), Tensor::from({b, f, n, 1}, yv));
        REQUIRE(r.per_step.size() == f);
        double mae_sum = 0.0, rmse_sum = 0.0;
        for (std::size_t h = 0; h < f; ++h) {
            double ae = 0.0, se = 0.0, pe = 0.0;
            std::size_t cnt = 0, pcnt = 0;
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t k = 0; k < n; ++k) {
                    const std::size_t at = (i * f + h) * n + k;
                    const double e = pv[at] - yv[at];
                    ae += std::fabs(e);
                    se += e * e;
                    ++cnt;
                    if (std::fabs(yv[at]) >= 1e-3) {
                        pe += std::fabs(e) / std::fabs(yv[at]);
                        ++pcnt;
                    }
                }
            CHECK(std::fabs(r.per_step[h].mae - ae / cnt) < 1e-9);
            CHECK(std::fabs(r.per_step[h].rmse - std::sqrt(se / cnt)) < 1e-9);
            if (pcnt == 0) {
                CHECK_FALSE(r.per_step[h].mape_percent.has_value());
            } else {
                REQUIRE(r.per_step[h].mape_percent.has_value());
                CHECK(std::fabs(*r.per_step[h].mape_percent - 100.0 * pe / pcnt) < 1e-9);
            }
            mae_sum += r.per_step[h].mae;
            rmse_sum += r.per_step[h].rmse;
        }
        CHECK(std::fabs(r.mae - mae_sum / f) < 1e-12);
        CHECK(std::fabs(r.rmse - rmse_sum / f) < 1e-12);
        CHECK(r.n_eval_points == b * f * n);
    }
}

TEST_CASE("denormalization maps back to original units") {
    Normalization norm{{10.0}, {2.0}};
    Tensor y = Tensor::from({1, 2, 1}, {0.0, 1.0});      // 10, 12
    Tensor yhat = Tensor::from({1, 2, 1}, {0.5, 1.0});   // 11, 12
    MetricReport r = metrics(yhat, y, &norm);
    CHECK(r.mae == doctest::Approx(0.5));
    CHECK(*r.mape_percent == doctest::Approx(5.0));
    CHECK_THROWS_AS(metrics(y, Tensor::zeros({1, 3, 1})), ShapeError);
}

TEST_CASE("per_step_table") {
    Rng rng = make_stream(1, "table");
    std::vector<double> a(24), b(24);
    for (std::size_t i = 0; i < 24; ++i) {
        a[i] = uniform01(rng) + 1;
        b[i] = uniform01(rng) + 1;
    }
    MetricReport r = metrics(Tensor::from({12, 2, 1}, a), Tensor::from({12, 2, 1}, b));
    std::istringstream in(per_step_table(r));
    std::string line;
    std::getline(in, line);
    CHECK(line == "step,mae,rmse,mape");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        std::istringstream cells(line);
        std::string step, mae, rmse;
        std::getline(cells, step, ',');
        std::getline(cells, mae, ',');
        std::getline(cells, rmse, ',');
        CHECK(std::stoul(step) == rows);
        CHECK(std::stod(mae) == r.per_step[rows - 1].mae);
        CHECK(std::stod(rmse) == r.per_step[rows - 1].rmse);
    }
    CHECK(rows == 12);
}
