#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "adformer/eval/baselines.hpp"
#include "adformer/eval/evaluate.hpp"
#include "adformer/eval/metrics.hpp"
#include "adformer/model/network.hpp"
#include "support/fixture.hpp"
#include "support/testutil.hpp"

using namespace adformer;

namespace {

/// Minimal batch with only the fields the baselines consume.
ForecastBatch baseline_batch(Array inputs_raw, Array targets,
                             std::vector<std::int64_t> target_start = {}) {
    ForecastBatch b;
    b.inputs_raw = std::move(inputs_raw);
    b.targets = std::move(targets);
    b.target_start = std::move(target_start);
    if (b.target_start.empty()) b.target_start.assign(b.targets.dim(0), 0);
    return b;
}

/// Panel whose value depends only on (region, day-of-week, slot) — exactly
/// weekly periodic, so slot averages reproduce it without error.
DemandTensor periodic_panel(std::size_t days, std::int64_t bin = 1800, std::size_t regions = 2) {
    const auto per_day = static_cast<std::size_t>(86400 / bin);
    const std::size_t steps = days * per_day;
    DemandTensor t;
    t.bin_width_sec = bin;
    t.values = Array::zeros({steps, regions, 1});
    t.timestamps.resize(steps);
    t.region_ids.resize(regions);
    for (std::size_t r = 0; r < regions; ++r) t.region_ids[r] = "Z" + std::to_string(r);
    const std::int64_t start = 4 * 86400;  // Monday
    for (std::size_t i = 0; i < steps; ++i) {
        const std::int64_t ts = start + static_cast<std::int64_t>(i) * bin;
        t.timestamps[i] = ts;
        const auto dow = static_cast<double>(timeutil::day_of_week(ts));
        const auto slot = static_cast<double>(timeutil::seconds_since_midnight(ts) / bin);
        for (std::size_t r = 0; r < regions; ++r) {
            t.values.at_flat(i * regions + r) =
                10.0 + 3.0 * dow + 0.25 * slot + 5.0 * static_cast<double>(r);
        }
    }
    return t;
}

}  // namespace

TEST_CASE("metric hand examples", "[evaluation]") {
    SECTION("single qualifying cell") {
        auto report = thresholded_metrics(Array::from({1}, {12.0}), Array::from({1}, {10.0}));
        REQUIRE(report.aggregate.defined);
        REQUIRE(report.aggregate.mae == Catch::Approx(2.0).margin(1e-12));
        REQUIRE(report.aggregate.rmse == Catch::Approx(2.0).margin(1e-12));
        REQUIRE(report.aggregate.mape == Catch::Approx(20.0).margin(1e-12));
        REQUIRE(report.aggregate.cells == 1);
        REQUIRE(report.masked_cells == 0);
        REQUIRE(report.horizons.empty());  // breakdown needs rank-4 input
    }
    SECTION("perfect prediction") {
        auto t = Array::from({3}, {10.0, 6.0, 5.0});
        auto report = thresholded_metrics(t, t);
        REQUIRE(report.aggregate.mae == 0.0);
        REQUIRE(report.aggregate.rmse == 0.0);
        REQUIRE(report.aggregate.mape == 0.0);
        REQUIRE(report.aggregate.cells == 3);
    }
    SECTION("empty mask yields an undefined report") {
        auto report = thresholded_metrics(Array::from({1}, {9.0}), Array::from({1}, {3.0}));
        REQUIRE_FALSE(report.aggregate.defined);
        REQUIRE(report.masked_cells == 1);
        auto j = report_json(report);
        REQUIRE(j["aggregate"]["mae"].is_null());
        REQUIRE(j["aggregate"]["rmse"].is_null());
        REQUIRE(j["aggregate"]["mape_pct"].is_null());
        REQUIRE(j["aggregate"]["cells"] == 0);
    }
    SECTION("shape mismatch is rejected") {
        REQUIRE_THROWS_AS(thresholded_metrics(Array::zeros({2}), Array::zeros({4})),
                          std::invalid_argument);
    }
}

TEST_CASE("ten-cell fixture with masked cells", "[evaluation]") {
    // Five cells qualify (target >= 5); the errors below are re-derived by
    // explicit arithmetic rather than through the accumulator.
    auto target = Array::from({10}, {10.0, 3.0, 8.0, 5.0, 0.0, 20.0, 4.9, 16.0, 2.0, 4.0});
    auto pred = Array::from({10}, {12.0, 99.0, 7.5, 5.0, -1.0, 24.0, 0.0, 12.0, 3.0, 4.0});
    auto report = thresholded_metrics(pred, target, 5.0);
    REQUIRE(report.total_cells == 10);
    REQUIRE(report.masked_cells == 5);
    REQUIRE(report.aggregate.cells == 5);
    const double mae = (2.0 + 0.5 + 0.0 + 4.0 + 4.0) / 5.0;
    const double rmse = std::sqrt((4.0 + 0.25 + 0.0 + 16.0 + 16.0) / 5.0);
    const double mape = (2.0 / 10.0 + 0.5 / 8.0 + 0.0 / 5.0 + 4.0 / 20.0 + 4.0 / 16.0) / 5.0 * 100.0;
    REQUIRE(report.aggregate.mae == Catch::Approx(mae).margin(1e-12));
    REQUIRE(report.aggregate.rmse == Catch::Approx(rmse).margin(1e-12));
    REQUIRE(report.aggregate.mape == Catch::Approx(mape).margin(1e-12));
}

TEST_CASE("metric invariants", "[evaluation]") {
    Rng rng(41);
    SECTION("rmse dominates mae") {
        for (int trial = 0; trial < 20; ++trial) {
            auto target = testutil::random_array(rng, {40}, 0.0, 30.0);
            auto pred = testutil::random_array(rng, {40}, 0.0, 30.0);
            auto report = thresholded_metrics(pred, target, 5.0);
            if (!report.aggregate.defined) continue;
            REQUIRE(report.aggregate.rmse >= report.aggregate.mae - 1e-12);
        }
    }
    SECTION("permutation invariance over cells") {
        auto target = testutil::random_array(rng, {30}, 0.0, 20.0);
        auto pred = testutil::random_array(rng, {30}, 0.0, 20.0);
        std::vector<std::size_t> perm(30);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        Array t2 = Array::zeros({30}), p2 = Array::zeros({30});
        for (std::size_t i = 0; i < 30; ++i) {
            t2.at_flat(i) = target[perm[i]];
            p2.at_flat(i) = pred[perm[i]];
        }
        auto a = thresholded_metrics(pred, target, 5.0);
        auto b = thresholded_metrics(p2, t2, 5.0);
        REQUIRE(a.aggregate.mae == Catch::Approx(b.aggregate.mae).margin(1e-12));
        REQUIRE(a.aggregate.rmse == Catch::Approx(b.aggregate.rmse).margin(1e-12));
        REQUIRE(a.aggregate.mape == Catch::Approx(b.aggregate.mape).margin(1e-12));
        REQUIRE(a.aggregate.cells == b.aggregate.cells);
    }
    SECTION("threshold zero on positive targets equals unmasked metrics") {
        auto target = testutil::random_array(rng, {25}, 1.0, 10.0);
        auto pred = testutil::random_array(rng, {25}, 0.0, 10.0);
        auto report = thresholded_metrics(pred, target, 0.0);
        REQUIRE(report.masked_cells == 0);
        double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
        for (std::size_t i = 0; i < 25; ++i) {
            const double e = pred[i] - target[i];
            abs_sum += std::fabs(e);
            sq_sum += e * e;
            pct_sum += std::fabs(e) / target[i];
        }
        REQUIRE(report.aggregate.mae == Catch::Approx(abs_sum / 25.0).margin(1e-12));
        REQUIRE(report.aggregate.rmse == Catch::Approx(std::sqrt(sq_sum / 25.0)).margin(1e-12));
        REQUIRE(report.aggregate.mape == Catch::Approx(pct_sum / 25.0 * 100.0).margin(1e-12));
    }
}

TEST_CASE("per-horizon breakdown on rank-4 input", "[evaluation]") {
    // (B,H,N,D) = (2,3,2,1); horizon h carries error h+1 on every qualifying cell.
    Array target = Array::zeros({2, 3, 2, 1});
    Array pred = Array::zeros({2, 3, 2, 1});
    for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t h = 0; h < 3; ++h) {
            for (std::size_t n = 0; n < 2; ++n) {
                const std::size_t i = (b * 3 + h) * 2 + n;
                target.at_flat(i) = 10.0;
                pred.at_flat(i) = 10.0 + static_cast<double>(h + 1);
            }
        }
    }
    target.at_flat(0) = 1.0;  // mask one cell of horizon 1
    auto report = thresholded_metrics(pred, target, 5.0);
    REQUIRE(report.horizons.size() == 3);
    std::size_t cell_sum = 0;
    for (std::size_t h = 0; h < 3; ++h) {
        REQUIRE(report.horizons[h].first == h + 1);
        const auto &v = report.horizons[h].second;
        REQUIRE(v.defined);
        REQUIRE(v.mae == Catch::Approx(static_cast<double>(h + 1)).margin(1e-12));
        REQUIRE(v.rmse == Catch::Approx(static_cast<double>(h + 1)).margin(1e-12));
        cell_sum += v.cells;
    }
    REQUIRE(report.horizons[0].second.cells == 3);  // one masked out
    REQUIRE(cell_sum == report.aggregate.cells);
    // Aggregate is the cell-weighted combination of the horizon rows.
    const double expect_mae = (3.0 * 1.0 + 4.0 * 2.0 + 4.0 * 3.0) / 11.0;
    REQUIRE(report.aggregate.mae == Catch::Approx(expect_mae).margin(1e-12));
}

TEST_CASE("persistence baseline repeats the last observed step", "[evaluation]") {
    SECTION("constant series has zero error at every horizon") {
        auto in = Array::full({1, 4, 2, 1}, 7.0);
        auto tg = Array::full({1, 3, 2, 1}, 7.0);
        auto pred = persistence_baseline(baseline_batch(in, tg));
        REQUIRE(pred.shape() == Shape{1, 3, 2, 1});
        REQUIRE(testutil::max_abs_diff(pred, tg) == 0.0);
    }
    SECTION("every horizon predicts the final input value") {
        auto in = Array::from({1, 3, 1, 1}, {1.0, 4.0, 7.0});
        auto tg = Array::zeros({1, 5, 1, 1});
        auto pred = persistence_baseline(baseline_batch(in, tg));
        for (std::size_t h = 0; h < 5; ++h) REQUIRE(pred[h] == 7.0);
    }
    SECTION("linear ramp with slope one gives MAE two at H=3") {
        auto in = Array::from({1, 4, 1, 1}, {1.0, 2.0, 3.0, 4.0});
        auto tg = Array::from({1, 3, 1, 1}, {5.0, 6.0, 7.0});
        auto pred = persistence_baseline(baseline_batch(in, tg));
        auto report = thresholded_metrics(pred, tg, 0.0);
        REQUIRE(report.aggregate.mae == Catch::Approx(2.0).margin(1e-12));  // errors 1,2,3
    }
    SECTION("regions keep their own last values") {
        auto in = Array::from({1, 2, 2, 1}, {0.0, 0.0, 3.0, 9.0});
        auto tg = Array::zeros({1, 2, 2, 1});
        auto pred = persistence_baseline(baseline_batch(in, tg));
        REQUIRE(pred[0] == 3.0);
        REQUIRE(pred[1] == 9.0);
        REQUIRE(pred[2] == 3.0);
        REQUIRE(pred[3] == 9.0);
    }
}

TEST_CASE("historical average learns weekly slot means", "[evaluation]") {
    SECTION("weekly periodic signal is predicted exactly") {
        auto train = periodic_panel(14);
        HistoricalAverage ha(train);
        // Query one full week after the end of training: same slots, same values.
        const std::int64_t week = 7 * 86400;
        for (std::size_t i = 0; i < 48; ++i) {
            const std::int64_t ts = train.timestamps[i] + 3 * week;
            for (std::size_t r = 0; r < 2; ++r) {
                REQUIRE(ha.predict(r, 0, ts) ==
                        Catch::Approx(train.values[i * 2 + r]).margin(1e-12));
            }
        }
    }
    SECTION("constant signal predicts the constant") {
        auto train = periodic_panel(7);
        for (std::size_t i = 0; i < train.values.numel(); ++i) train.values.at_flat(i) = 6.5;
        HistoricalAverage ha(train);
        REQUIRE(ha.predict(0, 0, train.timestamps[5] + 7 * 86400) == 6.5);
        REQUIRE(ha.predict(1, 0, train.timestamps[99]) == 6.5);
    }
    SECTION("two-level weekday and weekend signal is recovered exactly") {
        auto train = periodic_panel(14);
        for (std::size_t i = 0; i < train.timestamps.size(); ++i) {
            const bool weekend = timeutil::day_of_week(train.timestamps[i]) >= 5;
            for (std::size_t r = 0; r < 2; ++r) {
                train.values.at_flat(i * 2 + r) = weekend ? 4.0 : 20.0;
            }
        }
        HistoricalAverage ha(train);
        const std::int64_t monday = train.timestamps[0] + 14 * 86400;
        const std::int64_t saturday = monday + 5 * 86400;
        REQUIRE(ha.predict(0, 0, monday + 3600) == 20.0);
        REQUIRE(ha.predict(1, 0, saturday + 7200) == 4.0);
    }
    SECTION("less than one week of training data is rejected") {
        REQUIRE_THROWS_AS(HistoricalAverage(periodic_panel(6)), std::invalid_argument);
    }
    SECTION("unseen slots fall back to the region mean") {
        auto train = periodic_panel(8);
        // Remove every occurrence of Tuesday 00:00 so that slot is unobserved.
        DemandTensor holed;
        holed.bin_width_sec = train.bin_width_sec;
        holed.region_ids = train.region_ids;
        double kept_sum = 0.0;
        std::size_t kept = 0;
        for (std::size_t i = 0; i < train.timestamps.size(); ++i) {
            const std::int64_t ts = train.timestamps[i];
            if (timeutil::day_of_week(ts) == 1 && timeutil::seconds_since_midnight(ts) == 0) {
                continue;
            }
            holed.timestamps.push_back(ts);
            kept_sum += train.values[i * 2];
            ++kept;
        }
        holed.values = Array::zeros({kept, 2, 1});
        std::size_t row = 0;
        for (std::size_t i = 0; i < train.timestamps.size(); ++i) {
            const std::int64_t ts = train.timestamps[i];
            if (timeutil::day_of_week(ts) == 1 && timeutil::seconds_since_midnight(ts) == 0) {
                continue;
            }
            holed.values.at_flat(row * 2) = train.values[i * 2];
            holed.values.at_flat(row * 2 + 1) = train.values[i * 2 + 1];
            ++row;
        }
        HistoricalAverage ha(holed);
        const std::int64_t tuesday_midnight = train.timestamps[0] + 86400;  // Tue 00:00
        REQUIRE(ha.predict(0, 0, tuesday_midnight) ==
                Catch::Approx(kept_sum / static_cast<double>(kept)).margin(1e-12));
    }
    SECTION("batch prediction follows the target timestamps") {
        auto train = periodic_panel(14);
        HistoricalAverage ha(train);
        ForecastBatch batch = baseline_batch(Array::zeros({2, 1, 2, 1}), Array::zeros({2, 3, 2, 1}),
                                             {train.timestamps[0] + 14 * 86400,
                                              train.timestamps[10] + 21 * 86400});
        auto pred = ha.predict_batch(batch);
        for (std::size_t b = 0; b < 2; ++b) {
            for (std::size_t h = 0; h < 3; ++h) {
                const std::int64_t ts = batch.target_start[b] + static_cast<std::int64_t>(h) * 1800;
                for (std::size_t r = 0; r < 2; ++r) {
                    REQUIRE(pred[((b * 3 + h) * 2 + r)] ==
                            Catch::Approx(ha.predict(r, 0, ts)).margin(1e-15));
                }
            }
        }
        auto same = historical_average_baseline(train, batch);
        REQUIRE(testutil::max_abs_diff(pred, same) == 0.0);
    }
    SECTION("region count mismatch is rejected") {
        auto train = periodic_panel(7);
        HistoricalAverage ha(train);
        auto batch = baseline_batch(Array::zeros({1, 1, 5, 1}), Array::zeros({1, 2, 5, 1}));
        REQUIRE_THROWS_AS(ha.predict_batch(batch), std::invalid_argument);
    }
}

TEST_CASE("report table and json carry the same numbers", "[evaluation]") {
    Rng rng(57);
    auto target = testutil::random_array(rng, {2, 2, 3, 1}, 0.0, 20.0);
    auto pred = testutil::random_array(rng, {2, 2, 3, 1}, 0.0, 20.0);
    auto report = thresholded_metrics(pred, target, 5.0);
    auto j = report_json(report);
    REQUIRE(j["threshold"] == 5.0);
    REQUIRE(j["total_cells"] == 12);
    REQUIRE(j["horizons"].size() == 2);
    for (std::size_t h = 0; h < 2; ++h) {
        REQUIRE(j["horizons"][h]["step"] == h + 1);
        if (report.horizons[h].second.defined) {
            REQUIRE(j["horizons"][h]["mae"].get<double>() == report.horizons[h].second.mae);
        }
    }
    auto table = format_report_table({{"model", report}});
    char cell[32];
    std::snprintf(cell, sizeof(cell), "%12.6f", report.aggregate.mae);
    REQUIRE(table.find(cell) != std::string::npos);
    REQUIRE(table.find("model") != std::string::npos);
    REQUIRE(table.find("all") != std::string::npos);

    // Undefined rows render as n/a in the table.
    auto undef = thresholded_metrics(Array::from({1}, {1.0}), Array::from({1}, {1.0}), 5.0);
    auto t2 = format_report_table({{"empty", undef}});
    REQUIRE(t2.find("n/a") != std::string::npos);
}

TEST_CASE("dataset evaluation matches direct metric computation", "[evaluation]") {
    auto spec = fixture::PanelSpec{};
    spec.days = 7;
    auto tensor = fixture::synthetic_demand(spec);
    auto splits = chronological_split(tensor);
    auto norm = fit_normalizer(splits.train);
    ModelConfig cfg;
    cfg.hidden_dim = 8;
    cfg.depth = 1;
    cfg.input_steps = 4;
    cfg.horizon = 3;
    cfg.level_counts = {3};
    cfg.temporal_slots = 2;
    auto ds = make_windows(splits.val, norm, cfg.input_steps, cfg.horizon);
    auto hierarchy = testutil::round_robin_hierarchy(12, {3});
    Rng init(9);
    auto params = init_parameters<double>(cfg, 12, hierarchy, init);
    AdformerNet<double> net(cfg, 12, hierarchy, params);

    auto [pred, targets] = predict_dataset(net, ds, 16);
    REQUIRE(pred.shape() == Shape{ds.sample_count(), 3, 12, 1});
    REQUIRE(targets.shape() == pred.shape());
    auto direct = thresholded_metrics(pred, targets, 5.0);
    auto report = evaluate_dataset(net, ds, 16, 5.0);
    REQUIRE(report.aggregate.mae == direct.aggregate.mae);
    REQUIRE(report.aggregate.rmse == direct.aggregate.rmse);
    REQUIRE(report.aggregate.cells == direct.aggregate.cells);
    REQUIRE(report.horizons.size() == 3);

    // Batch size must not affect the result.
    auto report2 = evaluate_dataset(net, ds, 7, 5.0);
    REQUIRE(report2.aggregate.mae == report.aggregate.mae);
    REQUIRE(report2.aggregate.rmse == report.aggregate.rmse);

    // Targets come back in raw scale: the first window matches its batch slice.
    auto batch = ds.assemble({0});
    for (std::size_t i = 0; i < 36; ++i) REQUIRE(targets[i] == batch.targets[i]);
}
