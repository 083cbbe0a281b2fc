#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adformer/core/array.hpp"

namespace adformer {

/// One metric triple over a set of qualifying cells. When no cell qualifies
/// the values are meaningless and `defined` is false; serializers must emit
/// explicit nulls rather than numbers in that case.
struct MetricValues {
    double mae = 0.0;
    double rmse = 0.0;
    double mape = 0.0;  // percent
    std::size_t cells = 0;
    bool defined = false;
};

struct MetricReport {
    double threshold = 5.0;
    std::size_t total_cells = 0;
    std::size_t masked_cells = 0;  // excluded because target < threshold
    MetricValues aggregate;
    // Per-horizon breakdown (1-based step), present for rank-4 (B,H,N,D) input.
    std::vector<std::pair<std::size_t, MetricValues>> horizons;
};

namespace detail {

struct MetricAccum {
    double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
    std::size_t cells = 0;

    void add(double pred, double target) {
        const double e = pred - target;
        abs_sum += std::fabs(e);
        sq_sum += e * e;
        pct_sum += std::fabs(e) / target;
        ++cells;
    }

    MetricValues finish() const {
        MetricValues v;
        v.cells = cells;
        v.defined = cells > 0;
        if (v.defined) {
            const double n = static_cast<double>(cells);
            v.mae = abs_sum / n;
            v.rmse = std::sqrt(sq_sum / n);
            v.mape = pct_sum / n * 100.0;
        }
        return v;
    }
};

}  // namespace detail

/// MAE / RMSE / MAPE(%) over cells whose target is at or above the threshold.
/// Rank-4 (B,H,N,D) inputs additionally get a per-horizon breakdown.
inline MetricReport thresholded_metrics(const Array &pred, const Array &target,
                                        double threshold = 5.0) {
    if (pred.shape() != target.shape()) {
        throw std::invalid_argument("thresholded_metrics: shape mismatch " +
                                    shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
    }
    MetricReport report;
    report.threshold = threshold;
    report.total_cells = target.numel();

    detail::MetricAccum aggregate;
    std::vector<detail::MetricAccum> per_h;
    std::size_t horizon_stride = 0;
    if (pred.rank() == 4) {
        per_h.resize(pred.dim(1));
        horizon_stride = pred.dim(2) * pred.dim(3);
    }
    for (std::size_t i = 0; i < target.numel(); ++i) {
        if (target[i] < threshold) continue;
        aggregate.add(pred[i], target[i]);
        if (!per_h.empty()) {
            per_h[(i / horizon_stride) % per_h.size()].add(pred[i], target[i]);
        }
    }
    report.aggregate = aggregate.finish();
    report.masked_cells = report.total_cells - report.aggregate.cells;
    for (std::size_t h = 0; h < per_h.size(); ++h) {
        report.horizons.emplace_back(h + 1, per_h[h].finish());
    }
    return report;
}

inline nlohmann::json metric_values_json(const MetricValues &v) {
    nlohmann::json j{{"cells", v.cells}, {"defined", v.defined}};
    if (v.defined) {
        j["mae"] = v.mae;
        j["rmse"] = v.rmse;
        j["mape_pct"] = v.mape;
    } else {
        j["mae"] = nullptr;
        j["rmse"] = nullptr;
        j["mape_pct"] = nullptr;
    }
    return j;
}

inline nlohmann::json report_json(const MetricReport &r) {
    nlohmann::json j{{"threshold", r.threshold},
                     {"total_cells", r.total_cells},
                     {"masked_cells", r.masked_cells},
                     {"aggregate", metric_values_json(r.aggregate)}};
    j["horizons"] = nlohmann::json::array();
    for (const auto &[step, values] : r.horizons) {
        auto h = metric_values_json(values);
        h["step"] = step;
        j["horizons"].push_back(std::move(h));
    }
    return j;
}

/// Aligned plain-text table over named reports: one row per (source, horizon)
/// plus an "all" row per source.
inline std::string format_report_table(
    const std::vector<std::pair<std::string, MetricReport>> &reports) {
    std::string out;
    char line[160];
    double threshold = reports.empty() ? 5.0 : reports.front().second.threshold;
    std::snprintf(line, sizeof(line), "threshold %.6g (cells below are excluded)\n", threshold);
    out += line;
    std::snprintf(line, sizeof(line), "%-20s %-5s %12s %12s %12s %10s\n", "source", "h", "mae",
                  "rmse", "mape_pct", "cells");
    out += line;
    auto emit = [&](const std::string &name, const std::string &h, const MetricValues &v) {
        if (v.defined) {
            std::snprintf(line, sizeof(line), "%-20s %-5s %12.6f %12.6f %12.6f %10zu\n",
                          name.c_str(), h.c_str(), v.mae, v.rmse, v.mape, v.cells);
        } else {
            std::snprintf(line, sizeof(line), "%-20s %-5s %12s %12s %12s %10zu\n", name.c_str(),
                          h.c_str(), "n/a", "n/a", "n/a", v.cells);
        }
        out += line;
    };
    for (const auto &[name, report] : reports) {
        for (const auto &[step, values] : report.horizons) {
            emit(name, std::to_string(step), values);
        }
        emit(name, "all", report.aggregate);
    }
    return out;
}

}  // namespace adformer
