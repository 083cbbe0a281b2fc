#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "adformer/data/demand.hpp"
#include "adformer/data/timeutil.hpp"

namespace adformer {

/// Every horizon step repeats the last observed input step's raw demand.
inline Array persistence_baseline(const ForecastBatch &batch) {
    const std::size_t b = batch.inputs_raw.dim(0), t = batch.inputs_raw.dim(1);
    const std::size_t n = batch.inputs_raw.dim(2), d = batch.inputs_raw.dim(3);
    const std::size_t h = batch.targets.dim(1);
    Array out = Array::zeros({b, h, n, d});
    for (std::size_t bi = 0; bi < b; ++bi) {
        const double *last = batch.inputs_raw.data() + ((bi * t + (t - 1)) * n) * d;
        for (std::size_t hi = 0; hi < h; ++hi) {
            std::copy_n(last, n * d, out.data() + ((bi * h + hi) * n) * d);
        }
    }
    return out;
}

/// Train-split mean demand per (region, day-of-week, time-of-day) slot.
/// Slots never observed in training fall back to the region's overall mean.
class HistoricalAverage {
public:
    explicit HistoricalAverage(const DemandTensor &train)
        : bin_(train.bin_width_sec), regions_(train.regions()), channels_(train.channels()) {
        const std::size_t steps = train.steps();
        if (static_cast<std::int64_t>(steps) * bin_ < 7 * 86400) {
            throw std::invalid_argument(
                "historical_average_baseline: train split must cover at least one week");
        }
        slots_ = static_cast<std::size_t>(86400 / bin_);
        sums_.assign(regions_ * 7 * slots_ * channels_, 0.0);
        counts_.assign(regions_ * 7 * slots_, 0);
        region_sums_.assign(regions_ * channels_, 0.0);
        for (std::size_t i = 0; i < steps; ++i) {
            const std::int64_t ts = train.timestamps[i];
            const auto dow = static_cast<std::size_t>(timeutil::day_of_week(ts));
            const auto slot =
                static_cast<std::size_t>(timeutil::seconds_since_midnight(ts) / bin_);
            for (std::size_t r = 0; r < regions_; ++r) {
                const std::size_t key = (r * 7 + dow) * slots_ + slot;
                ++counts_[key];
                for (std::size_t c = 0; c < channels_; ++c) {
                    const double v = train.values[(i * regions_ + r) * channels_ + c];
                    sums_[key * channels_ + c] += v;
                    region_sums_[r * channels_ + c] += v;
                }
            }
        }
        steps_ = steps;
    }

    double predict(std::size_t region, std::size_t channel, std::int64_t timestamp) const {
        const auto dow = static_cast<std::size_t>(timeutil::day_of_week(timestamp));
        const auto slot =
            static_cast<std::size_t>(timeutil::seconds_since_midnight(timestamp) / bin_);
        const std::size_t key = (region * 7 + dow) * slots_ + slot;
        if (counts_[key] > 0) {
            return sums_[key * channels_ + channel] / static_cast<double>(counts_[key]);
        }
        return region_sums_[region * channels_ + channel] / static_cast<double>(steps_);
    }

    Array predict_batch(const ForecastBatch &batch) const {
        const std::size_t b = batch.targets.dim(0), h = batch.targets.dim(1);
        const std::size_t n = batch.targets.dim(2), d = batch.targets.dim(3);
        if (n != regions_ || d != channels_) {
            throw std::invalid_argument("historical_average_baseline: batch shape mismatch");
        }
        Array out = Array::zeros({b, h, n, d});
        for (std::size_t bi = 0; bi < b; ++bi) {
            for (std::size_t hi = 0; hi < h; ++hi) {
                const std::int64_t ts =
                    batch.target_start[bi] + static_cast<std::int64_t>(hi) * bin_;
                for (std::size_t r = 0; r < n; ++r) {
                    for (std::size_t c = 0; c < d; ++c) {
                        out.at_flat(((bi * h + hi) * n + r) * d + c) = predict(r, c, ts);
                    }
                }
            }
        }
        return out;
    }

private:
    std::int64_t bin_;
    std::size_t regions_, channels_, slots_ = 0, steps_ = 0;
    std::vector<double> sums_, region_sums_;
    std::vector<std::size_t> counts_;
};

inline Array historical_average_baseline(const DemandTensor &train, const ForecastBatch &batch) {
    return HistoricalAverage(train).predict_batch(batch);
}

}  // namespace adformer
