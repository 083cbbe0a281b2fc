#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "adformer/core/array.hpp"
#include "adformer/data/timeutil.hpp"
#include "adformer/data/trips.hpp"

namespace adformer {

/// Binned demand over (time × region × feature) plus the bin timeline and the
/// stable (lexicographic) region order.
struct DemandTensor {
    Array values;                         // (T_total, N, D), raw counts
    std::vector<std::int64_t> timestamps; // bin start instants, local epoch seconds
    std::vector<std::string> region_ids;  // sorted, unique
    std::int64_t bin_width_sec = 1800;

    std::size_t steps() const { return timestamps.size(); }
    std::size_t regions() const { return region_ids.size(); }
    std::size_t channels() const { return values.dim(2); }
};

/// Bins trip records on a grid anchored at local midnight (bin width must
/// divide 24 h, so flooring to a multiple of the width lands on the grid).
/// Cells accumulate record counts; intervals are half-open [start, start+w).
inline DemandTensor ingest_trips(const std::vector<TripRecord> &records,
                                 std::int64_t bin_width_sec) {
    if (records.empty()) throw std::runtime_error("ingest_trips: no records");
    if (bin_width_sec <= 0 || 86400 % bin_width_sec != 0) {
        throw std::invalid_argument("ingest_trips: bin width " + std::to_string(bin_width_sec) +
                                    "s must divide 24h evenly");
    }
    std::vector<std::string> regions;
    regions.reserve(records.size());
    for (const auto &r : records) regions.push_back(r.region_id);
    std::sort(regions.begin(), regions.end());
    regions.erase(std::unique(regions.begin(), regions.end()), regions.end());
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < regions.size(); ++i) index[regions[i]] = i;

    std::int64_t lo = records[0].timestamp, hi = records[0].timestamp;
    for (const auto &r : records) {
        lo = std::min(lo, r.timestamp);
        hi = std::max(hi, r.timestamp);
    }
    const std::int64_t first_bin = timeutil::floor_div(lo, bin_width_sec);
    const std::int64_t last_bin = timeutil::floor_div(hi, bin_width_sec);
    const std::size_t total = static_cast<std::size_t>(last_bin - first_bin + 1);
    const std::size_t n = regions.size();

    DemandTensor out;
    out.values = Array::zeros({total, n, 1});
    out.timestamps.resize(total);
    for (std::size_t t = 0; t < total; ++t) {
        out.timestamps[t] = (first_bin + static_cast<std::int64_t>(t)) * bin_width_sec;
    }
    out.region_ids = std::move(regions);
    out.bin_width_sec = bin_width_sec;
    for (const auto &r : records) {
        const std::size_t t =
            static_cast<std::size_t>(timeutil::floor_div(r.timestamp, bin_width_sec) - first_bin);
        out.values.at_flat((t * n + index[r.region_id])) += r.count;
    }
    return out;
}

/// Per-step clock features replicated across regions: time_of_day (T,N,1) in
/// [0,1) and one-hot day_of_week (T,N,7), Monday = index 0.
struct TimeFeatures {
    Array time_of_day;
    Array day_of_week;
};

inline TimeFeatures build_time_features(const std::vector<std::int64_t> &timestamps,
                                        std::size_t n) {
    const std::size_t t = timestamps.size();
    TimeFeatures tf;
    tf.time_of_day = Array::zeros({t, n, 1});
    tf.day_of_week = Array::zeros({t, n, 7});
    for (std::size_t i = 0; i < t; ++i) {
        const double tod =
            static_cast<double>(timeutil::seconds_since_midnight(timestamps[i])) / 86400.0;
        const int dow = timeutil::day_of_week(timestamps[i]);
        for (std::size_t r = 0; r < n; ++r) {
            tf.time_of_day.at_flat(i * n + r) = tod;
            tf.day_of_week.at_flat((i * n + r) * 7 + static_cast<std::size_t>(dow)) = 1.0;
        }
    }
    return tf;
}

namespace detail {

inline DemandTensor slice_steps(const DemandTensor &t, std::size_t start, std::size_t len) {
    DemandTensor out;
    const std::size_t n = t.regions(), d = t.channels();
    out.values = Array::zeros({len, n, d});
    std::copy_n(t.values.data() + start * n * d, len * n * d, out.values.data());
    out.timestamps.assign(t.timestamps.begin() + static_cast<std::ptrdiff_t>(start),
                          t.timestamps.begin() + static_cast<std::ptrdiff_t>(start + len));
    out.region_ids = t.region_ids;
    out.bin_width_sec = t.bin_width_sec;
    return out;
}

}  // namespace detail

struct SplitTensors {
    DemandTensor train, val, test;
};

/// Contiguous 7:1:2 split: ⌊0.7·T⌋ / ⌊0.1·T⌋ / remainder, chronological order.
inline SplitTensors chronological_split(const DemandTensor &tensor) {
    const std::size_t total = tensor.steps();
    if (total < 10) {
        throw std::runtime_error("chronological_split: need at least 10 steps, have " +
                                 std::to_string(total));
    }
    const std::size_t ntrain = total * 7 / 10;  // ⌊0.7·T⌋
    const std::size_t nval = total / 10;        // ⌊0.1·T⌋
    SplitTensors s;
    s.train = detail::slice_steps(tensor, 0, ntrain);
    s.val = detail::slice_steps(tensor, ntrain, nval);
    s.test = detail::slice_steps(tensor, ntrain + nval, total - ntrain - nval);
    return s;
}

/// Per-channel z-score fitted on the training split; stddev floored at 1e-8.
struct Normalizer {
    std::vector<double> mean, stddev;

    Array normalize(const Array &x) const {
        const std::size_t d = mean.size();
        Array out = x.clone();
        for (std::size_t i = 0; i < out.numel(); ++i) {
            const std::size_t c = i % d;
            out.data()[i] = (out.data()[i] - mean[c]) / stddev[c];
        }
        return out;
    }

    Array denormalize(const Array &x) const {
        const std::size_t d = mean.size();
        Array out = x.clone();
        for (std::size_t i = 0; i < out.numel(); ++i) {
            const std::size_t c = i % d;
            out.data()[i] = out.data()[i] * stddev[c] + mean[c];
        }
        return out;
    }
};

inline Normalizer fit_normalizer(const DemandTensor &train) {
    const std::size_t d = train.channels();
    Normalizer nz;
    nz.mean.assign(d, 0.0);
    nz.stddev.assign(d, 0.0);
    const std::size_t count = train.values.numel() / d;
    for (std::size_t i = 0; i < train.values.numel(); ++i) nz.mean[i % d] += train.values[i];
    for (auto &m : nz.mean) m /= static_cast<double>(count);
    for (std::size_t i = 0; i < train.values.numel(); ++i) {
        const double dv = train.values[i] - nz.mean[i % d];
        nz.stddev[i % d] += dv * dv;
    }
    for (auto &s : nz.stddev) s = std::max(std::sqrt(s / static_cast<double>(count)), 1e-8);
    return nz;
}

/// One assembled training/evaluation batch. Inputs are normalized; the raw
/// copies feed the persistence baseline, targets stay in raw scale.
struct ForecastBatch {
    Array inputs;      // (B,T,N,D) normalized
    Array inputs_raw;  // (B,T,N,D) raw
    Array input_tod;   // (B,T,N,1)
    Array input_dow;   // (B,T,N,7)
    Array targets;     // (B,H,N,D) raw
    Array target_tod;  // (B,H,N,1)
    Array target_dow;  // (B,H,N,7)
    std::vector<std::int64_t> target_start;  // first target bin per sample
};

/// Stride-1 sliding windows over one split: sample i covers input steps
/// [i, i+T) and target steps [i+T, i+T+H). Batches are gathered on demand.
class WindowDataset {
public:
    WindowDataset(DemandTensor split, Normalizer normalizer, std::size_t input_steps,
                  std::size_t horizon)
        : split_(std::move(split)), normalizer_(std::move(normalizer)), t_(input_steps),
          h_(horizon) {
        if (t_ == 0 || h_ == 0) throw std::invalid_argument("make_windows: T and H must be positive");
        if (split_.steps() < t_ + h_) {
            throw std::runtime_error("make_windows: split length " + std::to_string(split_.steps()) +
                                     " < T+H = " + std::to_string(t_ + h_));
        }
        normalized_ = normalizer_.normalize(split_.values);
    }

    std::size_t sample_count() const { return split_.steps() - t_ - h_ + 1; }
    std::size_t input_steps() const { return t_; }
    std::size_t horizon() const { return h_; }
    const DemandTensor &split() const { return split_; }
    const Normalizer &normalizer() const { return normalizer_; }

    ForecastBatch assemble(const std::vector<std::size_t> &samples) const {
        const std::size_t b = samples.size();
        const std::size_t n = split_.regions(), d = split_.channels();
        ForecastBatch out;
        out.inputs = Array::zeros({b, t_, n, d});
        out.inputs_raw = Array::zeros({b, t_, n, d});
        out.input_tod = Array::zeros({b, t_, n, 1});
        out.input_dow = Array::zeros({b, t_, n, 7});
        out.targets = Array::zeros({b, h_, n, d});
        out.target_tod = Array::zeros({b, h_, n, 1});
        out.target_dow = Array::zeros({b, h_, n, 7});
        out.target_start.resize(b);
        const std::size_t in_cells = t_ * n * d, tg_cells = h_ * n * d;
        for (std::size_t s = 0; s < b; ++s) {
            const std::size_t start = samples[s];
            if (start >= sample_count()) {
                throw std::invalid_argument("assemble: sample index out of range");
            }
            std::copy_n(normalized_.data() + start * n * d, in_cells,
                        out.inputs.data() + s * in_cells);
            std::copy_n(split_.values.data() + start * n * d, in_cells,
                        out.inputs_raw.data() + s * in_cells);
            std::copy_n(split_.values.data() + (start + t_) * n * d, tg_cells,
                        out.targets.data() + s * tg_cells);
            fill_time(out.input_tod, out.input_dow, s, start, t_);
            fill_time(out.target_tod, out.target_dow, s, start + t_, h_);
            out.target_start[s] = split_.timestamps[start + t_];
        }
        return out;
    }

private:
    void fill_time(Array &tod, Array &dow, std::size_t sample, std::size_t first,
                   std::size_t steps) const {
        const std::size_t n = split_.regions();
        for (std::size_t i = 0; i < steps; ++i) {
            const std::int64_t ts = split_.timestamps[first + i];
            const double tv =
                static_cast<double>(timeutil::seconds_since_midnight(ts)) / 86400.0;
            const int dv = timeutil::day_of_week(ts);
            for (std::size_t r = 0; r < n; ++r) {
                tod.at_flat((sample * steps + i) * n + r) = tv;
                dow.at_flat(((sample * steps + i) * n + r) * 7 + static_cast<std::size_t>(dv)) = 1.0;
            }
        }
    }

    DemandTensor split_;
    Normalizer normalizer_;
    std::size_t t_, h_;
    Array normalized_;
};

inline WindowDataset make_windows(const DemandTensor &split, const Normalizer &normalizer,
                                  std::size_t input_steps, std::size_t horizon) {
    return WindowDataset(split, normalizer, input_steps, horizon);
}

}  // namespace adformer
