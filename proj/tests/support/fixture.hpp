#pragma once

// Synthetic multi-region demand panel used by the training, evaluation, and
// end-to-end tests. Twelve regions fall into three functional groups with
// phase-shifted daily peaks, weekend level shifts, a slowly wandering
// day-to-day amplitude per group (so recent history carries information a
// weekly slot average cannot see), and Poisson count noise.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "adformer/core/random.hpp"
#include "adformer/data/demand.hpp"
#include "adformer/data/timeutil.hpp"

namespace fixture {

struct PanelSpec {
    std::uint64_t seed = 2024;
    std::size_t days = 28;        // four weeks
    std::size_t regions = 12;
    std::size_t groups = 3;
    std::int64_t bin_seconds = 1800;
    double base = 16.0;
    double amplitude = 20.0;  // steep intraday slope: repeating the last bin is costly
    // Day-to-day log-amplitude AR(1): a' = rho * a + sigma * noise.
    double ar_rho = 0.65;
    double ar_sigma = 0.75;
    double ar_scale = 0.25;  // multiplier = exp(ar_scale * a)
    bool poisson = true;     // false: emit the noiseless level directly
};

/// Deterministic panel starting Monday 1970-01-05 00:00 local time.
inline adformer::DemandTensor synthetic_demand(const PanelSpec &spec = {}) {
    adformer::Rng rng(spec.seed);
    const std::size_t per_day = static_cast<std::size_t>(86400 / spec.bin_seconds);
    const std::size_t steps = spec.days * per_day;
    const std::size_t per_group = spec.regions / spec.groups;

    std::vector<double> region_mult(spec.regions);
    for (auto &m : region_mult) m = 0.9 + 0.2 * rng.uniform();

    // One amplitude walk per (group, day).
    std::vector<std::vector<double>> walk(spec.groups, std::vector<double>(spec.days));
    for (std::size_t g = 0; g < spec.groups; ++g) {
        double a = rng.normal();
        for (std::size_t day = 0; day < spec.days; ++day) {
            walk[g][day] = std::exp(spec.ar_scale * a);
            a = spec.ar_rho * a + spec.ar_sigma * rng.normal();
        }
    }

    const double tau = 6.283185307179586;
    adformer::DemandTensor tensor;
    tensor.bin_width_sec = spec.bin_seconds;
    tensor.values = adformer::Array::zeros({steps, spec.regions, 1});
    tensor.timestamps.resize(steps);
    tensor.region_ids.resize(spec.regions);
    for (std::size_t r = 0; r < spec.regions; ++r) {
        char name[8];
        std::snprintf(name, sizeof(name), "R%02zu", r);
        tensor.region_ids[r] = name;
    }

    const std::int64_t start = 4 * 86400;  // Monday
    for (std::size_t i = 0; i < steps; ++i) {
        const std::int64_t ts = start + static_cast<std::int64_t>(i) * spec.bin_seconds;
        tensor.timestamps[i] = ts;
        const std::size_t day = i / per_day;
        const double tod = static_cast<double>(adformer::timeutil::seconds_since_midnight(ts)) / 86400.0;
        const bool weekend = adformer::timeutil::day_of_week(ts) >= 5;
        for (std::size_t r = 0; r < spec.regions; ++r) {
            const std::size_t g = r / per_group;
            const double phase = tau * static_cast<double>(g) / static_cast<double>(spec.groups);
            const double shape = 0.5 * (1.0 + std::sin(tau * tod - phase));
            const double weekend_mult = weekend ? (0.65 + 0.35 * static_cast<double>(g)) : 1.0;
            const double level = (spec.base + spec.amplitude * shape) * walk[g][day] *
                                 weekend_mult * region_mult[r];
            tensor.values.at_flat((i * spec.regions + r)) =
                spec.poisson ? static_cast<double>(rng.poisson(level)) : level;
        }
    }
    return tensor;
}

}  // namespace fixture
