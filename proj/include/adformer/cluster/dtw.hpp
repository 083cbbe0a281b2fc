#pragma once

#include <cmath>
#include <span>
#include <thread>
#include <vector>

#include "adformer/core/array.hpp"
#include "adformer/data/demand.hpp"

namespace adformer {

/// Classic dynamic-time-warping distance over the full |a|×|b| lattice with
/// |aᵢ − bⱼ| local cost and steps {down, right, diagonal}; no warping window.
/// Rolling single-row storage; the recurrence still covers every lattice cell.
inline double dtw_distance(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("dtw_distance: empty series");
    const std::size_t n = b.size();
    std::vector<double> row(n);
    row[0] = std::fabs(a[0] - b[0]);
    for (std::size_t j = 1; j < n; ++j) row[j] = row[j - 1] + std::fabs(a[0] - b[j]);
    for (std::size_t i = 1; i < a.size(); ++i) {
        double diag = row[0];  // DP(i-1, j-1) as the row advances
        row[0] += std::fabs(a[i] - b[0]);
        for (std::size_t j = 1; j < n; ++j) {
            const double up = row[j], left = row[j - 1];
            const double best = std::min(diag, std::min(up, left));
            diag = up;
            row[j] = best + std::fabs(a[i] - b[j]);
        }
    }
    return row[n - 1];
}

/// Pairwise DTW over the demand channel 0 of a (training) split. The upper
/// triangle is computed and mirrored; pairs are distributed over `threads`
/// workers, each writing disjoint cells, so the result is schedule-independent.
inline Array similarity_matrix(const DemandTensor &train, std::size_t threads = 1) {
    const std::size_t n = train.regions(), t = train.steps(), d = train.channels();
    std::vector<std::vector<double>> series(n, std::vector<double>(t));
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < t; ++i) series[r][i] = train.values[(i * n + r) * d];
    }
    Array dist = Array::zeros({n, n});
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    }
    auto run = [&](std::size_t first, std::size_t stride) {
        for (std::size_t p = first; p < pairs.size(); p += stride) {
            const auto [i, j] = pairs[p];
            const double v = dtw_distance(series[i], series[j]);
            dist.at_flat(i * n + j) = v;
            dist.at_flat(j * n + i) = v;
        }
    };
    if (threads <= 1 || pairs.size() < 2) {
        run(0, 1);
    } else {
        std::vector<std::thread> pool;
        const std::size_t workers = std::min(threads, pairs.size());
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w, workers);
        for (auto &th : pool) th.join();
    }
    return dist;
}

}  // namespace adformer
