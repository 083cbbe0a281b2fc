#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adformer/core/array.hpp"
#include "adformer/data/demand.hpp"

namespace adformer {

/// Disjoint region grouping: assignment[region] ∈ [0, cluster_count).
struct Partition {
    std::vector<std::size_t> assignment;
    std::size_t cluster_count = 0;

    std::vector<std::vector<std::size_t>> members() const {
        std::vector<std::vector<std::size_t>> out(cluster_count);
        for (std::size_t r = 0; r < assignment.size(); ++r) {
            if (assignment[r] >= cluster_count) {
                throw std::logic_error("Partition: assignment outside cluster range");
            }
            out[assignment[r]].push_back(r);
        }
        for (const auto &c : out) {
            if (c.empty()) throw std::logic_error("Partition: empty cluster");
        }
        return out;
    }
};

/// Average cross-pair distance between two disjoint clusters.
inline double cluster_distance(const std::vector<std::size_t> &ci,
                               const std::vector<std::size_t> &cj, const Array &dist) {
    if (ci.empty() || cj.empty()) throw std::invalid_argument("cluster_distance: empty cluster");
    const std::size_t n = dist.dim(0);
    double sum = 0.0;
    for (auto p : ci) {
        for (auto q : cj) {
            if (p == q) throw std::invalid_argument("cluster_distance: clusters overlap");
            sum += dist[p * n + q];
        }
    }
    return sum / (static_cast<double>(ci.size()) * static_cast<double>(cj.size()));
}

/// Bottom-up average linkage: start from singletons, repeatedly merge the pair
/// at minimal average distance until `target` clusters remain. The running
/// cluster list stays ordered by smallest member, and the scan takes the first
/// minimal pair, which realizes the (lowest first index, lowest second index)
/// tie-break. Cross-pair distance sums are merged additively, so with integer
/// inputs every compared distance is exact.
inline Partition agglomerate(const Array &dist, std::size_t target) {
    const std::size_t n = dist.dim(0);
    if (target < 1 || target > n) {
        throw std::invalid_argument("agglomerate: target " + std::to_string(target) +
                                    " out of range [1, " + std::to_string(n) + "]");
    }
    std::vector<std::vector<std::size_t>> clusters(n);
    for (std::size_t i = 0; i < n; ++i) clusters[i] = {i};
    // sums[i][j] = Σ_{p∈i, q∈j} dist(p,q) over the current cluster list.
    std::vector<std::vector<double>> sums(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) sums[i][j] = dist[i * n + j];
    }
    while (clusters.size() > target) {
        const std::size_t m = clusters.size();
        std::size_t bi = 0, bj = 1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = i + 1; j < m; ++j) {
                const double d = sums[i][j] / (static_cast<double>(clusters[i].size()) *
                                               static_cast<double>(clusters[j].size()));
                if (d < best) {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        }
        // Merge bj into bi (bi keeps the smaller leading member, preserving order).
        auto &dst = clusters[bi];
        dst.insert(dst.end(), clusters[bj].begin(), clusters[bj].end());
        std::sort(dst.begin(), dst.end());
        for (std::size_t r = 0; r < m; ++r) {
            if (r == bi || r == bj) continue;
            sums[bi][r] += sums[bj][r];
            sums[r][bi] += sums[r][bj];
        }
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
        sums.erase(sums.begin() + static_cast<std::ptrdiff_t>(bj));
        for (auto &row : sums) row.erase(row.begin() + static_cast<std::ptrdiff_t>(bj));
    }
    Partition p;
    p.assignment.assign(n, 0);
    p.cluster_count = clusters.size();
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        for (auto r : clusters[c]) p.assignment[r] = c;
    }
    return p;
}

/// Caps cluster sizes: while some cluster exceeds the threshold, evict from
/// the lowest-index oversized cluster the member farthest (by average
/// distance) from its own cluster and move it to the nearest other cluster
/// that still has room. All ties resolve to the lowest index.
inline Partition balance(const Partition &p, const Array &dist, std::size_t threshold) {
    if (threshold < 1) throw std::invalid_argument("balance: threshold must be >= 1");
    const std::size_t n = p.assignment.size();
    if (p.cluster_count * threshold < n) {
        throw std::runtime_error("balance: infeasible, " + std::to_string(p.cluster_count) +
                                 " clusters of at most " + std::to_string(threshold) +
                                 " cannot hold " + std::to_string(n) + " regions");
    }
    auto clusters = p.members();
    auto avg_to = [&](std::size_t region, const std::vector<std::size_t> &members) {
        double sum = 0.0;
        std::size_t cnt = 0;
        for (auto q : members) {
            if (q == region) continue;
            sum += dist[region * n + q];
            ++cnt;
        }
        return cnt == 0 ? 0.0 : sum / static_cast<double>(cnt);
    };
    for (;;) {
        std::size_t src = clusters.size();
        for (std::size_t c = 0; c < clusters.size(); ++c) {
            if (clusters[c].size() > threshold) {
                src = c;
                break;
            }
        }
        if (src == clusters.size()) break;
        auto &members = clusters[src];
        std::size_t evict = members[0];
        double worst = -1.0;
        for (auto r : members) {
            const double d = avg_to(r, members);
            if (d > worst) {  // strict: ties keep the earliest (lowest region index)
                worst = d;
                evict = r;
            }
        }
        std::size_t dest = clusters.size();
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < clusters.size(); ++c) {
            if (c == src || clusters[c].size() >= threshold) continue;
            const double d = cluster_distance({evict}, clusters[c], dist);
            if (d < best) {
                best = d;
                dest = c;
            }
        }
        if (dest == clusters.size()) {
            throw std::logic_error("balance: no destination despite feasibility check");
        }
        members.erase(std::find(members.begin(), members.end(), evict));
        clusters[dest].insert(
            std::upper_bound(clusters[dest].begin(), clusters[dest].end(), evict), evict);
    }
    Partition out;
    out.assignment.assign(n, 0);
    out.cluster_count = clusters.size();
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        for (auto r : clusters[c]) out.assignment[r] = c;
    }
    return out;
}

struct ClusterLevel {
    Partition partition;
    Array cluster_map;  // binary (M, N); row m marks the members of cluster m
    std::size_t threshold = 0;
};

struct ClusterHierarchy {
    std::vector<ClusterLevel> levels;
    std::vector<std::size_t> level_counts;
    std::string fingerprint;  // content hash of the source train split
};

inline Array partition_cluster_map(const Partition &p) {
    Array map = Array::zeros({p.cluster_count, p.assignment.size()});
    for (std::size_t r = 0; r < p.assignment.size(); ++r) {
        map.at_flat(p.assignment[r] * p.assignment.size() + r) = 1.0;
    }
    return map;
}

/// FNV-1a over the split's metadata and raw payload bytes.
inline std::string train_fingerprint(const DemandTensor &train) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](const void *data, std::size_t len) {
        const auto *bytes = static_cast<const unsigned char *>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    };
    const std::uint64_t dims[3] = {train.steps(), train.regions(), train.channels()};
    mix(dims, sizeof dims);
    mix(&train.bin_width_sec, sizeof train.bin_width_sec);
    for (const auto &id : train.region_ids) mix(id.data(), id.size() + 1);
    if (!train.timestamps.empty()) mix(&train.timestamps[0], sizeof(std::int64_t));
    mix(train.values.data(), train.values.numel() * sizeof(double));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Default size cap ⌈factor·N/M⌉ with the stock factor 1.5.
inline std::size_t balance_threshold(std::size_t n, std::size_t m, double factor = 1.5) {
    const double raw = factor * static_cast<double>(n) / static_cast<double>(m);
    auto t = static_cast<std::size_t>(std::ceil(raw - 1e-12));
    return std::max<std::size_t>(t, 1);
}

/// Builds every level independently: agglomerate to the requested count, then
/// balance under the ⌈factor·N/M⌉ cap.
inline ClusterHierarchy build_hierarchy(const Array &dist, const std::vector<std::size_t> &counts,
                                        double balance_factor = 1.5) {
    const std::size_t n = dist.dim(0);
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] == 0 || counts[i] >= n) {
            throw std::invalid_argument("build_hierarchy: level count " +
                                        std::to_string(counts[i]) + " must lie in [1, " +
                                        std::to_string(n) + ")");
        }
        if (i > 0 && counts[i] >= counts[i - 1]) {
            throw std::invalid_argument("build_hierarchy: level counts must strictly decrease");
        }
    }
    ClusterHierarchy h;
    h.level_counts = counts;
    for (auto m : counts) {
        ClusterLevel level;
        level.threshold = balance_threshold(n, m, balance_factor);
        level.partition = balance(agglomerate(dist, m), dist, level.threshold);
        level.cluster_map = partition_cluster_map(level.partition);
        h.levels.push_back(std::move(level));
    }
    return h;
}

inline nlohmann::json hierarchy_json(const ClusterHierarchy &h) {
    nlohmann::json doc{
        {"schema", "hierarchy"},
        {"level_counts", h.level_counts},
        {"fingerprint", h.fingerprint},
    };
    doc["levels"] = nlohmann::json::array();
    for (const auto &level : h.levels) {
        doc["levels"].push_back({{"cluster_count", level.partition.cluster_count},
                                 {"threshold", level.threshold},
                                 {"assignment", level.partition.assignment}});
    }
    return doc;
}

inline ClusterHierarchy hierarchy_from_json(const nlohmann::json &doc,
                                            const std::string &context) {
    if (doc.value("schema", "") != "hierarchy") {
        throw std::runtime_error("hierarchy: " + context + " is not a hierarchy document");
    }
    ClusterHierarchy h;
    h.level_counts = doc.at("level_counts").get<std::vector<std::size_t>>();
    h.fingerprint = doc.value("fingerprint", "");
    for (const auto &jl : doc.at("levels")) {
        ClusterLevel level;
        level.partition.cluster_count = jl.at("cluster_count");
        level.partition.assignment = jl.at("assignment").get<std::vector<std::size_t>>();
        level.threshold = jl.at("threshold");
        level.partition.members();  // validates non-empty disjoint clusters
        level.cluster_map = partition_cluster_map(level.partition);
        h.levels.push_back(std::move(level));
    }
    if (h.levels.size() != h.level_counts.size()) {
        throw std::runtime_error("hierarchy: level list does not match level_counts in " +
                                 context);
    }
    return h;
}

inline void save_hierarchy(const std::string &path, const ClusterHierarchy &h) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("hierarchy: cannot open '" + path + "' for writing");
    out << hierarchy_json(h).dump(2) << "\n";
    if (!out) throw std::runtime_error("hierarchy: write failed for '" + path + "'");
}

inline ClusterHierarchy load_hierarchy(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("hierarchy: cannot open '" + path + "'");
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, true, true);
    return hierarchy_from_json(doc, "'" + path + "'");
}

}  // namespace adformer
