#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace adformer {

/// Network hyperparameters. Branch widths all equal hidden_dim, so the fusion
/// projection is (4d)×d with spatial aggregation levels and (3d)×d without.
struct ModelConfig {
    std::size_t hidden_dim = 64;   // d, must be even
    std::size_t depth = 6;         // encoder layers L
    std::size_t input_steps = 6;   // T
    std::size_t horizon = 6;       // H
    std::size_t channels = 1;      // demand channels D
    std::vector<std::size_t> level_counts;  // spatial aggregation sizes, may be empty
    std::size_t temporal_slots = 3;         // P
    double lambda_init = 0.8;
    std::size_t mlp_expansion = 4;
    bool cluster_mean_aggregation = false;  // average instead of sum inside clusters

    void validate() const {
        if (hidden_dim == 0 || hidden_dim % 2 != 0) {
            throw std::invalid_argument("ModelConfig: hidden_dim must be positive and even, got " +
                                        std::to_string(hidden_dim));
        }
        if (depth == 0 || input_steps == 0 || horizon == 0 || channels == 0 ||
            temporal_slots == 0 || mlp_expansion == 0) {
            throw std::invalid_argument("ModelConfig: all sizes must be positive");
        }
        for (std::size_t i = 1; i < level_counts.size(); ++i) {
            if (level_counts[i] >= level_counts[i - 1]) {
                throw std::invalid_argument("ModelConfig: level_counts must strictly decrease");
            }
        }
        for (auto c : level_counts) {
            if (c == 0) throw std::invalid_argument("ModelConfig: zero cluster count");
        }
    }

    std::size_t fusion_width() const {
        return hidden_dim * (level_counts.empty() ? 3 : 4);
    }
};

inline void to_json(nlohmann::json &j, const ModelConfig &c) {
    j = nlohmann::json{{"hidden_dim", c.hidden_dim},
                       {"depth", c.depth},
                       {"input_steps", c.input_steps},
                       {"horizon", c.horizon},
                       {"channels", c.channels},
                       {"level_counts", c.level_counts},
                       {"temporal_slots", c.temporal_slots},
                       {"lambda_init", c.lambda_init},
                       {"mlp_expansion", c.mlp_expansion},
                       {"cluster_mean_aggregation", c.cluster_mean_aggregation}};
}

inline void from_json(const nlohmann::json &j, ModelConfig &c) {
    ModelConfig defaults;
    c.hidden_dim = j.value("hidden_dim", defaults.hidden_dim);
    c.depth = j.value("depth", defaults.depth);
    c.input_steps = j.value("input_steps", defaults.input_steps);
    c.horizon = j.value("horizon", defaults.horizon);
    c.channels = j.value("channels", defaults.channels);
    c.level_counts = j.value("level_counts", defaults.level_counts);
    c.temporal_slots = j.value("temporal_slots", defaults.temporal_slots);
    c.lambda_init = j.value("lambda_init", defaults.lambda_init);
    c.mlp_expansion = j.value("mlp_expansion", defaults.mlp_expansion);
    c.cluster_mean_aggregation =
        j.value("cluster_mean_aggregation", defaults.cluster_mean_aggregation);
}

}  // namespace adformer
