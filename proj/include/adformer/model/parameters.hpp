#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "adformer/cluster/hierarchy.hpp"
#include "adformer/core/array.hpp"
#include "adformer/core/random.hpp"
#include "adformer/model/config.hpp"

namespace adformer {

/// Insertion-ordered collection of named learnable arrays. The order is the
/// canonical enumeration used by the optimizer and the checkpoint format.
template <typename S = double>
class ParameterRegistry {
public:
    ArrayT<S> &add(const std::string &name, ArrayT<S> value) {
        if (index_.count(name)) {
            throw std::invalid_argument("ParameterRegistry: duplicate name '" + name + "'");
        }
        value.set_requires_grad(true);
        index_[name] = items_.size();
        items_.emplace_back(name, std::move(value));
        return items_.back().second;
    }

    ArrayT<S> &at(const std::string &name) {
        auto it = index_.find(name);
        if (it == index_.end()) {
            throw std::invalid_argument("ParameterRegistry: unknown name '" + name + "'");
        }
        return items_[it->second].second;
    }
    const ArrayT<S> &at(const std::string &name) const {
        return const_cast<ParameterRegistry *>(this)->at(name);
    }
    bool contains(const std::string &name) const { return index_.count(name) != 0; }

    std::vector<std::pair<std::string, ArrayT<S>>> &all() { return items_; }
    const std::vector<std::pair<std::string, ArrayT<S>>> &all() const { return items_; }
    std::size_t size() const { return items_.size(); }

    std::size_t total_values() const {
        std::size_t n = 0;
        for (const auto &[name, a] : items_) n += a.numel();
        return n;
    }

    void zero_grad() {
        for (auto &[name, a] : items_) {
            a.ensure_grad();
            a.zero_grad();
        }
    }

private:
    std::vector<std::pair<std::string, ArrayT<S>>> items_;
    std::map<std::string, std::size_t> index_;
};

namespace detail {

/// All draws happen at 64-bit precision in registration order, so the
/// parameter stream is identical for every scalar type under a fixed seed.
template <typename S>
ArrayT<S> he_uniform(Rng &rng, Shape shape, std::size_t fan_in) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    ArrayT<S> a = ArrayT<S>::zeros(std::move(shape));
    for (std::size_t i = 0; i < a.numel(); ++i) {
        a.data()[i] = static_cast<S>(rng.uniform(-limit, limit));
    }
    return a;
}

template <typename S>
ArrayT<S> gaussian(Rng &rng, Shape shape, double stddev) {
    ArrayT<S> a = ArrayT<S>::zeros(std::move(shape));
    for (std::size_t i = 0; i < a.numel(); ++i) {
        a.data()[i] = static_cast<S>(rng.normal(0.0, stddev));
    }
    return a;
}

}  // namespace detail

/// Creates every learnable array in a fixed order. Projection matrices use
/// fan-in-scaled uniform draws, λ half-vectors N(0, 0.1), identity embeddings
/// and aggregation queries N(0, 0.02), separation matrices the masked uniform
/// initializer, biases zero, layer-norm gain 1 / bias 0.
template <typename S = double>
ParameterRegistry<S> init_parameters(const ModelConfig &cfg, std::size_t regions,
                                     const ClusterHierarchy &hierarchy, Rng &rng) {
    cfg.validate();
    if (hierarchy.levels.size() != cfg.level_counts.size()) {
        throw std::invalid_argument("init_parameters: hierarchy has " +
                                    std::to_string(hierarchy.levels.size()) +
                                    " levels but config names " +
                                    std::to_string(cfg.level_counts.size()));
    }
    const std::size_t d = cfg.hidden_dim, half = d / 2;
    const std::size_t hd = cfg.mlp_expansion * d;
    ParameterRegistry<S> reg;

    reg.add("embed.w_raw", detail::he_uniform<S>(rng, {cfg.channels, d}, cfg.channels));
    reg.add("embed.w_tod", detail::he_uniform<S>(rng, {1, d}, 1));
    reg.add("embed.w_dow", detail::he_uniform<S>(rng, {7, d}, 7));
    reg.add("embed.spatial", detail::gaussian<S>(rng, {regions, d}, 0.02));
    for (std::size_t i = 0; i < hierarchy.levels.size(); ++i) {
        const std::size_t m = hierarchy.levels[i].partition.cluster_count;
        if (m != cfg.level_counts[i]) {
            throw std::invalid_argument("init_parameters: level " + std::to_string(i) +
                                        " count mismatch");
        }
        reg.add("embed.agg_spatial." + std::to_string(i), detail::gaussian<S>(rng, {m, d}, 0.02));
    }

    for (std::size_t l = 0; l < cfg.depth; ++l) {
        const std::string p = "enc" + std::to_string(l) + ".";
        reg.add(p + "sda.w_q", detail::he_uniform<S>(rng, {d, d}, d));
        reg.add(p + "sda.w_k", detail::he_uniform<S>(rng, {d, d}, d));
        reg.add(p + "sda.w_v", detail::he_uniform<S>(rng, {d, d}, d));
        reg.add(p + "sda.lambda_q1", detail::gaussian<S>(rng, {half}, 0.1));
        reg.add(p + "sda.lambda_k1", detail::gaussian<S>(rng, {half}, 0.1));
        reg.add(p + "sda.lambda_q2", detail::gaussian<S>(rng, {half}, 0.1));
        reg.add(p + "sda.lambda_k2", detail::gaussian<S>(rng, {half}, 0.1));
        for (std::size_t i = 0; i < hierarchy.levels.size(); ++i) {
            const std::string q = p + "sca" + std::to_string(i) + ".";
            const auto &map = hierarchy.levels[i].cluster_map;
            const std::size_t m = map.dim(0);
            reg.add(q + "w_q", detail::he_uniform<S>(rng, {d, d}, d));
            reg.add(q + "w_k", detail::he_uniform<S>(rng, {d, d}, d));
            reg.add(q + "w_v", detail::he_uniform<S>(rng, {d, d}, d));
            ArrayT<S> sep = ArrayT<S>::zeros({m, regions});
            for (std::size_t e = 0; e < sep.numel(); ++e) {
                // Masked uniform: the draw happens for every cell to keep the
                // random stream independent of the membership pattern.
                sep.data()[e] = static_cast<S>(rng.uniform() * map[e]);
            }
            reg.add(q + "m_sep", std::move(sep));
        }
        reg.add(p + "tsa.w_q", detail::he_uniform<S>(rng, {d, d}, d));
        reg.add(p + "tsa.w_k", detail::he_uniform<S>(rng, {d, d}, d));
        reg.add(p + "tsa.w_v", detail::he_uniform<S>(rng, {d, d}, d));
        reg.add(p + "taa.query",
                detail::gaussian<S>(rng, {regions, cfg.temporal_slots, d}, 0.02));
        reg.add(p + "taa.w_k", detail::he_uniform<S>(rng, {d, d}, d));
        reg.add(p + "taa.w_v", detail::he_uniform<S>(rng, {d, d}, d));
        reg.add(p + "taa.w_sep", detail::he_uniform<S>(rng, {8, cfg.temporal_slots}, 8));
        reg.add(p + "w_o", detail::he_uniform<S>(rng, {cfg.fusion_width(), d}, cfg.fusion_width()));
        reg.add(p + "mlp.w1", detail::he_uniform<S>(rng, {d, hd}, d));
        reg.add(p + "mlp.b1", ArrayT<S>::zeros({hd}));
        reg.add(p + "mlp.w2", detail::he_uniform<S>(rng, {hd, d}, hd));
        reg.add(p + "mlp.b2", ArrayT<S>::zeros({d}));
        reg.add(p + "ln1.gain", ArrayT<S>::full({d}, S(1)));
        reg.add(p + "ln1.bias", ArrayT<S>::zeros({d}));
        reg.add(p + "ln2.gain", ArrayT<S>::full({d}, S(1)));
        reg.add(p + "ln2.bias", ArrayT<S>::zeros({d}));
    }

    const std::size_t flat = cfg.input_steps * d;
    reg.add("head.weight", detail::he_uniform<S>(rng, {flat, cfg.horizon * cfg.channels}, flat));
    reg.add("head.bias", ArrayT<S>::zeros({cfg.horizon * cfg.channels}));
    return reg;
}

}  // namespace adformer
