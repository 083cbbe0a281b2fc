#pragma once

#include <cmath>
#include <string>
#include <type_traits>
#include <vector>

#include "adformer/cluster/hierarchy.hpp"
#include "adformer/core/ops.hpp"
#include "adformer/data/demand.hpp"
#include "adformer/model/config.hpp"
#include "adformer/model/parameters.hpp"

namespace adformer {

template <typename S>
ArrayT<S> cast_array(const Array &src) {
    if constexpr (std::is_same_v<S, double>) {
        return src;
    } else {
        ArrayT<S> out = ArrayT<S>::zeros(src.shape());
        for (std::size_t i = 0; i < src.numel(); ++i) out.data()[i] = static_cast<S>(src[i]);
        return out;
    }
}

template <typename S>
Array cast_to_double(const ArrayT<S> &src) {
    if constexpr (std::is_same_v<S, double>) {
        return src;
    } else {
        Array out = Array::zeros(src.shape());
        for (std::size_t i = 0; i < src.numel(); ++i) out.data()[i] = static_cast<double>(src[i]);
        return out;
    }
}

/// Normalized model inputs plus their clock features, all (B,T,N,·).
template <typename S = double>
struct NetInputs {
    ArrayT<S> x;    // (B,T,N,D)
    ArrayT<S> tod;  // (B,T,N,1)
    ArrayT<S> dow;  // (B,T,N,7)
};

template <typename S = double>
NetInputs<S> make_net_inputs(const ForecastBatch &batch) {
    return {cast_array<S>(batch.inputs), cast_array<S>(batch.input_tod),
            cast_array<S>(batch.input_dow)};
}

/// Optional capture of every attention distribution produced in a pass.
template <typename S = double>
struct BranchTrace {
    std::vector<std::pair<std::string, ArrayT<S>>> softmaxes;
};

/// λ = exp(λ_q1·λ_k1) − exp(λ_q2·λ_k2) + λ_init, dot products over the
/// half-width vectors; the exponent is range-clamped against 64-bit overflow.
template <typename S>
ArrayT<S> lambda_value(const ArrayT<S> &lq1, const ArrayT<S> &lk1, const ArrayT<S> &lq2,
                       const ArrayT<S> &lk2, double lambda_init) {
    auto e1 = adformer::exp(clamp(sum_all(mul(lq1, lk1)), S(-700), S(700)));
    auto e2 = adformer::exp(clamp(sum_all(mul(lq2, lk2)), S(-700), S(700)));
    return add_scalar(sub(e1, e2), S(lambda_init));
}

/// PE[pos][2i] = sin(pos/10000^(2i/d)), PE[pos][2i+1] = cos(pos/10000^(2i/d)).
template <typename S>
ArrayT<S> sinusoidal_encoding(std::size_t steps, std::size_t width) {
    if (width % 2 != 0) throw std::invalid_argument("sinusoidal_encoding: width must be even");
    ArrayT<S> pe = ArrayT<S>::zeros({steps, width});
    for (std::size_t pos = 0; pos < steps; ++pos) {
        for (std::size_t i = 0; i < width / 2; ++i) {
            const double angle = static_cast<double>(pos) /
                                 std::pow(10000.0, 2.0 * static_cast<double>(i) /
                                                       static_cast<double>(width));
            pe.data()[pos * width + 2 * i] = static_cast<S>(std::sin(angle));
            pe.data()[pos * width + 2 * i + 1] = static_cast<S>(std::cos(angle));
        }
    }
    return pe;
}

/// The ADFormer network. Parameters live in an external registry; the model
/// object holds only the configuration and the (constant) cluster maps, so a
/// fresh forward pass always reads the current parameter values.
template <typename S = double>
class AdformerNet {
public:
    AdformerNet(const ModelConfig &cfg, std::size_t regions, const ClusterHierarchy &hierarchy,
                ParameterRegistry<S> &params)
        : cfg_(cfg), n_(regions), params_(params) {
        cfg_.validate();
        if (hierarchy.levels.size() != cfg_.level_counts.size()) {
            throw std::invalid_argument("AdformerNet: hierarchy levels do not match config");
        }
        pos_ = sinusoidal_encoding<S>(cfg_.input_steps, cfg_.hidden_dim)
                   .reshaped({1, cfg_.input_steps, 1, cfg_.hidden_dim});
        for (const auto &level : hierarchy.levels) {
            const auto &map = level.cluster_map;
            maps_.push_back(cast_array<S>(map));
            if (cfg_.cluster_mean_aggregation) {
                const std::size_t m = map.dim(0), n = map.dim(1);
                ArrayT<S> weighted = ArrayT<S>::zeros({m, n});
                for (std::size_t row = 0; row < m; ++row) {
                    double size = 0.0;
                    for (std::size_t c = 0; c < n; ++c) size += map[row * n + c];
                    for (std::size_t c = 0; c < n; ++c) {
                        weighted.data()[row * n + c] = static_cast<S>(map[row * n + c] / size);
                    }
                }
                agg_maps_.push_back(std::move(weighted));
            } else {
                agg_maps_.push_back(maps_.back());
            }
        }
    }

    const ModelConfig &config() const { return cfg_; }
    std::size_t regions() const { return n_; }
    std::size_t levels() const { return maps_.size(); }
    ParameterRegistry<S> &parameters() { return params_; }

    /// X_emb = X·W_raw + T_d·W_Td + T_w·W_Tw, plus positional and spatial
    /// identity terms broadcast over (B, N) and (B, T) respectively.
    ArrayT<S> embed(const ArrayT<S> &x, const ArrayT<S> &tod, const ArrayT<S> &dow,
                    const ArrayT<S> &spatial) {
        auto e = add(add(matmul(x, params_.at("embed.w_raw")),
                         matmul(tod, params_.at("embed.w_tod"))),
                     matmul(dow, params_.at("embed.w_dow")));
        const std::size_t rows = x.dim(2);
        return add(add(e, pos_), spatial.reshaped({1, 1, rows, cfg_.hidden_dim}));
    }

    ArrayT<S> embed_regions(const NetInputs<S> &in) {
        return embed(in.x, in.tod, in.dow, params_.at("embed.spatial"));
    }

    /// Aggregates the (normalized) region stream through one cluster map and
    /// embeds it with the level's own spatial identities; the clock features
    /// of a cluster are the shared per-step values.
    ArrayT<S> aggregate_stream(const NetInputs<S> &in, std::size_t level) {
        auto demand = matmul(agg_maps_.at(level), in.x);  // (B,T,M,D)
        const std::size_t m = maps_[level].dim(0);
        return embed(demand, replicate_rows(in.tod, m), replicate_rows(in.dow, m),
                     params_.at("embed.agg_spatial." + std::to_string(level)));
    }

    std::vector<ArrayT<S>> embed_aggregates(const NetInputs<S> &in) {
        std::vector<ArrayT<S>> out;
        out.reserve(maps_.size());
        for (std::size_t i = 0; i < maps_.size(); ++i) out.push_back(aggregate_stream(in, i));
        return out;
    }

    ArrayT<S> lambda_at(std::size_t layer) {
        const std::string p = "enc" + std::to_string(layer) + ".sda.";
        return lambda_value(params_.at(p + "lambda_q1"), params_.at(p + "lambda_k1"),
                            params_.at(p + "lambda_q2"), params_.at(p + "lambda_k2"),
                            cfg_.lambda_init);
    }

    /// Difference of two half-width attention maps applied to the full-width
    /// values: (softmax(Q₁K₁ᵀ/√(d/2)) − λ·softmax(Q₂K₂ᵀ/√(d/2)))·V over regions.
    ArrayT<S> spatial_differential_attention(const ArrayT<S> &x, std::size_t layer,
                                             BranchTrace<S> *trace = nullptr) {
        const std::string p = "enc" + std::to_string(layer) + ".sda.";
        const std::size_t half = cfg_.hidden_dim / 2;
        auto q = matmul(x, params_.at(p + "w_q"));
        auto k = matmul(x, params_.at(p + "w_k"));
        auto v = matmul(x, params_.at(p + "w_v"));
        auto q1 = slice_axis(q, 3, 0, half), q2 = slice_axis(q, 3, half, half);
        auto k1 = slice_axis(k, 3, 0, half), k2 = slice_axis(k, 3, half, half);
        const S scl = S(1) / static_cast<S>(std::sqrt(static_cast<double>(half)));
        auto a1 = softmax_last_axis(scale(matmul(q1, transpose_last2(k1)), scl));
        auto a2 = softmax_last_axis(scale(matmul(q2, transpose_last2(k2)), scl));
        record(trace, p + "map1", a1);
        record(trace, p + "map2", a2);
        return matmul(sub(a1, mul(a2, lambda_at(layer))), v);
    }

    /// softmax((M_sepˢ)ᵀ · QᶜKᶜᵀ/√d) · Vᶜ: cluster-level scores redistributed
    /// to regions by the learnable separation matrix.
    ArrayT<S> spatial_cluster_attention(const ArrayT<S> &x_agg, std::size_t layer,
                                        std::size_t level, BranchTrace<S> *trace = nullptr) {
        const std::string p =
            "enc" + std::to_string(layer) + ".sca" + std::to_string(level) + ".";
        auto q = matmul(x_agg, params_.at(p + "w_q"));
        auto k = matmul(x_agg, params_.at(p + "w_k"));
        auto v = matmul(x_agg, params_.at(p + "w_v"));
        const S scl = S(1) / static_cast<S>(std::sqrt(static_cast<double>(cfg_.hidden_dim)));
        auto scores = scale(matmul(q, transpose_last2(k)), scl);      // (B,T,M,M)
        auto spread = matmul(transpose_last2(params_.at(p + "m_sep")), scores);  // (B,T,N,M)
        auto att = softmax_last_axis(spread);
        record(trace, p + "map", att);
        return matmul(att, v);  // (B,T,N,d)
    }

    /// Plain self-attention across the T axis, independently per region.
    ArrayT<S> temporal_self_attention(const ArrayT<S> &x, std::size_t layer,
                                      BranchTrace<S> *trace = nullptr) {
        const std::string p = "enc" + std::to_string(layer) + ".tsa.";
        auto xp = permute(x, {0, 2, 1, 3});  // (B,N,T,d)
        auto q = matmul(xp, params_.at(p + "w_q"));
        auto k = matmul(xp, params_.at(p + "w_k"));
        auto v = matmul(xp, params_.at(p + "w_v"));
        const S scl = S(1) / static_cast<S>(std::sqrt(static_cast<double>(cfg_.hidden_dim)));
        auto att = softmax_last_axis(scale(matmul(q, transpose_last2(k)), scl));  // (B,N,T,T)
        record(trace, p + "map", att);
        return permute(matmul(att, v), {0, 2, 1, 3});
    }

    /// Learnable slot queries Q_a attend over steps; the separation term built
    /// from the clock features restores per-step outputs:
    /// softmax((T_d∥T_w)·W_sep · Q_aK_aᵀ/√d) · V_a.
    ArrayT<S> temporal_aggregation_attention(const ArrayT<S> &x, const ArrayT<S> &time_sep,
                                             std::size_t layer, BranchTrace<S> *trace = nullptr) {
        const std::string p = "enc" + std::to_string(layer) + ".taa.";
        auto xp = permute(x, {0, 2, 1, 3});  // (B,N,T,d)
        auto k = matmul(xp, params_.at(p + "w_k"));
        auto v = matmul(xp, params_.at(p + "w_v"));
        const S scl = S(1) / static_cast<S>(std::sqrt(static_cast<double>(cfg_.hidden_dim)));
        auto scores = scale(matmul(params_.at(p + "query"), transpose_last2(k)), scl);  // (B,N,P,T)
        auto msep = matmul(time_sep, params_.at(p + "w_sep"));  // (B,N,T,P)
        auto att = softmax_last_axis(matmul(msep, scores));     // (B,N,T,T)
        record(trace, p + "map", att);
        return permute(matmul(att, v), {0, 2, 1, 3});
    }

    /// SA∥TA fusion, output projection, residual + layer norm, MLP block.
    ArrayT<S> encoder_layer(const ArrayT<S> &x, const std::vector<ArrayT<S>> &aggregates,
                            const ArrayT<S> &time_sep, std::size_t layer,
                            BranchTrace<S> *trace = nullptr) {
        const std::string p = "enc" + std::to_string(layer) + ".";
        std::vector<ArrayT<S>> parts;
        parts.push_back(spatial_differential_attention(x, layer, trace));
        if (!aggregates.empty()) {
            auto sum = spatial_cluster_attention(aggregates[0], layer, 0, trace);
            for (std::size_t i = 1; i < aggregates.size(); ++i) {
                sum = add(sum, spatial_cluster_attention(aggregates[i], layer, i, trace));
            }
            parts.push_back(sum);
        }
        parts.push_back(temporal_self_attention(x, layer, trace));
        parts.push_back(temporal_aggregation_attention(x, time_sep, layer, trace));
        auto fused = add(matmul(concat_last_axis(parts), params_.at(p + "w_o")), x);
        auto h = layer_norm(fused, params_.at(p + "ln1.gain"), params_.at(p + "ln1.bias"));
        auto wide = gelu(add(matmul(h, params_.at(p + "mlp.w1")), params_.at(p + "mlp.b1")));
        auto narrow = add(matmul(wide, params_.at(p + "mlp.w2")), params_.at(p + "mlp.b2"));
        return layer_norm(add(narrow, h), params_.at(p + "ln2.gain"), params_.at(p + "ln2.bias"));
    }

    /// Shared-across-regions regression head: flatten (T,d) → (H,D).
    ArrayT<S> head(const ArrayT<S> &x) {
        const std::size_t b = x.dim(0);
        auto flat = permute(x, {0, 2, 1, 3})
                        .reshaped({b, n_, cfg_.input_steps * cfg_.hidden_dim});
        auto y = add(matmul(flat, params_.at("head.weight")), params_.at("head.bias"));
        return permute(y.reshaped({b, n_, cfg_.horizon, cfg_.channels}), {0, 2, 1, 3});
    }

    /// Constant (B,N,T,8) tensor of T_d∥T_w per region and step.
    ArrayT<S> time_sep_features(const NetInputs<S> &in) const {
        const std::size_t b = in.tod.dim(0), t = in.tod.dim(1), n = in.tod.dim(2);
        ArrayT<S> out = ArrayT<S>::zeros({b, n, t, 8});
        for (std::size_t bi = 0; bi < b; ++bi) {
            for (std::size_t ti = 0; ti < t; ++ti) {
                for (std::size_t ni = 0; ni < n; ++ni) {
                    S *cell = out.data() + ((bi * n + ni) * t + ti) * 8;
                    cell[0] = in.tod[(bi * t + ti) * n + ni];
                    const S *dow = in.dow.data() + ((bi * t + ti) * n + ni) * 7;
                    for (std::size_t k = 0; k < 7; ++k) cell[1 + k] = dow[k];
                }
            }
        }
        return out;
    }

    /// Full pass: embed, stack L encoder layers, regression head.
    /// Output is (B,H,N,D) in the normalized scale.
    ArrayT<S> forward(const NetInputs<S> &in, BranchTrace<S> *trace = nullptr) {
        check_inputs(in);
        auto x = embed_regions(in);
        auto aggregates = embed_aggregates(in);
        auto time_sep = time_sep_features(in);
        for (std::size_t l = 0; l < cfg_.depth; ++l) {
            x = encoder_layer(x, aggregates, time_sep, l, trace);
        }
        return head(x);
    }

private:
    static void record(BranchTrace<S> *trace, const std::string &name, const ArrayT<S> &att) {
        if (trace) trace->softmaxes.emplace_back(name, att);
    }

    void check_inputs(const NetInputs<S> &in) const {
        if (in.x.rank() != 4) {
            throw std::invalid_argument("forward: inputs must be rank 4, got " +
                                        shape_str(in.x.shape()));
        }
        const Shape want{in.x.dim(0), cfg_.input_steps, n_, cfg_.channels};
        if (in.x.shape() != want) {
            throw std::invalid_argument("forward: inputs " + shape_str(in.x.shape()) +
                                        ", expected " + shape_str(want));
        }
    }

    /// Time features are identical across regions; re-emit them for M rows.
    ArrayT<S> replicate_rows(const ArrayT<S> &src, std::size_t m) const {
        const std::size_t b = src.dim(0), t = src.dim(1), n = src.dim(2), c = src.dim(3);
        ArrayT<S> out = ArrayT<S>::zeros({b, t, m, c});
        for (std::size_t bt = 0; bt < b * t; ++bt) {
            const S *row = src.data() + bt * n * c;  // region 0 of this step
            for (std::size_t mi = 0; mi < m; ++mi) {
                std::copy_n(row, c, out.data() + (bt * m + mi) * c);
            }
        }
        return out;
    }

    ModelConfig cfg_;
    std::size_t n_;
    ParameterRegistry<S> &params_;
    ArrayT<S> pos_;                    // (1,T,1,d) constant
    std::vector<ArrayT<S>> maps_;      // binary (M,N) per level
    std::vector<ArrayT<S>> agg_maps_;  // aggregation weights (sum or mean)
};

}  // namespace adformer
