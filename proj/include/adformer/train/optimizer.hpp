#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "adformer/model/parameters.hpp"

namespace adformer {

struct AdamWOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Decoupled-weight-decay Adam over a parameter registry. Each step first
/// shrinks the parameter by lr·wd·param, then applies the bias-corrected
/// moment update. Moment buffers are kept at the parameter's precision.
template <typename S = double>
class AdamW {
public:
    explicit AdamW(ParameterRegistry<S> &params, AdamWOptions opts = {})
        : params_(params), opts_(opts) {
        for (const auto &[name, value] : params_.all()) {
            m_.emplace_back(value.numel(), S(0));
            v_.emplace_back(value.numel(), S(0));
        }
    }

    std::size_t step_count() const { return t_; }
    const AdamWOptions &options() const { return opts_; }

    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
        auto &items = params_.all();
        for (std::size_t p = 0; p < items.size(); ++p) {
            auto &[name, value] = items[p];
            const S *g = value.grad_data();
            if (g == nullptr) {
                throw std::runtime_error("adamw_step: parameter '" + name + "' has no gradient");
            }
            S *w = value.data();
            S *m = m_[p].data();
            S *v = v_[p].data();
            for (std::size_t i = 0; i < value.numel(); ++i) {
                const double gi = static_cast<double>(g[i]);
                if (!std::isfinite(gi)) {
                    throw std::runtime_error("adamw_step: non-finite gradient in parameter '" +
                                             name + "'");
                }
                double wi = static_cast<double>(w[i]);
                wi -= lr * opts_.weight_decay * wi;
                const double mi = opts_.beta1 * static_cast<double>(m[i]) +
                                  (1.0 - opts_.beta1) * gi;
                const double vi = opts_.beta2 * static_cast<double>(v[i]) +
                                  (1.0 - opts_.beta2) * gi * gi;
                m[i] = static_cast<S>(mi);
                v[i] = static_cast<S>(vi);
                w[i] = static_cast<S>(wi - lr * (mi / bc1) / (std::sqrt(vi / bc2) + opts_.eps));
            }
        }
    }

private:
    ParameterRegistry<S> &params_;
    AdamWOptions opts_;
    std::vector<std::vector<S>> m_, v_;
    std::size_t t_ = 0;
};

/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the pre-clip norm.
template <typename S>
double clip_global_norm(ParameterRegistry<S> &params, double max_norm) {
    double sq = 0.0;
    for (const auto &[name, value] : params.all()) {
        const S *g = value.grad_data();
        if (g == nullptr) continue;
        for (std::size_t i = 0; i < value.numel(); ++i) {
            const double gi = static_cast<double>(g[i]);
            sq += gi * gi;
        }
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double factor = max_norm / norm;
        for (auto &[name, value] : params.all()) {
            S *g = value.grad_data();
            if (g == nullptr) continue;
            for (std::size_t i = 0; i < value.numel(); ++i) {
                g[i] = static_cast<S>(static_cast<double>(g[i]) * factor);
            }
        }
    }
    return norm;
}

/// Cosine interpolation from lr_start (epoch 0) to lr_end (final epoch).
inline double lr_schedule(std::size_t epoch, std::size_t total_epochs, double lr_start = 1e-3,
                          double lr_end = 1e-4) {
    if (total_epochs == 0 || epoch >= total_epochs) {
        throw std::invalid_argument("lr_schedule: epoch out of range");
    }
    if (total_epochs == 1) return lr_start;
    const double phase = static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
    return lr_end + (lr_start - lr_end) * (1.0 + std::cos(3.14159265358979323846 * phase)) / 2.0;
}

}  // namespace adformer
