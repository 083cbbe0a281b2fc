#pragma once

#include <cstddef>

#include "adformer/core/ops.hpp"
#include "adformer/data/demand.hpp"
#include "adformer/model/network.hpp"

namespace adformer {

/// Rescales normalized predictions back to raw demand inside the graph, so the
/// loss sees the same scale as the evaluation metrics. The per-channel scale
/// and shift enter as constants; gradients flow through the affine map only.
template <typename S>
ArrayT<S> denormalize_graph(const ArrayT<S> &pred, const Normalizer &norm) {
    const std::size_t d = norm.mean.size();
    if (pred.dim(pred.rank() - 1) != d) {
        throw std::invalid_argument("denormalize_graph: channel mismatch");
    }
    ArrayT<S> sd = ArrayT<S>::zeros({d}), mu = ArrayT<S>::zeros({d});
    for (std::size_t c = 0; c < d; ++c) {
        sd.data()[c] = static_cast<S>(norm.stddev[c]);
        mu.data()[c] = static_cast<S>(norm.mean[c]);
    }
    return add(mul(pred, sd), mu);
}

/// Mean absolute error over cells whose target is at or above the threshold;
/// if nothing qualifies, the batch falls back to the unmasked mean. Masked
/// cells contribute exactly zero gradient because they are multiplied by a
/// zero constant before the reduction.
template <typename S>
ArrayT<S> masked_mae_loss(const ArrayT<S> &pred, const ArrayT<S> &target,
                          double threshold = 5.0) {
    if (pred.shape() != target.shape()) {
        throw std::invalid_argument("masked_mae_loss: shape mismatch " + shape_str(pred.shape()) +
                                    " vs " + shape_str(target.shape()));
    }
    auto diff = adformer::abs(sub(pred, target));
    ArrayT<S> mask = ArrayT<S>::zeros(target.shape());
    std::size_t qualifying = 0;
    for (std::size_t i = 0; i < target.numel(); ++i) {
        if (static_cast<double>(target[i]) >= threshold) {
            mask.data()[i] = S(1);
            ++qualifying;
        }
    }
    if (qualifying == 0) return mean_all(diff);
    return scale(sum_all(mul(diff, mask)), S(1) / static_cast<S>(qualifying));
}

}  // namespace adformer
