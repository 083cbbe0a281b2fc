#pragma once

#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

#include "adformer/data/demand.hpp"
#include "adformer/eval/metrics.hpp"
#include "adformer/model/network.hpp"

namespace adformer {

/// All stride-1 windows of a split as one (samples, H, N, D) pair of
/// raw-scale predictions and targets, batched through the model without a
/// tape. Call with no gradient tape active.
template <typename S>
std::pair<Array, Array> predict_dataset(AdformerNet<S> &net, const WindowDataset &ds,
                                        std::size_t batch_size) {
    const std::size_t count = ds.sample_count();
    const std::size_t h = ds.horizon(), n = ds.split().regions(), d = ds.split().channels();
    Array preds = Array::zeros({count, h, n, d});
    Array targets = Array::zeros({count, h, n, d});
    const std::size_t cells = h * n * d;
    std::vector<std::size_t> chunk;
    for (std::size_t start = 0; start < count; start += batch_size) {
        const std::size_t stop = std::min(count, start + batch_size);
        chunk.resize(stop - start);
        std::iota(chunk.begin(), chunk.end(), start);
        auto batch = ds.assemble(chunk);
        auto in = make_net_inputs<S>(batch);
        Array raw = ds.normalizer().denormalize(cast_to_double(net.forward(in)));
        std::copy_n(raw.data(), raw.numel(), preds.data() + start * cells);
        std::copy_n(batch.targets.data(), batch.targets.numel(),
                    targets.data() + start * cells);
    }
    return {std::move(preds), std::move(targets)};
}

template <typename S>
MetricReport evaluate_dataset(AdformerNet<S> &net, const WindowDataset &ds,
                              std::size_t batch_size, double threshold = 5.0) {
    auto [preds, targets] = predict_dataset(net, ds, batch_size);
    return thresholded_metrics(preds, targets, threshold);
}

}  // namespace adformer
