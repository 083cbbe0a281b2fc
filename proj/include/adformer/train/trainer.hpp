#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adformer/cluster/hierarchy.hpp"
#include "adformer/eval/evaluate.hpp"
#include "adformer/io/container.hpp"
#include "adformer/train/loss.hpp"
#include "adformer/train/optimizer.hpp"

namespace adformer {

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double lr_start = 1e-3;
    double lr_end = 1e-4;
    std::uint64_t seed = 0;
    std::size_t patience = 15;  // epochs without validation improvement
    double weight_decay = 0.01;
    double clip_norm = 5.0;
    double loss_threshold = 5.0;
    std::string checkpoint_path;  // empty disables checkpoint writing

    void validate() const {
        if (epochs == 0 || batch_size == 0) {
            throw std::invalid_argument("TrainConfig: epochs and batch_size must be positive");
        }
        if (!(lr_start >= lr_end) || !(lr_end > 0.0)) {
            throw std::invalid_argument("TrainConfig: need lr_start >= lr_end > 0");
        }
    }
};

inline void to_json(nlohmann::json &j, const TrainConfig &c) {
    j = nlohmann::json{{"epochs", c.epochs},
                       {"batch_size", c.batch_size},
                       {"lr_start", c.lr_start},
                       {"lr_end", c.lr_end},
                       {"seed", c.seed},
                       {"patience", c.patience},
                       {"weight_decay", c.weight_decay},
                       {"clip_norm", c.clip_norm},
                       {"loss_threshold", c.loss_threshold}};
}

inline void from_json(const nlohmann::json &j, TrainConfig &c) {
    TrainConfig defaults;
    c.epochs = j.value("epochs", defaults.epochs);
    c.batch_size = j.value("batch_size", defaults.batch_size);
    c.lr_start = j.value("lr_start", defaults.lr_start);
    c.lr_end = j.value("lr_end", defaults.lr_end);
    c.seed = j.value("seed", defaults.seed);
    c.patience = j.value("patience", defaults.patience);
    c.weight_decay = j.value("weight_decay", defaults.weight_decay);
    c.clip_norm = j.value("clip_norm", defaults.clip_norm);
    c.loss_threshold = j.value("loss_threshold", defaults.loss_threshold);
}

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_mae = std::numeric_limits<double>::quiet_NaN();
    double val_rmse = std::numeric_limits<double>::quiet_NaN();
    double val_mape = std::numeric_limits<double>::quiet_NaN();
};

inline nlohmann::json epoch_json(const EpochRecord &r) {
    auto num = [](double v) {
        return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
    };
    return nlohmann::json{{"epoch", r.epoch},         {"lr", r.lr},
                          {"train_loss", r.train_loss}, {"val_mae", num(r.val_mae)},
                          {"val_rmse", num(r.val_rmse)}, {"val_mape", num(r.val_mape)}};
}

struct TrainData {
    const WindowDataset &train;
    const WindowDataset &val;
    const ClusterHierarchy &hierarchy;
    std::size_t bin_width_seconds = 0;  // echoed into the checkpoint
};

struct TrainResult {
    std::vector<EpochRecord> history;
    double best_val_mae = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    bool aborted_non_finite = false;
    std::string abort_message;
};

/// Self-contained training artifact: every learnable array by name plus the
/// configuration, normalizer, and hierarchy needed to rebuild the model.
template <typename S>
void save_checkpoint(const std::string &path, const ParameterRegistry<S> &params,
                     const ModelConfig &model, const TrainConfig &train_cfg,
                     const Normalizer &norm, const ClusterHierarchy &hierarchy,
                     std::size_t regions, std::size_t bin_width_seconds,
                     const nlohmann::json &extra = nlohmann::json::object()) {
    nlohmann::json header{{"schema", "checkpoint"},
                          {"model", model},
                          {"train", train_cfg},
                          {"normalizer", {{"mean", norm.mean}, {"stddev", norm.stddev}}},
                          {"hierarchy", hierarchy_json(hierarchy)},
                          {"regions", regions},
                          {"bin_width_seconds", bin_width_seconds}};
    header["params"] = nlohmann::json::array();
    std::vector<double> payload;
    payload.reserve(params.total_values());
    for (const auto &[name, value] : params.all()) {
        header["params"].push_back({{"name", name}, {"shape", value.shape()}});
        for (std::size_t i = 0; i < value.numel(); ++i) {
            payload.push_back(static_cast<double>(value[i]));
        }
    }
    header.update(extra);
    adf1::write(path, header, payload.data(), payload.size());
}

template <typename S = double>
struct Checkpoint {
    ModelConfig model;
    TrainConfig train;
    Normalizer normalizer;
    ClusterHierarchy hierarchy;
    std::size_t regions = 0;
    std::size_t bin_width_seconds = 0;
    ParameterRegistry<S> params;
    nlohmann::json header;
};

template <typename S = double>
Checkpoint<S> load_checkpoint(const std::string &path) {
    auto doc = adf1::read(path);
    if (doc.header.value("schema", "") != "checkpoint") {
        throw std::runtime_error("checkpoint: '" + path + "' is not a checkpoint file");
    }
    Checkpoint<S> ck;
    ck.header = doc.header;
    ck.model = doc.header.at("model").get<ModelConfig>();
    ck.train = doc.header.at("train").get<TrainConfig>();
    ck.normalizer.mean = doc.header.at("normalizer").at("mean").get<std::vector<double>>();
    ck.normalizer.stddev = doc.header.at("normalizer").at("stddev").get<std::vector<double>>();
    ck.hierarchy = hierarchy_from_json(doc.header.at("hierarchy"), "checkpoint '" + path + "'");
    ck.regions = doc.header.at("regions");
    ck.bin_width_seconds = doc.header.at("bin_width_seconds");
    std::size_t offset = 0;
    for (const auto &entry : doc.header.at("params")) {
        const std::string name = entry.at("name");
        const Shape shape = entry.at("shape").get<Shape>();
        ArrayT<S> value = ArrayT<S>::zeros(shape);
        if (offset + value.numel() > doc.payload.size()) {
            throw std::runtime_error("checkpoint: payload of '" + path + "' is truncated");
        }
        for (std::size_t i = 0; i < value.numel(); ++i) {
            value.data()[i] = static_cast<S>(doc.payload[offset + i]);
        }
        offset += value.numel();
        ck.params.add(name, std::move(value));
    }
    if (offset != doc.payload.size()) {
        throw std::runtime_error("checkpoint: payload of '" + path +
                                 "' does not match the parameter list");
    }
    return ck;
}

/// Full training loop: seeded per-epoch shuffle, AdamW with cosine decay and
/// global-norm clipping, per-epoch validation metrics, best-checkpoint
/// writing, and early stopping on validation masked-MAE. A non-finite loss or
/// gradient aborts the run; the best checkpoint written so far stays on disk.
template <typename S = double>
TrainResult train(AdformerNet<S> &net, const TrainData &data, const TrainConfig &cfg,
                  const std::function<void(const EpochRecord &)> &on_epoch = {}) {
    cfg.validate();
    auto &params = net.parameters();
    AdamWOptions opts;
    opts.weight_decay = cfg.weight_decay;
    AdamW<S> optimizer(params, opts);
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.train.sample_count());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const Normalizer &norm = data.train.normalizer();

    TrainResult result;
    std::size_t strikes = 0;
    std::vector<std::size_t> chunk;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, cfg.epochs, cfg.lr_start, cfg.lr_end);
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            chunk.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
            try {
                auto batch = data.train.assemble(chunk);
                auto in = make_net_inputs<S>(batch);
                TapeT<S> tape;
                typename TapeT<S>::Scope scope(tape);
                auto pred = net.forward(in);
                auto loss = masked_mae_loss(denormalize_graph(pred, norm),
                                            cast_array<S>(batch.targets), cfg.loss_threshold);
                const double lval = static_cast<double>(loss.scalar());
                if (!std::isfinite(lval)) {
                    throw std::runtime_error("train: non-finite loss at epoch " +
                                             std::to_string(epoch));
                }
                params.zero_grad();
                tape.backward(loss);
                clip_global_norm(params, cfg.clip_norm);
                optimizer.step(lr);
                loss_sum += lval;
                ++batches;
            } catch (const std::runtime_error &err) {
                // Numeric blow-ups (non-finite loss, softmax overflow, bad
                // gradients) end the run; earlier artifacts stay valid.
                result.aborted_non_finite = true;
                result.abort_message = err.what();
                return result;
            }
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.train_loss = loss_sum / static_cast<double>(batches);
        auto report = evaluate_dataset(net, data.val, cfg.batch_size, cfg.loss_threshold);
        if (report.aggregate.defined) {
            rec.val_mae = report.aggregate.mae;
            rec.val_rmse = report.aggregate.rmse;
            rec.val_mape = report.aggregate.mape;
        }
        result.history.push_back(rec);
        result.epochs_run = epoch + 1;
        if (on_epoch) on_epoch(rec);

        if (rec.val_mae < result.best_val_mae) {  // NaN compares false: no improvement
            result.best_val_mae = rec.val_mae;
            result.best_epoch = epoch;
            strikes = 0;
            if (!cfg.checkpoint_path.empty()) {
                save_checkpoint(cfg.checkpoint_path, params, net.config(), cfg, norm,
                                data.hierarchy, net.regions(), data.bin_width_seconds,
                                {{"best_epoch", epoch}, {"best_val_mae", rec.val_mae}});
            }
        } else if (++strikes > cfg.patience) {
            break;
        }
    }
    return result;
}

}  // namespace adformer
