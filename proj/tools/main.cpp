// adformer command line front end.
//
// Batch pipeline over a JSON run configuration:
//   ingest    trips CSV -> binned demand archive (ADF1)
//   cluster   archive   -> balanced region hierarchy (JSON)
//   train     archive + hierarchy -> checkpoint + JSON-lines history
//   eval      checkpoint -> metric report (JSON + aligned text table)
//   forecast  checkpoint -> per-region CSV of upcoming demand
//
// Exit codes: 0 success, 2 a referenced input file is missing, 1 any other
// failure. Every run prints a banner with the effective seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "adformer/cluster/dtw.hpp"
#include "adformer/cluster/hierarchy.hpp"
#include "adformer/data/demand.hpp"
#include "adformer/data/trips.hpp"
#include "adformer/eval/baselines.hpp"
#include "adformer/eval/evaluate.hpp"
#include "adformer/eval/metrics.hpp"
#include "adformer/io/container.hpp"
#include "adformer/model/network.hpp"
#include "adformer/train/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace adformer;

namespace {

/// Raised when a required input file is absent; mapped to exit code 2.
struct MissingInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunPaths {
    std::string trips_csv;
    std::string archive;
    std::string hierarchy;
    std::string checkpoint;
    std::string output_dir = ".";
};

struct PipelineSettings {
    std::int64_t bin_width_minutes = 30;
    int utc_offset_minutes = 0;
    std::size_t input_steps = 6;
    std::size_t horizon = 6;
};

struct ClusterSettings {
    std::vector<std::size_t> level_counts;
    double balance_factor = 1.5;
};

struct RunConfig {
    RunPaths paths;
    PipelineSettings pipeline;
    ClusterSettings clustering;
    ModelConfig model;
    TrainConfig training;
    std::uint64_t seed = 0;
};

RunConfig load_run_config(const std::string &path) {
    if (!fs::exists(path)) throw MissingInput("config file '" + path + "' does not exist");
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    json doc = json::parse(in);

    RunConfig cfg;
    if (doc.contains("paths")) {
        const auto &p = doc["paths"];
        cfg.paths.trips_csv = p.value("trips_csv", "");
        cfg.paths.archive = p.value("archive", "");
        cfg.paths.hierarchy = p.value("hierarchy", "");
        cfg.paths.checkpoint = p.value("checkpoint", "");
        cfg.paths.output_dir = p.value("output_dir", ".");
    }
    if (doc.contains("pipeline")) {
        const auto &p = doc["pipeline"];
        cfg.pipeline.bin_width_minutes = p.value("bin_width_minutes", std::int64_t{30});
        cfg.pipeline.utc_offset_minutes = p.value("utc_offset_minutes", 0);
        cfg.pipeline.input_steps = p.value("input_steps", std::size_t{6});
        cfg.pipeline.horizon = p.value("horizon", std::size_t{6});
    }
    if (cfg.pipeline.input_steps == 0 || cfg.pipeline.horizon == 0) {
        throw std::invalid_argument("pipeline.input_steps and pipeline.horizon must be positive");
    }
    if (doc.contains("clustering")) {
        const auto &c = doc["clustering"];
        cfg.clustering.level_counts = c.value("level_counts", std::vector<std::size_t>{});
        cfg.clustering.balance_factor = c.value("balance_factor", 1.5);
    }
    if (doc.contains("model")) cfg.model = doc["model"].get<ModelConfig>();
    if (doc.contains("training")) cfg.training = doc["training"].get<TrainConfig>();
    cfg.seed = doc.value("seed", std::uint64_t{0});

    // The window geometry and the cluster layout are owned by their pipeline
    // sections; the model section never contradicts them.
    cfg.model.input_steps = cfg.pipeline.input_steps;
    cfg.model.horizon = cfg.pipeline.horizon;
    cfg.model.level_counts = cfg.clustering.level_counts;
    return cfg;
}

void require_file(const std::string &path, const std::string &what) {
    if (path.empty()) throw std::runtime_error("config is missing the " + what + " path");
    if (!fs::exists(path)) throw MissingInput(what + " '" + path + "' does not exist");
}

void banner(const std::string &cmd, std::uint64_t seed, std::size_t threads) {
    std::printf("[adformer] command=%s seed=%llu threads=%zu\n", cmd.c_str(),
                static_cast<unsigned long long>(seed), threads);
}

std::string out_path(const RunConfig &cfg, const std::string &name) {
    fs::create_directories(cfg.paths.output_dir);
    return (fs::path(cfg.paths.output_dir) / name).string();
}

// ---------------------------------------------------------------------------
// ingest

int cmd_ingest(const RunConfig &cfg, std::uint64_t seed, std::size_t threads) {
    banner("ingest", seed, threads);
    require_file(cfg.paths.trips_csv, "trips CSV");
    if (cfg.paths.archive.empty()) throw std::runtime_error("config is missing the archive path");

    auto records = read_trips_csv(cfg.paths.trips_csv, cfg.pipeline.utc_offset_minutes);
    auto tensor = ingest_trips(records, cfg.pipeline.bin_width_minutes * 60);
    write_demand_archive(cfg.paths.archive, tensor);

    double total = 0.0;
    for (std::size_t i = 0; i < tensor.values.numel(); ++i) total += tensor.values[i];
    std::printf("ingested steps=%zu regions=%zu trips=%.0f\n", tensor.steps(), tensor.regions(),
                total);
    std::printf("wrote %s\n", cfg.paths.archive.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// cluster

int cmd_cluster(const RunConfig &cfg, std::uint64_t seed, std::size_t threads) {
    banner("cluster", seed, threads);
    require_file(cfg.paths.archive, "demand archive");
    if (cfg.paths.hierarchy.empty())
        throw std::runtime_error("config is missing the hierarchy path");

    auto tensor = read_demand_archive(cfg.paths.archive);
    auto splits = chronological_split(tensor);
    auto dist = similarity_matrix(splits.train, threads);
    auto hierarchy = build_hierarchy(dist, cfg.clustering.level_counts,
                                     cfg.clustering.balance_factor);
    hierarchy.fingerprint = train_fingerprint(splits.train);
    save_hierarchy(cfg.paths.hierarchy, hierarchy);

    std::printf("clustered regions=%zu levels=%zu\n", tensor.regions(), hierarchy.levels.size());
    for (std::size_t i = 0; i < hierarchy.levels.size(); ++i) {
        std::printf("  level %zu: clusters=%zu threshold=%zu\n", i,
                    hierarchy.levels[i].partition.cluster_count, hierarchy.levels[i].threshold);
    }
    std::printf("wrote %s\n", cfg.paths.hierarchy.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const RunConfig &cfg_in, std::uint64_t seed, std::size_t threads,
              std::optional<std::size_t> epochs_override) {
    RunConfig cfg = cfg_in;
    banner("train", seed, threads);
    require_file(cfg.paths.archive, "demand archive");
    require_file(cfg.paths.hierarchy, "hierarchy file");
    if (cfg.paths.checkpoint.empty())
        throw std::runtime_error("config is missing the checkpoint path");

    auto tensor = read_demand_archive(cfg.paths.archive);
    auto splits = chronological_split(tensor);
    auto hierarchy = load_hierarchy(cfg.paths.hierarchy);

    const std::string fp = train_fingerprint(splits.train);
    if (hierarchy.fingerprint != fp) {
        throw std::runtime_error(
            "hierarchy was clustered on different training data (fingerprint " +
            hierarchy.fingerprint + ", archive train split has " + fp +
            "); re-run the cluster command");
    }
    if (hierarchy.level_counts != cfg.clustering.level_counts) {
        throw std::runtime_error("hierarchy level counts do not match the clustering config");
    }

    auto norm = fit_normalizer(splits.train);
    auto train_ds = make_windows(splits.train, norm, cfg.model.input_steps, cfg.model.horizon);
    auto val_ds = make_windows(splits.val, norm, cfg.model.input_steps, cfg.model.horizon);

    cfg.training.seed = seed;
    cfg.training.checkpoint_path = cfg.paths.checkpoint;
    if (epochs_override) cfg.training.epochs = *epochs_override;

    Rng init(seed);
    auto params = init_parameters<double>(cfg.model, tensor.regions(), hierarchy, init);
    AdformerNet<double> net(cfg.model, tensor.regions(), hierarchy, params);
    std::printf("model parameters=%zu train_windows=%zu val_windows=%zu\n", params.total_values(),
                train_ds.sample_count(), val_ds.sample_count());

    const std::string history_path = out_path(cfg, "history.jsonl");
    std::ofstream history(history_path, std::ios::trunc);
    if (!history) throw std::runtime_error("cannot open '" + history_path + "' for writing");

    TrainData data{train_ds, val_ds, hierarchy, tensor.bin_width_sec};
    auto result = train(net, data, cfg.training, [&](const EpochRecord &rec) {
        history << epoch_json(rec).dump() << "\n";
        history.flush();
        std::printf("epoch %zu lr=%.6g train_loss=%.6f val_mae=%.6f\n", rec.epoch, rec.lr,
                    rec.train_loss, rec.val_mae);
    });

    if (result.aborted_non_finite) {
        history << json{{"aborted_non_finite", true}, {"message", result.abort_message}}.dump()
                << "\n";
        std::fprintf(stderr, "error: training aborted on non-finite values: %s\n",
                     result.abort_message.c_str());
        std::fprintf(stderr, "partial history labeled in %s\n", history_path.c_str());
        return 1;
    }
    if (!std::isfinite(result.best_val_mae)) {
        std::fprintf(stderr, "error: no epoch produced a defined validation MAE; "
                             "no checkpoint was written\n");
        return 1;
    }
    std::printf("best epoch %zu val_mae=%.6f\n", result.best_epoch, result.best_val_mae);
    std::printf("wrote %s\n", cfg.paths.checkpoint.c_str());
    std::printf("wrote %s\n", history_path.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// eval

/// Keeps only the horizon rows for steps {1, 3, 6} plus the trained horizon.
MetricReport select_horizons(MetricReport report, std::size_t trained_h) {
    std::vector<std::pair<std::size_t, MetricValues>> keep;
    for (const auto &row : report.horizons) {
        if (row.first == 1 || row.first == 3 || row.first == 6 || row.first == trained_h) {
            keep.push_back(row);
        }
    }
    report.horizons = std::move(keep);
    return report;
}

int cmd_eval(const RunConfig &cfg, std::uint64_t seed, std::size_t threads) {
    banner("eval", seed, threads);
    require_file(cfg.paths.archive, "demand archive");
    require_file(cfg.paths.checkpoint, "checkpoint");

    auto tensor = read_demand_archive(cfg.paths.archive);
    auto ck = load_checkpoint<double>(cfg.paths.checkpoint);
    if (ck.regions != tensor.regions()) {
        throw std::runtime_error("checkpoint was trained on " + std::to_string(ck.regions) +
                                 " regions but the archive has " +
                                 std::to_string(tensor.regions()));
    }
    if (ck.bin_width_seconds != tensor.bin_width_sec) {
        throw std::runtime_error("checkpoint bin width " + std::to_string(ck.bin_width_seconds) +
                                 "s does not match the archive's " +
                                 std::to_string(tensor.bin_width_sec) + "s");
    }

    auto splits = chronological_split(tensor);
    auto test_ds = make_windows(splits.test, ck.normalizer, ck.model.input_steps,
                                ck.model.horizon);
    AdformerNet<double> net(ck.model, ck.regions, ck.hierarchy, ck.params);

    const std::size_t batch = std::max<std::size_t>(ck.train.batch_size, 1);
    auto [model_pred, targets] = predict_dataset(net, test_ds, batch);

    // Baselines over the identical windows.
    const std::size_t count = test_ds.sample_count();
    Array persist = Array::zeros(targets.shape());
    Array hist = Array::zeros(targets.shape());
    HistoricalAverage ha(splits.train);
    const std::size_t cells = ck.model.horizon * ck.regions * ck.model.channels;
    std::vector<std::size_t> chunk;
    for (std::size_t start = 0; start < count; start += batch) {
        const std::size_t stop = std::min(count, start + batch);
        chunk.resize(stop - start);
        std::iota(chunk.begin(), chunk.end(), start);
        auto fb = test_ds.assemble(chunk);
        auto p = persistence_baseline(fb);
        auto h = ha.predict_batch(fb);
        std::copy_n(p.data(), p.numel(), persist.data() + start * cells);
        std::copy_n(h.data(), h.numel(), hist.data() + start * cells);
    }

    const double threshold = ck.train.loss_threshold;
    std::vector<std::pair<std::string, MetricReport>> reports;
    reports.emplace_back("adformer",
                         select_horizons(thresholded_metrics(model_pred, targets, threshold),
                                         ck.model.horizon));
    reports.emplace_back("persistence",
                         select_horizons(thresholded_metrics(persist, targets, threshold),
                                         ck.model.horizon));
    reports.emplace_back("historical_average",
                         select_horizons(thresholded_metrics(hist, targets, threshold),
                                         ck.model.horizon));

    json out;
    out["test_windows"] = count;
    out["horizon"] = ck.model.horizon;
    for (const auto &[name, report] : reports) out[name] = report_json(report);
    const std::string json_path = out_path(cfg, "eval.json");
    {
        std::ofstream f(json_path, std::ios::trunc);
        f << out.dump(2) << "\n";
    }
    const std::string table = format_report_table(reports);
    const std::string table_path = out_path(cfg, "eval.txt");
    {
        std::ofstream f(table_path, std::ios::trunc);
        f << table;
    }
    std::fputs(table.c_str(), stdout);
    std::printf("wrote %s\n", json_path.c_str());
    std::printf("wrote %s\n", table_path.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// forecast

int cmd_forecast(const RunConfig &cfg, std::uint64_t seed, std::size_t threads,
                 std::optional<std::int64_t> start_override) {
    banner("forecast", seed, threads);
    require_file(cfg.paths.archive, "demand archive");
    require_file(cfg.paths.checkpoint, "checkpoint");

    auto tensor = read_demand_archive(cfg.paths.archive);
    auto ck = load_checkpoint<double>(cfg.paths.checkpoint);
    if (ck.regions != tensor.regions()) {
        throw std::runtime_error("checkpoint region count does not match the archive");
    }
    const std::int64_t bin = tensor.bin_width_sec;
    const std::size_t t = ck.model.input_steps, h = ck.model.horizon;
    const std::size_t n = tensor.regions(), d = tensor.channels();

    // Default start: the first bin after the archive ends.
    const std::int64_t start =
        start_override ? *start_override : tensor.timestamps.back() + bin;

    // The model consumes the T steps immediately before `start`.
    const std::int64_t first_needed = start - static_cast<std::int64_t>(t) * bin;
    const auto it =
        std::find(tensor.timestamps.begin(), tensor.timestamps.end(), first_needed);
    if (it == tensor.timestamps.end()) {
        throw std::runtime_error("archive does not cover the " + std::to_string(t) +
                                 " steps before start timestamp " + std::to_string(start));
    }
    const auto first = static_cast<std::size_t>(it - tensor.timestamps.begin());
    if (first + t > tensor.steps()) {
        throw std::runtime_error("archive ends before the requested start timestamp");
    }
    for (std::size_t i = 0; i < t; ++i) {
        if (tensor.timestamps[first + i] != first_needed + static_cast<std::int64_t>(i) * bin) {
            throw std::runtime_error("archive has a gap in the steps before the start timestamp");
        }
    }

    auto window = detail::slice_steps(tensor, first, t);
    NetInputs<double> in;
    in.x = ck.normalizer.normalize(window.values).reshaped({1, t, n, d});
    auto tf = build_time_features(window.timestamps, n);
    in.tod = tf.time_of_day.reshaped({1, t, n, 1});
    in.dow = tf.day_of_week.reshaped({1, t, n, 7});

    AdformerNet<double> net(ck.model, ck.regions, ck.hierarchy, ck.params);
    Array pred = ck.normalizer.denormalize(net.forward(in));  // (1,H,N,D)

    const std::string csv_path = out_path(cfg, "forecast.csv");
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot open '" + csv_path + "' for writing");
    csv << "region_id,horizon_step,timestamp,predicted_demand\n";
    char line[160];
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t hi = 0; hi < h; ++hi) {
            const std::int64_t ts = start + static_cast<std::int64_t>(hi) * bin;
            double value = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                value += pred[(hi * n + r) * d + c];
            }
            value = std::max(value, 0.0);  // demand is a count
            std::snprintf(line, sizeof(line), "%s,%zu,%lld,%.6f\n",
                          tensor.region_ids[r].c_str(), hi + 1, static_cast<long long>(ts),
                          value);
            csv << line;
        }
    }
    std::printf("forecast start=%lld horizons=%zu regions=%zu\n",
                static_cast<long long>(start), h, n);
    std::printf("wrote %s\n", csv_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"adformer: multi-region passenger demand forecasting"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
    app.add_option("--config", config_path, "run configuration JSON")->required();
    app.add_option("--seed", seed, "override the config seed")->each([&](const std::string &) {
        seed_given = true;
    });
    app.add_option("--threads", threads, "worker threads for parallel sections");

    auto *ingest = app.add_subcommand("ingest", "bin a trips CSV into a demand archive");
    auto *cluster = app.add_subcommand("cluster", "build the balanced region hierarchy");
    auto *train_cmd = app.add_subcommand("train", "train a model and write the best checkpoint");
    std::size_t epochs_flag = 0;
    auto *epochs_opt = train_cmd->add_option("--epochs", epochs_flag, "override training epochs");
    auto *eval_cmd = app.add_subcommand("eval", "evaluate the checkpoint on the test split");
    auto *forecast = app.add_subcommand("forecast", "predict demand after the archive ends");
    std::int64_t start_flag = 0;
    auto *start_opt =
        forecast->add_option("--start", start_flag, "first forecast timestamp (epoch seconds)");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = load_run_config(config_path);
        const std::uint64_t run_seed = seed_given ? seed : cfg.seed;
        if (threads == 0) threads = 1;
        if (ingest->parsed()) return cmd_ingest(cfg, run_seed, threads);
        if (cluster->parsed()) return cmd_cluster(cfg, run_seed, threads);
        if (train_cmd->parsed()) {
            std::optional<std::size_t> epochs;
            if (epochs_opt->count() > 0) epochs = epochs_flag;
            return cmd_train(cfg, run_seed, threads, epochs);
        }
        if (eval_cmd->parsed()) return cmd_eval(cfg, run_seed, threads);
        if (forecast->parsed()) {
            std::optional<std::int64_t> start;
            if (start_opt->count() > 0) start = start_flag;
            return cmd_forecast(cfg, run_seed, threads, start);
        }
        std::fprintf(stderr, "error: no command selected\n");
        return 1;
    } catch (const MissingInput &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
