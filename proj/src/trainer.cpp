#include "mms/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

namespace mms {

// ---------------------------------------------------------------------------
// Learning-rate schedules

LrSchedule LrSchedule::constant(double rate) { return {{rate}, {}}; }

LrSchedule LrSchedule::cifar10_early() { return {{0.1, 0.01, 0.001, 0.0001}, {24992, 27335, 29678}}; }

LrSchedule LrSchedule::cifar100_early() { return {{0.1, 0.02, 0.004, 0.0008}, {39050, 41393, 43736}}; }

void validate(const LrSchedule& schedule) {
    if (schedule.rates.size() != schedule.milestones.size() + 1)
        throw ConfigError("lr", "need exactly one more rate than milestones");
    for (double r : schedule.rates)
        if (!(r > 0.0) || !std::isfinite(r)) throw ConfigError("lr", "rates must be finite and > 0");
    for (std::size_t j = 1; j < schedule.milestones.size(); ++j)
        if (schedule.milestones[j] <= schedule.milestones[j - 1])
            throw ConfigError("lr", "milestones must be strictly increasing");
}

double lr_at(const LrSchedule& schedule, std::size_t step) {
    const auto it = std::upper_bound(schedule.milestones.begin(), schedule.milestones.end(), step);
    return schedule.rates.at(static_cast<std::size_t>(it - schedule.milestones.begin()));
}

// ---------------------------------------------------------------------------
// Configuration

std::string to_string(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::gauss: return "gauss";
        case DatasetKind::csv: return "csv";
        case DatasetKind::idx: return "idx";
    }
    return "unknown";
}

DatasetKind parse_dataset_kind(const std::string& name) {
    if (name == "gauss") return DatasetKind::gauss;
    if (name == "csv") return DatasetKind::csv;
    if (name == "idx") return DatasetKind::idx;
    throw ConfigError("dataset", "unknown dataset kind '" + name + "'");
}

void validate(const RunConfig& c) {
    const auto& d = c.data;
    if (d.n_classes < 2) throw ConfigError("classes", "need at least 2 classes");
    if (d.kind == DatasetKind::gauss) {
        if (d.dim == 0) throw ConfigError("dim", "must be >= 1");
        if (d.per_class == 0) throw ConfigError("per_class", "must be >= 1");
        if (d.test_per_class == 0) throw ConfigError("test_per_class", "must be >= 1");
        if (!(d.separation >= 0.0) || !std::isfinite(d.separation))
            throw ConfigError("separation", "must be finite and >= 0");
    } else if (d.path.empty()) {
        throw ConfigError("data_path", "required for " + to_string(d.kind) + " datasets");
    }
    if (c.batch_size == 0) throw ConfigError("b", "batch must be >= 1");
    if (c.pool_size < c.batch_size) throw ConfigError("pool", "pool must be >= batch");
    if (c.total_steps == 0) throw ConfigError("steps", "must be >= 1");
    if (c.eval_every == 0) throw ConfigError("eval_every", "must be >= 1");
    if (!(c.threshold >= 0.0 && c.threshold <= 1.0)) throw ConfigError("threshold", "must lie in [0, 1]");
    validate(c.lr);
}

namespace {

std::string pool_policy_name(PoolPolicy p) { return p == PoolPolicy::fresh ? "fresh" : "epoch"; }

std::string arch_name(std::size_t hidden) {
    return hidden == 0 ? "linear" : "mlp:" + std::to_string(hidden);
}

std::size_t parse_arch(const std::string& s) {
    if (s == "linear") return 0;
    if (s.rfind("mlp:", 0) == 0) {
        const std::string width = s.substr(4);
        std::size_t pos = 0;
        unsigned long long h = 0;
        try {
            h = std::stoull(width, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == width.size() && !width.empty() && h > 0 && width.front() != '-') return h;
    }
    throw ConfigError("arch", "expected 'linear' or 'mlp:H' with H >= 1, got '" + s + "'");
}

template <typename T>
void take(const nlohmann::json& j, const char* key, T& out, const char* field) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(field, std::string("wrong type: ") + e.what());
    }
}

}  // namespace

nlohmann::json to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["dataset"] = {
        {"kind", to_string(c.data.kind)},
        {"path", c.data.path},
        {"classes", c.data.n_classes},
        {"dim", c.data.dim},
        {"per_class", c.data.per_class},
        {"test_per_class", c.data.test_per_class},
        {"separation", c.data.separation},
        {"standardize", c.data.standardize},
    };
    j["arch"] = arch_name(c.hidden);
    j["strategy"] = std::string(to_string(c.strategy.kind));
    j["pool"] = c.pool_size;
    j["b"] = c.batch_size;
    j["pool_policy"] = pool_policy_name(c.pool_policy);
    j["steps"] = c.total_steps;
    j["eval_every"] = c.eval_every;
    j["lr"] = {{"rates", c.lr.rates}, {"milestones", c.lr.milestones}};
    j["seed"] = c.seed;
    j["threshold"] = c.threshold;
    j["early_stop_patience"] = c.early_stop_patience;
    j["checkpoint_every"] = c.checkpoint_every;
    j["record_wall_time"] = c.record_wall_time;
    j["out"] = c.out_dir;
    return nlohmann::json::parse(j.dump());
}

void merge_json(RunConfig& c, const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config", "top level must be a JSON object");
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        if (!d.is_object()) throw ConfigError("dataset", "must be an object");
        std::string kind = to_string(c.data.kind);
        take(d, "kind", kind, "dataset");
        c.data.kind = parse_dataset_kind(kind);
        take(d, "path", c.data.path, "data_path");
        take(d, "classes", c.data.n_classes, "classes");
        take(d, "dim", c.data.dim, "dim");
        take(d, "per_class", c.data.per_class, "per_class");
        take(d, "test_per_class", c.data.test_per_class, "test_per_class");
        take(d, "separation", c.data.separation, "separation");
        take(d, "standardize", c.data.standardize, "standardize");
    }
    if (j.contains("arch")) {
        std::string arch;
        take(j, "arch", arch, "arch");
        c.hidden = parse_arch(arch);
    }
    if (j.contains("strategy")) {
        std::string s;
        take(j, "strategy", s, "strategy");
        try {
            c.strategy = parse_strategy(s);
        } catch (const Error& e) {
            throw ConfigError("strategy", e.what());
        }
    }
    take(j, "pool", c.pool_size, "pool");
    take(j, "b", c.batch_size, "b");
    if (j.contains("pool_policy")) {
        std::string p;
        take(j, "pool_policy", p, "pool_policy");
        if (p == "fresh") c.pool_policy = PoolPolicy::fresh;
        else if (p == "epoch") c.pool_policy = PoolPolicy::epoch;
        else throw ConfigError("pool_policy", "expected 'fresh' or 'epoch', got '" + p + "'");
    }
    take(j, "steps", c.total_steps, "steps");
    take(j, "eval_every", c.eval_every, "eval_every");
    if (j.contains("lr")) {
        const auto& lr = j.at("lr");
        if (!lr.is_object()) throw ConfigError("lr", "must be an object with rates and milestones");
        LrSchedule s;
        take(lr, "rates", s.rates, "lr");
        take(lr, "milestones", s.milestones, "lr");
        c.lr = std::move(s);
    }
    take(j, "seed", c.seed, "seed");
    take(j, "threshold", c.threshold, "threshold");
    take(j, "early_stop_patience", c.early_stop_patience, "early_stop_patience");
    take(j, "checkpoint_every", c.checkpoint_every, "checkpoint_every");
    take(j, "record_wall_time", c.record_wall_time, "record_wall_time");
    take(j, "out", c.out_dir, "out");
}

// ---------------------------------------------------------------------------
// Metrics

std::uint64_t pool_checksum(std::span<const std::size_t> pool) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t idx : pool) {
        std::uint64_t v = idx;
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xFF;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

std::string to_ndjson(const MetricsRecord& r) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["lr"] = r.lr;
    j["train_loss_batch"] = r.train_loss_batch;
    j["train_err_batch"] = r.train_err_batch;
    if (r.test_err) j["test_err"] = *r.test_err;
    // JSON has no infinity; an all-sentinel selection is written as null.
    if (std::isfinite(r.mean_mms_10)) j["mean_mms_10"] = r.mean_mms_10;
    else j["mean_mms_10"] = nullptr;
    j["selected_count"] = r.selected_count;
    if (r.wall_ms) j["wall_ms"] = *r.wall_ms;
    char hex[19];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(r.pool_checksum));
    j["pool_checksum"] = std::string(hex);
    return j.dump();
}

MetricsRecord parse_metrics_line(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::parse, std::string("metrics line: ") + e.what());
    }
    MetricsRecord r;
    try {
        r.step = j.at("step").get<std::size_t>();
        r.lr = j.at("lr").get<double>();
        r.train_loss_batch = j.at("train_loss_batch").get<double>();
        r.train_err_batch = j.at("train_err_batch").get<double>();
        if (j.contains("test_err")) r.test_err = j.at("test_err").get<double>();
        const auto& m = j.at("mean_mms_10");
        r.mean_mms_10 = m.is_null() ? std::numeric_limits<double>::infinity() : m.get<double>();
        r.selected_count = j.at("selected_count").get<std::size_t>();
        if (j.contains("wall_ms")) r.wall_ms = j.at("wall_ms").get<double>();
        r.pool_checksum = std::stoull(j.at("pool_checksum").get<std::string>(), nullptr, 16);
    } catch (const std::exception& e) {
        fail(ErrorCode::parse, std::string("metrics line: ") + e.what());
    }
    return r;
}

void MetricsSink::write(const MetricsRecord& record) {
    os_ << to_ndjson(record) << '\n';
    if (record.test_err) os_.flush();
}

// ---------------------------------------------------------------------------
// Evaluation

EvalResult evaluate(const NetworkParams& params, const Dataset& ds) {
    if (ds.size() == 0) fail(ErrorCode::empty_input, "evaluate: empty dataset");
    if (ds.input_dim() != params.input_dim())
        fail(ErrorCode::dimension_mismatch, "evaluate: dataset width does not match network input");
    const ForwardResult fr = forward(params, ds.features);
    const Vector losses = cross_entropy_rows(fr.logits, ds.labels);
    std::size_t wrong = 0;
    double loss = 0.0;
    for (std::size_t r = 0; r < ds.size(); ++r) {
        if (argmax(fr.logits.row(r)) != ds.labels[r]) ++wrong;
        loss += losses[r];
    }
    const double n = static_cast<double>(ds.size());
    return {static_cast<double>(wrong) / n, loss / n};
}

// ---------------------------------------------------------------------------
// Runs

SeedStreams SeedStreams::from_master(std::uint64_t seed) {
    return {derive_seed(seed, 1), derive_seed(seed, 2), derive_seed(seed, 3), derive_seed(seed, 4),
            derive_seed(seed, 5)};
}

DatasetPair load_datasets(const RunConfig& config) {
    const auto& src = config.data;
    const auto streams = SeedStreams::from_master(config.seed);
    DatasetPair out;
    switch (src.kind) {
        case DatasetKind::gauss: {
            Rng train_rng(streams.data_train);
            Rng test_rng(streams.data_test);
            out.train = gen_gaussian_mixture(src.n_classes, src.dim, src.per_class, src.separation, train_rng,
                                             Split::train);
            out.test = gen_gaussian_mixture(src.n_classes, src.dim, src.test_per_class, src.separation,
                                            test_rng, Split::test);
            return out;
        }
        case DatasetKind::csv: {
            const std::filesystem::path dir(src.path);
            out.train = load_csv(dir / "train.csv", src.n_classes, Split::train);
            out.test = load_csv(dir / "test.csv", src.n_classes, Split::test);
            break;
        }
        case DatasetKind::idx: {
            const std::filesystem::path dir(src.path);
            out.train = load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte",
                                 src.n_classes, Split::train);
            out.test = load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte",
                                src.n_classes, Split::test);
            break;
        }
    }
    if (out.train.input_dim() != out.test.input_dim())
        fail(ErrorCode::dimension_mismatch, "train and test splits have different widths");
    if (src.standardize) {
        const auto scaler = FeatureScaler::fit(out.train);
        scaler.apply(out.train);
        scaler.apply(out.test);
    }
    return out;
}

namespace {

ScoredPool score_for(const Strategy& strategy, const ForwardResult& fr, const ScoredPool& mms,
                     std::span<const std::size_t> labels) {
    switch (strategy.kind) {
        case StrategyKind::hnm: return hnm_scores(fr, labels);
        case StrategyKind::entropy: return entropy_scores(fr);
        case StrategyKind::mms:
        case StrategyKind::uniform: break;
    }
    return mms;
}

std::filesystem::path checkpoint_path(const RunConfig& config, std::size_t step) {
    char name[32];
    std::snprintf(name, sizeof(name), "step-%08zu.ckpt", step);
    return std::filesystem::path(config.out_dir) / "checkpoints" / name;
}

}  // namespace

TrainResult train(const RunConfig& config, const DatasetPair& data, MetricsSink* sink,
                  const StepObserver& observer) {
    validate(config);
    validate(data.train);
    validate(data.test);
    if (data.train.n_classes != config.data.n_classes || data.test.n_classes != config.data.n_classes)
        throw ConfigError("classes", "dataset class count differs from configuration");
    if (data.test.input_dim() != data.train.input_dim())
        fail(ErrorCode::dimension_mismatch, "train and test splits have different widths");

    const auto streams = SeedStreams::from_master(config.seed);
    Rng init_rng(streams.init);
    Rng pool_rng(streams.pool);
    Rng select_rng(streams.select);

    const ArchSpec arch{data.train.input_dim(), config.hidden, config.data.n_classes};
    TrainResult result;
    result.params = init_params(arch, init_rng);

    PoolSampler sampler({config.pool_size, config.batch_size, config.pool_policy}, data.train.size());

    if (config.checkpoint_every > 0) {
        std::filesystem::create_directories(checkpoint_path(config, 0).parent_path());
        save_checkpoint(checkpoint_path(config, 0), result.params);
    }

    const auto t0 = std::chrono::steady_clock::now();
    std::size_t consecutive_hits = 0;
    for (std::size_t step = 1; step <= config.total_steps; ++step) {
        try {
            const std::vector<std::size_t> pool = sampler.next(pool_rng);
            ++result.stats.pool_draws;

            std::vector<std::size_t> pool_labels(pool.size());
            for (std::size_t i = 0; i < pool.size(); ++i) pool_labels[i] = data.train.labels[pool[i]];

            const Matrix pool_inputs = gather_rows(data.train.features, pool);
            const ForwardResult fr = forward(result.params, pool_inputs);
            result.stats.forward_rows += pool.size();

            const ScoredPool mms = mms_scores(fr, result.params.head);
            const ScoredPool scored = score_for(config.strategy, fr, mms, pool_labels);
            SelectionResult sel = select(scored, config.strategy, config.batch_size, select_rng);
            if (!sel.mean_mms_10) sel.mean_mms_10 = mean_mms_telemetry(mms, sel);

            if (observer) observer(StepView{step, result.params, pool, sel});

            Matrix batch_inputs(sel.indices.size(), pool_inputs.cols());
            std::vector<std::size_t> batch_labels(sel.indices.size());
            std::size_t wrong = 0;
            for (std::size_t i = 0; i < sel.indices.size(); ++i) {
                const std::size_t p = sel.indices[i];
                const auto src = pool_inputs.row(p);
                std::copy(src.begin(), src.end(), batch_inputs.row(i).begin());
                batch_labels[i] = pool_labels[p];
                if (mms.predicted[p] != pool_labels[p]) ++wrong;
            }

            const double lr = lr_at(config.lr, step);
            const LossAndGrad lg = loss_and_grad(result.params, batch_inputs, batch_labels);
            result.stats.backward_rows += batch_inputs.rows();
            result.params = sgd_step(result.params, lg.grad, lr);
            ++result.stats.updates;

            MetricsRecord rec;
            rec.step = step;
            rec.lr = lr;
            rec.train_loss_batch = lg.loss;
            rec.train_err_batch = static_cast<double>(wrong) / static_cast<double>(sel.indices.size());
            rec.mean_mms_10 = *sel.mean_mms_10;
            rec.selected_count = sel.indices.size();
            rec.pool_checksum = pool_checksum(pool);
            if (step % config.eval_every == 0 || step == config.total_steps) {
                rec.test_err = evaluate(result.params, data.test).error;
            }
            if (config.record_wall_time) {
                rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            }
            if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0)
                save_checkpoint(checkpoint_path(config, step), result.params);

            if (sink) sink->write(rec);
            result.records.push_back(rec);

            if (rec.test_err && config.early_stop_patience > 0) {
                consecutive_hits = *rec.test_err <= config.threshold ? consecutive_hits + 1 : 0;
                if (consecutive_hits >= config.early_stop_patience) break;
            }
        } catch (const Error& e) {
            throw Error(e.code(), "step " + std::to_string(step) + ": " + e.what());
        }
    }
    return result;
}

TrainResult train(const RunConfig& config, MetricsSink* sink) {
    validate(config);
    return train(config, load_datasets(config), sink);
}

std::optional<std::size_t> steps_to_threshold(const std::vector<MetricsRecord>& records, double threshold) {
    for (const auto& r : records)
        if (r.test_err && *r.test_err <= threshold) return r.step;
    return std::nullopt;
}

std::optional<double> final_test_error(const std::vector<MetricsRecord>& records) {
    for (auto it = records.rbegin(); it != records.rend(); ++it)
        if (it->test_err) return it->test_err;
    return std::nullopt;
}

}  // namespace mms
