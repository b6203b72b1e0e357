#include "mms/cli.hpp"

#include "mms/error.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>

#include "CLI11.hpp"
#include "json.hpp"

namespace mms::cli {

namespace {

// Option storage shared by run, sweep, score-pool and gen-data.
struct Flags {
    std::string config_file;
    std::string dataset;
    std::string data_path;
    std::size_t classes = 0;
    std::size_t dim = 0;
    std::size_t per_class = 0;
    std::size_t test_per_class = 0;
    double separation = 0.0;
    bool no_standardize = false;
    std::string arch;
    std::string strategy;
    std::vector<std::string> strategies;
    std::size_t pool = 0;
    std::size_t b = 0;
    std::string pool_policy;
    std::size_t steps = 0;
    std::size_t eval_every = 0;
    std::string lr_preset;
    std::vector<double> lr_rates;
    std::vector<std::size_t> lr_milestones;
    std::uint64_t seed = 0;
    double threshold = 0.0;
    std::size_t early_stop = 0;
    std::size_t checkpoint_every = 0;
    bool timing = false;
    std::string out;
    // score-pool
    std::string checkpoint;
    std::string split = "train";

    std::map<std::string, CLI::Option*> opts;

    bool given(const std::string& name) const {
        const auto it = opts.find(name);
        return it != opts.end() && it->second->count() > 0;
    }
};

void add_data_flags(CLI::App& app, Flags& f) {
    f.opts["config"] = app.add_option("--config", f.config_file, "JSON config file (flags override it)");
    f.opts["dataset"] = app.add_option("--dataset", f.dataset, "gauss | csv | idx")
                            ->check(CLI::IsMember({"gauss", "csv", "idx"}));
    f.opts["data-path"] = app.add_option("--data-path", f.data_path, "directory holding the csv/idx splits");
    f.opts["classes"] = app.add_option("--classes", f.classes, "number of classes");
    f.opts["dim"] = app.add_option("--dim", f.dim, "gauss: feature dimension");
    f.opts["per-class"] = app.add_option("--per-class", f.per_class, "gauss: training rows per class");
    f.opts["test-per-class"] = app.add_option("--test-per-class", f.test_per_class, "gauss: test rows per class");
    f.opts["separation"] = app.add_option("--separation", f.separation, "gauss: distance of class means from origin");
    f.opts["no-standardize"] = app.add_flag("--no-standardize", f.no_standardize,
                                            "csv/idx: skip per-feature standardization");
    f.opts["seed"] = app.add_option("--seed", f.seed, "master seed");
}

void add_train_flags(CLI::App& app, Flags& f) {
    f.opts["arch"] = app.add_option("--arch", f.arch, "linear | mlp:H");
    f.opts["pool"] = app.add_option("--pool", f.pool, "candidate pool size B");
    f.opts["b"] = app.add_option("--b", f.b, "selected batch size b");
    f.opts["pool-policy"] = app.add_option("--pool-policy", f.pool_policy, "fresh | epoch")
                                ->check(CLI::IsMember({"fresh", "epoch"}));
    f.opts["steps"] = app.add_option("--steps", f.steps, "optimizer steps");
    f.opts["eval-every"] = app.add_option("--eval-every", f.eval_every, "test evaluation cadence");
    f.opts["lr-preset"] = app.add_option("--lr-preset", f.lr_preset, "cifar10-early | cifar100-early | const:x");
    f.opts["lr-rates"] = app.add_option("--lr-rates", f.lr_rates, "piecewise rates")->delimiter(',');
    f.opts["lr-milestones"] = app.add_option("--lr-milestones", f.lr_milestones, "rate-change steps")->delimiter(',');
    f.opts["threshold"] = app.add_option("--threshold", f.threshold, "test error target for steps-to-threshold");
    f.opts["early-stop"] = app.add_option("--early-stop", f.early_stop,
                                          "stop after K consecutive evals at or below threshold (0 = off)");
    f.opts["checkpoint-every"] = app.add_option("--checkpoint-every", f.checkpoint_every,
                                                "write checkpoints every K steps (0 = final only)");
    f.opts["timing"] = app.add_flag("--timing", f.timing, "record wall_ms in metrics");
    f.opts["out"] = app.add_option("--out", f.out, "output directory");
}

LrSchedule parse_lr_preset(const std::string& s) {
    if (s == "cifar10-early") return LrSchedule::cifar10_early();
    if (s == "cifar100-early") return LrSchedule::cifar100_early();
    if (s.rfind("const:", 0) == 0) {
        const std::string v = s.substr(6);
        double rate = 0.0;
        const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), rate);
        if (ec == std::errc{} && p == v.data() + v.size() && !v.empty()) return LrSchedule::constant(rate);
    }
    throw CliError(ExitCode::bad_value, "bad_value", "lr-preset",
                   "expected cifar10-early, cifar100-early or const:x, got '" + s + "'");
}

nlohmann::json read_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw CliError(ExitCode::usage, "io", "config", "cannot open config file " + path);
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw CliError(ExitCode::bad_value, "parse", "config", std::string("invalid JSON: ") + e.what());
    }
}

// Layers: defaults ← config file ← explicit flags.
RunConfig build_config(const Flags& f) {
    RunConfig c;
    try {
        if (f.given("config")) merge_json(c, read_config_file(f.config_file));

        nlohmann::json j = nlohmann::json::object();
        nlohmann::json d = nlohmann::json::object();
        if (f.given("dataset")) d["kind"] = f.dataset;
        if (f.given("data-path")) d["path"] = f.data_path;
        if (f.given("classes")) d["classes"] = f.classes;
        if (f.given("dim")) d["dim"] = f.dim;
        if (f.given("per-class")) d["per_class"] = f.per_class;
        if (f.given("test-per-class")) d["test_per_class"] = f.test_per_class;
        if (f.given("separation")) d["separation"] = f.separation;
        if (f.given("no-standardize")) d["standardize"] = !f.no_standardize;
        if (!d.empty()) j["dataset"] = d;
        if (f.given("arch")) j["arch"] = f.arch;
        if (f.given("strategy")) j["strategy"] = f.strategy;
        if (f.given("pool")) j["pool"] = f.pool;
        if (f.given("b")) j["b"] = f.b;
        if (f.given("pool-policy")) j["pool_policy"] = f.pool_policy;
        if (f.given("steps")) j["steps"] = f.steps;
        if (f.given("eval-every")) j["eval_every"] = f.eval_every;
        if (f.given("seed")) j["seed"] = f.seed;
        if (f.given("threshold")) j["threshold"] = f.threshold;
        if (f.given("early-stop")) j["early_stop_patience"] = f.early_stop;
        if (f.given("checkpoint-every")) j["checkpoint_every"] = f.checkpoint_every;
        if (f.given("timing")) j["record_wall_time"] = f.timing;
        if (f.given("out")) j["out"] = f.out;
        merge_json(c, j);

        if (f.given("lr-preset") && (f.given("lr-rates") || f.given("lr-milestones")))
            throw CliError(ExitCode::invalid_config, "config", "lr-preset",
                           "--lr-preset cannot be combined with --lr-rates/--lr-milestones");
        if (f.given("lr-preset")) c.lr = parse_lr_preset(f.lr_preset);
        if (f.given("lr-milestones") && !f.given("lr-rates"))
            throw CliError(ExitCode::invalid_config, "config", "lr-rates", "--lr-milestones needs --lr-rates");
        if (f.given("lr-rates")) c.lr = LrSchedule{f.lr_rates, f.given("lr-milestones") ? f.lr_milestones
                                                                                        : std::vector<std::size_t>{}};
        validate(c);
    } catch (const ConfigError& e) {
        throw CliError(ExitCode::invalid_config, "config", e.field(), e.what());
    }
    return c;
}

void require_dataset_files(const RunConfig& c) {
    const std::filesystem::path dir(c.data.path);
    std::vector<std::filesystem::path> needed;
    if (c.data.kind == DatasetKind::csv) {
        needed = {dir / "train.csv", dir / "test.csv"};
    } else if (c.data.kind == DatasetKind::idx) {
        needed = {dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", dir / "t10k-images-idx3-ubyte",
                  dir / "t10k-labels-idx1-ubyte"};
    }
    for (const auto& p : needed) {
        if (!std::filesystem::exists(p))
            throw CliError(ExitCode::missing_dataset, "missing_dataset", "data-path", "dataset file not found: " + p.string());
    }
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    std::replace(s.begin(), s.end(), '"', '\'');
    return s;
}

void report(std::ostream& err, const std::string& code, const std::string& field, const std::string& what) {
    err << "error code=" << code << " field=" << (field.empty() ? "-" : field) << " message=\"" << one_line(what)
        << "\"\n";
}

void write_config_snapshot(const RunConfig& c, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) fail(ErrorCode::io, "cannot write " + path.string());
    os << to_json(c).dump(2) << '\n';
}

CLI::App make_app(const std::string& name, const std::string& description) {
    return CLI::App(description, name);
}

void parse_into(CLI::App& app, const std::vector<std::string>& args) {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
}

[[noreturn]] void rethrow_parse(const CLI::ParseError& e) {
    const bool bad_value = dynamic_cast<const CLI::ConversionError*>(&e) != nullptr ||
                           dynamic_cast<const CLI::ValidationError*>(&e) != nullptr;
    throw CliError(bad_value ? ExitCode::bad_value : ExitCode::usage, bad_value ? "bad_value" : "usage", "",
                   e.what());
}

}  // namespace

RunConfig parse_config(const std::vector<std::string>& args) {
    Flags f;
    auto app = make_app("run", "train one configuration");
    add_data_flags(app, f);
    add_train_flags(app, f);
    f.opts["strategy"] = app.add_option("--strategy", f.strategy, "uniform | mms | hnm | entropy")
                             ->check(CLI::IsMember({"uniform", "mms", "hnm", "entropy"}));
    try {
        parse_into(app, args);
    } catch (const CLI::ParseError& e) {
        rethrow_parse(e);
    }
    return build_config(f);
}

void write_summary(std::ostream& os, const std::vector<SummaryRow>& rows) {
    os << "strategy\tsteps_to_threshold\tfinal_test_err\tsteps_run\tthreshold\tstatus\n";
    for (const auto& r : rows) {
        os << r.strategy << '\t' << (r.steps_to_threshold ? std::to_string(*r.steps_to_threshold) : "NA") << '\t'
           << (r.final_test_err ? format_double(*r.final_test_err) : "NA") << '\t' << r.steps_run << '\t'
           << format_double(r.threshold) << '\t' << (r.ok ? "ok" : "failed: " + one_line(r.message)) << '\n';
    }
}

SummaryRow run_experiment(RunConfig config, const std::filesystem::path& dir) {
    config.out_dir = dir.string();
    validate(config);
    std::filesystem::create_directories(dir);
    write_config_snapshot(config, dir / "config.json");

    std::ofstream metrics(dir / "metrics.ndjson", std::ios::trunc);
    if (!metrics) fail(ErrorCode::io, "cannot write " + (dir / "metrics.ndjson").string());
    MetricsSink sink(metrics);
    const TrainResult result = train(config, &sink);
    metrics.flush();
    save_checkpoint(dir / "final.ckpt", result.params);

    SummaryRow row;
    row.strategy = std::string(to_string(config.strategy.kind));
    row.steps_to_threshold = steps_to_threshold(result.records, config.threshold);
    row.final_test_err = final_test_error(result.records);
    row.steps_run = result.stats.updates;
    row.threshold = config.threshold;
    return row;
}

SweepOutcome run_sweep(const RunConfig& base, const std::vector<Strategy>& strategies) {
    if (strategies.empty()) throw CliError(ExitCode::usage, "usage", "strategies", "empty strategy list");
    const std::filesystem::path out(base.out_dir);
    std::filesystem::create_directories(out);
    write_config_snapshot(base, out / "config.json");

    SweepOutcome outcome;
    for (const auto& s : strategies) {
        RunConfig c = base;
        c.strategy = s;
        try {
            outcome.rows.push_back(run_experiment(c, out / std::string(to_string(s.kind))));
        } catch (const std::exception& e) {
            SummaryRow row;
            row.strategy = std::string(to_string(s.kind));
            row.threshold = base.threshold;
            row.ok = false;
            row.message = e.what();
            outcome.rows.push_back(row);
            outcome.any_failed = true;
        }
    }
    std::ofstream summary(out / "summary.tsv", std::ios::trunc);
    write_summary(summary, outcome.rows);
    return outcome;
}

std::vector<PoolRow> score_pool(const NetworkParams& params, const Dataset& ds, const Strategy& strategy) {
    if (ds.size() == 0) fail(ErrorCode::empty_input, "score_pool: empty dataset");
    if (ds.input_dim() != params.input_dim())
        fail(ErrorCode::dimension_mismatch, "score_pool: checkpoint expects " + std::to_string(params.input_dim()) +
                                                " inputs, dataset has " + std::to_string(ds.input_dim()));
    if (ds.n_classes != params.n_classes())
        fail(ErrorCode::dimension_mismatch, "score_pool: checkpoint has " + std::to_string(params.n_classes()) +
                                                " classes, dataset has " + std::to_string(ds.n_classes));
    if (strategy.direction() == Direction::none)
        fail(ErrorCode::invalid_argument, "score_pool: uniform strategy has no score");

    const ForwardResult fr = forward(params, ds.features);
    ScoredPool pool;
    switch (strategy.kind) {
        case StrategyKind::hnm: pool = hnm_scores(fr, ds.labels); break;
        case StrategyKind::entropy: pool = entropy_scores(fr); break;
        default: pool = mms_scores(fr, params.head); break;
    }
    std::vector<PoolRow> rows;
    rows.reserve(pool.size());
    for (std::size_t k : rank_pool(pool, strategy.direction()))
        rows.push_back({k, pool.scores[k], pool.top2[k].first, pool.top2[k].second});
    return rows;
}

void write_pool_table(std::ostream& os, const std::vector<PoolRow>& rows) {
    os << "index\tscore\tpredicted\trunner_up\n";
    for (const auto& r : rows)
        os << r.index << '\t' << format_double(r.score) << '\t' << r.predicted << '\t' << r.runner_up << '\n';
}

namespace {

int cmd_run(const std::vector<std::string>& args, std::ostream& out) {
    const RunConfig c = parse_config(args);
    require_dataset_files(c);
    const SummaryRow row = run_experiment(c, c.out_dir);
    std::ofstream summary(std::filesystem::path(c.out_dir) / "summary.tsv", std::ios::trunc);
    write_summary(summary, {row});
    write_summary(out, {row});
    return 0;
}

int cmd_sweep(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Flags f;
    auto app = make_app("sweep", "paired runs over several strategies");
    add_data_flags(app, f);
    add_train_flags(app, f);
    f.opts["strategies"] = app.add_option("--strategies", f.strategies, "comma-separated strategies")
                               ->delimiter(',')
                               ->required();
    try {
        parse_into(app, args);
    } catch (const CLI::ParseError& e) {
        rethrow_parse(e);
    }
    const RunConfig base = build_config(f);
    require_dataset_files(base);
    std::vector<Strategy> strategies;
    for (const auto& s : f.strategies) {
        if (s.empty()) continue;
        try {
            strategies.push_back(parse_strategy(s));
        } catch (const Error& e) {
            throw CliError(ExitCode::bad_value, "bad_value", "strategies", e.what());
        }
    }
    const SweepOutcome outcome = run_sweep(base, strategies);
    write_summary(out, outcome.rows);
    for (const auto& r : outcome.rows)
        if (!r.ok) report(err, "run_failed", "strategy", r.strategy + ": " + r.message);
    return outcome.any_failed ? static_cast<int>(ExitCode::failure) : 0;
}

int cmd_score_pool(const std::vector<std::string>& args, std::ostream& out) {
    Flags f;
    auto app = make_app("score-pool", "score a dataset split with a checkpoint");
    add_data_flags(app, f);
    f.opts["checkpoint"] = app.add_option("--checkpoint", f.checkpoint, "parameter checkpoint")->required();
    f.opts["strategy"] = app.add_option("--strategy", f.strategy, "mms | hnm | entropy")
                             ->check(CLI::IsMember({"mms", "hnm", "entropy"}));
    f.opts["split"] = app.add_option("--split", f.split, "train | test")->check(CLI::IsMember({"train", "test"}));
    f.opts["out"] = app.add_option("--out", f.out, "write the table here instead of stdout");
    try {
        parse_into(app, args);
    } catch (const CLI::ParseError& e) {
        rethrow_parse(e);
    }
    const RunConfig c = build_config(f);
    require_dataset_files(c);
    const Strategy strategy = f.given("strategy") ? parse_strategy(f.strategy) : Strategy{StrategyKind::mms};
    const NetworkParams params = load_checkpoint(f.checkpoint);
    const DatasetPair data = load_datasets(c);
    const auto rows = score_pool(params, f.split == "test" ? data.test : data.train, strategy);
    if (f.given("out")) {
        std::ofstream os(f.out, std::ios::trunc);
        if (!os) fail(ErrorCode::io, "cannot write " + f.out);
        write_pool_table(os, rows);
    } else {
        write_pool_table(out, rows);
    }
    return 0;
}

int cmd_gen_data(const std::vector<std::string>& args, std::ostream& out) {
    Flags f;
    auto app = make_app("gen-data", "write a Gaussian-mixture dataset as train.csv/test.csv");
    add_data_flags(app, f);
    f.opts["out"] = app.add_option("--out", f.out, "output directory")->required();
    try {
        parse_into(app, args);
    } catch (const CLI::ParseError& e) {
        rethrow_parse(e);
    }
    RunConfig c = build_config(f);
    if (c.data.kind != DatasetKind::gauss)
        throw CliError(ExitCode::invalid_config, "config", "dataset", "gen-data only generates gauss datasets");
    const DatasetPair data = load_datasets(c);
    const std::filesystem::path dir(f.out);
    std::filesystem::create_directories(dir);
    write_csv(dir / "train.csv", data.train);
    write_csv(dir / "test.csv", data.test);
    out << "wrote " << data.train.size() << " train and " << data.test.size() << " test rows to " << dir.string()
        << '\n';
    return 0;
}

constexpr const char* kUsage =
    "usage: mms-select <run|sweep|score-pool|gen-data> [flags]\n"
    "       mms-select <subcommand> --help\n";

}  // namespace

int run_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    if (args.empty()) {
        err << kUsage;
        report(err, "usage", "subcommand", "missing subcommand");
        return static_cast<int>(ExitCode::usage);
    }
    const std::string& sub = args.front();
    const std::vector<std::string> rest(args.begin() + 1, args.end());
    const bool wants_help = std::find_if(rest.begin(), rest.end(), [](const std::string& a) {
                                return a == "--help" || a == "-h";
                            }) != rest.end();
    try {
        if (wants_help) {
            Flags f;
            auto app = make_app(sub, "mms-select " + sub);
            add_data_flags(app, f);
            if (sub == "run" || sub == "sweep") add_train_flags(app, f);
            out << app.help();
            return 0;
        }
        if (sub == "run") return cmd_run(rest, out);
        if (sub == "sweep") return cmd_sweep(rest, out, err);
        if (sub == "score-pool") return cmd_score_pool(rest, out);
        if (sub == "gen-data") return cmd_gen_data(rest, out);
        if (sub == "--help" || sub == "-h") {
            out << kUsage;
            return 0;
        }
        report(err, "usage", "subcommand", "unknown subcommand '" + sub + "'");
        return static_cast<int>(ExitCode::usage);
    } catch (const CliError& e) {
        report(err, e.code(), e.field(), e.what());
        return static_cast<int>(e.exit_code());
    } catch (const ConfigError& e) {
        report(err, "config", e.field(), e.what());
        return static_cast<int>(ExitCode::invalid_config);
    } catch (const Error& e) {
        report(err, std::string(to_string(e.code())), "", e.what());
        return static_cast<int>(ExitCode::failure);
    } catch (const std::exception& e) {
        report(err, "internal", "", e.what());
        return static_cast<int>(ExitCode::failure);
    }
}

}  // namespace mms::cli
