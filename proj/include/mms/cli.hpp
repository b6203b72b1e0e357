#pragma once

#include "mms/data.hpp"
#include "mms/model.hpp"
#include "mms/selection.hpp"
#include "mms/trainer.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mms::cli {

enum class ExitCode : int {
    ok = 0,
    failure = 1,          // runtime error, or a sweep member failed
    usage = 2,            // unknown flag / subcommand, missing argument
    bad_value = 3,        // flag value of the wrong type or outside its choices
    missing_dataset = 4,  // dataset files not found
    invalid_config = 5,   // values parse but violate a config invariant
};

class CliError : public std::runtime_error {
public:
    CliError(ExitCode exit, std::string code, std::string field, const std::string& what)
        : std::runtime_error(what), exit_(exit), code_(std::move(code)), field_(std::move(field)) {}

    ExitCode exit_code() const noexcept { return exit_; }
    const std::string& code() const noexcept { return code_; }
    const std::string& field() const noexcept { return field_; }

private:
    ExitCode exit_;
    std::string code_;
    std::string field_;
};

// Builds a RunConfig from `run` flags (no subcommand word). Values from
// --config FILE are applied first; explicit flags override them.
RunConfig parse_config(const std::vector<std::string>& args);

struct SummaryRow {
    std::string strategy;
    std::optional<std::size_t> steps_to_threshold;
    std::optional<double> final_test_err;
    std::size_t steps_run = 0;
    double threshold = 0.0;
    bool ok = true;
    std::string message;
};

void write_summary(std::ostream& os, const std::vector<SummaryRow>& rows);

// Runs one experiment into `dir`: config.json, metrics.ndjson, final.ckpt
// (plus checkpoints/ when enabled).
SummaryRow run_experiment(RunConfig config, const std::filesystem::path& dir);

struct SweepOutcome {
    std::vector<SummaryRow> rows;
    bool any_failed = false;
};

// One run per strategy under <out>/<strategy>/, same seed for all (paired
// pools), summary table at <out>/summary.tsv.
SweepOutcome run_sweep(const RunConfig& base, const std::vector<Strategy>& strategies);

struct PoolRow {
    std::size_t index = 0;
    double score = 0.0;
    std::size_t predicted = 0;
    std::size_t runner_up = 0;
};

// Scores every row of `ds` and orders the table in the strategy's selection
// direction (ties by index).
std::vector<PoolRow> score_pool(const NetworkParams& params, const Dataset& ds, const Strategy& strategy);

void write_pool_table(std::ostream& os, const std::vector<PoolRow>& rows);

// Full command-line entry point; returns the process exit code.
int run_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mms::cli
