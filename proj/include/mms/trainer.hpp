#pragma once

#include "mms/data.hpp"
#include "mms/error.hpp"
#include "mms/model.hpp"
#include "mms/selection.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

namespace mms {

// Piecewise-constant learning rate. At step == milestones[j] the rate
// rates[j + 1] is already in effect.
struct LrSchedule {
    std::vector<double> rates;
    std::vector<std::size_t> milestones;

    static LrSchedule constant(double rate);
    // Early-drop regime for ResNet-44 on CIFAR10 at batch 64.
    static LrSchedule cifar10_early();
    // Early-drop regime for WRN-28-10 on CIFAR100 at batch 64.
    static LrSchedule cifar100_early();

    friend bool operator==(const LrSchedule&, const LrSchedule&) = default;
};

void validate(const LrSchedule& schedule);
double lr_at(const LrSchedule& schedule, std::size_t step);

enum class DatasetKind { gauss, csv, idx };

struct DataSource {
    DatasetKind kind = DatasetKind::gauss;
    std::string path;  // directory for csv/idx
    std::size_t n_classes = 10;
    std::size_t dim = 32;
    std::size_t per_class = 1000;
    std::size_t test_per_class = 200;
    double separation = 3.5;
    bool standardize = true;  // csv/idx only
};

struct RunConfig {
    DataSource data;
    std::size_t hidden = 0;  // 0 → linear architecture
    Strategy strategy{StrategyKind::uniform};
    std::size_t pool_size = 640;
    std::size_t batch_size = 64;
    PoolPolicy pool_policy = PoolPolicy::fresh;
    std::size_t total_steps = 1000;
    std::size_t eval_every = 100;
    LrSchedule lr = LrSchedule::constant(0.05);
    std::uint64_t seed = 1;
    double threshold = 0.05;
    std::size_t early_stop_patience = 0;  // 0 disables early stop
    std::size_t checkpoint_every = 0;     // 0 disables periodic checkpoints
    bool record_wall_time = false;
    std::string out_dir = "out";  // periodic checkpoints land in <out_dir>/checkpoints
};

// Invalid configuration; field() names the offending setting.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(ErrorCode::config, field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

void validate(const RunConfig& config);

nlohmann::json to_json(const RunConfig& config);
// Fields absent from `j` keep the values already in `config`.
void merge_json(RunConfig& config, const nlohmann::json& j);

std::string to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(const std::string& name);

// One row of the metrics log.
struct MetricsRecord {
    std::size_t step = 0;
    double lr = 0.0;
    double train_loss_batch = 0.0;
    double train_err_batch = 0.0;
    std::optional<double> test_err;
    double mean_mms_10 = 0.0;
    std::size_t selected_count = 0;
    std::optional<double> wall_ms;
    std::uint64_t pool_checksum = 0;  // FNV-1a over the step's pool indices

    friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

// Serialized as one JSON object per line. test_err appears only on evaluation
// steps; wall_ms only when the run records wall time.
std::string to_ndjson(const MetricsRecord& record);
MetricsRecord parse_metrics_line(const std::string& line);

std::uint64_t pool_checksum(std::span<const std::size_t> pool);

struct EvalResult {
    double error = 0.0;  // fraction misclassified
    double loss = 0.0;   // mean cross-entropy, nats
};

EvalResult evaluate(const NetworkParams& params, const Dataset& ds);

// Sub-stream seeds derived from the master seed. Strategy choice never
// touches the data, init or pool streams, so runs with the same seed and
// different strategies see identical pools.
struct SeedStreams {
    std::uint64_t data_train;
    std::uint64_t data_test;
    std::uint64_t init;
    std::uint64_t pool;
    std::uint64_t select;

    static SeedStreams from_master(std::uint64_t seed);
};

struct DatasetPair {
    Dataset train;
    Dataset test;
};

DatasetPair load_datasets(const RunConfig& config);

struct RunStats {
    std::size_t updates = 0;
    std::size_t pool_draws = 0;
    std::size_t forward_rows = 0;   // rows through the forward-and-score pass
    std::size_t backward_rows = 0;  // rows through loss_and_grad
};

struct TrainResult {
    std::vector<MetricsRecord> records;
    NetworkParams params;
    RunStats stats;
};

// Called once per step, after selection and before the update.
struct StepView {
    std::size_t step;
    const NetworkParams& params;
    const std::vector<std::size_t>& pool;
    const SelectionResult& selection;
};
using StepObserver = std::function<void(const StepView&)>;

// Receives each record as it is produced.
class MetricsSink {
public:
    explicit MetricsSink(std::ostream& os) : os_(os) {}
    void write(const MetricsRecord& record);

private:
    std::ostream& os_;
};

// Per step t = 1..total_steps: draw a pool of B → forward → score → select b
// → loss_and_grad on the selection → sgd_step with lr_at(t). The test split
// is evaluated every eval_every steps and at the last step.
TrainResult train(const RunConfig& config, const DatasetPair& data, MetricsSink* sink = nullptr,
                  const StepObserver& observer = {});

TrainResult train(const RunConfig& config, MetricsSink* sink = nullptr);

// First evaluated step with test_err <= threshold.
std::optional<std::size_t> steps_to_threshold(const std::vector<MetricsRecord>& records, double threshold);

// Last evaluated test error.
std::optional<double> final_test_error(const std::vector<MetricsRecord>& records);

}  // namespace mms
