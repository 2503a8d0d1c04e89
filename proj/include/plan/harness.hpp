#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "plan/config.hpp"
#include "plan/metrics.hpp"
#include "plan/tasks.hpp"
#include "plan/variants.hpp"

namespace plan {

inline constexpr int kResultSchemaVersion = 1;

struct RunResult {
    ExperimentConfig config;
    uint64_t seed = 0;
    AccuracyMatrix matrix{0};
    double acc = 0.0;
    double aaa = 0.0;
    std::vector<std::vector<double>> task_epoch_loss;
    std::vector<std::vector<std::vector<size_t>>> allocations;  // layer -> task -> indices
    std::string stream_hash_hex;
    std::vector<double> per_task_sec;
    double total_sec = 0.0;
};

// Builds the task stream declared by the [tasks] section. Pure in the
// section contents; every method and seed of an experiment shares it.
TaskStream make_stream(const TasksConfig& cfg);

// Held-out pre-training task (disjoint classes, derived seed).
Split make_base_task(const TasksConfig& cfg, size_t dim, size_t* n_classes);

// One seeded run: backbone setup and pre-training, sequential task training
// with the configured method, evaluation over all seen classes after each
// task. Fails before training when the basis cannot host all task ranks.
RunResult run_single(const ExperimentConfig& cfg, const TaskStream& stream, uint64_t seed);

struct ExperimentOutput {
    std::vector<RunResult> results;
    std::vector<std::string> files;
};

// Runs every configured seed (optionally on parallel workers) and writes one
// result JSON per run into out_dir.
ExperimentOutput run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                                size_t jobs = 1, int verbosity = 0);

struct SeedAggregate {
    MetricSummary acc;
    MetricSummary aaa;
};

// Mean and sample standard deviation over runs sharing a config modulo seed.
SeedAggregate aggregate_seeds(std::span<const RunResult> results);

struct AblateRow {
    std::string method;
    SeedAggregate agg;
    std::string stream_hash;
};

struct AblateReport {
    std::vector<AblateRow> rows;
    std::string csv_path;
    std::vector<std::string> run_files;
};

// Runs all four methods on the identical stream and seed list.
AblateReport run_ablate(const ExperimentConfig& cfg, const std::string& out_dir, size_t jobs = 1,
                        int verbosity = 0);

struct SweepCell {
    std::string value;
    SeedAggregate agg;
    double jaccard_vs_ref = -1.0;  // S axis only; overlap with the largest window
};

struct SweepReport {
    std::string axis;
    std::vector<SweepCell> cells;
    std::string csv_path;
    std::string selection_path;  // S axis: per-value selected sets (JSON)
    std::vector<std::string> warnings;
};

// Cross product of the sweep axis values and the seed list. For the S axis
// additionally reports, per value, the second task's selected index sets and
// their Jaccard overlap against the largest window.
SweepReport run_sweep(const ExperimentConfig& cfg, const std::string& out_dir, size_t jobs = 1,
                      int verbosity = 0);

nlohmann::json result_to_json(const RunResult& result, bool include_timing = true);

// Content-addressed result file name; never silently overwrites (identical
// content is left in place, diverging content goes to a suffixed name).
std::string write_result_file(const RunResult& result, const std::string& out_dir);

std::string write_file_idempotent(const std::string& path, const std::string& content);

}  // namespace plan
