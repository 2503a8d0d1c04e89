#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "plan/trainer.hpp"

namespace plan {

struct ModelConfig {
    size_t hidden_dim = 64;
    size_t layers = 2;
    std::string pretrain = "trained";  // trained | random
    size_t pretrain_epochs = 30;
    double pretrain_lr = 0.01;
};

struct TasksConfig {
    std::string generator = "gaussian";  // gaussian | rotated | csv
    size_t n_tasks = 5;
    size_t classes_per_task = 4;
    size_t dim = 64;
    size_t samples_per_class = 250;
    double separation = 3.0;
    uint64_t seed = 1234;
    double train_fraction = 0.8;
    std::vector<double> rotation_angles;  // required by the rotated generator
    std::string csv_path;
    bool csv_has_header = false;
};

struct PlanSection {
    Method method = Method::plan;
    BasisKind basis = BasisKind::standard;
    NormOrder p = NormOrder::l2;
    double rho = 0.01;
    size_t rank = 4;
    size_t window = 50;  // 0 = full history
    bool cumulative_selection = false;
};

struct RunSection {
    size_t epochs = 6;
    size_t batch_size = 32;
    double lr = 0.01;
    std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
    std::string sweep_axis;                 // rho | p | S | basis_kind | method
    std::vector<std::string> sweep_values;  // raw tokens, parsed per axis
};

struct ExperimentConfig {
    ModelConfig model;
    PlanSection plan;
    TasksConfig tasks;
    RunSection run;
};

// TOML-style subset: [section] headers, key = value lines, # comments.
// Values: quoted strings, booleans, integers, floats and flat arrays.
// Unknown sections or keys are rejected by name.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

void validate_config(const ExperimentConfig& cfg);

// Canonical snapshot with the per-run seed substituted in; seed 0 is the
// convention for seed-independent comparisons and hashing.
nlohmann::json config_to_json(const ExperimentConfig& cfg, uint64_t run_seed);
uint64_t config_hash(const ExperimentConfig& cfg);

PlanConfig to_plan_config(const ExperimentConfig& cfg, uint64_t seed);
MethodSpec to_method_spec(const ExperimentConfig& cfg);

}  // namespace plan
