#include <doctest.h>

#include "plan/config.hpp"
#include "plan/error.hpp"

using namespace plan;

namespace {

const char* kFullConfig = R"(
# full experiment description
[model]
hidden_dim = 32
layers = 2
pretrain = "trained"
pretrain_epochs = 10
pretrain_lr = 0.02

[plan]
method = "plan_no_selection"
basis = "random_orthogonal"
p = "inf"
rho = 0.05
rank = 3
window = 25
cumulative_selection = true

[tasks]
generator = "gaussian"
n_tasks = 4
classes_per_task = 2
dim = 16
samples_per_class = 40   # split 32/8
separation = 2.5
seed = 777
train_fraction = 0.8

[run]
epochs = 3
batch_size = 16
lr = 0.005
seeds = [1, 2]
)";

}  // namespace

TEST_CASE("full config parses with every key applied") {
    const ExperimentConfig cfg = parse_config_text(kFullConfig);
    CHECK(cfg.model.hidden_dim == 32);
    CHECK(cfg.model.pretrain_epochs == 10);
    CHECK(cfg.plan.method == Method::plan_no_selection);
    CHECK(cfg.plan.basis == BasisKind::random_orthogonal);
    CHECK(cfg.plan.p == NormOrder::linf);
    CHECK(cfg.plan.rho == doctest::Approx(0.05));
    CHECK(cfg.plan.window == 25);
    CHECK(cfg.plan.cumulative_selection);
    CHECK(cfg.tasks.n_tasks == 4);
    CHECK(cfg.tasks.seed == 777);
    CHECK(cfg.run.seeds == std::vector<uint64_t>{1, 2});
}

TEST_CASE("missing sections fall back to defaults") {
    const ExperimentConfig cfg = parse_config_text("[run]\nepochs = 2\n");
    CHECK(cfg.model.hidden_dim == 64);
    CHECK(cfg.plan.method == Method::plan);
    CHECK(cfg.run.epochs == 2);
    CHECK(cfg.run.seeds.size() == 5);
}

TEST_CASE("unknown keys are rejected by name") {
    CHECK_THROWS_WITH_AS(parse_config_text("[plan]\nrho = 0.1\nmystery = 3\n"),
                         doctest::Contains("mystery"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[nonsense]\na = 1\n"),
                         doctest::Contains("nonsense"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[plan]\nrho = 0.1\nrho = 0.2\n"),
                         doctest::Contains("duplicate"), ConfigError);
}

TEST_CASE("p accepts integers and strings, window accepts full") {
    CHECK(parse_config_text("[plan]\np = 1\n").plan.p == NormOrder::l1);
    CHECK(parse_config_text("[plan]\np = \"2\"\n").plan.p == NormOrder::l2);
    CHECK(parse_config_text("[plan]\nwindow = \"full\"\n").plan.window == 0);
    CHECK(parse_config_text("[plan]\nwindow = 10\n").plan.window == 10);
    CHECK_THROWS_AS(parse_config_text("[plan]\np = \"7\"\n"), ConfigError);
}

TEST_CASE("validation catches out-of-range values") {
    CHECK_THROWS_WITH_AS(parse_config_text("[plan]\nrho = 0.0\n"), doctest::Contains("rho"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[run]\nseeds = []\n"), doctest::Contains("seeds"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[tasks]\ntrain_fraction = 1.5\n"),
                         doctest::Contains("train_fraction"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[tasks]\ngenerator = \"rotated\"\n"),
                         doctest::Contains("rotation_angles"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[run]\nsweep_axis = \"zeta\"\n"),
                         doctest::Contains("sweep_axis"), ConfigError);
}

TEST_CASE("config snapshot is canonical and seed-normalized") {
    const ExperimentConfig cfg = parse_config_text(kFullConfig);
    CHECK(config_to_json(cfg, 0).dump() == config_to_json(cfg, 0).dump());
    CHECK(config_to_json(cfg, 1).dump() != config_to_json(cfg, 2).dump());
    CHECK(config_to_json(cfg, 7)["run"]["seed"] == 7);
    CHECK(config_hash(cfg) == config_hash(cfg));

    ExperimentConfig other = cfg;
    other.plan.rho = 0.06;
    CHECK(config_hash(other) != config_hash(cfg));
}

TEST_CASE("malformed syntax is reported with line numbers") {
    CHECK_THROWS_WITH_AS(parse_config_text("[plan\nrho = 0.1\n"), doctest::Contains("line 1"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[plan]\nrho 0.1\n"), doctest::Contains("line 2"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("rho = 0.1\n"), doctest::Contains("section"),
                         ConfigError);
}
