#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "plan/config.hpp"
#include "plan/error.hpp"
#include "plan/harness.hpp"
#include "plan/oracle.hpp"
#include "plan/svg.hpp"
#include "plan/tasks.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::string out;
    uint64_t seed = 0;
    bool seed_set = false;
    size_t jobs = 1;
    std::vector<std::string> plot_inputs;
};

std::string resolve_out(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("PLAN_OUT")) {
        if (*env) return env;
    }
    return "out";
}

plan::ExperimentConfig load_config(const Options& opt) {
    plan::ExperimentConfig cfg = plan::parse_config_file(opt.config);
    if (opt.seed_set) cfg.run.seeds = {opt.seed};
    return cfg;
}

std::string pm(const plan::MetricSummary& s) {
    std::ostringstream os;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.4f", s.mean);
    os << buf << " (±";
    std::snprintf(buf, sizeof buf, "%.4f", s.stddev);
    os << buf << ")";
    return os.str();
}

int cmd_run(const Options& opt, int verbosity) {
    const plan::ExperimentConfig cfg = load_config(opt);
    const std::string out_dir = resolve_out(opt.out);
    const plan::ExperimentOutput out = plan::run_experiment(cfg, out_dir, opt.jobs, verbosity);
    const plan::SeedAggregate agg = plan::aggregate_seeds(out.results);
    std::cout << "method=" << to_string(cfg.plan.method) << " seeds=" << out.results.size()
              << "\n";
    std::cout << "Acc " << pm(agg.acc) << "  AAA " << pm(agg.aaa) << "\n";
    for (const std::string& f : out.files) std::cout << "wrote " << f << "\n";
    return 0;
}

int cmd_ablate(const Options& opt, int verbosity) {
    const plan::ExperimentConfig cfg = load_config(opt);
    const std::string out_dir = resolve_out(opt.out);
    const plan::AblateReport report = plan::run_ablate(cfg, out_dir, opt.jobs, verbosity);
    std::cout << "method,acc,aaa,stream_hash\n";
    for (const auto& row : report.rows) {
        std::cout << row.method << "," << pm(row.agg.acc) << "," << pm(row.agg.aaa) << ","
                  << row.stream_hash << "\n";
    }
    std::cout << "wrote " << report.csv_path << "\n";
    return 0;
}

int cmd_sweep(const Options& opt, int verbosity) {
    const plan::ExperimentConfig cfg = load_config(opt);
    const std::string out_dir = resolve_out(opt.out);
    const plan::SweepReport report = plan::run_sweep(cfg, out_dir, opt.jobs, verbosity);
    for (const std::string& w : report.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "axis=" << report.axis << "\n";
    for (const auto& cell : report.cells) {
        std::cout << report.axis << "=" << cell.value << "  Acc " << pm(cell.agg.acc) << "  AAA "
                  << pm(cell.agg.aaa);
        if (cell.jaccard_vs_ref >= 0.0) {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.4f", cell.jaccard_vs_ref);
            std::cout << "  overlap_vs_largest " << buf;
        }
        std::cout << "\n";
    }
    std::cout << "wrote " << report.csv_path << "\n";
    if (!report.selection_path.empty()) std::cout << "wrote " << report.selection_path << "\n";
    return 0;
}

int cmd_verify(const Options& opt) {
    const plan::OracleReport report = plan::run_verify();
    nlohmann::json j;
    j["schema_version"] = 1;
    j["kind"] = "verify_report";
    j["pass"] = report.pass;
    j["failures"] = report.failures;
    nlohmann::json per_p = nlohmann::json::array();
    for (const auto& s : report.per_p) {
        per_p.push_back({{"p", s.p},
                         {"max_rel_gap", s.max_rel_gap},
                         {"max_oracle_advantage", s.max_oracle_advantage},
                         {"max_boundary_err", s.max_boundary_err}});
    }
    j["per_p"] = per_p;
    j["fd_max_rel_error"] = report.fd_max_rel_error;
    j["fd_quadratic_error"] = report.fd_quadratic_error;
    j["orthogonality_err"] = report.orthogonality_err;
    j["support_ok"] = report.support_ok;
    j["disjoint_ok"] = report.disjoint_ok;

    const std::string out_dir = resolve_out(opt.out);
    fs::create_directories(out_dir);
    const std::string path = plan::write_file_idempotent(
        (fs::path(out_dir) / "verify_report.json").string(), j.dump(2) + "\n");
    std::cout << "wrote " << path << "\n";
    if (report.pass) {
        std::cout << "verify: all checks passed\n";
        return 0;
    }
    std::cerr << "verify: " << report.failures.size() << " check(s) failed\n";
    for (const std::string& f : report.failures) std::cerr << "  " << f << "\n";
    return 1;
}

int cmd_plot(const Options& opt) {
    const std::string out_dir = resolve_out(opt.out);
    fs::create_directories(out_dir);

    std::vector<plan::ChartSeries> acc_series, aaa_series;
    std::ostringstream csv;
    csv << "metric,series,task,value\n";
    std::vector<std::string> used_labels;
    for (const std::string& path : opt.plot_inputs) {
        nlohmann::json j;
        try {
            std::ifstream in(path);
            if (!in) throw plan::Error("cannot open");
            in >> j;
            if (!j.contains("accuracy_matrix") || !j.contains("config")) {
                throw plan::Error("missing fields");
            }
        } catch (const std::exception& e) {
            throw plan::ConfigError("malformed result file " + path + ": " + e.what());
        }
        std::string label = j["config"]["plan"]["method"].get<std::string>();
        size_t dup = 0;
        for (const std::string& u : used_labels)
            if (u.rfind(label, 0) == 0) ++dup;
        if (dup > 0) label += "#" + std::to_string(dup + 1);
        used_labels.push_back(label);

        std::vector<double> acc_curve, aaa_curve;
        double running = 0.0;
        const auto& matrix = j["accuracy_matrix"];
        for (size_t i = 0; i < matrix.size(); ++i) {
            double sum = 0.0;
            for (double v : matrix[i]) sum += v;
            acc_curve.push_back(sum / static_cast<double>(matrix[i].size()));
            running += acc_curve.back();
            aaa_curve.push_back(running / static_cast<double>(i + 1));
        }
        char buf[40];
        for (size_t i = 0; i < acc_curve.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.12g", acc_curve[i]);
            csv << "acc," << label << ',' << (i + 1) << ',' << buf << '\n';
        }
        for (size_t i = 0; i < aaa_curve.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.12g", aaa_curve[i]);
            csv << "aaa," << label << ',' << (i + 1) << ',' << buf << '\n';
        }
        acc_series.push_back({label, std::move(acc_curve)});
        aaa_series.push_back({label, std::move(aaa_curve)});
    }

    const std::string acc_path = plan::write_file_idempotent(
        (fs::path(out_dir) / "acc.svg").string(),
        plan::render_line_chart("Accuracy over seen tasks", "accuracy", acc_series));
    const std::string aaa_path = plan::write_file_idempotent(
        (fs::path(out_dir) / "aaa.svg").string(),
        plan::render_line_chart("Average anytime accuracy", "accuracy", aaa_series));
    const std::string csv_path = plan::write_file_idempotent(
        (fs::path(out_dir) / "plot_data.csv").string(), csv.str());
    std::cout << "wrote " << acc_path << "\n";
    std::cout << "wrote " << aaa_path << "\n";
    std::cout << "wrote " << csv_path << "\n";
    return 0;
}

int cmd_gen_data(const Options& opt) {
    const plan::ExperimentConfig cfg = load_config(opt);
    const std::string out_dir = resolve_out(opt.out);
    fs::create_directories(out_dir);

    const plan::TaskStream stream = plan::make_stream(cfg.tasks);
    const std::string tag = plan::hash_hex(plan::stream_hash(stream)).substr(0, 8);
    const std::string csv_path = (fs::path(out_dir) / ("stream_" + tag + ".csv")).string();
    plan::save_csv_stream(stream, csv_path, false);

    const plan::CsvSchema schema = plan::schema_for_stream(stream);
    nlohmann::json j;
    j["has_header"] = schema.has_header;
    j["train_fraction"] = schema.train_fraction;
    j["task_labels"] = schema.task_labels;
    const std::string schema_path = plan::write_file_idempotent(
        (fs::path(out_dir) / ("stream_" + tag + "_schema.json")).string(), j.dump(2) + "\n");

    std::cout << "wrote " << csv_path << "\n";
    std::cout << "wrote " << schema_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PLAN: proactive low-rank subspace allocation for continual learning"};
    app.require_subcommand(1);

    Options opt;
    int verbosity = 0;
    app.add_flag("-v", verbosity, "verbose progress (-vv for more)");

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        if (needs_config) {
            sub->add_option("--config", opt.config, "experiment config file")
                ->required()
                ->check(CLI::ExistingFile);
        }
        sub->add_option("--out", opt.out, "output directory (default $PLAN_OUT or ./out)");
        sub->add_option("--jobs", opt.jobs, "parallel workers");
        sub->add_option("--seed", opt.seed, "override the config seed list with one seed")
            ->each([&](const std::string&) { opt.seed_set = true; });
    };

    CLI::App* run = app.add_subcommand("run", "run one experiment over the configured seeds");
    add_common(run, true);
    CLI::App* ablate =
        app.add_subcommand("ablate", "run all methods on the identical stream and compare");
    add_common(ablate, true);
    CLI::App* sweep = app.add_subcommand("sweep", "sweep one axis over the configured values");
    add_common(sweep, true);
    CLI::App* verify =
        app.add_subcommand("verify", "run the closed-form, gradient and invariant checks");
    add_common(verify, false);
    CLI::App* plot = app.add_subcommand("plot", "render per-task metric charts from result files");
    plot->add_option("results", opt.plot_inputs, "result JSON files")
        ->required()
        ->expected(-1);
    add_common(plot, false);
    CLI::App* gen =
        app.add_subcommand("gen-data", "generate the configured task stream as CSV + schema");
    add_common(gen, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) return cmd_run(opt, verbosity);
        if (ablate->parsed()) return cmd_ablate(opt, verbosity);
        if (sweep->parsed()) return cmd_sweep(opt, verbosity);
        if (verify->parsed()) return cmd_verify(opt);
        if (plot->parsed()) return cmd_plot(opt);
        if (gen->parsed()) return cmd_gen_data(opt);
    } catch (const plan::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
