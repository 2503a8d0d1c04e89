#include "plan/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "plan/error.hpp"

namespace plan {

namespace fs = std::filesystem;

TaskStream make_stream(const TasksConfig& cfg) {
    if (cfg.generator == "gaussian") {
        return gen_gaussian_clusters(cfg.n_tasks, cfg.classes_per_task, cfg.dim,
                                     cfg.samples_per_class, cfg.separation, cfg.seed,
                                     cfg.train_fraction);
    }
    if (cfg.generator == "rotated") {
        const TaskStream base =
            gen_gaussian_clusters(1, cfg.classes_per_task, cfg.dim, cfg.samples_per_class,
                                  cfg.separation, cfg.seed, cfg.train_fraction);
        return gen_rotated_features(base, cfg.rotation_angles, Rng(cfg.seed).child(7).seed());
    }
    if (cfg.generator == "csv") {
        CsvSchema schema;
        schema.has_header = cfg.csv_has_header;
        schema.train_fraction = cfg.train_fraction;
        for (size_t t = 0; t < cfg.n_tasks; ++t) {
            std::vector<int> labels;
            for (size_t c = 0; c < cfg.classes_per_task; ++c) {
                labels.push_back(static_cast<int>(t * cfg.classes_per_task + c));
            }
            schema.task_labels.push_back(std::move(labels));
        }
        return load_csv_stream(cfg.csv_path, schema);
    }
    throw ConfigError("unknown task generator '" + cfg.generator + "'");
}

Split make_base_task(const TasksConfig& cfg, size_t dim, size_t* n_classes) {
    const uint64_t base_seed = Rng(cfg.seed).child(0xBA5E).seed();
    const TaskStream base = gen_gaussian_clusters(1, cfg.classes_per_task, dim,
                                                  cfg.samples_per_class, cfg.separation,
                                                  base_seed, cfg.train_fraction);
    if (n_classes) *n_classes = cfg.classes_per_task;
    return base.tasks[0].train;
}

RunResult run_single(const ExperimentConfig& cfg, const TaskStream& stream, uint64_t seed) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();

    Rng rng(seed);
    Mlp model = make_mlp(stream.dim, cfg.model.hidden_dim, cfg.model.layers, rng);
    if (cfg.model.pretrain == "trained") {
        size_t base_classes = 0;
        const Split base = make_base_task(cfg.tasks, stream.dim, &base_classes);
        pretrain_backbone(model, base, base_classes, cfg.model.pretrain_epochs,
                          cfg.model.pretrain_lr, cfg.run.batch_size, rng);
    } else {
        freeze_backbone(model);
    }

    if (cfg.plan.method != Method::inc_lora) {
        for (size_t l = 0; l < model.num_layers(); ++l) {
            const size_t k = model.layer(l).in_dim();
            if (stream.num_tasks() * cfg.plan.rank > k) {
                throw Error("basis exhausted before training: layer " + std::to_string(l) +
                            " offers " + std::to_string(k) + " basis vectors for " +
                            std::to_string(stream.num_tasks() * cfg.plan.rank) +
                            " requested rows");
            }
        }
    }

    RunResult result;
    result.config = cfg;
    result.seed = seed;
    result.matrix = AccuracyMatrix(stream.num_tasks());
    result.stream_hash_hex = hash_hex(stream_hash(stream));

    auto last_checkpoint = t0;
    TaskEvalHook hook = [&](size_t completed, const Mlp& m) {
        std::vector<double> row(completed + 1);
        for (size_t j = 0; j <= completed; ++j) {
            row[j] = evaluate_accuracy(m, stream.tasks[j].test);
        }
        result.matrix.append_row(std::move(row));
        const auto now = clock::now();
        result.per_task_sec.push_back(std::chrono::duration<double>(now - last_checkpoint).count());
        last_checkpoint = now;
    };

    const MethodRunLog log = run_continual(model, stream, to_method_spec(cfg),
                                           to_plan_config(cfg, seed), rng, hook);
    result.task_epoch_loss = log.task_epoch_loss;
    result.allocations = log.allocations;
    result.acc = compute_acc(result.matrix);
    result.aaa = compute_aaa(result.matrix);
    result.total_sec = std::chrono::duration<double>(clock::now() - t0).count();
    return result;
}

namespace {

// Index-stealing worker pool; results land in their slot, so output order
// is independent of scheduling.
void run_parallel(size_t n, size_t jobs, const std::function<void(size_t)>& body) {
    jobs = std::max<size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(jobs);
    for (size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w] {
            try {
                for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

}  // namespace

ExperimentOutput run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                                size_t jobs, int verbosity) {
    validate_config(cfg);
    const TaskStream stream = make_stream(cfg.tasks);
    fs::create_directories(out_dir);

    ExperimentOutput out;
    out.results.resize(cfg.run.seeds.size(), RunResult{});
    run_parallel(cfg.run.seeds.size(), jobs, [&](size_t i) {
        out.results[i] = run_single(cfg, stream, cfg.run.seeds[i]);
        if (verbosity > 0) {
            std::ostringstream line;
            line << "seed " << cfg.run.seeds[i] << ": acc=" << format_double(out.results[i].acc)
                 << " aaa=" << format_double(out.results[i].aaa) << "\n";
            std::cerr << line.str();
        }
    });
    for (const RunResult& r : out.results) out.files.push_back(write_result_file(r, out_dir));
    return out;
}

SeedAggregate aggregate_seeds(std::span<const RunResult> results) {
    if (results.empty()) throw Error("aggregate_seeds: no results");
    const std::string reference = config_to_json(results.front().config, 0).dump();
    for (const RunResult& r : results) {
        if (config_to_json(r.config, 0).dump() != reference) {
            throw Error("aggregate_seeds: results mix different configs");
        }
    }
    std::vector<double> accs, aaas;
    for (const RunResult& r : results) {
        accs.push_back(r.acc);
        aaas.push_back(r.aaa);
    }
    return SeedAggregate{summarize(accs), summarize(aaas)};
}

AblateReport run_ablate(const ExperimentConfig& cfg, const std::string& out_dir, size_t jobs,
                        int verbosity) {
    static const Method kMethods[] = {Method::plan, Method::inc_lora, Method::plan_no_selection,
                                      Method::plan_no_perturbation};
    AblateReport report;
    for (Method m : kMethods) {
        ExperimentConfig variant = cfg;
        variant.plan.method = m;
        const ExperimentOutput out = run_experiment(variant, out_dir, jobs, verbosity);
        AblateRow row;
        row.method = to_string(m);
        row.agg = aggregate_seeds(out.results);
        row.stream_hash = out.results.front().stream_hash_hex;
        report.rows.push_back(std::move(row));
        report.run_files.insert(report.run_files.end(), out.files.begin(), out.files.end());
    }

    std::ostringstream csv;
    csv << "method,acc_mean,acc_std,aaa_mean,aaa_std,n_seeds,stream_hash\n";
    for (const AblateRow& row : report.rows) {
        csv << row.method << ',' << format_double(row.agg.acc.mean) << ','
            << format_double(row.agg.acc.stddev) << ',' << format_double(row.agg.aaa.mean) << ','
            << format_double(row.agg.aaa.stddev) << ',' << row.agg.acc.n << ','
            << row.stream_hash << '\n';
    }
    const std::string name = "ablate_" + hash_hex(config_hash(cfg)).substr(0, 8) + ".csv";
    report.csv_path = write_file_idempotent((fs::path(out_dir) / name).string(), csv.str());
    return report;
}

namespace {

void apply_axis_value(ExperimentConfig& cfg, const std::string& axis, const std::string& value) {
    if (axis == "rho") {
        char* end = nullptr;
        cfg.plan.rho = std::strtod(value.c_str(), &end);
        if (end == value.c_str() || *end != '\0') {
            throw ConfigError("sweep value '" + value + "' is not a number for axis rho");
        }
    } else if (axis == "p") {
        cfg.plan.p = parse_norm_order(value);
    } else if (axis == "S") {
        cfg.plan.window = value == "full" ? 0 : static_cast<size_t>(std::stoull(value));
    } else if (axis == "basis_kind") {
        cfg.plan.basis = parse_basis_kind(value);
    } else if (axis == "method") {
        cfg.plan.method = parse_method(value);
    } else {
        throw ConfigError("unknown sweep axis '" + axis + "'");
    }
}

double jaccard(const std::vector<size_t>& a, const std::vector<size_t>& b) {
    const std::set<size_t> sa(a.begin(), a.end());
    const std::set<size_t> sb(b.begin(), b.end());
    size_t inter = 0;
    for (size_t v : sa) inter += sb.count(v);
    const size_t uni = sa.size() + sb.size() - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

SweepReport run_sweep(const ExperimentConfig& cfg, const std::string& out_dir, size_t jobs,
                      int verbosity) {
    if (cfg.run.sweep_axis.empty()) throw ConfigError("[run] sweep_axis is required for a sweep");
    if (cfg.run.sweep_values.empty()) {
        throw ConfigError("[run] sweep_values is required for a sweep");
    }

    SweepReport report;
    report.axis = cfg.run.sweep_axis;

    std::vector<std::string> values;
    for (const std::string& v : cfg.run.sweep_values) {
        if (std::find(values.begin(), values.end(), v) != values.end()) {
            report.warnings.push_back("duplicate sweep value '" + v + "' dropped");
            continue;
        }
        values.push_back(v);
    }

    fs::create_directories(out_dir);
    std::vector<std::vector<RunResult>> per_value(values.size());
    for (size_t vi = 0; vi < values.size(); ++vi) {
        ExperimentConfig variant = cfg;
        apply_axis_value(variant, report.axis, values[vi]);
        validate_config(variant);
        const ExperimentOutput out = run_experiment(variant, out_dir, jobs, verbosity);
        per_value[vi] = out.results;
    }

    // S axis: compare the second task's selected sets against the largest
    // window ("full" when present).
    nlohmann::json selection = nlohmann::json::object();
    size_t ref_index = values.size();
    if (report.axis == "S") {
        for (size_t vi = 0; vi < values.size(); ++vi) {
            if (values[vi] == "full") ref_index = vi;
        }
        if (ref_index == values.size()) {
            size_t best = 0;
            ref_index = 0;
            for (size_t vi = 0; vi < values.size(); ++vi) {
                const size_t s = static_cast<size_t>(std::stoull(values[vi]));
                if (s >= best) {
                    best = s;
                    ref_index = vi;
                }
            }
        }
    }

    for (size_t vi = 0; vi < values.size(); ++vi) {
        SweepCell cell;
        cell.value = values[vi];
        cell.agg = aggregate_seeds(per_value[vi]);
        if (report.axis == "S") {
            double total = 0.0;
            size_t count = 0;
            nlohmann::json sets = nlohmann::json::array();
            for (size_t si = 0; si < per_value[vi].size(); ++si) {
                const auto& allocs = per_value[vi][si].allocations;
                const auto& ref_allocs = per_value[ref_index][si].allocations;
                nlohmann::json seed_sets = nlohmann::json::array();
                for (size_t layer = 0; layer < allocs.size(); ++layer) {
                    if (allocs[layer].size() < 2) continue;  // needs a second task
                    total += jaccard(allocs[layer][1], ref_allocs[layer][1]);
                    ++count;
                    seed_sets.push_back(allocs[layer][1]);
                }
                sets.push_back({{"seed", per_value[vi][si].seed}, {"task2_sets", seed_sets}});
            }
            cell.jaccard_vs_ref = count == 0 ? -1.0 : total / static_cast<double>(count);
            selection[values[vi]] = sets;
        }
        report.cells.push_back(std::move(cell));
    }

    std::ostringstream csv;
    csv << "axis,value,acc_mean,acc_std,aaa_mean,aaa_std,n_seeds";
    if (report.axis == "S") csv << ",jaccard_vs_largest";
    csv << '\n';
    for (const SweepCell& cell : report.cells) {
        csv << report.axis << ',' << cell.value << ',' << format_double(cell.agg.acc.mean) << ','
            << format_double(cell.agg.acc.stddev) << ',' << format_double(cell.agg.aaa.mean)
            << ',' << format_double(cell.agg.aaa.stddev) << ',' << cell.agg.acc.n;
        if (report.axis == "S") csv << ',' << format_double(cell.jaccard_vs_ref);
        csv << '\n';
    }
    const std::string tag = hash_hex(config_hash(cfg)).substr(0, 8);
    report.csv_path = write_file_idempotent(
        (fs::path(out_dir) / ("sweep_" + report.axis + "_" + tag + ".csv")).string(), csv.str());
    if (report.axis == "S") {
        report.selection_path = write_file_idempotent(
            (fs::path(out_dir) / ("sweep_" + report.axis + "_" + tag + "_selection.json"))
                .string(),
            selection.dump(2) + "\n");
    }
    return report;
}

nlohmann::json result_to_json(const RunResult& result, bool include_timing) {
    nlohmann::json j;
    j["schema_version"] = kResultSchemaVersion;
    j["kind"] = "run_result";
    j["config"] = config_to_json(result.config, result.seed);
    j["seed"] = result.seed;
    j["stream_hash"] = result.stream_hash_hex;
    j["accuracy_matrix"] = result.matrix.rows();
    j["metrics"] = {{"acc", result.acc}, {"aaa", result.aaa}};
    j["per_task_epoch_loss"] = result.task_epoch_loss;
    j["allocations"] = result.allocations;
    if (include_timing) {
        j["timing"] = {{"total_sec", result.total_sec}, {"per_task_sec", result.per_task_sec}};
    }
    return j;
}

std::string write_result_file(const RunResult& result, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const std::string name = "run_" + hash_hex(config_hash(result.config)).substr(0, 8) + "_s" +
                             std::to_string(result.seed) + ".json";
    const std::string path = (fs::path(out_dir) / name).string();
    // Timing is the only volatile field; a rerun of the same config is a
    // no-op when the stable content matches, keeping on-disk bytes stable.
    if (fs::exists(path)) {
        try {
            std::ifstream in(path);
            nlohmann::json existing;
            in >> existing;
            existing.erase("timing");
            if (existing.dump() == result_to_json(result, false).dump()) return path;
        } catch (const std::exception&) {
            // Unreadable or foreign content: fall through to the safe writer.
        }
    }
    return write_file_idempotent(path, result_to_json(result).dump(2) + "\n");
}

std::string write_file_idempotent(const std::string& path, const std::string& content) {
    if (fs::exists(path)) {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream existing;
        existing << in.rdbuf();
        if (existing.str() == content) return path;  // identical, leave as is
        // Diverging content: pick the first free (or identical) suffixed name.
        const fs::path p(path);
        for (int k = 1;; ++k) {
            fs::path candidate = p.parent_path() /
                                 (p.stem().string() + "-" + std::to_string(k) +
                                  p.extension().string());
            if (fs::exists(candidate)) {
                std::ifstream cin(candidate, std::ios::binary);
                std::ostringstream cexisting;
                cexisting << cin.rdbuf();
                if (cexisting.str() == content) return candidate.string();
                continue;
            }
            std::cerr << "note: " << path << " exists with different content, writing "
                      << candidate.string() << "\n";
            std::ofstream out(candidate, std::ios::binary);
            out << content;
            if (!out) throw Error("cannot write " + candidate.string());
            return candidate.string();
        }
    }
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out) throw Error("cannot write " + path);
    return path;
}

}  // namespace plan
