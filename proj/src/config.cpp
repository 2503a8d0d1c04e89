#include "plan/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "plan/error.hpp"

namespace plan {

namespace {

struct TomlValue {
    enum class Kind { str, integer, real, boolean, array };
    Kind kind = Kind::str;
    std::string raw;  // original token (strings unquoted)
    int64_t i = 0;
    double f = 0.0;
    bool b = false;
    std::vector<TomlValue> items;
};

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_str = !in_str;
        if (line[i] == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

TomlValue parse_scalar(const std::string& token, size_t line_no) {
    TomlValue v;
    if (token.size() >= 2 && token.front() == '"' && token.back() == '"') {
        v.kind = TomlValue::Kind::str;
        v.raw = token.substr(1, token.size() - 2);
        return v;
    }
    if (token == "true" || token == "false") {
        v.kind = TomlValue::Kind::boolean;
        v.b = token == "true";
        v.raw = token;
        return v;
    }
    const char* begin = token.c_str();
    char* end = nullptr;
    if (token.find_first_of(".eE") == std::string::npos) {
        const long long iv = std::strtoll(begin, &end, 10);
        if (end != begin && *end == '\0') {
            v.kind = TomlValue::Kind::integer;
            v.i = iv;
            v.raw = token;
            return v;
        }
    }
    end = nullptr;
    const double fv = std::strtod(begin, &end);
    if (end != begin && *end == '\0') {
        v.kind = TomlValue::Kind::real;
        v.f = fv;
        v.raw = token;
        return v;
    }
    throw ConfigError("config line " + std::to_string(line_no) + ": cannot parse value '" +
                      token + "'");
}

TomlValue parse_value(const std::string& token, size_t line_no) {
    if (!token.empty() && token.front() == '[') {
        if (token.back() != ']') {
            throw ConfigError("config line " + std::to_string(line_no) + ": unterminated array");
        }
        TomlValue v;
        v.kind = TomlValue::Kind::array;
        v.raw = token;
        const std::string inner = token.substr(1, token.size() - 2);
        std::string cur;
        bool in_str = false;
        auto flush = [&]() {
            const std::string t = trim(cur);
            if (!t.empty()) v.items.push_back(parse_scalar(t, line_no));
            cur.clear();
        };
        for (char c : inner) {
            if (c == '"') in_str = !in_str;
            if (c == ',' && !in_str) {
                flush();
            } else {
                cur += c;
            }
        }
        flush();
        return v;
    }
    return parse_scalar(token, line_no);
}

using Section = std::map<std::string, std::pair<TomlValue, size_t>>;  // key -> (value, line)

std::map<std::string, Section> parse_sections(const std::string& text) {
    static const std::set<std::string> known_sections = {"model", "plan", "tasks", "run"};
    std::map<std::string, Section> sections;
    std::istringstream in(text);
    std::string line;
    std::string current;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(strip_comment(line));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": malformed section header");
            }
            current = trim(line.substr(1, line.size() - 2));
            if (!known_sections.count(current)) {
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": unknown section [" + current + "]");
            }
            sections[current];
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        if (current.empty()) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": key outside any section");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key or value");
        }
        auto [it, inserted] = sections[current].emplace(key, std::make_pair(
                                                                 parse_value(value, line_no),
                                                                 line_no));
        if (!inserted) {
            throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" +
                              key + "' in [" + current + "]");
        }
    }
    return sections;
}

// Pulls typed values out of a section and rejects leftovers by name.
class SectionReader {
  public:
    SectionReader(std::string name, Section section)
        : name_(std::move(name)), section_(std::move(section)) {}

    bool has(const std::string& key) const { return section_.count(key) > 0; }

    void get_size(const std::string& key, size_t& out) {
        if (auto* v = take(key)) {
            if (v->kind != TomlValue::Kind::integer || v->i < 0) bad(key, "a non-negative integer");
            out = static_cast<size_t>(v->i);
        }
    }

    void get_u64(const std::string& key, uint64_t& out) {
        if (auto* v = take(key)) {
            if (v->kind != TomlValue::Kind::integer || v->i < 0) bad(key, "a non-negative integer");
            out = static_cast<uint64_t>(std::strtoull(v->raw.c_str(), nullptr, 10));
        }
    }

    void get_double(const std::string& key, double& out) {
        if (auto* v = take(key)) {
            if (v->kind == TomlValue::Kind::real) {
                out = v->f;
            } else if (v->kind == TomlValue::Kind::integer) {
                out = static_cast<double>(v->i);
            } else {
                bad(key, "a number");
            }
        }
    }

    void get_bool(const std::string& key, bool& out) {
        if (auto* v = take(key)) {
            if (v->kind != TomlValue::Kind::boolean) bad(key, "true or false");
            out = v->b;
        }
    }

    void get_string(const std::string& key, std::string& out) {
        if (auto* v = take(key)) {
            if (v->kind != TomlValue::Kind::str) bad(key, "a quoted string");
            out = v->raw;
        }
    }

    // Accepts an integer, or a string such as "2" / "inf" / "full".
    void get_token(const std::string& key, std::string& out) {
        if (auto* v = take(key)) {
            if (v->kind == TomlValue::Kind::str || v->kind == TomlValue::Kind::integer) {
                out = v->raw;
            } else {
                bad(key, "a string or integer");
            }
        }
    }

    void get_u64_array(const std::string& key, std::vector<uint64_t>& out) {
        if (auto* v = take(key)) {
            if (v->kind != TomlValue::Kind::array) bad(key, "an array");
            out.clear();
            for (const auto& item : v->items) {
                if (item.kind != TomlValue::Kind::integer || item.i < 0) {
                    bad(key, "an array of non-negative integers");
                }
                out.push_back(static_cast<uint64_t>(std::strtoull(item.raw.c_str(), nullptr, 10)));
            }
        }
    }

    void get_double_array(const std::string& key, std::vector<double>& out) {
        if (auto* v = take(key)) {
            if (v->kind != TomlValue::Kind::array) bad(key, "an array");
            out.clear();
            for (const auto& item : v->items) {
                if (item.kind == TomlValue::Kind::real) {
                    out.push_back(item.f);
                } else if (item.kind == TomlValue::Kind::integer) {
                    out.push_back(static_cast<double>(item.i));
                } else {
                    bad(key, "an array of numbers");
                }
            }
        }
    }

    void get_token_array(const std::string& key, std::vector<std::string>& out) {
        if (auto* v = take(key)) {
            if (v->kind != TomlValue::Kind::array) bad(key, "an array");
            out.clear();
            for (const auto& item : v->items) out.push_back(item.raw);
        }
    }

    void finish() const {
        if (!section_.empty()) {
            throw ConfigError("[" + name_ + "] unknown key '" + section_.begin()->first +
                              "' (line " + std::to_string(section_.begin()->second.second) + ")");
        }
    }

  private:
    TomlValue* take(const std::string& key) {
        auto it = section_.find(key);
        if (it == section_.end()) return nullptr;
        taken_.push_back(it->second.first);
        section_.erase(it);
        return &taken_.back();
    }

    [[noreturn]] void bad(const std::string& key, const std::string& expected) const {
        throw ConfigError("[" + name_ + "] key '" + key + "' must be " + expected);
    }

    std::string name_;
    Section section_;
    std::vector<TomlValue> taken_;
};

size_t parse_window_token(const std::string& token) {
    if (token == "full") return 0;
    const char* begin = token.c_str();
    char* end = nullptr;
    const long long v = std::strtoll(begin, &end, 10);
    if (end == begin || *end != '\0' || v < 0) {
        throw ConfigError("window must be a non-negative integer or \"full\", got '" + token +
                          "'");
    }
    return static_cast<size_t>(v);
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    auto sections = parse_sections(text);
    ExperimentConfig cfg;

    {
        SectionReader r("model", sections.count("model") ? sections["model"] : Section{});
        r.get_size("hidden_dim", cfg.model.hidden_dim);
        r.get_size("layers", cfg.model.layers);
        r.get_string("pretrain", cfg.model.pretrain);
        r.get_size("pretrain_epochs", cfg.model.pretrain_epochs);
        r.get_double("pretrain_lr", cfg.model.pretrain_lr);
        r.finish();
    }
    {
        SectionReader r("plan", sections.count("plan") ? sections["plan"] : Section{});
        std::string method, basis, p, window;
        r.get_string("method", method);
        r.get_string("basis", basis);
        r.get_token("p", p);
        r.get_double("rho", cfg.plan.rho);
        r.get_size("rank", cfg.plan.rank);
        r.get_token("window", window);
        r.get_bool("cumulative_selection", cfg.plan.cumulative_selection);
        r.finish();
        if (!method.empty()) cfg.plan.method = parse_method(method);
        if (!basis.empty()) cfg.plan.basis = parse_basis_kind(basis);
        if (!p.empty()) cfg.plan.p = parse_norm_order(p);
        if (!window.empty()) cfg.plan.window = parse_window_token(window);
    }
    {
        SectionReader r("tasks", sections.count("tasks") ? sections["tasks"] : Section{});
        r.get_string("generator", cfg.tasks.generator);
        r.get_size("n_tasks", cfg.tasks.n_tasks);
        r.get_size("classes_per_task", cfg.tasks.classes_per_task);
        r.get_size("dim", cfg.tasks.dim);
        r.get_size("samples_per_class", cfg.tasks.samples_per_class);
        r.get_double("separation", cfg.tasks.separation);
        r.get_u64("seed", cfg.tasks.seed);
        r.get_double("train_fraction", cfg.tasks.train_fraction);
        r.get_double_array("rotation_angles", cfg.tasks.rotation_angles);
        r.get_string("csv_path", cfg.tasks.csv_path);
        r.get_bool("csv_has_header", cfg.tasks.csv_has_header);
        r.finish();
    }
    {
        SectionReader r("run", sections.count("run") ? sections["run"] : Section{});
        r.get_size("epochs", cfg.run.epochs);
        r.get_size("batch_size", cfg.run.batch_size);
        r.get_double("lr", cfg.run.lr);
        r.get_u64_array("seeds", cfg.run.seeds);
        r.get_string("sweep_axis", cfg.run.sweep_axis);
        r.get_token_array("sweep_values", cfg.run.sweep_values);
        r.finish();
    }

    validate_config(cfg);
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.model.hidden_dim < 1) throw ConfigError("[model] hidden_dim must be >= 1");
    if (cfg.model.layers < 1) throw ConfigError("[model] layers must be >= 1");
    if (cfg.model.pretrain != "trained" && cfg.model.pretrain != "random") {
        throw ConfigError("[model] pretrain must be \"trained\" or \"random\"");
    }
    if (cfg.model.pretrain == "trained" && cfg.model.pretrain_epochs < 1) {
        throw ConfigError("[model] pretrain_epochs must be >= 1");
    }
    if (cfg.model.pretrain_lr <= 0.0) throw ConfigError("[model] pretrain_lr must be > 0");

    if (cfg.plan.rho <= 0.0) throw ConfigError("[plan] rho must be > 0");
    if (cfg.plan.rank < 1) throw ConfigError("[plan] rank must be >= 1");

    const std::string& gen = cfg.tasks.generator;
    if (gen != "gaussian" && gen != "rotated" && gen != "csv") {
        throw ConfigError("[tasks] generator must be gaussian, rotated or csv");
    }
    if (cfg.tasks.n_tasks < 1) throw ConfigError("[tasks] n_tasks must be >= 1");
    if (cfg.tasks.classes_per_task < 1) throw ConfigError("[tasks] classes_per_task must be >= 1");
    if (cfg.tasks.dim < 1) throw ConfigError("[tasks] dim must be >= 1");
    if (cfg.tasks.samples_per_class < 2) {
        throw ConfigError("[tasks] samples_per_class must be >= 2");
    }
    if (cfg.tasks.separation < 0.0) throw ConfigError("[tasks] separation must be >= 0");
    if (cfg.tasks.train_fraction <= 0.0 || cfg.tasks.train_fraction >= 1.0) {
        throw ConfigError("[tasks] train_fraction must be in (0, 1)");
    }
    if (gen == "rotated" && cfg.tasks.rotation_angles.empty()) {
        throw ConfigError("[tasks] rotation_angles is required by the rotated generator");
    }
    if (gen == "csv" && cfg.tasks.csv_path.empty()) {
        throw ConfigError("[tasks] csv_path is required by the csv generator");
    }

    if (cfg.run.epochs < 1) throw ConfigError("[run] epochs must be >= 1");
    if (cfg.run.batch_size < 1) throw ConfigError("[run] batch_size must be >= 1");
    if (cfg.run.lr <= 0.0) throw ConfigError("[run] lr must be > 0");
    if (cfg.run.seeds.empty()) throw ConfigError("[run] seeds must not be empty");
    const std::string& axis = cfg.run.sweep_axis;
    if (!axis.empty() && axis != "rho" && axis != "p" && axis != "S" && axis != "basis_kind" &&
        axis != "method") {
        throw ConfigError("[run] sweep_axis must be one of rho, p, S, basis_kind, method");
    }
}

nlohmann::json config_to_json(const ExperimentConfig& cfg, uint64_t run_seed) {
    nlohmann::json j;
    j["model"] = {{"hidden_dim", cfg.model.hidden_dim},
                  {"layers", cfg.model.layers},
                  {"pretrain", cfg.model.pretrain},
                  {"pretrain_epochs", cfg.model.pretrain_epochs},
                  {"pretrain_lr", cfg.model.pretrain_lr}};
    j["plan"] = {{"method", to_string(cfg.plan.method)},
                 {"basis", to_string(cfg.plan.basis)},
                 {"p", to_string(cfg.plan.p)},
                 {"rho", cfg.plan.rho},
                 {"rank", cfg.plan.rank},
                 {"window", cfg.plan.window},
                 {"cumulative_selection", cfg.plan.cumulative_selection}};
    j["tasks"] = {{"generator", cfg.tasks.generator},
                  {"n_tasks", cfg.tasks.n_tasks},
                  {"classes_per_task", cfg.tasks.classes_per_task},
                  {"dim", cfg.tasks.dim},
                  {"samples_per_class", cfg.tasks.samples_per_class},
                  {"separation", cfg.tasks.separation},
                  {"seed", cfg.tasks.seed},
                  {"train_fraction", cfg.tasks.train_fraction},
                  {"rotation_angles", cfg.tasks.rotation_angles},
                  {"csv_path", cfg.tasks.csv_path},
                  {"csv_has_header", cfg.tasks.csv_has_header}};
    j["run"] = {{"epochs", cfg.run.epochs},
                {"batch_size", cfg.run.batch_size},
                {"lr", cfg.run.lr},
                {"seed", run_seed}};
    return j;
}

uint64_t config_hash(const ExperimentConfig& cfg) {
    const std::string s = config_to_json(cfg, 0).dump();
    return hash_bytes(kFnvOffset, s.data(), s.size());
}

PlanConfig to_plan_config(const ExperimentConfig& cfg, uint64_t seed) {
    PlanConfig pc;
    pc.rho = cfg.plan.rho;
    pc.p = cfg.plan.p;
    pc.rank = cfg.plan.rank;
    pc.window = cfg.plan.window;
    pc.cumulative_selection = cfg.plan.cumulative_selection;
    pc.lr = cfg.run.lr;
    pc.epochs = cfg.run.epochs;
    pc.batch_size = cfg.run.batch_size;
    pc.seed = seed;
    return pc;
}

MethodSpec to_method_spec(const ExperimentConfig& cfg) {
    return MethodSpec{cfg.plan.method, cfg.plan.basis};
}

}  // namespace plan
