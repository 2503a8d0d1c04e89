#include "plan/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "plan/error.hpp"
#include "plan/linalg.hpp"
#include "plan/rng.hpp"

namespace plan {

namespace {

Matrix stack_rows(const std::vector<std::vector<double>>& rows, size_t dim) {
    Matrix m(rows.size(), dim);
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < dim; ++j) m(i, j) = rows[i][j];
    return m;
}

size_t train_count(size_t total, double fraction) {
    return static_cast<size_t>(std::floor(fraction * static_cast<double>(total) + 0.5));
}

}  // namespace

TaskStream gen_gaussian_clusters(size_t n_tasks, size_t classes_per_task, size_t dim,
                                 size_t samples_per_class, double separation, uint64_t seed,
                                 double train_fraction) {
    if (n_tasks < 1 || classes_per_task < 1 || dim < 1 || samples_per_class < 1) {
        throw Error("gen_gaussian_clusters: all counts must be >= 1");
    }
    if (separation < 0.0) throw Error("gen_gaussian_clusters: separation must be >= 0");
    if (train_fraction <= 0.0 || train_fraction >= 1.0) {
        throw Error("gen_gaussian_clusters: train_fraction must be in (0, 1)");
    }

    Rng rng(seed);
    TaskStream stream;
    stream.dim = dim;
    const size_t n_train = train_count(samples_per_class, train_fraction);
    if (n_train == 0 || n_train == samples_per_class) {
        throw Error("gen_gaussian_clusters: split leaves an empty train or test set");
    }

    for (size_t t = 0; t < n_tasks; ++t) {
        TaskData task;
        task.class_begin = static_cast<int>(t * classes_per_task);
        task.class_end = static_cast<int>((t + 1) * classes_per_task);
        std::vector<std::vector<double>> train_rows, test_rows;
        std::vector<int> train_labels, test_labels;
        for (size_t c = 0; c < classes_per_task; ++c) {
            const int label = task.class_begin + static_cast<int>(c);
            // Random direction, scaled to the separation radius.
            std::vector<double> mean = gaussian_vector(rng, dim, 1.0);
            double nrm = 0.0;
            for (double v : mean) nrm += v * v;
            nrm = std::sqrt(nrm);
            for (double& v : mean) v = nrm > 0.0 ? separation * v / nrm : 0.0;

            for (size_t s = 0; s < samples_per_class; ++s) {
                std::vector<double> point = gaussian_vector(rng, dim, 1.0);
                for (size_t j = 0; j < dim; ++j) point[j] += mean[j];
                if (s < n_train) {
                    train_rows.push_back(std::move(point));
                    train_labels.push_back(label);
                } else {
                    test_rows.push_back(std::move(point));
                    test_labels.push_back(label);
                }
            }
        }
        task.train = Split{stack_rows(train_rows, dim), std::move(train_labels)};
        task.test = Split{stack_rows(test_rows, dim), std::move(test_labels)};
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

TaskStream gen_rotated_features(const TaskStream& base, std::span<const double> angles,
                                uint64_t seed) {
    if (base.tasks.empty()) throw Error("gen_rotated_features: base stream is empty");
    for (double a : angles)
        if (!std::isfinite(a)) throw Error("gen_rotated_features: non-finite angle");

    Rng rng(seed);
    const size_t dim = base.dim;
    TaskStream stream;
    stream.dim = dim;

    int next_class = 0;
    for (size_t t = 0; t < angles.size(); ++t) {
        const TaskData& src = base.tasks[t % base.tasks.size()];
        const int src_classes = src.class_end - src.class_begin;

        // Rotation by angles[t] in a random 2-plane:
        // R = I + (cos a - 1)(u u^T + v v^T) + sin a (v u^T - u v^T).
        Matrix plane = gram_schmidt(gaussian_matrix(rng, 2, dim, 1.0));
        const double ca = std::cos(angles[t]);
        const double sa = std::sin(angles[t]);
        Matrix rot = Matrix::identity(dim);
        for (size_t i = 0; i < dim; ++i) {
            for (size_t j = 0; j < dim; ++j) {
                const double u_i = plane(0, i), u_j = plane(0, j);
                const double v_i = plane(1, i), v_j = plane(1, j);
                rot(i, j) += (ca - 1.0) * (u_i * u_j + v_i * v_j) + sa * (v_i * u_j - u_i * v_j);
            }
        }

        TaskData task;
        task.class_begin = next_class;
        task.class_end = next_class + src_classes;
        auto remap = [&](const Split& s) {
            Split out;
            out.x = matmul_nt(s.x, rot);  // row vectors: x' = x R^T
            out.y.reserve(s.y.size());
            for (int y : s.y) out.y.push_back(next_class + (y - src.class_begin));
            return out;
        };
        task.train = remap(src.train);
        task.test = remap(src.test);
        next_class = task.class_end;
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

namespace {

double parse_cell(const std::string& cell, size_t line_no) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || !std::isfinite(v)) {
        throw Error("csv: non-numeric feature cell '" + cell + "' at line " +
                    std::to_string(line_no));
    }
    return v;
}

int parse_label(const std::string& cell, size_t line_no) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    const long v = std::strtol(begin, &end, 10);
    if (end == begin || *end != '\0') {
        throw Error("csv: malformed label '" + cell + "' at line " + std::to_string(line_no));
    }
    return static_cast<int>(v);
}

}  // namespace

TaskStream load_csv_stream(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw Error("csv: cannot open " + path);
    if (schema.task_labels.empty()) throw Error("csv: schema declares no tasks");
    if (schema.train_fraction <= 0.0 || schema.train_fraction >= 1.0) {
        throw Error("csv: train_fraction must be in (0, 1)");
    }

    std::map<int, size_t> label_task;
    for (size_t t = 0; t < schema.task_labels.size(); ++t) {
        for (int label : schema.task_labels[t]) {
            if (!label_task.emplace(label, t).second) {
                throw Error("csv: label " + std::to_string(label) + " mapped to two tasks");
            }
        }
    }

    std::string line;
    size_t line_no = 0;
    if (schema.has_header) {
        std::getline(in, line);
        ++line_no;
    }

    size_t dim = 0;
    std::map<int, std::vector<std::vector<double>>> by_label;  // file order preserved per label
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 2) {
            throw Error("csv: need at least one feature and a label at line " +
                        std::to_string(line_no));
        }
        if (dim == 0) dim = cells.size() - 1;
        if (cells.size() - 1 != dim) {
            throw Error("csv: expected " + std::to_string(dim) + " features at line " +
                        std::to_string(line_no) + ", got " + std::to_string(cells.size() - 1));
        }
        std::vector<double> features(dim);
        for (size_t j = 0; j < dim; ++j) features[j] = parse_cell(cells[j], line_no);
        const int label = parse_label(cells.back(), line_no);
        if (!label_task.count(label)) {
            throw Error("csv: unknown label " + std::to_string(label) + " at line " +
                        std::to_string(line_no));
        }
        by_label[label].push_back(std::move(features));
    }
    if (by_label.empty()) throw Error("csv: no data rows in " + path);

    TaskStream stream;
    stream.dim = dim;
    int next_class = 0;
    for (size_t t = 0; t < schema.task_labels.size(); ++t) {
        TaskData task;
        task.class_begin = next_class;
        std::vector<std::vector<double>> train_rows, test_rows;
        std::vector<int> train_labels, test_labels;
        std::vector<int> labels_sorted = schema.task_labels[t];
        std::sort(labels_sorted.begin(), labels_sorted.end());
        for (int label : labels_sorted) {
            auto it = by_label.find(label);
            if (it == by_label.end() || it->second.empty()) {
                throw Error("csv: no samples for declared label " + std::to_string(label));
            }
            const auto& rows = it->second;
            const size_t n_train = train_count(rows.size(), schema.train_fraction);
            if (n_train == 0 || n_train == rows.size()) {
                throw Error("csv: split leaves an empty set for label " + std::to_string(label));
            }
            for (size_t i = 0; i < rows.size(); ++i) {
                if (i < n_train) {
                    train_rows.push_back(rows[i]);
                    train_labels.push_back(next_class);
                } else {
                    test_rows.push_back(rows[i]);
                    test_labels.push_back(next_class);
                }
            }
            ++next_class;
        }
        task.class_end = next_class;
        task.train = Split{stack_rows(train_rows, dim), std::move(train_labels)};
        task.test = Split{stack_rows(test_rows, dim), std::move(test_labels)};
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

void save_csv_stream(const TaskStream& stream, const std::string& path, bool header) {
    std::ofstream out(path);
    if (!out) throw Error("csv: cannot write " + path);
    if (header) {
        for (size_t j = 0; j < stream.dim; ++j) out << "f" << j << ",";
        out << "label\n";
    }
    char buf[40];
    auto write_split = [&](const Split& split, int cls) {
        for (size_t i = 0; i < split.size(); ++i) {
            if (split.y[i] != cls) continue;
            for (size_t j = 0; j < stream.dim; ++j) {
                std::snprintf(buf, sizeof buf, "%.17g", split.x(i, j));
                out << buf << ',';
            }
            out << split.y[i] << '\n';
        }
    };
    for (const auto& task : stream.tasks) {
        for (int cls = task.class_begin; cls < task.class_end; ++cls) {
            write_split(task.train, cls);
            write_split(task.test, cls);
        }
    }
    if (!out) throw Error("csv: write failed for " + path);
}

CsvSchema schema_for_stream(const TaskStream& stream) {
    CsvSchema schema;
    schema.has_header = false;
    for (const auto& task : stream.tasks) {
        std::vector<int> labels;
        for (int c = task.class_begin; c < task.class_end; ++c) labels.push_back(c);
        schema.task_labels.push_back(std::move(labels));
        // All generated streams use a uniform per-class split; recover the
        // fraction from the first class of the first task.
    }
    const TaskData& first = stream.tasks.front();
    size_t n_train = 0, n_test = 0;
    for (int y : first.train.y)
        if (y == first.class_begin) ++n_train;
    for (int y : first.test.y)
        if (y == first.class_begin) ++n_test;
    schema.train_fraction =
        static_cast<double>(n_train) / static_cast<double>(n_train + n_test);
    return schema;
}

uint64_t stream_hash(const TaskStream& stream) {
    uint64_t h = kFnvOffset;
    h = hash_u64(h, stream.dim);
    for (const auto& task : stream.tasks) {
        h = hash_u64(h, static_cast<uint64_t>(task.class_begin));
        h = hash_u64(h, static_cast<uint64_t>(task.class_end));
        for (const Split* split : {&task.train, &task.test}) {
            h = hash_matrix(h, split->x);
            for (int y : split->y) h = hash_u64(h, static_cast<uint64_t>(y));
        }
    }
    return h;
}

}  // namespace plan
