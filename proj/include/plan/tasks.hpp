#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "plan/matrix.hpp"

namespace plan {

struct Split {
    Matrix x;            // n x dim
    std::vector<int> y;  // global class ids
    size_t size() const { return y.size(); }
};

struct TaskData {
    Split train;
    Split test;
    int class_begin = 0;  // classes [class_begin, class_end)
    int class_end = 0;
};

// Class-incremental task sequence: class-id ranges are contiguous and
// disjoint across tasks, train/test splits disjoint. Immutable once built.
struct TaskStream {
    std::vector<TaskData> tasks;
    size_t dim = 0;
    size_t num_tasks() const { return tasks.size(); }
    size_t num_classes() const { return tasks.empty() ? 0 : tasks.back().class_end; }
};

// Each class is an isotropic unit-variance Gaussian around a random mean on
// the sphere of radius `separation`. Per class, samples_per_class points are
// drawn and split train/test by train_fraction (first part train).
TaskStream gen_gaussian_clusters(size_t n_tasks, size_t classes_per_task, size_t dim,
                                 size_t samples_per_class, double separation, uint64_t seed,
                                 double train_fraction = 0.8);

// Distribution-shift stream: task t is the base task's samples rotated by a
// scheduled angle in a random plane, with labels remapped to fresh class
// ids. The base stream must hold at least one task; base task t % base_n is
// reused for output task t.
TaskStream gen_rotated_features(const TaskStream& base, std::span<const double> angles,
                                uint64_t seed);

struct CsvSchema {
    bool has_header = false;
    std::vector<std::vector<int>> task_labels;  // label -> task membership
    double train_fraction = 0.8;
};

// CSV rows: feature columns then an integer label; labels are grouped into
// tasks by the schema and split per class by position (first part train).
TaskStream load_csv_stream(const std::string& path, const CsvSchema& schema);

// Writes a stream in the load_csv_stream layout: per task, per class, train
// rows then test rows. Reloading with the matching schema reproduces the
// stream exactly.
void save_csv_stream(const TaskStream& stream, const std::string& path, bool header);

CsvSchema schema_for_stream(const TaskStream& stream);

uint64_t stream_hash(const TaskStream& stream);

}  // namespace plan
