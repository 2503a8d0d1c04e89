#pragma once

#include <span>
#include <vector>

namespace plan {

// Lower-triangular grid of test accuracies: row i holds, for each task
// j <= i, the accuracy on task j's test split after training through task i
// (predictions over all classes seen so far).
class AccuracyMatrix {
  public:
    explicit AccuracyMatrix(size_t n_tasks) : n_tasks_(n_tasks) {}

    size_t n_tasks() const { return n_tasks_; }
    size_t rows_filled() const { return rows_.size(); }
    bool complete() const { return rows_.size() == n_tasks_; }

    // Row for the next checkpoint; must hold rows_filled()+1 entries in [0,1].
    void append_row(std::vector<double> row);

    double at(size_t i, size_t j) const;
    const std::vector<std::vector<double>>& rows() const { return rows_; }

  private:
    size_t n_tasks_;
    std::vector<std::vector<double>> rows_;
};

// Mean accuracy over all tasks at the final checkpoint.
double compute_acc(const AccuracyMatrix& r);

// Mean over checkpoints of the running mean accuracy on tasks seen so far.
double compute_aaa(const AccuracyMatrix& r);

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation (n-1)
    size_t n = 0;
    bool degenerate = false;  // n < 2, stddev reported as 0
};

MetricSummary summarize(std::span<const double> values);

}  // namespace plan
