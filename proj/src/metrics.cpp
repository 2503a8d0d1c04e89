#include "plan/metrics.hpp"

#include <cmath>
#include <string>

#include "plan/error.hpp"

namespace plan {

void AccuracyMatrix::append_row(std::vector<double> row) {
    if (rows_.size() == n_tasks_) throw Error("AccuracyMatrix: already complete");
    if (row.size() != rows_.size() + 1) {
        throw Error("AccuracyMatrix: row " + std::to_string(rows_.size()) + " needs " +
                    std::to_string(rows_.size() + 1) + " entries, got " +
                    std::to_string(row.size()));
    }
    for (double v : row) {
        if (!(v >= 0.0 && v <= 1.0)) throw Error("AccuracyMatrix: entry outside [0, 1]");
    }
    rows_.push_back(std::move(row));
}

double AccuracyMatrix::at(size_t i, size_t j) const {
    if (i >= rows_.size() || j > i) {
        throw Error("AccuracyMatrix: (" + std::to_string(i) + ", " + std::to_string(j) +
                    ") is not a filled lower-triangle entry");
    }
    return rows_[i][j];
}

namespace {

void require_complete(const AccuracyMatrix& r, const char* op) {
    if (!r.complete()) {
        throw Error(std::string(op) + ": accuracy matrix incomplete, " +
                    std::to_string(r.rows_filled()) + " of " + std::to_string(r.n_tasks()) +
                    " rows");
    }
}

}  // namespace

double compute_acc(const AccuracyMatrix& r) {
    require_complete(r, "compute_acc");
    const auto& last = r.rows().back();
    double sum = 0.0;
    for (double v : last) sum += v;
    return sum / static_cast<double>(last.size());
}

double compute_aaa(const AccuracyMatrix& r) {
    require_complete(r, "compute_aaa");
    double outer = 0.0;
    for (const auto& row : r.rows()) {
        double inner = 0.0;
        for (double v : row) inner += v;
        outer += inner / static_cast<double>(row.size());
    }
    return outer / static_cast<double>(r.n_tasks());
}

MetricSummary summarize(std::span<const double> values) {
    if (values.empty()) throw Error("summarize: no values");
    MetricSummary s;
    s.n = values.size();
    // Constant lists short-circuit so their mean is the constant exactly.
    bool constant = true;
    for (double v : values) constant = constant && v == values.front();
    if (constant) {
        s.mean = values.front();
        s.degenerate = s.n < 2;
        return s;
    }
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(s.n);
    if (s.n < 2) {
        s.degenerate = true;
        return s;
    }
    double acc = 0.0;
    for (double v : values) acc += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(acc / static_cast<double>(s.n - 1));
    return s;
}

}  // namespace plan
