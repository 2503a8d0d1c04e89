#include "plan/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "plan/error.hpp"

namespace plan {

BasisKind parse_basis_kind(const std::string& s) {
    if (s == "standard") return BasisKind::standard;
    if (s == "random_orthogonal") return BasisKind::random_orthogonal;
    if (s == "gradient_svd") return BasisKind::gradient_svd;
    throw ConfigError("unknown basis kind '" + s + "'");
}

std::string to_string(BasisKind k) {
    switch (k) {
        case BasisKind::standard: return "standard";
        case BasisKind::random_orthogonal: return "random_orthogonal";
        case BasisKind::gradient_svd: return "gradient_svd";
    }
    return "?";
}

BasisRegistry::BasisRegistry(size_t dim, BasisKind kind, Matrix basis)
    : dim_(dim), kind_(kind), basis_(std::move(basis)) {
    if (basis_.rows() != dim_ || basis_.cols() != dim_) {
        throw ShapeError("BasisRegistry: basis must be " + std::to_string(dim_) + "x" +
                         std::to_string(dim_) + ", got " + basis_.shape_str());
    }
    available_.resize(dim_);
    std::iota(available_.begin(), available_.end(), size_t{0});
}

BasisRegistry BasisRegistry::standard(size_t dim) {
    return BasisRegistry(dim, BasisKind::standard, Matrix::identity(dim));
}

BasisRegistry BasisRegistry::random_orthogonal(size_t dim, Rng& rng) {
    Matrix g = gaussian_matrix(rng, dim, dim, 1.0);
    return BasisRegistry(dim, BasisKind::random_orthogonal, gram_schmidt(g));
}

BasisRegistry BasisRegistry::gradient_svd(const Matrix& grad_w0) {
    const Svd svd = svd_small(grad_w0);
    Matrix basis = svd.v.rows() == grad_w0.cols()
                       ? svd.v
                       : complete_orthonormal_rows(svd.v, grad_w0.cols());
    return BasisRegistry(grad_w0.cols(), BasisKind::gradient_svd, std::move(basis));
}

std::vector<size_t> BasisRegistry::allocate_first(size_t r1) {
    if (!allocations_.empty()) {
        throw Error("BasisRegistry: allocate_first on a registry that already has allocations");
    }
    if (r1 > dim_) {
        throw Error("BasisRegistry: rank " + std::to_string(r1) + " exceeds dimension " +
                    std::to_string(dim_));
    }
    std::vector<size_t> first(r1);
    std::iota(first.begin(), first.end(), size_t{0});
    allocate(first);
    return first;
}

void BasisRegistry::allocate(const std::vector<size_t>& indices) {
    std::vector<size_t> sorted = indices;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw Error("BasisRegistry: duplicate index in allocation");
    }
    for (size_t idx : sorted) {
        if (!std::binary_search(available_.begin(), available_.end(), idx)) {
            throw Error("BasisRegistry: index " + std::to_string(idx) + " is not available");
        }
    }
    std::vector<size_t> remaining;
    remaining.reserve(available_.size() - sorted.size());
    std::set_difference(available_.begin(), available_.end(), sorted.begin(), sorted.end(),
                        std::back_inserter(remaining));
    available_ = std::move(remaining);
    allocations_.push_back(std::move(sorted));
}

Matrix BasisRegistry::rows_at(const std::vector<size_t>& indices) const {
    Matrix out(indices.size(), dim_);
    for (size_t r = 0; r < indices.size(); ++r) {
        for (size_t c = 0; c < dim_; ++c) out(r, c) = basis_(indices[r], c);
    }
    return out;
}

Matrix BasisRegistry::task_basis(size_t task) const {
    if (task >= allocations_.size()) {
        throw Error("BasisRegistry: no allocation for task " + std::to_string(task));
    }
    return rows_at(allocations_[task]);
}

Matrix BasisRegistry::residual_basis() const { return rows_at(available_); }

void PerturbationTracker::push(std::vector<size_t> winner_set) {
    winners_.push_back(std::move(winner_set));
    if (window_ > 0 && winners_.size() > window_) winners_.pop_front();
}

std::map<size_t, size_t> PerturbationTracker::frequencies() const {
    std::map<size_t, size_t> h;
    for (const auto& set : winners_)
        for (size_t idx : set) ++h[idx];
    return h;
}

Matrix solve_epsilon(const Matrix& g, double rho, NormOrder p) {
    Matrix eps(g.rows(), g.cols());
    switch (p) {
        case NormOrder::l2: {
            const double nrm = flatten_norm(g, NormOrder::l2);
            if (nrm == 0.0) return eps;
            const double scale = rho / nrm;
            auto ed = eps.data();
            auto gd = g.data();
            for (size_t i = 0; i < ed.size(); ++i) ed[i] = scale * gd[i];
            return eps;
        }
        case NormOrder::linf: {
            auto ed = eps.data();
            auto gd = g.data();
            for (size_t i = 0; i < ed.size(); ++i) {
                ed[i] = gd[i] > 0.0 ? rho : (gd[i] < 0.0 ? -rho : 0.0);
            }
            return eps;
        }
        case NormOrder::l1: {
            auto gd = g.data();
            size_t best = 0;
            double best_abs = 0.0;
            for (size_t i = 0; i < gd.size(); ++i) {
                const double a = std::abs(gd[i]);
                if (a > best_abs) {
                    best_abs = a;
                    best = i;
                }
            }
            if (best_abs == 0.0) return eps;
            eps.data()[best] = gd[best] > 0.0 ? rho : -rho;
            return eps;
        }
    }
    return eps;
}

Matrix gather_gradient(const Matrix& grad_w, const BasisRegistry& reg) {
    if (grad_w.cols() != reg.dim()) {
        throw ShapeError("gather_gradient: gradient " + grad_w.shape_str() +
                         " does not match basis dim " + std::to_string(reg.dim()));
    }
    const auto& avail = reg.available();
    if (avail.empty()) throw Error("gather_gradient: basis exhausted (no available vectors)");
    if (reg.kind() != BasisKind::standard) return gather_gradient_general(grad_w, reg);
    Matrix g(grad_w.rows(), avail.size());
    for (size_t i = 0; i < grad_w.rows(); ++i) {
        for (size_t j = 0; j < avail.size(); ++j) g(i, j) = grad_w(i, avail[j]);
    }
    return g;
}

Matrix gather_gradient_general(const Matrix& grad_w, const BasisRegistry& reg) {
    if (reg.available().empty()) {
        throw Error("gather_gradient: basis exhausted (no available vectors)");
    }
    return matmul_nt(grad_w, reg.residual_basis());
}

Matrix scatter_to_weight(const Matrix& eps, const BasisRegistry& reg) {
    const auto& avail = reg.available();
    if (eps.cols() != avail.size()) {
        throw ShapeError("scatter_to_weight: eps " + eps.shape_str() + " does not match " +
                         std::to_string(avail.size()) + " available vectors");
    }
    if (reg.kind() != BasisKind::standard) return scatter_to_weight_general(eps, reg);
    Matrix dw(eps.rows(), reg.dim());
    for (size_t i = 0; i < eps.rows(); ++i) {
        for (size_t j = 0; j < avail.size(); ++j) dw(i, avail[j]) = eps(i, j);
    }
    return dw;
}

Matrix scatter_to_weight_general(const Matrix& eps, const BasisRegistry& reg) {
    return matmul(eps, reg.residual_basis());
}

std::vector<size_t> winner_indices(const Matrix& eps, const BasisRegistry& reg,
                                   size_t next_rank) {
    const auto& avail = reg.available();
    if (eps.cols() != avail.size()) {
        throw ShapeError("winner_indices: eps has " + std::to_string(eps.cols()) +
                         " columns for " + std::to_string(avail.size()) + " available vectors");
    }
    const size_t take = std::min(next_rank, avail.size());
    std::vector<std::pair<double, size_t>> norms(avail.size());
    for (size_t j = 0; j < avail.size(); ++j) {
        double acc = 0.0;
        for (size_t i = 0; i < eps.rows(); ++i) acc += eps(i, j) * eps(i, j);
        norms[j] = {std::sqrt(acc), avail[j]};
    }
    std::sort(norms.begin(), norms.end());  // norm asc, then registry index asc
    std::vector<size_t> winners(take);
    for (size_t j = 0; j < take; ++j) winners[j] = norms[j].second;
    std::sort(winners.begin(), winners.end());
    return winners;
}

void record_winners(PerturbationTracker& tracker, const Matrix& eps, const BasisRegistry& reg) {
    tracker.push(winner_indices(eps, reg, tracker.next_rank()));
}

std::vector<size_t> select_next(PerturbationTracker& tracker, BasisRegistry& reg, size_t r_next) {
    if (tracker.empty()) throw Error("select_next: tracker holds no recorded steps");
    const auto& avail = reg.available();
    if (avail.size() < r_next) {
        throw Error("select_next: basis exhausted, " + std::to_string(avail.size()) +
                    " available for rank " + std::to_string(r_next));
    }
    const auto freq = tracker.frequencies();
    std::vector<std::pair<int64_t, size_t>> ranked;  // (-count, index) for stable min-sort
    ranked.reserve(avail.size());
    for (size_t idx : avail) {
        const auto it = freq.find(idx);
        const int64_t count = it == freq.end() ? 0 : static_cast<int64_t>(it->second);
        ranked.emplace_back(-count, idx);
    }
    std::sort(ranked.begin(), ranked.end());
    std::vector<size_t> chosen(r_next);
    for (size_t i = 0; i < r_next; ++i) chosen[i] = ranked[i].second;
    std::sort(chosen.begin(), chosen.end());
    reg.allocate(chosen);
    return chosen;
}

}  // namespace plan
