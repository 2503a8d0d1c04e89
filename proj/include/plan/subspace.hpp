#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "plan/linalg.hpp"
#include "plan/matrix.hpp"
#include "plan/rng.hpp"

namespace plan {

enum class BasisKind { standard, random_orthogonal, gradient_svd };

BasisKind parse_basis_kind(const std::string& s);
std::string to_string(BasisKind k);

// Pool of orthonormal basis vectors for one adapted weight, with per-task
// allocation bookkeeping. Rows of `basis` are the basis vectors; `available`
// holds the row indices not yet assigned to any task. Allocated index sets
// are pairwise disjoint and, together with `available`, partition {0..k-1}.
class BasisRegistry {
  public:
    static BasisRegistry standard(size_t dim);
    static BasisRegistry random_orthogonal(size_t dim, Rng& rng);
    // Basis from the right singular vectors of a (d x k) gradient, completed
    // to a full orthonormal set when the gradient has fewer than k rows.
    static BasisRegistry gradient_svd(const Matrix& grad_w0);

    size_t dim() const { return dim_; }
    BasisKind kind() const { return kind_; }
    const Matrix& basis() const { return basis_; }
    const std::vector<size_t>& available() const { return available_; }
    const std::vector<std::vector<size_t>>& allocations() const { return allocations_; }

    // Claims the first r1 basis vectors for the initial task.
    std::vector<size_t> allocate_first(size_t r1);
    // Claims an explicit index set; every index must currently be available.
    void allocate(const std::vector<size_t>& indices);

    // Stacked rows for a past allocation (the task's A matrix, r x k).
    Matrix task_basis(size_t task) const;
    Matrix rows_at(const std::vector<size_t>& indices) const;
    // Rows still available to future tasks (|available| x k).
    Matrix residual_basis() const;

  private:
    BasisRegistry(size_t dim, BasisKind kind, Matrix basis);

    size_t dim_;
    BasisKind kind_;
    Matrix basis_;  // k x k, orthonormal rows; identity for the standard kind
    std::vector<size_t> available_;
    std::vector<std::vector<size_t>> allocations_;
};

// Sliding window of per-step winner sets: at each training step, the
// `next_rank` available basis indices whose perturbation columns have the
// smallest 2-norms. window == 0 keeps the full history.
class PerturbationTracker {
  public:
    PerturbationTracker(size_t window, size_t next_rank)
        : window_(window), next_rank_(next_rank) {}

    size_t window() const { return window_; }
    size_t next_rank() const { return next_rank_; }
    bool empty() const { return winners_.empty(); }
    size_t size() const { return winners_.size(); }
    const std::deque<std::vector<size_t>>& entries() const { return winners_; }

    void push(std::vector<size_t> winner_set);
    void clear() { winners_.clear(); }

    // Appearance counts per basis index over the buffered winner sets.
    std::map<size_t, size_t> frequencies() const;

  private:
    size_t window_;
    size_t next_rank_;
    std::deque<std::vector<size_t>> winners_;
};

// Closed-form maximizer of <eps, g> over the flattened l_p ball of radius
// rho. p = 2 rescales g to the sphere; p = inf takes rho * sign(g); p = 1
// puts the whole budget on the single entry of largest magnitude (ties
// break toward the lowest flat index). Zero gradient yields zero.
Matrix solve_epsilon(const Matrix& g, double rho, NormOrder p);

// g = gradW * M^T where M stacks the available basis rows. The standard
// basis reduces to a column gather; other kinds use the explicit product.
Matrix gather_gradient(const Matrix& grad_w, const BasisRegistry& reg);
// Explicit-product reference path, valid for every basis kind.
Matrix gather_gradient_general(const Matrix& grad_w, const BasisRegistry& reg);

// deltaW = eps * M, scattering the perturbation back into weight space.
Matrix scatter_to_weight(const Matrix& eps, const BasisRegistry& reg);
Matrix scatter_to_weight_general(const Matrix& eps, const BasisRegistry& reg);

// The tracker.next_rank() available indices with the smallest perturbation
// column norms (ties toward the lowest registry index), in ascending order.
std::vector<size_t> winner_indices(const Matrix& eps, const BasisRegistry& reg,
                                   size_t next_rank);

// Computes the winner set for eps and pushes it into the tracker.
void record_winners(PerturbationTracker& tracker, const Matrix& eps, const BasisRegistry& reg);

// Picks the r_next indices with the highest winner frequencies (ties toward
// the lowest index), allocates them in the registry and returns them sorted.
std::vector<size_t> select_next(PerturbationTracker& tracker, BasisRegistry& reg, size_t r_next);

}  // namespace plan
