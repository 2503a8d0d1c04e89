#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "plan/nn.hpp"
#include "plan/subspace.hpp"
#include "plan/tasks.hpp"

namespace plan {

enum class Method { plan, inc_lora, plan_no_selection, plan_no_perturbation };

Method parse_method(const std::string& s);
std::string to_string(Method m);

struct MethodSpec {
    Method method = Method::plan;
    BasisKind basis = BasisKind::standard;
};

struct PlanConfig {
    double rho = 0.01;
    NormOrder p = NormOrder::l2;
    size_t rank = 4;    // uniform task rank; also the rank reserved next
    size_t window = 50; // sliding window; 0 keeps the full history
    bool cumulative_selection = false;
    double lr = 0.01;
    size_t epochs = 6;
    size_t batch_size = 32;
    uint64_t seed = 1;
};

struct LayerPlanState {
    BasisRegistry registry;
    PerturbationTracker tracker;
};

struct TaskOptimizers {
    std::vector<AdamState> live_b;
    std::vector<AdamState> live_a;  // used by inc_lora, which trains A as well
    AdamState head_w;
    AdamState head_b;
    AdamHyper hyper;
};

// One robust training step on a mini-batch: backprop at the unperturbed
// weights, gather each layer's gradient into its unallocated subspace, solve
// the worst-case perturbation on the l_p ball, record the least-perturbed
// indices, then (when perturb_update) recompute gradients at the perturbed
// weights and Adam-update the live adapters and head block from them.
// Returns the unperturbed batch loss.
double perturbed_grad_step(Mlp& model, const Matrix& x, std::span<const int> y,
                           std::vector<LayerPlanState>& states, const PlanConfig& cfg,
                           bool perturb_update, TaskOptimizers& opt);

// Plain LoRA step: no perturbation, trains both live A and B plus the head.
double inc_lora_step(Mlp& model, const Matrix& x, std::span<const int> y, TaskOptimizers& opt);

// Accuracy over a split, predictions taken over every class seen so far.
double evaluate_accuracy(const Mlp& model, const Split& split);

// Drives one method over a task sequence: subspace allocation/selection at
// each task boundary, epoch training in between, freezing at task end.
class ContinualTrainer {
  public:
    ContinualTrainer(Mlp& model, MethodSpec spec, PlanConfig cfg, Rng& rng);

    // Allocates the task's subspace and installs a fresh live adapter per
    // layer plus a new head block. For the gradient_svd basis the first
    // task's training split must be supplied at task 0.
    void begin_task(size_t task_index, size_t new_classes,
                    const Split* first_task_train = nullptr);

    // Runs the configured epochs over shuffled mini-batches, then freezes
    // the live adapters and head block. Returns per-epoch mean loss.
    std::vector<double> train_task(const Split& train);

    const std::vector<LayerPlanState>& layer_states() const { return states_; }
    // layer -> task -> allocated indices (empty for inc_lora).
    const std::vector<std::vector<std::vector<size_t>>>& allocation_log() const {
        return alloc_log_;
    }

  private:
    void init_registries(const Split* first_task_train);

    Mlp& model_;
    MethodSpec spec_;
    PlanConfig cfg_;
    Rng& rng_;
    std::vector<LayerPlanState> states_;
    TaskOptimizers opt_;
    std::vector<std::vector<std::vector<size_t>>> alloc_log_;
    size_t tasks_begun_ = 0;
};

}  // namespace plan
