#pragma once

#include <functional>
#include <vector>

#include "plan/trainer.hpp"

namespace plan {

struct MethodRunLog {
    std::vector<std::vector<double>> task_epoch_loss;           // task -> epoch losses
    std::vector<std::vector<std::vector<size_t>>> allocations;  // layer -> task -> indices
};

// Called after each completed task; used by the harness to fill the
// accuracy matrix row for that checkpoint.
using TaskEvalHook = std::function<void(size_t completed_task, const Mlp& model)>;

// Runs one method over the full stream. All variants share this path, so
// comparisons isolate the method itself.
MethodRunLog run_continual(Mlp& model, const TaskStream& stream, const MethodSpec& spec,
                           const PlanConfig& cfg, Rng& rng, const TaskEvalHook& hook = {});

// Per-task unconstrained LoRA trained with plain Adam and merged when the
// task completes.
MethodRunLog run_inc_lora(Mlp& model, const TaskStream& stream, const PlanConfig& cfg, Rng& rng,
                          const TaskEvalHook& hook = {});

// Full method except A_{t+1} is drawn uniformly from the available set.
MethodRunLog run_plan_no_selection(Mlp& model, const TaskStream& stream, BasisKind basis,
                                   const PlanConfig& cfg, Rng& rng, const TaskEvalHook& hook = {});

// Full method except the update uses the unperturbed gradient; perturbations
// are still computed to drive the selection mechanism.
MethodRunLog run_plan_no_perturbation(Mlp& model, const TaskStream& stream, BasisKind basis,
                                      const PlanConfig& cfg, Rng& rng,
                                      const TaskEvalHook& hook = {});

}  // namespace plan
