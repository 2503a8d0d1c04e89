#include "plan/variants.hpp"

#include "plan/error.hpp"

namespace plan {

MethodRunLog run_continual(Mlp& model, const TaskStream& stream, const MethodSpec& spec,
                           const PlanConfig& cfg, Rng& rng, const TaskEvalHook& hook) {
    if (stream.tasks.empty()) throw Error("run_continual: empty task stream");
    ContinualTrainer trainer(model, spec, cfg, rng);
    MethodRunLog log;
    for (size_t t = 0; t < stream.tasks.size(); ++t) {
        const TaskData& task = stream.tasks[t];
        const size_t new_classes = static_cast<size_t>(task.class_end - task.class_begin);
        trainer.begin_task(t, new_classes, t == 0 ? &task.train : nullptr);
        log.task_epoch_loss.push_back(trainer.train_task(task.train));
        if (hook) hook(t, model);
    }
    log.allocations = trainer.allocation_log();
    return log;
}

MethodRunLog run_inc_lora(Mlp& model, const TaskStream& stream, const PlanConfig& cfg, Rng& rng,
                          const TaskEvalHook& hook) {
    return run_continual(model, stream, MethodSpec{Method::inc_lora, BasisKind::standard}, cfg,
                         rng, hook);
}

MethodRunLog run_plan_no_selection(Mlp& model, const TaskStream& stream, BasisKind basis,
                                   const PlanConfig& cfg, Rng& rng, const TaskEvalHook& hook) {
    return run_continual(model, stream, MethodSpec{Method::plan_no_selection, basis}, cfg, rng,
                         hook);
}

MethodRunLog run_plan_no_perturbation(Mlp& model, const TaskStream& stream, BasisKind basis,
                                      const PlanConfig& cfg, Rng& rng, const TaskEvalHook& hook) {
    return run_continual(model, stream, MethodSpec{Method::plan_no_perturbation, basis}, cfg, rng,
                         hook);
}

}  // namespace plan
