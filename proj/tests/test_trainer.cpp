#include <doctest.h>

#include <cmath>

#include "plan/error.hpp"
#include "plan/tasks.hpp"
#include "plan/trainer.hpp"
#include "plan/variants.hpp"

using namespace plan;

namespace {

struct Fixture {
    Mlp model;
    std::vector<LayerPlanState> states;
    Matrix x;
    std::vector<int> y;
};

Fixture make_fixture(uint64_t seed, size_t dim = 8, size_t hidden = 8, size_t rank = 2,
                     size_t batch = 6, size_t classes = 3) {
    Rng rng(seed);
    Mlp model = make_mlp(dim, hidden, 2, rng);
    freeze_backbone(model);
    model.head().add_block(gaussian_matrix(rng, classes, hidden, 0.2),
                           std::vector<double>(classes, 0.0));
    std::vector<LayerPlanState> states;
    for (size_t l = 0; l < model.num_layers(); ++l) {
        BasisRegistry reg = BasisRegistry::standard(model.layer(l).in_dim());
        const auto first = reg.allocate_first(rank);
        LoraPair pair;
        pair.b = Matrix(model.layer(l).out_dim(), rank);
        pair.a = reg.rows_at(first);
        model.layer(l).set_live(std::move(pair));
        states.push_back(LayerPlanState{std::move(reg), PerturbationTracker(50, rank)});
    }
    Fixture f{std::move(model), std::move(states), gaussian_matrix(rng, batch, dim, 1.0), {}};
    f.y.resize(batch);
    for (auto& v : f.y) v = static_cast<int>(rng.uniform_below(classes));
    return f;
}

TaskStream tiny_stream(uint64_t seed, size_t n_tasks = 3, size_t cpt = 2, size_t dim = 10,
                       size_t samples = 25) {
    return gen_gaussian_clusters(n_tasks, cpt, dim, samples, 3.0, seed);
}

PlanConfig tiny_config() {
    PlanConfig cfg;
    cfg.rank = 2;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.lr = 0.01;
    cfg.window = 50;
    return cfg;
}

uint64_t final_b_checksum(const Mlp& model) {
    uint64_t h = kFnvOffset;
    for (size_t l = 0; l < model.num_layers(); ++l) {
        for (const auto& pair : model.layer(l).frozen_adapters()) {
            h = hash_matrix(h, pair.b);
            h = hash_matrix(h, pair.a);
        }
    }
    return h;
}

}  // namespace

TEST_CASE("rho -> 0 recovers the plain Adam step bit for bit") {
    Fixture f1 = make_fixture(101);
    Fixture f2 = make_fixture(101);
    PlanConfig cfg = tiny_config();
    cfg.rho = 0.0;

    TaskOptimizers opt1, opt2;
    opt1.live_b.resize(2);
    opt2.live_b.resize(2);
    opt1.hyper.lr = opt2.hyper.lr = cfg.lr;

    perturbed_grad_step(f1.model, f1.x, f1.y, f1.states, cfg, true, opt1);

    // Reference: one plain Adam update from the unperturbed gradient.
    auto [logits, cache] = f2.model.forward(f2.x);
    const LossGrad lg = cross_entropy(logits, f2.y);
    const Gradients grads = f2.model.backward_wrt_effective_weight(cache, lg.dlogits);
    for (size_t l = 0; l < 2; ++l) {
        const Matrix db = matmul_nt(grads.layer_weight[l], f2.model.layer(l).live().a);
        adam_step(opt2.live_b[l], f2.model.layer(l).live_b(), db, opt2.hyper);
    }
    HeadBlock& blk = f2.model.head().mutable_block(0);
    adam_step(opt2.head_w, blk.w, grads.head_w, opt2.hyper);
    adam_step(opt2.head_b, blk.bias, grads.head_b, opt2.hyper);

    for (size_t l = 0; l < 2; ++l) {
        CHECK(max_abs_diff(f1.model.layer(l).live().b, f2.model.layer(l).live().b) == 0.0);
    }
    CHECK(max_abs_diff(f1.model.head().block(0).w, f2.model.head().block(0).w) == 0.0);
}

TEST_CASE("each step records one winner set per layer") {
    Fixture f = make_fixture(103);
    PlanConfig cfg = tiny_config();
    TaskOptimizers opt;
    opt.live_b.resize(2);
    opt.hyper.lr = cfg.lr;
    for (int step = 1; step <= 3; ++step) {
        perturbed_grad_step(f.model, f.x, f.y, f.states, cfg, true, opt);
        CHECK(f.states[0].tracker.size() == static_cast<size_t>(step));
        CHECK(f.states[1].tracker.size() == static_cast<size_t>(step));
    }
}

TEST_CASE("a small-step update decreases the perturbed surrogate loss") {
    Fixture f = make_fixture(107);
    PlanConfig cfg = tiny_config();
    cfg.lr = 1e-4;

    // Freeze the perturbation at the pre-step weights.
    auto [logits, cache] = f.model.forward(f.x);
    const LossGrad lg = cross_entropy(logits, f.y);
    const Gradients grads = f.model.backward_wrt_effective_weight(cache, lg.dlogits);
    std::vector<Matrix> overlays;
    for (size_t l = 0; l < 2; ++l) {
        const Matrix g = gather_gradient(grads.layer_weight[l], f.states[l].registry);
        overlays.push_back(scatter_to_weight(solve_epsilon(g, cfg.rho, cfg.p),
                                             f.states[l].registry));
    }
    auto surrogate = [&]() {
        for (size_t l = 0; l < 2; ++l) f.model.layer(l).set_perturbation(overlays[l]);
        const double loss = cross_entropy(f.model.forward(f.x).first, f.y).loss;
        for (size_t l = 0; l < 2; ++l) f.model.layer(l).clear_perturbation();
        return loss;
    };

    const double before = surrogate();
    TaskOptimizers opt;
    opt.live_b.resize(2);
    opt.hyper.lr = cfg.lr;
    perturbed_grad_step(f.model, f.x, f.y, f.states, cfg, true, opt);
    const double after = surrogate();
    CHECK(after < before);
}

TEST_CASE("train_task: one epoch over one batch records exactly one step") {
    const TaskStream stream = tiny_stream(5, 1, 2, 8, 10);  // 16 train samples
    Rng rng(5);
    Mlp model = make_mlp(8, 8, 2, rng);
    freeze_backbone(model);
    PlanConfig cfg = tiny_config();
    cfg.epochs = 1;
    cfg.batch_size = 64;  // swallows the whole split in one batch
    ContinualTrainer trainer(model, MethodSpec{}, cfg, rng);
    trainer.begin_task(0, 2);
    trainer.train_task(stream.tasks[0].train);
    CHECK(trainer.layer_states()[0].tracker.size() == 1);
}

TEST_CASE("frozen state is bit-stable while later tasks train") {
    const TaskStream stream = tiny_stream(7);
    Rng rng(7);
    Mlp model = make_mlp(10, 10, 2, rng);
    freeze_backbone(model);
    PlanConfig cfg = tiny_config();
    ContinualTrainer trainer(model, MethodSpec{}, cfg, rng);

    // Hash of everything frozen after `tasks` completed tasks: base weights,
    // biases, the first `tasks` adapters per layer and head blocks.
    auto prefix_checksum = [&](size_t tasks) {
        uint64_t h = kFnvOffset;
        for (size_t l = 0; l < model.num_layers(); ++l) {
            h = hash_matrix(h, model.layer(l).w0());
            h = hash_doubles(h, model.layer(l).bias());
            for (size_t t = 0; t < tasks; ++t) {
                h = hash_matrix(h, model.layer(l).frozen_adapters()[t].b);
                h = hash_matrix(h, model.layer(l).frozen_adapters()[t].a);
            }
        }
        for (size_t t = 0; t < tasks; ++t) {
            h = hash_matrix(h, model.head().block(t).w);
            h = hash_doubles(h, model.head().block(t).bias);
        }
        return h;
    };

    std::vector<uint64_t> snapshots;
    for (size_t t = 0; t < stream.num_tasks(); ++t) {
        trainer.begin_task(t, 2, t == 0 ? &stream.tasks[0].train : nullptr);
        // Everything frozen before this task must be untouched by begin_task.
        for (size_t done = 0; done < snapshots.size(); ++done) {
            CHECK(prefix_checksum(done + 1) == snapshots[done]);
        }
        trainer.train_task(stream.tasks[t].train);
        for (size_t done = 0; done < snapshots.size(); ++done) {
            CHECK(prefix_checksum(done + 1) == snapshots[done]);
        }
        snapshots.push_back(prefix_checksum(t + 1));
    }
}

TEST_CASE("identical config and seed give bit-identical runs") {
    for (Method method : {Method::plan, Method::inc_lora, Method::plan_no_selection,
                          Method::plan_no_perturbation}) {
        const TaskStream stream = tiny_stream(11);
        uint64_t checksums[2];
        std::vector<std::vector<std::vector<size_t>>> allocs[2];
        for (int rep = 0; rep < 2; ++rep) {
            Rng rng(42);
            Mlp model = make_mlp(10, 10, 2, rng);
            freeze_backbone(model);
            const MethodRunLog log = run_continual(
                model, stream, MethodSpec{method, BasisKind::standard}, tiny_config(), rng);
            checksums[rep] = final_b_checksum(model);
            allocs[rep] = log.allocations;
        }
        CHECK(checksums[0] == checksums[1]);
        CHECK(allocs[0] == allocs[1]);
    }
}

TEST_CASE("no_perturbation and plan coincide bit for bit in the rho -> 0 limit") {
    const TaskStream stream = tiny_stream(13);
    PlanConfig cfg = tiny_config();
    cfg.rho = 1e-300;  // positive but numerically vanishing
    uint64_t checksums[2];
    int idx = 0;
    for (Method method : {Method::plan, Method::plan_no_perturbation}) {
        Rng rng(77);
        Mlp model = make_mlp(10, 10, 2, rng);
        freeze_backbone(model);
        run_continual(model, stream, MethodSpec{method, BasisKind::standard}, cfg, rng);
        checksums[idx++] = final_b_checksum(model);
    }
    CHECK(checksums[0] == checksums[1]);
}

TEST_CASE("training reduces the loss at desk scale across seeds") {
    for (uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
        const TaskStream stream = tiny_stream(seed, 1, 3, 12, 40);
        Rng rng(seed);
        Mlp model = make_mlp(12, 12, 2, rng);
        freeze_backbone(model);
        PlanConfig cfg = tiny_config();
        cfg.epochs = 6;
        const MethodRunLog log =
            run_continual(model, stream, MethodSpec{}, cfg, rng);
        const auto& losses = log.task_epoch_loss[0];
        CHECK(losses.back() < losses.front());
    }
}

TEST_CASE("inc_lora trains freely and keeps prior adapters frozen") {
    const TaskStream stream = tiny_stream(17, 2, 2, 8, 20);
    Rng rng(17);
    Mlp model = make_mlp(8, 8, 2, rng);
    freeze_backbone(model);
    PlanConfig cfg = tiny_config();
    cfg.epochs = 4;
    const MethodRunLog log = run_inc_lora(model, stream, cfg, rng);
    CHECK(log.allocations.empty());
    CHECK(log.task_epoch_loss[0].back() < log.task_epoch_loss[0].front());
    CHECK(model.layer(0).frozen_adapters().size() == 2);
    // A was trained away from its tiny init.
    const Matrix& a0 = model.layer(0).frozen_adapters()[0].a;
    CHECK(flatten_norm(a0, NormOrder::linf) > 0.0);
}

TEST_CASE("no_selection draws valid, disjoint, seed-stable allocations") {
    const TaskStream stream = tiny_stream(19);
    std::vector<std::vector<std::vector<size_t>>> allocs[2];
    for (int rep = 0; rep < 2; ++rep) {
        Rng rng(19);
        Mlp model = make_mlp(10, 10, 2, rng);
        freeze_backbone(model);
        const MethodRunLog log = run_plan_no_selection(model, stream, BasisKind::standard,
                                                       tiny_config(), rng);
        allocs[rep] = log.allocations;
    }
    CHECK(allocs[0] == allocs[1]);
    for (const auto& layer : allocs[0]) {
        std::vector<size_t> seen;
        for (const auto& alloc : layer) {
            for (size_t idx : alloc) {
                CHECK(std::find(seen.begin(), seen.end(), idx) == seen.end());
                seen.push_back(idx);
            }
        }
    }
}

TEST_CASE("gradient_svd basis run keeps subspaces orthogonal") {
    const TaskStream stream = tiny_stream(23);
    Rng rng(23);
    Mlp model = make_mlp(10, 10, 2, rng);
    freeze_backbone(model);
    run_continual(model, stream, MethodSpec{Method::plan, BasisKind::gradient_svd},
                  tiny_config(), rng);
    for (size_t l = 0; l < 2; ++l) {
        const auto& frozen = model.layer(l).frozen_adapters();
        for (size_t i = 0; i < frozen.size(); ++i) {
            for (size_t j = i + 1; j < frozen.size(); ++j) {
                CHECK(flatten_norm(matmul_nt(frozen[i].a, frozen[j].a), NormOrder::linf) <
                      1e-10);
            }
        }
    }
}

TEST_CASE("cumulative selection keeps the tracker across task boundaries") {
    const TaskStream stream = tiny_stream(29, 2, 2, 8, 20);
    Rng rng(29);
    Mlp model = make_mlp(8, 8, 2, rng);
    freeze_backbone(model);
    PlanConfig cfg = tiny_config();
    cfg.cumulative_selection = true;
    ContinualTrainer trainer(model, MethodSpec{}, cfg, rng);
    trainer.begin_task(0, 2);
    trainer.train_task(stream.tasks[0].train);
    const size_t after_t0 = trainer.layer_states()[0].tracker.size();
    CHECK(after_t0 > 0);
    trainer.begin_task(1, 2);
    CHECK(trainer.layer_states()[0].tracker.size() == after_t0);  // not cleared
}
