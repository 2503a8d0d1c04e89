#include "plan/trainer.hpp"

#include <algorithm>
#include <numeric>

#include "plan/error.hpp"

namespace plan {

namespace {
constexpr double kInitStd = 0.02;
}

Method parse_method(const std::string& s) {
    if (s == "plan") return Method::plan;
    if (s == "inc_lora") return Method::inc_lora;
    if (s == "plan_no_selection") return Method::plan_no_selection;
    if (s == "plan_no_perturbation") return Method::plan_no_perturbation;
    throw ConfigError("unknown method '" + s + "'");
}

std::string to_string(Method m) {
    switch (m) {
        case Method::plan: return "plan";
        case Method::inc_lora: return "inc_lora";
        case Method::plan_no_selection: return "plan_no_selection";
        case Method::plan_no_perturbation: return "plan_no_perturbation";
    }
    return "?";
}

double perturbed_grad_step(Mlp& model, const Matrix& x, std::span<const int> y,
                           std::vector<LayerPlanState>& states, const PlanConfig& cfg,
                           bool perturb_update, TaskOptimizers& opt) {
    if (states.size() != model.num_layers()) {
        throw Error("perturbed_grad_step: expected one subspace state per layer");
    }

    auto [logits, cache] = model.forward(x);
    const LossGrad lg = cross_entropy(logits, y);
    const Gradients grads_plain = model.backward_wrt_effective_weight(cache, lg.dlogits);

    std::vector<Matrix> eps_per_layer(states.size());
    for (size_t l = 0; l < states.size(); ++l) {
        const Matrix g = gather_gradient(grads_plain.layer_weight[l], states[l].registry);
        eps_per_layer[l] = solve_epsilon(g, cfg.rho, cfg.p);
        record_winners(states[l].tracker, eps_per_layer[l], states[l].registry);
    }

    Gradients grads_perturbed;
    const Gradients* src = &grads_plain;
    if (perturb_update) {
        for (size_t l = 0; l < states.size(); ++l) {
            model.layer(l).set_perturbation(
                scatter_to_weight(eps_per_layer[l], states[l].registry));
        }
        auto [logits2, cache2] = model.forward(x);
        const LossGrad lg2 = cross_entropy(logits2, y);
        grads_perturbed = model.backward_wrt_effective_weight(cache2, lg2.dlogits);
        for (size_t l = 0; l < states.size(); ++l) model.layer(l).clear_perturbation();
        src = &grads_perturbed;
    }

    for (size_t l = 0; l < states.size(); ++l) {
        const Matrix db = matmul_nt(src->layer_weight[l], model.layer(l).live().a);
        adam_step(opt.live_b[l], model.layer(l).live_b(), db, opt.hyper);
    }
    HeadBlock& live_head = model.head().mutable_block(model.head().num_blocks() - 1);
    adam_step(opt.head_w, live_head.w, src->head_w, opt.hyper);
    adam_step(opt.head_b, live_head.bias, src->head_b, opt.hyper);
    return lg.loss;
}

double inc_lora_step(Mlp& model, const Matrix& x, std::span<const int> y, TaskOptimizers& opt) {
    auto [logits, cache] = model.forward(x);
    const LossGrad lg = cross_entropy(logits, y);
    const Gradients grads = model.backward_wrt_effective_weight(cache, lg.dlogits);

    for (size_t l = 0; l < model.num_layers(); ++l) {
        const LoraPair& live = model.layer(l).live();
        const Matrix db = matmul_nt(grads.layer_weight[l], live.a);
        const Matrix da = matmul_tn(live.b, grads.layer_weight[l]);
        adam_step(opt.live_b[l], model.layer(l).live_b(), db, opt.hyper);
        adam_step(opt.live_a[l], model.layer(l).live_a(), da, opt.hyper);
    }
    HeadBlock& live_head = model.head().mutable_block(model.head().num_blocks() - 1);
    adam_step(opt.head_w, live_head.w, grads.head_w, opt.hyper);
    adam_step(opt.head_b, live_head.bias, grads.head_b, opt.hyper);
    return lg.loss;
}

double evaluate_accuracy(const Mlp& model, const Split& split) {
    if (split.size() == 0) throw Error("evaluate_accuracy: empty split");
    constexpr size_t kChunk = 256;
    size_t correct = 0;
    for (size_t begin = 0; begin < split.size(); begin += kChunk) {
        const size_t end = std::min(begin + kChunk, split.size());
        Matrix x(end - begin, split.x.cols());
        for (size_t i = begin; i < end; ++i)
            for (size_t j = 0; j < split.x.cols(); ++j) x(i - begin, j) = split.x(i, j);
        const Matrix logits = model.forward(x).first;
        for (size_t i = 0; i < logits.rows(); ++i) {
            auto row = logits.row(i);
            size_t arg = 0;
            for (size_t j = 1; j < row.size(); ++j)
                if (row[j] > row[arg]) arg = j;
            if (static_cast<int>(arg) == split.y[begin + i]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(split.size());
}

ContinualTrainer::ContinualTrainer(Mlp& model, MethodSpec spec, PlanConfig cfg, Rng& rng)
    : model_(model), spec_(spec), cfg_(cfg), rng_(rng) {
    if (cfg_.rank < 1) throw Error("ContinualTrainer: rank must be >= 1");
    alloc_log_.resize(spec_.method == Method::inc_lora ? 0 : model_.num_layers());
}

void ContinualTrainer::init_registries(const Split* first_task_train) {
    states_.clear();
    std::vector<Matrix> grads;
    if (spec_.basis == BasisKind::gradient_svd) {
        if (first_task_train == nullptr) {
            throw Error("gradient_svd basis needs the first task's training data");
        }
        auto [logits, cache] = model_.forward(first_task_train->x);
        const LossGrad lg = cross_entropy(logits, first_task_train->y);
        grads = model_.backward_wrt_effective_weight(cache, lg.dlogits).layer_weight;
    }
    for (size_t l = 0; l < model_.num_layers(); ++l) {
        const size_t k = model_.layer(l).in_dim();
        BasisRegistry reg = spec_.basis == BasisKind::standard
                                ? BasisRegistry::standard(k)
                            : spec_.basis == BasisKind::random_orthogonal
                                ? BasisRegistry::random_orthogonal(k, rng_)
                                : BasisRegistry::gradient_svd(grads[l]);
        states_.push_back(LayerPlanState{std::move(reg),
                                         PerturbationTracker(cfg_.window, cfg_.rank)});
    }
}

void ContinualTrainer::begin_task(size_t task_index, size_t new_classes,
                                  const Split* first_task_train) {
    if (task_index != tasks_begun_) {
        throw Error("begin_task: tasks must be started in order, expected " +
                    std::to_string(tasks_begun_));
    }
    if (new_classes < 1) throw Error("begin_task: a task must add classes");

    const size_t hidden = model_.head().in_dim();
    model_.head().add_block(gaussian_matrix(rng_, new_classes, hidden, kInitStd),
                            std::vector<double>(new_classes, 0.0));

    if (spec_.method == Method::inc_lora) {
        for (size_t l = 0; l < model_.num_layers(); ++l) {
            AdapterLinear& layer = model_.layer(l);
            LoraPair pair;
            pair.b = Matrix(layer.out_dim(), cfg_.rank);
            pair.a = gaussian_matrix(rng_, cfg_.rank, layer.in_dim(), kInitStd);
            layer.set_live(std::move(pair));
        }
    } else {
        if (task_index == 0) init_registries(first_task_train);
        for (size_t l = 0; l < model_.num_layers(); ++l) {
            BasisRegistry& reg = states_[l].registry;
            std::vector<size_t> chosen;
            if (task_index == 0) {
                chosen = reg.allocate_first(cfg_.rank);
            } else if (spec_.method == Method::plan_no_selection) {
                // Uniform draw of rank distinct indices from the available set.
                std::vector<size_t> pool = reg.available();
                if (pool.size() < cfg_.rank) {
                    throw Error("begin_task: basis exhausted for layer " + std::to_string(l));
                }
                for (size_t i = 0; i < cfg_.rank; ++i) {
                    const size_t j = i + static_cast<size_t>(rng_.uniform_below(pool.size() - i));
                    std::swap(pool[i], pool[j]);
                }
                chosen.assign(pool.begin(), pool.begin() + static_cast<long>(cfg_.rank));
                std::sort(chosen.begin(), chosen.end());
                reg.allocate(chosen);
            } else {
                chosen = select_next(states_[l].tracker, reg, cfg_.rank);
            }
            alloc_log_[l].push_back(chosen);
            if (!cfg_.cumulative_selection) states_[l].tracker.clear();

            AdapterLinear& layer = model_.layer(l);
            LoraPair pair;
            pair.b = Matrix(layer.out_dim(), cfg_.rank);  // zero-init keeps W continuous
            pair.a = reg.rows_at(chosen);
            layer.set_live(std::move(pair));
        }
    }

    opt_ = TaskOptimizers{};
    opt_.live_b.resize(model_.num_layers());
    opt_.live_a.resize(model_.num_layers());
    opt_.hyper.lr = cfg_.lr;
    ++tasks_begun_;
}

std::vector<double> ContinualTrainer::train_task(const Split& train) {
    if (tasks_begun_ == 0) throw Error("train_task: no task begun");
    if (train.size() == 0) throw Error("train_task: empty training split");

    std::vector<double> epoch_losses;
    std::vector<size_t> order(train.size());
    for (size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), size_t{0});
        rng_.shuffle(order);
        double loss_sum = 0.0;
        size_t steps = 0;
        for (size_t begin = 0; begin < order.size(); begin += cfg_.batch_size) {
            const size_t end = std::min(begin + cfg_.batch_size, order.size());
            Matrix x(end - begin, train.x.cols());
            std::vector<int> y(end - begin);
            for (size_t i = begin; i < end; ++i) {
                const size_t src = order[i];
                for (size_t j = 0; j < train.x.cols(); ++j) x(i - begin, j) = train.x(src, j);
                y[i - begin] = train.y[src];
            }
            double loss;
            if (spec_.method == Method::inc_lora) {
                loss = inc_lora_step(model_, x, y, opt_);
            } else {
                loss = perturbed_grad_step(model_, x, y, states_, cfg_,
                                           spec_.method != Method::plan_no_perturbation, opt_);
            }
            loss_sum += loss;
            ++steps;
        }
        epoch_losses.push_back(loss_sum / static_cast<double>(steps));
    }

    for (size_t l = 0; l < model_.num_layers(); ++l) model_.layer(l).freeze_live();
    model_.head().freeze_all();
    return epoch_losses;
}

}  // namespace plan
