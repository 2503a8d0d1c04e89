#include "plan/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "plan/error.hpp"
#include "plan/rng.hpp"
#include "plan/tasks.hpp"
#include "plan/variants.hpp"

namespace plan {

double dual_norm_value(const Matrix& g, double rho, NormOrder p) {
    switch (p) {
        case NormOrder::l1: return rho * flatten_norm(g, NormOrder::linf);
        case NormOrder::l2: return rho * flatten_norm(g, NormOrder::l2);
        case NormOrder::linf: return rho * flatten_norm(g, NormOrder::l1);
    }
    return 0.0;
}

Matrix project_lp_ball(const Matrix& x, double rho, NormOrder p) {
    switch (p) {
        case NormOrder::l2: {
            const double nrm = flatten_norm(x, NormOrder::l2);
            if (nrm <= rho) return x;
            return (rho / nrm) * x;
        }
        case NormOrder::linf: {
            Matrix out = x;
            for (double& v : out.data()) v = std::clamp(v, -rho, rho);
            return out;
        }
        case NormOrder::l1: {
            if (flatten_norm(x, NormOrder::l1) <= rho) return x;
            // Sort-based simplex projection on the magnitudes.
            std::vector<double> u(x.data().begin(), x.data().end());
            for (double& v : u) v = std::abs(v);
            std::sort(u.begin(), u.end(), std::greater<double>());
            double cum = 0.0, theta = 0.0;
            size_t k = 0;
            for (size_t i = 0; i < u.size(); ++i) {
                cum += u[i];
                const double cand = (cum - rho) / static_cast<double>(i + 1);
                if (u[i] - cand > 0.0) {
                    k = i + 1;
                    theta = cand;
                }
            }
            (void)k;
            Matrix out = x;
            for (double& v : out.data()) {
                const double mag = std::max(std::abs(v) - theta, 0.0);
                v = v > 0.0 ? mag : -mag;
            }
            return out;
        }
    }
    return x;
}

namespace {

double inner(const Matrix& a, const Matrix& b) {
    double acc = 0.0;
    auto ad = a.data();
    auto bd = b.data();
    for (size_t i = 0; i < ad.size(); ++i) acc += ad[i] * bd[i];
    return acc;
}

// Dual-norm maximizer built directly; the oracle's own cross-check.
Matrix dual_norm_point(const Matrix& g, double rho, NormOrder p) {
    Matrix eps(g.rows(), g.cols());
    auto gd = g.data();
    auto ed = eps.data();
    switch (p) {
        case NormOrder::l2: {
            double nrm = 0.0;
            for (size_t i = 0; i < gd.size(); ++i) nrm += gd[i] * gd[i];
            nrm = std::sqrt(nrm);
            if (nrm == 0.0) return eps;
            for (size_t i = 0; i < gd.size(); ++i) ed[i] = rho * gd[i] / nrm;
            return eps;
        }
        case NormOrder::linf:
            for (size_t i = 0; i < gd.size(); ++i)
                ed[i] = gd[i] > 0.0 ? rho : (gd[i] < 0.0 ? -rho : 0.0);
            return eps;
        case NormOrder::l1: {
            size_t best = 0;
            double best_abs = 0.0;
            for (size_t i = 0; i < gd.size(); ++i) {
                if (std::abs(gd[i]) > best_abs) {
                    best_abs = std::abs(gd[i]);
                    best = i;
                }
            }
            if (best_abs > 0.0) ed[best] = gd[best] > 0.0 ? rho : -rho;
            return eps;
        }
    }
    return eps;
}

}  // namespace

BallMaxResult ball_max_oracle(const Matrix& g, double rho, NormOrder p, size_t iters,
                              size_t restarts, uint64_t seed) {
    if (rho <= 0.0) throw Error("ball_max_oracle: rho must be positive");
    Rng rng(seed);

    BallMaxResult result;
    result.dual_value = dual_norm_value(g, rho, p);

    const double gnorm = flatten_norm(g, NormOrder::l2);
    double best_value = -1.0;
    Matrix best;
    for (size_t r = 0; r < restarts; ++r) {
        Matrix eps = project_lp_ball(gaussian_matrix(rng, g.rows(), g.cols(), rho), rho, p);
        // The objective is linear; a fixed step toward g plus projection
        // walks to the boundary maximizer.
        const double step = gnorm > 0.0 ? (rho / 10.0) / gnorm : 0.0;
        for (size_t it = 0; it < iters; ++it) {
            auto ed = eps.data();
            auto gd = g.data();
            for (size_t i = 0; i < ed.size(); ++i) ed[i] += step * gd[i];
            eps = project_lp_ball(eps, rho, p);
        }
        const double value = inner(eps, g);
        if (value > best_value) {
            best_value = value;
            best = eps;
        }
    }
    result.ascent_value = best_value;

    const Matrix analytic = dual_norm_point(g, rho, p);
    const double analytic_value = inner(analytic, g);
    if (analytic_value >= best_value) {
        result.eps = analytic;
        result.value = analytic_value;
    } else {
        result.eps = std::move(best);
        result.value = best_value;
    }
    return result;
}

double fd_gradient_check(Mlp& model, const Matrix& x, std::span<const int> y, size_t layer,
                         ParamSelector which, double h, LossKind loss) {
    if (h < 1e-7 || h > 1e-3) throw Error("fd_gradient_check: h outside [1e-7, 1e-3]");

    auto eval_loss = [&]() {
        const Matrix logits = model.forward(x).first;
        return loss == LossKind::cross_entropy ? cross_entropy(logits, y).loss
                                               : squared_error(logits, y).loss;
    };

    auto [logits, cache] = model.forward(x);
    const LossGrad lg =
        loss == LossKind::cross_entropy ? cross_entropy(logits, y) : squared_error(logits, y);
    const Gradients grads = model.backward_wrt_effective_weight(cache, lg.dlogits);

    Matrix analytic;
    Matrix* param = nullptr;
    switch (which) {
        case ParamSelector::live_b:
            analytic = matmul_nt(grads.layer_weight[layer], model.layer(layer).live().a);
            param = &model.layer(layer).live_b();
            break;
        case ParamSelector::live_a:
            analytic = matmul_tn(model.layer(layer).live().b, grads.layer_weight[layer]);
            param = &model.layer(layer).live_a();
            break;
        case ParamSelector::head_weight:
            analytic = grads.head_w;
            param = &model.head().mutable_block(model.head().num_blocks() - 1).w;
            break;
    }

    double max_rel = 0.0;
    for (size_t i = 0; i < param->rows(); ++i) {
        for (size_t j = 0; j < param->cols(); ++j) {
            const double an = analytic(i, j);
            if (std::abs(an) <= 1e-8) continue;  // masked: no stable relative error
            const double orig = (*param)(i, j);
            (*param)(i, j) = orig + h;
            const double lp = eval_loss();
            (*param)(i, j) = orig - h;
            const double lm = eval_loss();
            (*param)(i, j) = orig;
            const double fd = (lp - lm) / (2.0 * h);
            const double rel = std::abs(fd - an) / std::max(std::abs(an), std::abs(fd));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

namespace {

struct AdapterTestModel {
    Mlp model;
    Matrix x;
    std::vector<int> y;
};

// Frozen random backbone with live adapters and one trainable head block.
AdapterTestModel make_adapter_test_model(Rng& rng, size_t dim, size_t hidden, size_t rank,
                                         size_t batch, size_t classes) {
    Mlp model = make_mlp(dim, hidden, 2, rng);
    freeze_backbone(model);
    model.head().add_block(gaussian_matrix(rng, classes, hidden, 0.2),
                           gaussian_vector(rng, classes, 0.1));
    for (size_t l = 0; l < model.num_layers(); ++l) {
        AdapterLinear& layer = model.layer(l);
        LoraPair pair;
        pair.b = gaussian_matrix(rng, layer.out_dim(), rank, 0.1);
        pair.a = gaussian_matrix(rng, rank, layer.in_dim(), 0.3);
        layer.set_live(std::move(pair));
    }
    AdapterTestModel out{std::move(model), gaussian_matrix(rng, batch, dim, 1.0), {}};
    out.y.resize(batch);
    for (size_t i = 0; i < batch; ++i) out.y[i] = static_cast<int>(rng.uniform_below(classes));
    return out;
}

}  // namespace

OracleReport run_verify(const EpsilonSolver& solver_in, size_t instances_per_p, uint64_t seed) {
    const EpsilonSolver solver = solver_in
                                     ? solver_in
                                     : [](const Matrix& g, double rho, NormOrder p) {
                                           return solve_epsilon(g, rho, p);
                                       };
    OracleReport report;
    auto fail = [&](const std::string& what) {
        report.pass = false;
        report.failures.push_back(what);
    };

    Rng rng(seed);
    const double rhos[] = {0.01, 0.1, 1.0};
    for (NormOrder p : {NormOrder::l1, NormOrder::l2, NormOrder::linf}) {
        OracleReport::PerP stats;
        stats.p = to_string(p);
        for (size_t inst = 0; inst < instances_per_p; ++inst) {
            const size_t r = 1 + static_cast<size_t>(rng.uniform_below(8));
            const size_t c = 1 + static_cast<size_t>(rng.uniform_below(8));
            const Matrix g = gaussian_matrix(rng, r, c, 1.0);
            const double rho = rhos[inst % 3];

            const Matrix eps = solver(g, rho, p);
            const double value = inner(eps, g);
            const double dual = dual_norm_value(g, rho, p);
            const double gap = (dual - value) / std::max(std::abs(dual), 1e-300);
            stats.max_rel_gap = std::max(stats.max_rel_gap, std::abs(gap));

            const BallMaxResult oracle =
                ball_max_oracle(g, rho, p, 500, 8, rng.next_u64());
            const double advantage =
                (oracle.value - value) / std::max(std::abs(oracle.value), 1e-300);
            stats.max_oracle_advantage = std::max(stats.max_oracle_advantage, advantage);

            const double bnd =
                std::abs(flatten_norm(eps, p) - rho) / rho;
            stats.max_boundary_err = std::max(stats.max_boundary_err, bnd);
        }
        if (stats.max_rel_gap > 1e-9) {
            fail("closed-form perturbation vs dual-norm optimum gap (p=" + stats.p +
                 ") exceeds 1e-9: " + std::to_string(stats.max_rel_gap));
        }
        if (stats.max_oracle_advantage > 1e-6) {
            fail("projected-ascent oracle beats the closed form (p=" + stats.p + ") by " +
                 std::to_string(stats.max_oracle_advantage));
        }
        if (stats.max_boundary_err > 1e-9) {
            fail("perturbation leaves the ball boundary (p=" + stats.p + "): " +
                 std::to_string(stats.max_boundary_err));
        }
        report.per_p.push_back(stats);
    }

    // Zero gradient must map to an exactly zero perturbation.
    for (NormOrder p : {NormOrder::l1, NormOrder::l2, NormOrder::linf}) {
        const Matrix eps = solver(Matrix(3, 4), 0.05, p);
        if (flatten_norm(eps, NormOrder::l1) != 0.0) {
            fail("zero gradient produced a nonzero perturbation (p=" + to_string(p) + ")");
        }
    }

    // Finite-difference checks: ReLU stack with cross-entropy, plus a linear
    // model under quadratic loss where central differences are exact.
    for (int i = 0; i < 3; ++i) {
        AdapterTestModel tm = make_adapter_test_model(rng, 10, 12, 3, 6, 4);
        for (ParamSelector sel :
             {ParamSelector::live_b, ParamSelector::live_a, ParamSelector::head_weight}) {
            const double err = fd_gradient_check(tm.model, tm.x, tm.y, 0, sel, 1e-5);
            report.fd_max_rel_error = std::max(report.fd_max_rel_error, err);
        }
        const double err1 =
            fd_gradient_check(tm.model, tm.x, tm.y, 1, ParamSelector::live_b, 1e-5);
        report.fd_max_rel_error = std::max(report.fd_max_rel_error, err1);
    }
    if (report.fd_max_rel_error > 1e-4) {
        fail("finite-difference gradient check exceeds 1e-4: " +
             std::to_string(report.fd_max_rel_error));
    }
    {
        Rng qrng = rng.child(17);
        Mlp linear = make_mlp(6, 5, 1, qrng);
        freeze_backbone(linear);
        linear.head().add_block(gaussian_matrix(qrng, 3, 5, 0.3), std::vector<double>(3, 0.0));
        LoraPair pair;
        pair.b = gaussian_matrix(qrng, 5, 2, 0.2);
        pair.a = gaussian_matrix(qrng, 2, 6, 0.3);
        linear.layer(0).set_live(std::move(pair));
        Matrix x = gaussian_matrix(qrng, 5, 6, 1.0);
        std::vector<int> y(5);
        for (auto& v : y) v = static_cast<int>(qrng.uniform_below(3));
        report.fd_quadratic_error = fd_gradient_check(linear, x, y, 0, ParamSelector::live_b,
                                                      1e-4, LossKind::squared_error);
        if (report.fd_quadratic_error > 1e-9) {
            fail("quadratic-loss finite differences not exact: " +
                 std::to_string(report.fd_quadratic_error));
        }
    }

    // Orthogonality, disjointness and support on a small multi-task run.
    {
        const TaskStream stream = gen_gaussian_clusters(3, 2, 12, 30, 3.0, 99);
        for (BasisKind basis : {BasisKind::standard, BasisKind::random_orthogonal}) {
            Rng run_rng = rng.child(basis == BasisKind::standard ? 1 : 2);
            Mlp model = make_mlp(12, 12, 2, run_rng);
            freeze_backbone(model);
            PlanConfig cfg;
            cfg.rank = 2;
            cfg.epochs = 2;
            cfg.batch_size = 16;
            cfg.lr = 0.01;
            run_continual(model, stream, MethodSpec{Method::plan, basis}, cfg, run_rng);

            // Rebuild each task's A from a fresh registry walk-through of the
            // allocation log and test pairwise products.
            for (size_t l = 0; l < model.num_layers(); ++l) {
                const auto& frozen = model.layer(l).frozen_adapters();
                for (size_t i = 0; i < frozen.size(); ++i) {
                    for (size_t j = i + 1; j < frozen.size(); ++j) {
                        const Matrix prod = matmul_nt(frozen[i].a, frozen[j].a);
                        const double err = flatten_norm(prod, NormOrder::linf);
                        report.orthogonality_err = std::max(report.orthogonality_err, err);
                        if (basis == BasisKind::standard && err != 0.0) {
                            fail("standard-basis task subspaces not exactly orthogonal");
                        }
                    }
                }
            }
        }
        if (report.orthogonality_err > 1e-10) {
            fail("task subspace orthogonality error exceeds 1e-10: " +
                 std::to_string(report.orthogonality_err));
        }

        // Standard basis: disjoint allocations and exact column support.
        Rng run_rng = rng.child(3);
        Mlp model = make_mlp(12, 12, 2, run_rng);
        freeze_backbone(model);
        PlanConfig cfg;
        cfg.rank = 2;
        cfg.epochs = 2;
        cfg.batch_size = 16;
        MethodRunLog log = run_continual(model, stream,
                                         MethodSpec{Method::plan, BasisKind::standard}, cfg,
                                         run_rng);
        report.disjoint_ok = true;
        for (const auto& layer_allocs : log.allocations) {
            std::vector<size_t> seen;
            for (const auto& alloc : layer_allocs) {
                for (size_t idx : alloc) {
                    if (std::find(seen.begin(), seen.end(), idx) != seen.end()) {
                        report.disjoint_ok = false;
                    }
                    seen.push_back(idx);
                }
            }
        }
        if (!report.disjoint_ok) fail("task allocations are not pairwise disjoint");

        report.support_ok = true;
        for (size_t l = 0; l < model.num_layers(); ++l) {
            const auto& frozen = model.layer(l).frozen_adapters();
            for (size_t t = 0; t < frozen.size(); ++t) {
                const Matrix delta = matmul(frozen[t].b, frozen[t].a);
                const auto& alloc = log.allocations[l][t];
                for (size_t col = 0; col < delta.cols(); ++col) {
                    const auto pos = std::find(alloc.begin(), alloc.end(), col);
                    for (size_t row = 0; row < delta.rows(); ++row) {
                        const double expect =
                            pos == alloc.end()
                                ? 0.0
                                : frozen[t].b(row, static_cast<size_t>(pos - alloc.begin()));
                        if (delta(row, col) != expect) report.support_ok = false;
                    }
                }
            }
        }
        if (!report.support_ok) {
            fail("standard-basis task update support does not match the allocated columns");
        }
    }

    return report;
}

}  // namespace plan
