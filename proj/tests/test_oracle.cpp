#include <doctest.h>

#include <cmath>

#include "plan/error.hpp"
#include "plan/oracle.hpp"
#include "plan/rng.hpp"

using namespace plan;

namespace {

double inner(const Matrix& a, const Matrix& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a.data()[i] * b.data()[i];
    return acc;
}

}  // namespace

TEST_CASE("ball_max_oracle attains the Holder duality values") {
    Rng rng(41);
    const Matrix g = gaussian_matrix(rng, 3, 4, 1.0);
    const double rho = 0.05;
    const BallMaxResult r2 = ball_max_oracle(g, rho, NormOrder::l2);
    CHECK(r2.value == doctest::Approx(rho * flatten_norm(g, NormOrder::l2)).epsilon(1e-9));
    const BallMaxResult ri = ball_max_oracle(g, rho, NormOrder::linf);
    CHECK(ri.value == doctest::Approx(rho * flatten_norm(g, NormOrder::l1)).epsilon(1e-9));
    const BallMaxResult r1 = ball_max_oracle(g, rho, NormOrder::l1);
    CHECK(r1.value == doctest::Approx(rho * flatten_norm(g, NormOrder::linf)).epsilon(1e-9));
}

TEST_CASE("ball_max_oracle never leaves the ball") {
    Rng rng(43);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix g = gaussian_matrix(rng, 1 + rng.uniform_below(6),
                                         1 + rng.uniform_below(6), 1.0);
        for (NormOrder p : {NormOrder::l1, NormOrder::l2, NormOrder::linf}) {
            const BallMaxResult r = ball_max_oracle(g, 0.02, p, 100, 3, rng.next_u64());
            CHECK(flatten_norm(r.eps, p) <= 0.02 * (1 + 1e-12));
            CHECK(r.value >= r.dual_value - 1e-9);
        }
    }
}

TEST_CASE("projected ascent alone reaches the dual value closely") {
    Rng rng(47);
    const Matrix g = gaussian_matrix(rng, 4, 4, 1.0);
    for (NormOrder p : {NormOrder::l1, NormOrder::l2, NormOrder::linf}) {
        const BallMaxResult r = ball_max_oracle(g, 0.01, p);
        CHECK(r.ascent_value >= r.dual_value * (1 - 1e-6));
    }
}

TEST_CASE("closed form matches the oracle over random instances") {
    Rng rng(53);
    for (NormOrder p : {NormOrder::l1, NormOrder::l2, NormOrder::linf}) {
        for (int trial = 0; trial < 200; ++trial) {
            const Matrix g = gaussian_matrix(rng, 1 + rng.uniform_below(8),
                                             1 + rng.uniform_below(8), 1.0);
            const double rho = 0.01;
            const Matrix eps = solve_epsilon(g, rho, p);
            const double closed = inner(eps, g);
            const double dual = dual_norm_value(g, rho, p);
            CHECK(std::abs(dual - closed) <= 1e-9 * std::abs(dual));
        }
    }
}

TEST_CASE("l1 projection keeps points inside and is exact on the boundary") {
    Rng rng(59);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix x = gaussian_matrix(rng, 2, 3, 1.0);
        const Matrix p = project_lp_ball(x, 0.5, NormOrder::l1);
        CHECK(flatten_norm(p, NormOrder::l1) <= 0.5 * (1 + 1e-12));
        if (flatten_norm(x, NormOrder::l1) <= 0.5) CHECK(max_abs_diff(p, x) == 0.0);
    }
}

TEST_CASE("fd check: quadratic loss on a linear model is exact") {
    Rng rng(61);
    Mlp model = make_mlp(5, 4, 1, rng);
    freeze_backbone(model);
    model.head().add_block(gaussian_matrix(rng, 3, 4, 0.3), std::vector<double>(3, 0.0));
    LoraPair pair;
    pair.b = gaussian_matrix(rng, 4, 2, 0.2);
    pair.a = gaussian_matrix(rng, 2, 5, 0.3);
    model.layer(0).set_live(std::move(pair));
    const Matrix x = gaussian_matrix(rng, 4, 5, 1.0);
    std::vector<int> y = {0, 1, 2, 0};
    const double err =
        fd_gradient_check(model, x, y, 0, ParamSelector::live_b, 1e-4, LossKind::squared_error);
    CHECK(err <= 1e-9);
}

TEST_CASE("fd check: two-layer relu model within 1e-4") {
    Rng rng(67);
    Mlp model = make_mlp(8, 10, 2, rng);
    freeze_backbone(model);
    model.head().add_block(gaussian_matrix(rng, 4, 10, 0.3), gaussian_vector(rng, 4, 0.1));
    for (int l = 0; l < 2; ++l) {
        LoraPair pair;
        pair.b = gaussian_matrix(rng, 10, 3, 0.15);
        pair.a = gaussian_matrix(rng, 3, model.layer(l).in_dim(), 0.3);
        model.layer(l).set_live(std::move(pair));
    }
    const Matrix x = gaussian_matrix(rng, 6, 8, 1.0);
    std::vector<int> y(6);
    for (auto& v : y) v = static_cast<int>(rng.uniform_below(4));
    CHECK(fd_gradient_check(model, x, y, 0, ParamSelector::live_b, 1e-5) <= 1e-4);
    CHECK(fd_gradient_check(model, x, y, 1, ParamSelector::live_b, 1e-5) <= 1e-4);
    CHECK(fd_gradient_check(model, x, y, 0, ParamSelector::live_a, 1e-5) <= 1e-4);
    CHECK(fd_gradient_check(model, x, y, 0, ParamSelector::head_weight, 1e-5) <= 1e-4);
}

TEST_CASE("fd check masks zero-gradient directions") {
    Rng rng(71);
    Mlp model = make_mlp(5, 4, 1, rng);
    freeze_backbone(model);
    model.head().add_block(gaussian_matrix(rng, 2, 4, 0.3), std::vector<double>(2, 0.0));
    LoraPair pair;
    pair.b = gaussian_matrix(rng, 4, 2, 0.2);
    pair.a = gaussian_matrix(rng, 2, 5, 0.3);
    for (size_t j = 0; j < 5; ++j) pair.a(1, j) = 0.0;  // dB column 1 is exactly zero
    model.layer(0).set_live(std::move(pair));
    const Matrix x = gaussian_matrix(rng, 3, 5, 1.0);
    std::vector<int> y = {0, 1, 0};
    // The masked column would otherwise produce 0/0; the check must skip it.
    CHECK(fd_gradient_check(model, x, y, 0, ParamSelector::live_b, 1e-5) <= 1e-4);
}

TEST_CASE("fd check rejects out-of-range steps") {
    Rng rng(73);
    Mlp model = make_mlp(3, 3, 1, rng);
    freeze_backbone(model);
    model.head().add_block(gaussian_matrix(rng, 2, 3, 0.3), std::vector<double>(2, 0.0));
    LoraPair pair;
    pair.b = Matrix(3, 1);
    pair.a = gaussian_matrix(rng, 1, 3, 0.3);
    model.layer(0).set_live(std::move(pair));
    const Matrix x(2, 3);
    std::vector<int> y = {0, 1};
    CHECK_THROWS_AS(fd_gradient_check(model, x, y, 0, ParamSelector::live_b, 1e-2),
                    plan::Error);
}

TEST_CASE("verify suite passes with the real solver") {
    const OracleReport report = run_verify({}, 40, 777);
    if (!report.pass) {
        for (const auto& f : report.failures) MESSAGE(f);
    }
    CHECK(report.pass);
    CHECK(report.per_p.size() == 3);
    CHECK(report.support_ok);
    CHECK(report.disjoint_ok);
}

TEST_CASE("verify suite flags a corrupted closed form by name") {
    const EpsilonSolver corrupted = [](const Matrix& g, double rho, NormOrder p) {
        Matrix eps = solve_epsilon(g, rho, p);
        if (!eps.empty()) eps.data()[0] += rho * 0.5;  // break optimality and the boundary
        return eps;
    };
    const OracleReport report = run_verify(corrupted, 10, 777);
    CHECK(!report.pass);
    bool named = false;
    for (const auto& f : report.failures) {
        if (f.find("closed-form") != std::string::npos ||
            f.find("boundary") != std::string::npos) {
            named = true;
        }
    }
    CHECK(named);
}
