#include <doctest.h>

#include <cmath>

#include "plan/error.hpp"
#include "plan/nn.hpp"
#include "plan/rng.hpp"

using namespace plan;

namespace {

Mlp zero_model(size_t dim, size_t hidden, size_t layers) {
    std::vector<AdapterLinear> ls;
    size_t in = dim;
    for (size_t l = 0; l < layers; ++l) {
        ls.emplace_back(Matrix(hidden, in), std::vector<double>(hidden, 0.0));
        in = hidden;
    }
    return Mlp(std::move(ls));
}

}  // namespace

TEST_CASE("zero weights and zero input give zero logits") {
    Mlp model = zero_model(4, 3, 2);
    model.head().add_block(Matrix(2, 3), std::vector<double>(2, 0.0));
    const Matrix logits = model.forward(Matrix(5, 4)).first;
    CHECK(flatten_norm(logits, NormOrder::linf) == 0.0);
}

TEST_CASE("single identity layer passes input to the head") {
    std::vector<AdapterLinear> ls;
    ls.emplace_back(Matrix::identity(3), std::vector<double>(3, 0.0));
    Mlp model(std::move(ls));
    Rng rng(3);
    const Matrix head_w = gaussian_matrix(rng, 2, 3, 1.0);
    model.head().add_block(head_w, std::vector<double>(2, 0.0));
    const Matrix x = gaussian_matrix(rng, 4, 3, 1.0);
    const Matrix logits = model.forward(x).first;
    CHECK(max_abs_diff(logits, matmul_nt(x, head_w)) < 1e-14);
}

TEST_CASE("zero-initialized live adapter leaves logits unchanged") {
    Rng rng(5);
    Mlp model = zero_model(4, 3, 2);
    model.layer(0).mutable_w0() = gaussian_matrix(rng, 3, 4, 1.0);
    model.layer(1).mutable_w0() = gaussian_matrix(rng, 3, 3, 1.0);
    model.head().add_block(gaussian_matrix(rng, 2, 3, 1.0), std::vector<double>(2, 0.0));
    const Matrix x = gaussian_matrix(rng, 6, 4, 1.0);
    const Matrix before = model.forward(x).first;
    model.layer(0).set_live(LoraPair{Matrix(3, 2), gaussian_matrix(rng, 2, 4, 1.0)});
    const Matrix after = model.forward(x).first;
    CHECK(max_abs_diff(before, after) == 0.0);
}

TEST_CASE("adapter additivity: merged weight equals live adapter") {
    Rng rng(9);
    const Matrix w0 = gaussian_matrix(rng, 5, 4, 1.0);
    const Matrix b = gaussian_matrix(rng, 5, 2, 0.5);
    const Matrix a = gaussian_matrix(rng, 2, 4, 0.5);
    const std::vector<double> bias = gaussian_vector(rng, 5, 0.1);

    AdapterLinear merged(w0 + matmul(b, a), bias);
    AdapterLinear layered(w0, bias);
    layered.set_live(LoraPair{b, a});

    const Matrix x = gaussian_matrix(rng, 7, 4, 1.0);
    CHECK(max_abs_diff(merged.forward(x), layered.forward(x)) < 1e-12);
}

TEST_CASE("cross entropy of uniform logits is ln C") {
    const size_t c = 5;
    Matrix logits(3, c);
    const std::vector<int> labels = {0, 2, 4};
    const LossGrad lg = cross_entropy(logits, labels);
    CHECK(lg.loss == doctest::Approx(std::log(static_cast<double>(c))).epsilon(1e-12));
}

TEST_CASE("cross entropy saturates to zero on a huge correct margin") {
    Matrix logits(2, 3);
    logits(0, 1) = 200.0;
    logits(1, 2) = 200.0;
    const std::vector<int> labels = {1, 2};
    CHECK(cross_entropy(logits, labels).loss < 1e-12);
}

TEST_CASE("cross entropy rejects out-of-range labels") {
    Matrix logits(1, 3);
    const std::vector<int> bad = {3};
    CHECK_THROWS_AS(cross_entropy(logits, bad), Error);
}

TEST_CASE("cross entropy gradient matches finite differences") {
    Rng rng(17);
    Matrix logits = gaussian_matrix(rng, 4, 5, 1.0);
    std::vector<int> labels(4);
    for (auto& l : labels) l = static_cast<int>(rng.uniform_below(5));
    const LossGrad lg = cross_entropy(logits, labels);
    const double h = 1e-6;
    for (size_t i = 0; i < logits.rows(); ++i) {
        for (size_t j = 0; j < logits.cols(); ++j) {
            const double orig = logits(i, j);
            logits(i, j) = orig + h;
            const double lp = cross_entropy(logits, labels).loss;
            logits(i, j) = orig - h;
            const double lm = cross_entropy(logits, labels).loss;
            logits(i, j) = orig;
            CHECK(std::abs((lp - lm) / (2 * h) - lg.dlogits(i, j)) < 1e-6);
        }
    }
}

TEST_CASE("backward: zero upstream gives zero gradients, correct shapes") {
    Rng rng(21);
    Mlp model = zero_model(4, 3, 2);
    model.layer(0).mutable_w0() = gaussian_matrix(rng, 3, 4, 1.0);
    model.layer(1).mutable_w0() = gaussian_matrix(rng, 3, 3, 1.0);
    model.head().add_block(gaussian_matrix(rng, 2, 3, 1.0), std::vector<double>(2, 0.0));
    const Matrix x = gaussian_matrix(rng, 6, 4, 1.0);
    auto [logits, cache] = model.forward(x);
    const Gradients grads = model.backward_wrt_effective_weight(cache, Matrix(6, 2));
    REQUIRE(grads.layer_weight.size() == 2);
    CHECK(grads.layer_weight[0].rows() == 3);
    CHECK(grads.layer_weight[0].cols() == 4);
    CHECK(grads.layer_weight[1].rows() == 3);
    CHECK(grads.layer_weight[1].cols() == 3);
    CHECK(flatten_norm(grads.layer_weight[0], NormOrder::linf) == 0.0);
    CHECK(flatten_norm(grads.layer_weight[1], NormOrder::linf) == 0.0);
    CHECK(flatten_norm(grads.head_w, NormOrder::linf) == 0.0);
}

TEST_CASE("backward matches finite differences through the effective weight") {
    Rng rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        const size_t dim = 2 + rng.uniform_below(6);
        const size_t hidden = 2 + rng.uniform_below(6);
        const size_t batch = 1 + rng.uniform_below(4);
        Mlp model = zero_model(dim, hidden, 2);
        model.layer(0).mutable_w0() = gaussian_matrix(rng, hidden, dim, 0.7);
        model.layer(1).mutable_w0() = gaussian_matrix(rng, hidden, hidden, 0.7);
        model.head().add_block(gaussian_matrix(rng, 3, hidden, 0.7),
                               gaussian_vector(rng, 3, 0.1));
        const Matrix x = gaussian_matrix(rng, batch, dim, 1.0);
        std::vector<int> y(batch);
        for (auto& v : y) v = static_cast<int>(rng.uniform_below(3));

        auto [logits, cache] = model.forward(x);
        const Gradients grads =
            model.backward_wrt_effective_weight(cache, cross_entropy(logits, y).dlogits);

        // Finite differences on w0 entries probe the effective-weight gradient.
        const double h = 1e-6;
        for (size_t l = 0; l < 2; ++l) {
            Matrix& w = model.layer(l).mutable_w0();
            for (size_t i = 0; i < std::min<size_t>(w.rows(), 3); ++i) {
                for (size_t j = 0; j < std::min<size_t>(w.cols(), 3); ++j) {
                    const double orig = w(i, j);
                    w(i, j) = orig + h;
                    const double lp = cross_entropy(model.forward(x).first, y).loss;
                    w(i, j) = orig - h;
                    const double lm = cross_entropy(model.forward(x).first, y).loss;
                    w(i, j) = orig;
                    const double fd = (lp - lm) / (2 * h);
                    const double an = grads.layer_weight[l](i, j);
                    if (std::abs(an) < 1e-8 && std::abs(fd) < 1e-8) continue;
                    CHECK(std::abs(fd - an) / std::max({std::abs(an), std::abs(fd), 1e-8}) <
                          1e-5);
                }
            }
        }
    }
}

TEST_CASE("stale cache is rejected") {
    Rng rng(29);
    Mlp model = zero_model(3, 3, 1);
    model.head().add_block(gaussian_matrix(rng, 2, 3, 1.0), std::vector<double>(2, 0.0));
    const Matrix x = gaussian_matrix(rng, 2, 3, 1.0);
    auto [logits, cache] = model.forward(x);
    model.layer(0).set_live(LoraPair{Matrix(3, 1), gaussian_matrix(rng, 1, 3, 1.0)});
    CHECK_THROWS_WITH_AS(model.backward_wrt_effective_weight(cache, Matrix(2, 2)),
                         doctest::Contains("stale"), Error);
}

TEST_CASE("adam: zero gradient leaves the parameter unchanged") {
    AdamState st;
    Matrix param = Matrix::from_rows({{1.0, -2.0}});
    const Matrix before = param;
    adam_step(st, param, Matrix(1, 2), AdamHyper{});
    CHECK(max_abs_diff(param, before) == 0.0);
}

TEST_CASE("adam: constant gradient steps approach lr * sign(g)") {
    AdamState st;
    AdamHyper hp;
    hp.lr = 0.01;
    Matrix param(1, 2);
    const Matrix grad = Matrix::from_rows({{3.0, -0.5}});
    double prev0 = 0.0, prev1 = 0.0;
    for (int step = 0; step < 1000; ++step) {
        prev0 = param(0, 0);
        prev1 = param(0, 1);
        adam_step(st, param, grad, hp);
    }
    CHECK(std::abs(prev0 - param(0, 0)) == doctest::Approx(hp.lr).epsilon(0.05));
    CHECK(std::abs(prev1 - param(0, 1)) == doctest::Approx(hp.lr).epsilon(0.05));
    CHECK(param(0, 0) < 0.0);  // moves against the gradient
    CHECK(param(0, 1) > 0.0);
}

TEST_CASE("adam is deterministic") {
    AdamState s1, s2;
    Matrix p1 = Matrix::from_rows({{0.3, 0.7}});
    Matrix p2 = p1;
    const Matrix g = Matrix::from_rows({{0.11, -0.2}});
    for (int i = 0; i < 10; ++i) {
        adam_step(s1, p1, g, AdamHyper{});
        adam_step(s2, p2, g, AdamHyper{});
    }
    CHECK(max_abs_diff(p1, p2) == 0.0);
}

TEST_CASE("frozen base weight rejects mutation") {
    Mlp model = zero_model(3, 3, 1);
    model.layer(0).freeze_base();
    CHECK_THROWS_AS(model.layer(0).mutable_w0(), Error);
}

TEST_CASE("frozen head blocks reject mutation") {
    Mlp model = zero_model(3, 3, 1);
    model.head().add_block(Matrix(2, 3), std::vector<double>(2, 0.0));
    model.head().freeze_all();
    CHECK_THROWS_AS(model.head().mutable_block(0), Error);
}

TEST_CASE("pretraining learns a separable base task and freezes the backbone") {
    Rng rng(31);
    Mlp model = make_mlp(8, 12, 2, rng);
    // Two well separated classes.
    const size_t n = 60;
    Matrix x(n, 8);
    std::vector<int> y(n);
    for (size_t i = 0; i < n; ++i) {
        const int cls = i % 2;
        y[i] = cls;
        for (size_t j = 0; j < 8; ++j) x(i, j) = rng.normal() + (cls == 0 ? 3.0 : -3.0);
    }
    const Split base{x, y};
    pretrain_backbone(model, base, 2, 20, 0.01, 16, rng);
    CHECK(model.layer(0).base_frozen());
    CHECK(model.layer(1).base_frozen());
    CHECK(model.head().num_blocks() == 0);  // scaffold head dropped
}
