#include "plan/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "plan/error.hpp"

namespace plan {

AdapterLinear::AdapterLinear(Matrix w0, std::vector<double> bias)
    : w0_(std::move(w0)), bias_(std::move(bias)) {
    if (!bias_.empty() && bias_.size() != w0_.rows()) {
        throw ShapeError("AdapterLinear: bias length " + std::to_string(bias_.size()) +
                         " != output dim " + std::to_string(w0_.rows()));
    }
    frozen_sum_ = w0_;
}

Matrix& AdapterLinear::mutable_w0() {
    if (base_frozen_) throw Error("AdapterLinear: base weight is frozen");
    ++version_;
    return w0_;
}

std::vector<double>& AdapterLinear::mutable_bias() {
    if (base_frozen_) throw Error("AdapterLinear: bias is frozen");
    ++version_;
    return bias_;
}

void AdapterLinear::freeze_base() {
    base_frozen_ = true;
    rebuild_frozen_sum();
    ++version_;
}

const LoraPair& AdapterLinear::live() const {
    if (!live_) throw Error("AdapterLinear: no live adapter");
    return *live_;
}

Matrix& AdapterLinear::live_b() {
    if (!live_) throw Error("AdapterLinear: no live adapter");
    ++version_;
    return live_->b;
}

Matrix& AdapterLinear::live_a() {
    if (!live_) throw Error("AdapterLinear: no live adapter");
    ++version_;
    return live_->a;
}

void AdapterLinear::set_live(LoraPair pair) {
    if (pair.b.rows() != out_dim() || pair.a.cols() != in_dim() ||
        pair.b.cols() != pair.a.rows()) {
        throw ShapeError("AdapterLinear: adapter shapes B" + pair.b.shape_str() + " A" +
                         pair.a.shape_str() + " incompatible with weight " + w0_.shape_str());
    }
    if (live_) throw Error("AdapterLinear: live adapter already present");
    live_ = std::move(pair);
    ++version_;
}

void AdapterLinear::freeze_live() {
    if (!live_) throw Error("AdapterLinear: no live adapter to freeze");
    frozen_.push_back(std::move(*live_));
    live_.reset();
    rebuild_frozen_sum();
    ++version_;
}

void AdapterLinear::set_perturbation(Matrix dw) {
    if (dw.rows() != out_dim() || dw.cols() != in_dim()) {
        throw ShapeError("AdapterLinear: perturbation shape " + dw.shape_str() +
                         " != weight shape " + w0_.shape_str());
    }
    perturbation_ = std::move(dw);
    ++version_;
}

void AdapterLinear::clear_perturbation() {
    perturbation_ = Matrix();
    ++version_;
}

void AdapterLinear::rebuild_frozen_sum() {
    frozen_sum_ = w0_;
    for (const auto& pair : frozen_) {
        const Matrix delta = matmul(pair.b, pair.a);
        auto fs = frozen_sum_.data();
        auto dd = delta.data();
        for (size_t i = 0; i < fs.size(); ++i) fs[i] += dd[i];
    }
}

Matrix AdapterLinear::effective_weight() const {
    Matrix w = frozen_sum_;
    if (live_) {
        const Matrix delta = matmul(live_->b, live_->a);
        auto wd = w.data();
        auto dd = delta.data();
        for (size_t i = 0; i < wd.size(); ++i) wd[i] += dd[i];
    }
    return w;
}

Matrix AdapterLinear::used_weight() const {
    Matrix w = effective_weight();
    if (!perturbation_.empty()) {
        auto wd = w.data();
        auto pd = perturbation_.data();
        for (size_t i = 0; i < wd.size(); ++i) wd[i] += pd[i];
    }
    return w;
}

Matrix AdapterLinear::forward(const Matrix& x) const {
    if (x.cols() != in_dim()) {
        throw ShapeError("AdapterLinear: input " + x.shape_str() + " does not match weight " +
                         w0_.shape_str());
    }
    Matrix y = matmul_nt(x, used_weight());
    if (!bias_.empty()) {
        for (size_t i = 0; i < y.rows(); ++i) {
            auto yi = y.row(i);
            for (size_t j = 0; j < yi.size(); ++j) yi[j] += bias_[j];
        }
    }
    return y;
}

uint64_t AdapterLinear::checksum_frozen() const {
    uint64_t h = kFnvOffset;
    h = hash_matrix(h, w0_);
    h = hash_doubles(h, bias_);
    for (const auto& pair : frozen_) {
        h = hash_matrix(h, pair.b);
        h = hash_matrix(h, pair.a);
    }
    return h;
}

size_t GrowingHead::num_classes() const {
    size_t n = 0;
    for (const auto& b : blocks_) n += b.w.rows();
    return n;
}

void GrowingHead::add_block(Matrix w, std::vector<double> bias) {
    if (w.cols() != in_dim_) {
        throw ShapeError("GrowingHead: block width " + std::to_string(w.cols()) + " != in_dim " +
                         std::to_string(in_dim_));
    }
    if (bias.size() != w.rows()) throw ShapeError("GrowingHead: bias length != class count");
    blocks_.push_back(HeadBlock{std::move(w), std::move(bias), false});
    ++version_;
}

HeadBlock& GrowingHead::mutable_block(size_t i) {
    if (blocks_[i].frozen) throw Error("GrowingHead: block " + std::to_string(i) + " is frozen");
    ++version_;
    return blocks_[i];
}

void GrowingHead::freeze_all() {
    for (auto& b : blocks_) b.frozen = true;
    ++version_;
}

void GrowingHead::pop_block() {
    if (blocks_.empty()) throw Error("GrowingHead: no block to drop");
    if (blocks_.back().frozen) throw Error("GrowingHead: refusing to drop a frozen block");
    blocks_.pop_back();
    ++version_;
}

Matrix GrowingHead::forward(const Matrix& x) const {
    if (blocks_.empty()) throw Error("GrowingHead: no classes yet");
    if (x.cols() != in_dim_) {
        throw ShapeError("GrowingHead: input " + x.shape_str() + " != in_dim " +
                         std::to_string(in_dim_));
    }
    Matrix logits(x.rows(), num_classes());
    size_t offset = 0;
    for (const auto& blk : blocks_) {
        const Matrix part = matmul_nt(x, blk.w);
        for (size_t i = 0; i < x.rows(); ++i)
            for (size_t j = 0; j < part.cols(); ++j)
                logits(i, offset + j) = part(i, j) + blk.bias[j];
        offset += part.cols();
    }
    return logits;
}

uint64_t GrowingHead::checksum_frozen() const {
    uint64_t h = kFnvOffset;
    for (const auto& blk : blocks_) {
        if (!blk.frozen) continue;
        h = hash_matrix(h, blk.w);
        h = hash_doubles(h, blk.bias);
    }
    return h;
}

Mlp::Mlp(std::vector<AdapterLinear> layers)
    : layers_(std::move(layers)), head_(layers_.empty() ? 0 : layers_.back().out_dim()) {
    if (layers_.empty()) throw Error("Mlp: needs at least one layer");
    for (size_t i = 1; i < layers_.size(); ++i) {
        if (layers_[i].in_dim() != layers_[i - 1].out_dim()) {
            throw ShapeError("Mlp: layer " + std::to_string(i) + " input dim " +
                             std::to_string(layers_[i].in_dim()) + " != previous output " +
                             std::to_string(layers_[i - 1].out_dim()));
        }
    }
}

uint64_t Mlp::version() const {
    uint64_t v = head_.version();
    for (const auto& l : layers_) v += l.version();
    return v;
}

std::pair<Matrix, ForwardCache> Mlp::forward(const Matrix& x) const {
    if (x.cols() != input_dim()) {
        throw ShapeError("Mlp: input " + x.shape_str() + " does not match input dim " +
                         std::to_string(input_dim()));
    }
    ForwardCache cache;
    cache.input = x;
    cache.version = version();

    Matrix h = x;
    for (size_t l = 0; l < layers_.size(); ++l) {
        Matrix z = layers_[l].forward(h);
        cache.preacts.push_back(z);
        if (l + 1 < layers_.size()) {
            for (double& v : z.data()) v = std::max(v, 0.0);
        }
        h = std::move(z);
    }
    return {head_.forward(h), std::move(cache)};
}

Gradients Mlp::backward_wrt_effective_weight(const ForwardCache& cache,
                                             const Matrix& dlogits) const {
    if (cache.version != version()) {
        throw Error("Mlp: stale forward cache (parameters changed since forward)");
    }
    if (dlogits.cols() != head_.num_classes()) {
        throw ShapeError("Mlp: dlogits " + dlogits.shape_str() + " != seen classes " +
                         std::to_string(head_.num_classes()));
    }

    Gradients grads;
    grads.layer_weight.resize(layers_.size());
    grads.layer_bias.resize(layers_.size());

    // Head input is the last layer's output (no nonlinearity before the head).
    const Matrix& head_in = cache.preacts.back();

    // dlogits columns split by block; only the live (unfrozen, last) block
    // needs parameter gradients, but all blocks feed the input gradient.
    Matrix dhead_in(head_in.rows(), head_in.cols());
    size_t offset = 0;
    for (size_t bi = 0; bi < head_.num_blocks(); ++bi) {
        const HeadBlock& blk = head_.block(bi);
        const size_t c = blk.w.rows();
        Matrix dpart(dlogits.rows(), c);
        for (size_t i = 0; i < dlogits.rows(); ++i)
            for (size_t j = 0; j < c; ++j) dpart(i, j) = dlogits(i, offset + j);
        const Matrix dinput = matmul(dpart, blk.w);
        auto dh = dhead_in.data();
        auto di = dinput.data();
        for (size_t i = 0; i < dh.size(); ++i) dh[i] += di[i];
        if (bi + 1 == head_.num_blocks() && !blk.frozen) {
            grads.head_w = matmul_tn(dpart, head_in);
            grads.head_b.assign(c, 0.0);
            for (size_t i = 0; i < dpart.rows(); ++i)
                for (size_t j = 0; j < c; ++j) grads.head_b[j] += dpart(i, j);
        }
        offset += c;
    }

    Matrix dz = std::move(dhead_in);
    for (size_t l = layers_.size(); l-- > 0;) {
        // Input that reached layer l during forward.
        Matrix layer_in;
        if (l == 0) {
            layer_in = cache.input;
        } else {
            layer_in = cache.preacts[l - 1];
            for (double& v : layer_in.data()) v = std::max(v, 0.0);
        }
        grads.layer_weight[l] = matmul_tn(dz, layer_in);
        grads.layer_bias[l].assign(layers_[l].out_dim(), 0.0);
        for (size_t i = 0; i < dz.rows(); ++i)
            for (size_t j = 0; j < dz.cols(); ++j) grads.layer_bias[l][j] += dz(i, j);
        if (l == 0) break;
        Matrix dx = matmul(dz, layers_[l].used_weight());
        const Matrix& pre = cache.preacts[l - 1];
        auto dxd = dx.data();
        auto pd = pre.data();
        for (size_t i = 0; i < dxd.size(); ++i)
            if (pd[i] <= 0.0) dxd[i] = 0.0;
        dz = std::move(dx);
    }
    return grads;
}

uint64_t Mlp::checksum_frozen() const {
    uint64_t h = kFnvOffset;
    for (const auto& l : layers_) h = hash_u64(h, l.checksum_frozen());
    h = hash_u64(h, head_.checksum_frozen());
    return h;
}

LossGrad cross_entropy(const Matrix& logits, std::span<const int> labels) {
    if (labels.size() != logits.rows()) {
        throw ShapeError("cross_entropy: got " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.rows()) + " rows");
    }
    const size_t n = logits.rows();
    const size_t c = logits.cols();
    LossGrad out;
    out.dlogits = Matrix(n, c);
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<size_t>(label) >= c) {
            throw Error("cross_entropy: label " + std::to_string(label) + " out of range [0, " +
                        std::to_string(c) + ")");
        }
        auto row = logits.row(i);
        double mx = row[0];
        for (double v : row) mx = std::max(mx, v);
        double z = 0.0;
        for (double v : row) z += std::exp(v - mx);
        const double logz = std::log(z) + mx;
        total += logz - row[static_cast<size_t>(label)];
        for (size_t j = 0; j < c; ++j) {
            const double p = std::exp(row[j] - logz);
            out.dlogits(i, j) = (p - (static_cast<size_t>(label) == j ? 1.0 : 0.0)) /
                                static_cast<double>(n);
        }
    }
    out.loss = total / static_cast<double>(n);
    return out;
}

LossGrad squared_error(const Matrix& logits, std::span<const int> labels) {
    if (labels.size() != logits.rows()) {
        throw ShapeError("squared_error: got " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.rows()) + " rows");
    }
    const size_t n = logits.rows();
    const size_t c = logits.cols();
    LossGrad out;
    out.dlogits = Matrix(n, c);
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<size_t>(label) >= c) {
            throw Error("squared_error: label " + std::to_string(label) + " out of range");
        }
        for (size_t j = 0; j < c; ++j) {
            const double target = static_cast<size_t>(label) == j ? 1.0 : 0.0;
            const double diff = logits(i, j) - target;
            total += 0.5 * diff * diff;
            out.dlogits(i, j) = diff / static_cast<double>(n);
        }
    }
    out.loss = total / static_cast<double>(n);
    return out;
}

void adam_step(AdamState& state, Matrix& param, const Matrix& grad, const AdamHyper& hp) {
    if (param.rows() != grad.rows() || param.cols() != grad.cols()) {
        throw ShapeError("adam_step: gradient " + grad.shape_str() + " != parameter " +
                         param.shape_str());
    }
    if (state.m.empty()) {
        state.m = Matrix(param.rows(), param.cols());
        state.v = Matrix(param.rows(), param.cols());
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
    auto p = param.data();
    auto g = grad.data();
    auto m = state.m.data();
    auto v = state.v.data();
    for (size_t i = 0; i < p.size(); ++i) {
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
}

void adam_step(AdamState& state, std::vector<double>& param, std::span<const double> grad,
               const AdamHyper& hp) {
    Matrix p(1, param.size(), param);
    Matrix g(1, grad.size(), std::vector<double>(grad.begin(), grad.end()));
    adam_step(state, p, g, hp);
    param.assign(p.data().begin(), p.data().end());
}

Mlp make_mlp(size_t input_dim, size_t hidden_dim, size_t n_layers, Rng& rng) {
    if (n_layers < 1) throw Error("make_mlp: needs at least one layer");
    std::vector<AdapterLinear> layers;
    size_t in = input_dim;
    for (size_t l = 0; l < n_layers; ++l) {
        const double std = std::sqrt(2.0 / static_cast<double>(in));
        layers.emplace_back(gaussian_matrix(rng, hidden_dim, in, std),
                            std::vector<double>(hidden_dim, 0.0));
        in = hidden_dim;
    }
    return Mlp(std::move(layers));
}

void pretrain_backbone(Mlp& model, const Split& base, size_t n_classes, size_t epochs, double lr,
                       size_t batch_size, Rng& rng) {
    if (base.size() == 0) throw Error("pretrain_backbone: empty base task");
    model.head().add_block(gaussian_matrix(rng, n_classes, model.head().in_dim(), 0.02),
                           std::vector<double>(n_classes, 0.0));

    std::vector<AdamState> opt_w(model.num_layers()), opt_b(model.num_layers());
    AdamState opt_head_w, opt_head_b;
    AdamHyper hp;
    hp.lr = lr;

    std::vector<size_t> order(base.size());
    for (size_t epoch = 0; epoch < epochs; ++epoch) {
        std::iota(order.begin(), order.end(), size_t{0});
        rng.shuffle(order);
        for (size_t begin = 0; begin < order.size(); begin += batch_size) {
            const size_t end = std::min(begin + batch_size, order.size());
            Matrix x(end - begin, base.x.cols());
            std::vector<int> y(end - begin);
            for (size_t i = begin; i < end; ++i) {
                for (size_t j = 0; j < base.x.cols(); ++j) x(i - begin, j) = base.x(order[i], j);
                y[i - begin] = base.y[order[i]];
            }
            auto [logits, cache] = model.forward(x);
            const LossGrad lg = cross_entropy(logits, y);
            const Gradients grads = model.backward_wrt_effective_weight(cache, lg.dlogits);
            for (size_t l = 0; l < model.num_layers(); ++l) {
                adam_step(opt_w[l], model.layer(l).mutable_w0(), grads.layer_weight[l], hp);
                adam_step(opt_b[l], model.layer(l).mutable_bias(), grads.layer_bias[l], hp);
            }
            HeadBlock& blk = model.head().mutable_block(0);
            adam_step(opt_head_w, blk.w, grads.head_w, hp);
            adam_step(opt_head_b, blk.bias, grads.head_b, hp);
        }
    }
    model.head().pop_block();
    freeze_backbone(model);
}

void freeze_backbone(Mlp& model) {
    for (size_t l = 0; l < model.num_layers(); ++l) model.layer(l).freeze_base();
}

}  // namespace plan
