#pragma once

#include <optional>
#include <span>
#include <vector>

#include "plan/matrix.hpp"
#include "plan/rng.hpp"
#include "plan/tasks.hpp"

namespace plan {

struct LoraPair {
    Matrix b;  // d x r
    Matrix a;  // r x k
    size_t rank() const { return a.rows(); }
};

// A linear layer made of a frozen base weight, the accumulated frozen
// task adapters, and an optional live adapter:
//   W = w0 + sum_i B_i A_i + B_live A_live.
// Forward maps a batch (n x k) to (n x d) via y = x W^T + bias. A transient
// perturbation overlay (d x k) can be installed on top of W; it participates
// in forward and backward until cleared and is never part of the stored
// parameters.
class AdapterLinear {
  public:
    AdapterLinear(Matrix w0, std::vector<double> bias);

    size_t in_dim() const { return w0_.cols(); }
    size_t out_dim() const { return w0_.rows(); }

    const Matrix& w0() const { return w0_; }
    const std::vector<double>& bias() const { return bias_; }
    Matrix& mutable_w0();                // throws once the base is frozen
    std::vector<double>& mutable_bias();
    void freeze_base();
    bool base_frozen() const { return base_frozen_; }

    const std::vector<LoraPair>& frozen_adapters() const { return frozen_; }
    bool has_live() const { return live_.has_value(); }
    const LoraPair& live() const;
    Matrix& live_b();  // trainable parts; bump the version
    Matrix& live_a();
    void set_live(LoraPair pair);
    void freeze_live();  // moves the live adapter into the frozen list

    void set_perturbation(Matrix dw);
    void clear_perturbation();
    bool perturbed() const { return !perturbation_.empty(); }

    // w0 + frozen adapters + live adapter (overlay excluded).
    Matrix effective_weight() const;
    // effective_weight plus the overlay; the weight forward actually applies.
    Matrix used_weight() const;

    Matrix forward(const Matrix& x) const;

    uint64_t version() const { return version_; }
    uint64_t checksum_frozen() const;  // w0 + bias + frozen adapters

  private:
    Matrix w0_;
    std::vector<double> bias_;
    std::vector<LoraPair> frozen_;
    std::optional<LoraPair> live_;
    Matrix frozen_sum_;  // cached w0 + sum of frozen adapters
    Matrix perturbation_;
    bool base_frozen_ = false;
    uint64_t version_ = 0;

    void rebuild_frozen_sum();
};

struct HeadBlock {
    Matrix w;  // classes x hidden
    std::vector<double> bias;
    bool frozen = false;
};

// Class-incremental classifier head: one weight block per task, blocks of
// completed tasks frozen. Output units are ordered by block.
class GrowingHead {
  public:
    explicit GrowingHead(size_t in_dim) : in_dim_(in_dim) {}

    size_t in_dim() const { return in_dim_; }
    size_t num_blocks() const { return blocks_.size(); }
    size_t num_classes() const;

    void add_block(Matrix w, std::vector<double> bias);
    const HeadBlock& block(size_t i) const { return blocks_[i]; }
    HeadBlock& mutable_block(size_t i);  // throws on frozen blocks
    void freeze_all();
    void pop_block();  // drops the most recent block (pre-training scaffold)

    Matrix forward(const Matrix& x) const;

    uint64_t version() const { return version_; }
    uint64_t checksum_frozen() const;

  private:
    size_t in_dim_;
    std::vector<HeadBlock> blocks_;
    uint64_t version_ = 0;
};

struct ForwardCache {
    Matrix input;                 // batch input
    std::vector<Matrix> preacts;  // per layer output before the nonlinearity
    uint64_t version = 0;
};

struct Gradients {
    std::vector<Matrix> layer_weight;  // d x k per layer, wrt the full effective weight
    std::vector<std::vector<double>> layer_bias;
    Matrix head_w;  // live head block only
    std::vector<double> head_b;
};

// Feed-forward stack of AdapterLinear layers with ReLU between consecutive
// layers (none before the head) and a growing classifier head.
class Mlp {
  public:
    explicit Mlp(std::vector<AdapterLinear> layers);

    size_t input_dim() const { return layers_.front().in_dim(); }
    size_t num_layers() const { return layers_.size(); }
    AdapterLinear& layer(size_t i) { return layers_[i]; }
    const AdapterLinear& layer(size_t i) const { return layers_[i]; }
    GrowingHead& head() { return head_; }
    const GrowingHead& head() const { return head_; }

    uint64_t version() const;

    std::pair<Matrix, ForwardCache> forward(const Matrix& x) const;

    // Gradient of the loss wrt each layer's full effective weight (at the
    // currently installed perturbation overlays) and wrt the live head block.
    Gradients backward_wrt_effective_weight(const ForwardCache& cache,
                                            const Matrix& dlogits) const;

    uint64_t checksum_frozen() const;

  private:
    std::vector<AdapterLinear> layers_;
    GrowingHead head_;
};

struct LossGrad {
    double loss = 0.0;
    Matrix dlogits;
};

// Mean softmax cross-entropy over the batch; dlogits is the exact gradient.
LossGrad cross_entropy(const Matrix& logits, std::span<const int> labels);

// Mean squared error against one-hot targets: 1/(2n) * ||logits - onehot||^2.
LossGrad squared_error(const Matrix& logits, std::span<const int> labels);

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Matrix m;
    Matrix v;
    size_t step = 0;
};

void adam_step(AdamState& state, Matrix& param, const Matrix& grad, const AdamHyper& hp);
void adam_step(AdamState& state, std::vector<double>& param, std::span<const double> grad,
               const AdamHyper& hp);

// Backbone of n_layers AdapterLinear layers (input -> hidden -> ... -> hidden)
// with He-initialized base weights and zero biases; the head starts empty.
Mlp make_mlp(size_t input_dim, size_t hidden_dim, size_t n_layers, Rng& rng);

// Trains the plain backbone (base weights, biases and a temporary head) on a
// held-out task, then drops that head and freezes the base.
void pretrain_backbone(Mlp& model, const Split& base, size_t n_classes, size_t epochs, double lr,
                       size_t batch_size, Rng& rng);

// Freezes the base weights as-is (randomly initialized backbone variant).
void freeze_backbone(Mlp& model);

}  // namespace plan
