#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "arc/error.hpp"

namespace arc {

namespace detail {

struct Node {
    std::vector<int> shape;
    std::vector<float> data;
    std::vector<float> grad;  // allocated lazily, same length as data
    // 64-bit shadow values, maintained only under precise mode so the
    // central-difference oracle in grad_check sees a float64 forward pass.
    std::vector<double> data64;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    // Pulls this node's grad into its inputs' grads. Receives the node itself
    // instead of capturing it, which keeps shared_ptr ownership acyclic.
    std::function<void(Node&)> backward;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
    }
};

}  // namespace detail

// Thread-local autograd switch (graph recording on/off).
bool grad_enabled();

// Thread-local float64 shadow-forward switch (used by grad_check).
bool precise_mode();
class PreciseScope {
public:
    PreciseScope();
    ~PreciseScope();
    PreciseScope(const PreciseScope&) = delete;
    PreciseScope& operator=(const PreciseScope&) = delete;

private:
    bool prev_;
};

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Dense float32 tensor participating in a reverse-mode graph. Value-semantic
// handle: copies share the underlying node.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor from_values(std::vector<int> shape, std::vector<float> values,
                              bool requires_grad = false);
    static Tensor scalar(float v);
    static Tensor uniform(std::vector<int> shape, float lo, float hi, class Rng& rng,
                          bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int ndim() const { return int(node_->shape.size()); }
    int dim(int i) const { return node_->shape[std::size_t(i)]; }
    // 2-D conveniences (rank-1 tensors count as a single row)
    int rows() const { return ndim() == 1 ? 1 : node_->shape[0]; }
    int cols() const { return ndim() == 1 ? node_->shape[0] : node_->shape[1]; }
    std::size_t numel() const { return node_->data.size(); }

    std::span<float> data() { return node_->data; }
    std::span<const float> data() const { return node_->data; }
    std::span<const float> grad() const { return node_->grad; }
    float item() const;
    // Scalar value at float64 precision when a shadow forward ran.
    double item_double() const;
    float operator()(int i, int j) const { return node_->data[std::size_t(i) * cols() + j]; }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool v);
    void zero_grad() {
        if (node_) node_->grad.clear();
    }

    detail::Node* node() const { return node_.get(); }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
    // Detached copy of the values (leaf, no history).
    Tensor detach_copy() const;

    static Tensor wrap(std::shared_ptr<detail::Node> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

private:
    std::shared_ptr<detail::Node> node_;
};

// ---------------------------------------------------------------------------
// Closed op set. All ops run fixed sequential reduction orders so identical
// inputs reproduce bitwise-identical outputs on the same machine. Reductions
// marked below accumulate in 64-bit.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);            // [m,k]x[k,n]
Tensor add(const Tensor& a, const Tensor& b);                // same shape
Tensor mul(const Tensor& a, const Tensor& b);                // same shape, elementwise
Tensor scale(const Tensor& a, float s);
Tensor transpose(const Tensor& a);                           // 2-D
Tensor concat_rows(const std::vector<Tensor>& parts);        // 2-D, same cols
Tensor concat_cols(const std::vector<Tensor>& parts);        // 2-D, same rows
Tensor slice_rows(const Tensor& a, int begin, int count);
Tensor slice_cols(const Tensor& a, int begin, int count);
Tensor gather_rows(const Tensor& table, std::span<const int> ids);  // embedding gather
Tensor softmax(const Tensor& a);                             // last axis; 64-bit sums
Tensor rms_norm(const Tensor& a, const Tensor& gain, float eps = 1e-5f);  // 64-bit mean
Tensor silu(const Tensor& a);
// Mean over consecutive row groups of size `group`; rows >= valid_rows are
// padding and excluded from the means. Output has ceil(n/group) rows.
Tensor grouped_mean_rows(const Tensor& a, int group, int valid_rows);
// Rotary rotation of interleaved pairs within each head slice, by the given
// absolute positions. Linear, applied before any query pooling.
Tensor rope_rows(const Tensor& a, std::span<const int> positions, int n_heads, float base);
Tensor sum_all(const Tensor& a);                             // 64-bit sum
// Mean NLL over unmasked positions; gradient at masked rows is exactly zero.
Tensor cross_entropy_masked(const Tensor& logits, std::span<const int> targets,
                            std::span<const std::uint8_t> mask);

// Reverse-mode sweep from a scalar loss; accumulates into .grad of every
// reachable requires_grad tensor.
void backward(const Tensor& loss);

// Max over entries of |analytic - central_difference| / (|a| + |cd| + 1e-8)
// for a scalar-valued f. eps must lie in (1e-6, 1e-2).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps);

}  // namespace arc
