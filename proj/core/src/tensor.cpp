#include "arc/tensor.hpp"

#include <cmath>
#include <numeric>
#include <unordered_map>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "arc/rng.hpp"

namespace arc {

namespace {
thread_local bool g_grad_enabled = true;
thread_local bool g_precise_mode = false;

#if defined(__GLIBC__)
// Activation buffers churn every step; keep them in the arena instead of
// handing pages back to the kernel on each graph teardown.
struct MallocTuning {
    MallocTuning() {
        mallopt(M_MMAP_THRESHOLD, 256 << 20);
        mallopt(M_TRIM_THRESHOLD, 256 << 20);
    }
} g_malloc_tuning;
#endif

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) fail_dim("tensor shape entries must be positive");
        n *= std::size_t(d);
    }
    return n;
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool precise_mode() { return g_precise_mode; }

PreciseScope::PreciseScope() : prev_(g_precise_mode) { g_precise_mode = true; }
PreciseScope::~PreciseScope() { g_precise_mode = prev_; }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    auto n = std::make_shared<detail::Node>();
    n->data.assign(shape_numel(shape), 0.0f);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return wrap(std::move(n));
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<float> values, bool requires_grad) {
    if (shape_numel(shape) != values.size())
        fail_dim("from_values: shape does not match value count");
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->data = std::move(values);
    n->requires_grad = requires_grad;
    return wrap(std::move(n));
}

Tensor Tensor::scalar(float v) { return from_values({1}, {v}); }

Tensor Tensor::uniform(std::vector<int> shape, float lo, float hi, Rng& rng, bool requires_grad) {
    std::vector<float> vals(shape_numel(shape));
    for (auto& v : vals) v = rng.uniform(lo, hi);
    return from_values(std::move(shape), std::move(vals), requires_grad);
}

float Tensor::item() const {
    if (!node_ || node_->data.size() != 1) fail_contract("item() requires a scalar tensor");
    return node_->data[0];
}

double Tensor::item_double() const {
    if (!node_ || node_->data.size() != 1) fail_contract("item_double() requires a scalar tensor");
    return node_->data64.size() == 1 ? node_->data64[0] : double(node_->data[0]);
}

void Tensor::set_requires_grad(bool v) {
    node_->requires_grad = v;
    if (!v) node_->grad.clear();
}

Tensor Tensor::detach_copy() const {
    auto n = std::make_shared<detail::Node>();
    n->shape = node_->shape;
    n->data = node_->data;
    return wrap(std::move(n));
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) fail_contract("backward: loss must be a scalar");
    detail::Node* root = loss.node();
    if (!root->requires_grad) return;

    // Deterministic post-order DFS: children visited in input-declaration order.
    std::vector<detail::Node*> order;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    std::unordered_map<detail::Node*, int> state;  // 0 new, 1 open, 2 done
    stack.emplace_back(root, 0);
    state[root] = 1;
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->inputs.size()) {
            detail::Node* child = n->inputs[idx++].get();
            if (child->requires_grad && state[child] == 0) {
                state[child] = 1;
                stack.emplace_back(child, 0);
            }
        } else {
            state[n] = 2;
            order.push_back(n);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward) n->backward(*n);
    }
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
    if (eps <= 1e-6 || eps >= 1e-2) fail_contract("grad_check: eps must lie in (1e-6, 1e-2)");
    Tensor xv = x.detach_copy();
    xv.set_requires_grad(true);
    Tensor y = f(xv);
    if (y.numel() != 1) fail_contract("grad_check: f must be scalar-valued");
    backward(y);
    std::vector<float> analytic(xv.grad().begin(), xv.grad().end());
    if (analytic.empty()) analytic.assign(xv.numel(), 0.0f);

    // Central differences run under the float64 shadow forward; the
    // perturbation is applied exactly on the shadow values.
    Tensor xp = x.detach_copy();
    detail::Node* xn = xp.node();
    xn->data64.assign(xn->data.begin(), xn->data.end());
    double worst = 0.0;
    NoGradGuard ng;
    PreciseScope ps;
    for (std::size_t i = 0; i < xp.numel(); ++i) {
        const double keep = xn->data64[i];
        xn->data64[i] = keep + eps;
        xn->data[i] = float(xn->data64[i]);
        double fp = f(xp).item_double();
        xn->data64[i] = keep - eps;
        xn->data[i] = float(xn->data64[i]);
        double fm = f(xp).item_double();
        xn->data64[i] = keep;
        xn->data[i] = float(keep);
        double cd = (fp - fm) / (2.0 * eps);
        double a = double(analytic[i]);
        double err = std::abs(a - cd) / (std::abs(a) + std::abs(cd) + 1e-8);
        if (err > worst) worst = err;
    }
    return worst;
}

}  // namespace arc
