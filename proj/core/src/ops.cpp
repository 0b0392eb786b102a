#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <sstream>

#include "arc/tensor.hpp"

namespace arc {

namespace {

using detail::Node;
using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;
using EMat64 = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map64 = Eigen::Map<EMat64>;
using CMap64 = Eigen::Map<const EMat64>;

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

std::shared_ptr<Node> make_node(std::vector<int> shape, const char* op,
                                std::vector<std::shared_ptr<Node>> inputs) {
    auto n = std::make_shared<Node>();
    std::size_t numel = 1;
    for (int d : shape) numel *= std::size_t(d);
    n->shape = std::move(shape);
    n->data.assign(numel, 0.0f);
    n->op = op;
    bool needs = false;
    if (grad_enabled())
        for (auto& in : inputs)
            if (in->requires_grad) needs = true;
    n->requires_grad = needs;
    if (needs) n->inputs = std::move(inputs);
    return n;
}

// Materialized float64 view of a node (widened from float32 on first touch).
std::span<const double> shadow64(Node& n) {
    if (n.data64.size() != n.data.size()) n.data64.assign(n.data.begin(), n.data.end());
    return n.data64;
}

std::span<double> shadow_out(Node& n) {
    n.data64.assign(n.data.size(), 0.0);
    return n.data64;
}

// Accumulating grad view helper.
Map grad_map(Node& n, int r, int c) {
    n.ensure_grad();
    return Map(n.grad.data(), r, c);
}

void check_2d(const Tensor& t, const char* op) {
    if (t.ndim() != 2) fail_dim(std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
}

int last_dim(const Tensor& t) { return t.shape().back(); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_2d(a, "matmul");
    check_2d(b, "matmul");
    if (a.cols() != b.rows())
        fail_dim("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                 shape_str(b.shape()));
    const int m = a.rows(), k = a.cols(), n = b.cols();
    auto out = make_node({m, n}, "matmul", {a.node_ptr(), b.node_ptr()});
    CMap A(a.data().data(), m, k), B(b.data().data(), k, n);
    Map(out->data.data(), m, n).noalias() = A * B;
    if (precise_mode()) {
        CMap64 A64(shadow64(*a.node()).data(), m, k), B64(shadow64(*b.node()).data(), k, n);
        Map64(shadow_out(*out).data(), m, n).noalias() = A64 * B64;
    }
    if (out->requires_grad) {
        out->backward = [m, k, n](Node& self) {
            Node& na = *self.inputs[0];
            Node& nb = *self.inputs[1];
            CMap G(self.grad.data(), m, n);
            CMap A2(na.data.data(), m, k), B2(nb.data.data(), k, n);
            if (na.requires_grad) grad_map(na, m, k).noalias() += G * B2.transpose();
            if (nb.requires_grad) grad_map(nb, k, n).noalias() += A2.transpose() * G;
        };
    }
    return Tensor::wrap(out);
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        fail_dim("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    auto out = make_node(a.shape(), "add", {a.node_ptr(), b.node_ptr()});
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a.data()[i] + b.data()[i];
    if (precise_mode()) {
        auto a64 = shadow64(*a.node());
        auto b64 = shadow64(*b.node());
        auto o64 = shadow_out(*out);
        for (std::size_t i = 0; i < o64.size(); ++i) o64[i] = a64[i] + b64[i];
    }
    if (out->requires_grad) {
        out->backward = [](Node& self) {
            for (auto& in : self.inputs) {
                if (!in->requires_grad) continue;
                in->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
            }
        };
    }
    return Tensor::wrap(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        fail_dim("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    auto out = make_node(a.shape(), "mul", {a.node_ptr(), b.node_ptr()});
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a.data()[i] * b.data()[i];
    if (precise_mode()) {
        auto a64 = shadow64(*a.node());
        auto b64 = shadow64(*b.node());
        auto o64 = shadow_out(*out);
        for (std::size_t i = 0; i < o64.size(); ++i) o64[i] = a64[i] * b64[i];
    }
    if (out->requires_grad) {
        out->backward = [](Node& self) {
            Node& na = *self.inputs[0];
            Node& nb = *self.inputs[1];
            if (na.requires_grad) {
                na.ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    na.grad[i] += self.grad[i] * nb.data[i];
            }
            if (nb.requires_grad) {
                nb.ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    nb.grad[i] += self.grad[i] * na.data[i];
            }
        };
    }
    return Tensor::wrap(out);
}

Tensor scale(const Tensor& a, float s) {
    auto out = make_node(a.shape(), "scale", {a.node_ptr()});
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a.data()[i] * s;
    if (precise_mode()) {
        auto a64 = shadow64(*a.node());
        auto o64 = shadow_out(*out);
        for (std::size_t i = 0; i < o64.size(); ++i) o64[i] = a64[i] * double(s);
    }
    if (out->requires_grad) {
        out->backward = [s](Node& self) {
            Node& na = *self.inputs[0];
            na.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i] * s;
        };
    }
    return Tensor::wrap(out);
}

Tensor transpose(const Tensor& a) {
    check_2d(a, "transpose");
    const int r = a.rows(), c = a.cols();
    auto out = make_node({c, r}, "transpose", {a.node_ptr()});
    CMap A(a.data().data(), r, c);
    Map(out->data.data(), c, r) = A.transpose();
    if (precise_mode()) {
        auto a64 = shadow64(*a.node());
        auto o64 = shadow_out(*out);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) o64[std::size_t(j) * r + i] = a64[std::size_t(i) * c + j];
    }
    if (out->requires_grad) {
        out->backward = [r, c](Node& self) {
            Node& na = *self.inputs[0];
            na.ensure_grad();
            CMap G(self.grad.data(), c, r);
            Map(na.grad.data(), r, c) += G.transpose();
        };
    }
    return Tensor::wrap(out);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) fail_dim("concat_rows: no inputs");
    const int c = parts[0].cols();
    int total = 0;
    std::vector<std::shared_ptr<Node>> ins;
    for (const auto& p : parts) {
        check_2d(p, "concat_rows");
        if (p.cols() != c) fail_dim("concat_rows: column count mismatch");
        total += p.rows();
        ins.push_back(p.node_ptr());
    }
    auto out = make_node({total, c}, "concat_rows", std::move(ins));
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::memcpy(out->data.data() + off, p.data().data(), p.numel() * sizeof(float));
        off += p.numel();
    }
    if (precise_mode()) {
        auto o64 = shadow_out(*out);
        std::size_t off64 = 0;
        for (const auto& p : parts) {
            auto p64 = shadow64(*p.node());
            std::copy(p64.begin(), p64.end(), o64.begin() + long(off64));
            off64 += p64.size();
        }
    }
    if (out->requires_grad) {
        out->backward = [](Node& self) {
            std::size_t off2 = 0;
            for (auto& in : self.inputs) {
                std::size_t n = in->data.size();
                if (in->requires_grad) {
                    in->ensure_grad();
                    for (std::size_t i = 0; i < n; ++i) in->grad[i] += self.grad[off2 + i];
                }
                off2 += n;
            }
        };
    }
    return Tensor::wrap(out);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) fail_dim("concat_cols: no inputs");
    const int r = parts[0].rows();
    int total = 0;
    std::vector<std::shared_ptr<Node>> ins;
    for (const auto& p : parts) {
        check_2d(p, "concat_cols");
        if (p.rows() != r) fail_dim("concat_cols: row count mismatch");
        total += p.cols();
        ins.push_back(p.node_ptr());
    }
    auto out = make_node({r, total}, "concat_cols", std::move(ins));
    int off = 0;
    for (const auto& p : parts) {
        const int c = p.cols();
        for (int i = 0; i < r; ++i)
            std::memcpy(out->data.data() + std::size_t(i) * total + off,
                        p.data().data() + std::size_t(i) * c, std::size_t(c) * sizeof(float));
        off += c;
    }
    if (precise_mode()) {
        auto o64 = shadow_out(*out);
        int off64 = 0;
        for (const auto& p : parts) {
            auto p64 = shadow64(*p.node());
            const int c = p.cols();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j)
                    o64[std::size_t(i) * total + off64 + j] = p64[std::size_t(i) * c + j];
            off64 += c;
        }
    }
    if (out->requires_grad) {
        const int total_c = total;
        out->backward = [r, total_c](Node& self) {
            int off2 = 0;
            for (auto& in : self.inputs) {
                const int c = int(in->data.size()) / r;
                if (in->requires_grad) {
                    in->ensure_grad();
                    for (int i = 0; i < r; ++i)
                        for (int j = 0; j < c; ++j)
                            in->grad[std::size_t(i) * c + j] +=
                                self.grad[std::size_t(i) * total_c + off2 + j];
                }
                off2 += c;
            }
        };
    }
    return Tensor::wrap(out);
}

Tensor slice_rows(const Tensor& a, int begin, int count) {
    check_2d(a, "slice_rows");
    if (begin < 0 || count < 1 || begin + count > a.rows()) fail_dim("slice_rows: range out of bounds");
    const int c = a.cols();
    auto out = make_node({count, c}, "slice_rows", {a.node_ptr()});
    std::memcpy(out->data.data(), a.data().data() + std::size_t(begin) * c,
                std::size_t(count) * c * sizeof(float));
    if (precise_mode()) {
        auto a64 = shadow64(*a.node());
        auto o64 = shadow_out(*out);
        std::copy(a64.begin() + long(begin) * c, a64.begin() + long(begin + count) * c, o64.begin());
    }
    if (out->requires_grad) {
        out->backward = [begin, c](Node& self) {
            Node& na = *self.inputs[0];
            na.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                na.grad[std::size_t(begin) * c + i] += self.grad[i];
        };
    }
    return Tensor::wrap(out);
}

Tensor slice_cols(const Tensor& a, int begin, int count) {
    check_2d(a, "slice_cols");
    if (begin < 0 || count < 1 || begin + count > a.cols()) fail_dim("slice_cols: range out of bounds");
    const int r = a.rows(), c = a.cols();
    auto out = make_node({r, count}, "slice_cols", {a.node_ptr()});
    for (int i = 0; i < r; ++i)
        std::memcpy(out->data.data() + std::size_t(i) * count,
                    a.data().data() + std::size_t(i) * c + begin, std::size_t(count) * sizeof(float));
    if (precise_mode()) {
        auto a64 = shadow64(*a.node());
        auto o64 = shadow_out(*out);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < count; ++j)
                o64[std::size_t(i) * count + j] = a64[std::size_t(i) * c + begin + j];
    }
    if (out->requires_grad) {
        out->backward = [begin, r, c, count](Node& self) {
            Node& na = *self.inputs[0];
            na.ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < count; ++j)
                    na.grad[std::size_t(i) * c + begin + j] += self.grad[std::size_t(i) * count + j];
        };
    }
    return Tensor::wrap(out);
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
    check_2d(table, "gather_rows");
    const int r = table.rows(), c = table.cols();
    for (int id : ids)
        if (id < 0 || id >= r) fail_dim("gather_rows: index out of range");
    if (ids.empty()) fail_dim("gather_rows: empty index list");
    auto out = make_node({int(ids.size()), c}, "gather_rows", {table.node_ptr()});
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::memcpy(out->data.data() + i * c, table.data().data() + std::size_t(ids[i]) * c,
                    std::size_t(c) * sizeof(float));
    if (precise_mode()) {
        auto t64 = shadow64(*table.node());
        auto o64 = shadow_out(*out);
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (int j = 0; j < c; ++j)
                o64[i * std::size_t(c) + j] = t64[std::size_t(ids[i]) * c + j];
    }
    if (out->requires_grad) {
        std::vector<int> idv(ids.begin(), ids.end());
        out->backward = [idv, c](Node& self) {
            Node& nt = *self.inputs[0];
            nt.ensure_grad();
            for (std::size_t i = 0; i < idv.size(); ++i)
                for (int j = 0; j < c; ++j)
                    nt.grad[std::size_t(idv[i]) * c + j] += self.grad[i * std::size_t(c) + j];
        };
    }
    return Tensor::wrap(out);
}

Tensor softmax(const Tensor& a) {
    const int n = last_dim(a);
    const int rows = int(a.numel()) / n;
    for (float v : a.data())
        if (std::isnan(v)) fail_numeric("softmax: NaN input");
    auto out = make_node(a.shape(), "softmax", {a.node_ptr()});
    for (int r = 0; r < rows; ++r) {
        const float* x = a.data().data() + std::size_t(r) * n;
        float* y = out->data.data() + std::size_t(r) * n;
        float mx = x[0];
        for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
        double sum = 0.0;  // 64-bit accumulation
        for (int i = 0; i < n; ++i) {
            y[i] = std::exp(x[i] - mx);
            sum += double(y[i]);
        }
        const float inv = float(1.0 / sum);
        for (int i = 0; i < n; ++i) y[i] *= inv;
    }
    if (precise_mode()) {
        auto a64 = shadow64(*a.node());
        auto o64 = shadow_out(*out);
        for (int r = 0; r < rows; ++r) {
            const double* x = a64.data() + std::size_t(r) * n;
            double* y = o64.data() + std::size_t(r) * n;
            double mx = x[0];
            for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
            double sum = 0.0;
            for (int i = 0; i < n; ++i) {
                y[i] = std::exp(x[i] - mx);
                sum += y[i];
            }
            for (int i = 0; i < n; ++i) y[i] /= sum;
        }
    }
    if (out->requires_grad) {
        out->backward = [n, rows](Node& self) {
            Node& na = *self.inputs[0];
            na.ensure_grad();
            for (int r = 0; r < rows; ++r) {
                const float* y = self.data.data() + std::size_t(r) * n;
                const float* g = self.grad.data() + std::size_t(r) * n;
                float* gx = na.grad.data() + std::size_t(r) * n;
                double dot = 0.0;
                for (int i = 0; i < n; ++i) dot += double(g[i]) * double(y[i]);
                for (int i = 0; i < n; ++i) gx[i] += y[i] * (g[i] - float(dot));
            }
        };
    }
    return Tensor::wrap(out);
}

Tensor rms_norm(const Tensor& a, const Tensor& gain, float eps) {
    const int d = last_dim(a);
    if (int(gain.numel()) != d) fail_dim("rms_norm: gain length must equal the last dimension");
    const int rows = int(a.numel()) / d;
    auto out = make_node(a.shape(), "rms_norm", {a.node_ptr(), gain.node_ptr()});
    std::vector<float> inv_rms(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r) {
        const float* x = a.data().data() + std::size_t(r) * d;
        float* y = out->data.data() + std::size_t(r) * d;
        double ms = 0.0;  // 64-bit accumulation
        for (int i = 0; i < d; ++i) ms += double(x[i]) * double(x[i]);
        const float inv = float(1.0 / std::sqrt(ms / d + double(eps)));
        inv_rms[std::size_t(r)] = inv;
        for (int i = 0; i < d; ++i) y[i] = x[i] * inv * gain.data()[std::size_t(i)];
    }
    if (precise_mode()) {
        auto a64 = shadow64(*a.node());
        auto g64 = shadow64(*gain.node());
        auto o64 = shadow_out(*out);
        for (int r = 0; r < rows; ++r) {
            const double* x = a64.data() + std::size_t(r) * d;
            double* y = o64.data() + std::size_t(r) * d;
            double ms = 0.0;
            for (int i = 0; i < d; ++i) ms += x[i] * x[i];
            const double inv = 1.0 / std::sqrt(ms / d + double(eps));
            for (int i = 0; i < d; ++i) y[i] = x[i] * inv * g64[std::size_t(i)];
        }
    }
    if (out->requires_grad) {
        out->backward = [d, rows, inv_rms](Node& self) {
            Node& na = *self.inputs[0];
            Node& ng = *self.inputs[1];
            for (int r = 0; r < rows; ++r) {
                const float* x = na.data.data() + std::size_t(r) * d;
                const float* g = self.grad.data() + std::size_t(r) * d;
                const float inv = inv_rms[std::size_t(r)];
                if (ng.requires_grad) {
                    ng.ensure_grad();
                    for (int i = 0; i < d; ++i) ng.grad[std::size_t(i)] += g[i] * x[i] * inv;
                }
                if (na.requires_grad) {
                    na.ensure_grad();
                    float* gx = na.grad.data() + std::size_t(r) * d;
                    double dot = 0.0;  // sum_j g_j * gain_j * x_j
                    for (int i = 0; i < d; ++i)
                        dot += double(g[i]) * double(ng.data[std::size_t(i)]) * double(x[i]);
                    const float k = float(dot) * inv * inv * inv / float(d);
                    for (int i = 0; i < d; ++i)
                        gx[i] += g[i] * ng.data[std::size_t(i)] * inv - k * x[i];
                }
            }
        };
    }
    return Tensor::wrap(out);
}

Tensor silu(const Tensor& a) {
    auto out = make_node(a.shape(), "silu", {a.node_ptr()});
    for (std::size_t i = 0; i < out->data.size(); ++i) {
        const float x = a.data()[i];
        out->data[i] = x / (1.0f + std::exp(-x));
    }
    if (precise_mode()) {
        auto a64 = shadow64(*a.node());
        auto o64 = shadow_out(*out);
        for (std::size_t i = 0; i < o64.size(); ++i) o64[i] = a64[i] / (1.0 + std::exp(-a64[i]));
    }
    if (out->requires_grad) {
        out->backward = [](Node& self) {
            Node& na = *self.inputs[0];
            na.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const float x = na.data[i];
                const float s = 1.0f / (1.0f + std::exp(-x));
                na.grad[i] += self.grad[i] * s * (1.0f + x * (1.0f - s));
            }
        };
    }
    return Tensor::wrap(out);
}

Tensor grouped_mean_rows(const Tensor& a, int group, int valid_rows) {
    check_2d(a, "grouped_mean_rows");
    if (group < 1) fail_dim("grouped_mean_rows: group size must be >= 1");
    const int n = a.rows(), c = a.cols();
    if (valid_rows < 1 || valid_rows > n) fail_dim("grouped_mean_rows: valid_rows out of range");
    const int out_rows = (n + group - 1) / group;
    auto out = make_node({out_rows, c}, "grouped_mean_rows", {a.node_ptr()});
    std::vector<int> counts(static_cast<std::size_t>(out_rows));
    for (int g = 0; g < out_rows; ++g) {
        const int lo = g * group;
        const int hi = std::min(std::min((g + 1) * group, n), std::max(valid_rows, lo + 1));
        // pad rows (>= valid_rows) are excluded; a group made only of pads
        // cannot occur because pads are appended to reach a group multiple
        const int cnt = hi - lo;
        counts[std::size_t(g)] = cnt;
        float* y = out->data.data() + std::size_t(g) * c;
        for (int j = 0; j < c; ++j) {
            double s = 0.0;  // 64-bit accumulation
            for (int r = lo; r < hi; ++r) s += double(a.data()[std::size_t(r) * c + j]);
            y[j] = float(s / cnt);
        }
    }
    if (precise_mode()) {
        auto a64 = shadow64(*a.node());
        auto o64 = shadow_out(*out);
        for (int g = 0; g < out_rows; ++g) {
            const int lo = g * group;
            const int cnt = counts[std::size_t(g)];
            for (int j = 0; j < c; ++j) {
                double s = 0.0;
                for (int r = lo; r < lo + cnt; ++r) s += a64[std::size_t(r) * c + j];
                o64[std::size_t(g) * c + j] = s / cnt;
            }
        }
    }
    if (out->requires_grad) {
        out->backward = [group, counts, c](Node& self) {
            Node& na = *self.inputs[0];
            na.ensure_grad();
            for (std::size_t g = 0; g < counts.size(); ++g) {
                const float inv = 1.0f / float(counts[g]);
                for (int r = 0; r < counts[g]; ++r)
                    for (int j = 0; j < c; ++j)
                        na.grad[(g * std::size_t(group) + std::size_t(r)) * c + j] +=
                            self.grad[g * std::size_t(c) + j] * inv;
            }
        };
    }
    return Tensor::wrap(out);
}

namespace {

// Cached cos/sin tables per (head_dim, base), grown on demand; entry (pos, j)
// holds the rotation for pair j at absolute position pos.
struct RopeTable {
    int dh = 0;
    float base = 0.0f;
    int max_pos = 0;
    std::vector<float> cs, sn;  // [max_pos x dh/2]
};

RopeTable& rope_table(int dh, float base, int need_pos) {
    thread_local std::vector<RopeTable> tables;
    for (auto& t : tables) {
        if (t.dh == dh && t.base == base) {
            if (t.max_pos <= need_pos) {
                const int new_max = std::max(need_pos + 1, t.max_pos * 2);
                const int half = dh / 2;
                t.cs.resize(std::size_t(new_max) * half);
                t.sn.resize(std::size_t(new_max) * half);
                for (int p = t.max_pos; p < new_max; ++p)
                    for (int j = 0; j < half; ++j) {
                        const double theta =
                            double(p) * std::pow(double(base), -2.0 * j / double(dh));
                        t.cs[std::size_t(p) * half + j] = float(std::cos(theta));
                        t.sn[std::size_t(p) * half + j] = float(std::sin(theta));
                    }
                t.max_pos = new_max;
            }
            return t;
        }
    }
    tables.push_back(RopeTable{dh, base, 0, {}, {}});
    return rope_table(dh, base, need_pos);
}

// Rotation of interleaved pairs (2j, 2j+1) within each head slice; float path
// reads the cached tables, the float64 shadow recomputes exactly.
void rope_apply32(const float* x, float* y, int n, int d, std::span<const int> positions,
                  int n_heads, float base, bool invert) {
    const int dh = d / n_heads;
    const int half = dh / 2;
    int max_pos = 0;
    for (int p : positions) max_pos = std::max(max_pos, p);
    const RopeTable& table = rope_table(dh, base, max_pos);
    for (int r = 0; r < n; ++r) {
        const float* tc = table.cs.data() + std::size_t(positions[std::size_t(r)]) * half;
        const float* ts = table.sn.data() + std::size_t(positions[std::size_t(r)]) * half;
        for (int h = 0; h < n_heads; ++h) {
            const float* xr = x + std::size_t(r) * d + std::size_t(h) * dh;
            float* yr = y + std::size_t(r) * d + std::size_t(h) * dh;
            for (int j = 0; j < half; ++j) {
                const float cs = tc[j];
                const float sn = invert ? -ts[j] : ts[j];
                const float a = xr[2 * j], b = xr[2 * j + 1];
                yr[2 * j] = a * cs - b * sn;
                yr[2 * j + 1] = a * sn + b * cs;
            }
        }
    }
}

void rope_apply64(const double* x, double* y, int n, int d, std::span<const int> positions,
                  int n_heads, float base) {
    const int dh = d / n_heads;
    const int half = dh / 2;
    for (int r = 0; r < n; ++r) {
        const double pos = double(positions[std::size_t(r)]);
        for (int h = 0; h < n_heads; ++h) {
            const double* xr = x + std::size_t(r) * d + std::size_t(h) * dh;
            double* yr = y + std::size_t(r) * d + std::size_t(h) * dh;
            for (int j = 0; j < half; ++j) {
                const double theta = pos * std::pow(double(base), -2.0 * j / double(dh));
                const double cs = std::cos(theta), sn = std::sin(theta);
                const double a = xr[2 * j], b = xr[2 * j + 1];
                yr[2 * j] = a * cs - b * sn;
                yr[2 * j + 1] = a * sn + b * cs;
            }
        }
    }
}

}  // namespace

Tensor rope_rows(const Tensor& a, std::span<const int> positions, int n_heads, float base) {
    check_2d(a, "rope_rows");
    const int n = a.rows(), d = a.cols();
    if (int(positions.size()) != n) fail_dim("rope_rows: one position per row required");
    if (d % n_heads != 0 || (d / n_heads) % 2 != 0)
        fail_dim("rope_rows: head dimension must be even");
    auto out = make_node(a.shape(), "rope_rows", {a.node_ptr()});
    rope_apply32(a.data().data(), out->data.data(), n, d, positions, n_heads, base, false);
    if (precise_mode()) {
        auto a64 = shadow64(*a.node());
        auto o64 = shadow_out(*out);
        rope_apply64(a64.data(), o64.data(), n, d, positions, n_heads, base);
    }
    if (out->requires_grad) {
        std::vector<int> pos(positions.begin(), positions.end());
        out->backward = [n, d, pos, n_heads, base](Node& self) {
            Node& na = *self.inputs[0];
            na.ensure_grad();
            std::vector<float> tmp(self.grad.size());
            rope_apply32(self.grad.data(), tmp.data(), n, d, pos, n_heads, base, true);
            for (std::size_t i = 0; i < tmp.size(); ++i) na.grad[i] += tmp[i];
        };
    }
    return Tensor::wrap(out);
}

Tensor sum_all(const Tensor& a) {
    auto out = make_node({1}, "sum_all", {a.node_ptr()});
    double s = 0.0;  // 64-bit accumulation
    for (float v : a.data()) s += double(v);
    out->data[0] = float(s);
    if (precise_mode()) {
        auto a64 = shadow64(*a.node());
        double s64 = 0.0;
        for (double v : a64) s64 += v;
        shadow_out(*out)[0] = s64;
    }
    if (out->requires_grad) {
        out->backward = [](Node& self) {
            Node& na = *self.inputs[0];
            na.ensure_grad();
            for (auto& g : na.grad) g += self.grad[0];
        };
    }
    return Tensor::wrap(out);
}

Tensor cross_entropy_masked(const Tensor& logits, std::span<const int> targets,
                            std::span<const std::uint8_t> mask) {
    check_2d(logits, "cross_entropy_masked");
    const int s = logits.rows(), v = logits.cols();
    if (int(targets.size()) != s || int(mask.size()) != s)
        fail_dim("cross_entropy_masked: targets/mask must have one entry per row");
    int n_active = 0;
    for (int i = 0; i < s; ++i) {
        if (!mask[std::size_t(i)]) continue;
        ++n_active;
        if (targets[std::size_t(i)] < 0 || targets[std::size_t(i)] >= v)
            fail_dim("cross_entropy_masked: target id out of vocabulary range");
    }
    if (n_active == 0) fail_contract("cross_entropy_masked: empty loss (all positions masked out)");
    for (float x : logits.data())
        if (std::isnan(x)) fail_numeric("cross_entropy_masked: NaN input");

    auto out = make_node({1}, "cross_entropy_masked", {logits.node_ptr()});
    // Per-row softmax cached for the backward pass (unmasked rows only).
    std::vector<float> probs;
    if (out->requires_grad) probs.assign(std::size_t(s) * v, 0.0f);
    double total = 0.0;
    for (int i = 0; i < s; ++i) {
        if (!mask[std::size_t(i)]) continue;
        const float* x = logits.data().data() + std::size_t(i) * v;
        float mx = x[0];
        for (int j = 1; j < v; ++j) mx = std::max(mx, x[j]);
        double sum = 0.0;  // 64-bit accumulation
        for (int j = 0; j < v; ++j) sum += std::exp(double(x[j]) - mx);
        const double lse = std::log(sum) + mx;
        total += lse - double(x[targets[std::size_t(i)]]);
        if (out->requires_grad) {
            float* p = probs.data() + std::size_t(i) * v;
            for (int j = 0; j < v; ++j) p[j] = float(std::exp(double(x[j]) - lse));
        }
    }
    out->data[0] = float(total / n_active);
    if (precise_mode()) {
        auto l64 = shadow64(*logits.node());
        double total64 = 0.0;
        for (int i = 0; i < s; ++i) {
            if (!mask[std::size_t(i)]) continue;
            const double* x = l64.data() + std::size_t(i) * v;
            double mx = x[0];
            for (int j = 1; j < v; ++j) mx = std::max(mx, x[j]);
            double sum = 0.0;
            for (int j = 0; j < v; ++j) sum += std::exp(x[j] - mx);
            total64 += std::log(sum) + mx - x[targets[std::size_t(i)]];
        }
        shadow_out(*out)[0] = total64 / n_active;
    }
    if (out->requires_grad) {
        std::vector<int> tg(targets.begin(), targets.end());
        std::vector<std::uint8_t> mk(mask.begin(), mask.end());
        out->backward = [s, v, n_active, probs = std::move(probs), tg = std::move(tg),
                         mk = std::move(mk)](Node& self) {
            Node& nl = *self.inputs[0];
            nl.ensure_grad();
            const float g = self.grad[0] / float(n_active);
            for (int i = 0; i < s; ++i) {
                if (!mk[std::size_t(i)]) continue;  // masked rows stay exactly zero
                const float* p = probs.data() + std::size_t(i) * v;
                float* gx = nl.grad.data() + std::size_t(i) * v;
                for (int j = 0; j < v; ++j) gx[j] += g * p[j];
                gx[tg[std::size_t(i)]] -= g;
            }
        };
    }
    return Tensor::wrap(out);
}

}  // namespace arc
