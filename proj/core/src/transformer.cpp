#include "arc/transformer.hpp"

#include <cmath>
#include <cstring>

#include "arc/checkpoint.hpp"
#include "arc/rng.hpp"

namespace arc {

namespace {
constexpr float kMaskNegative = -1e9f;

Tensor normal_init(std::vector<int> shape, float stddev, Rng& rng) {
    std::vector<float> vals;
    std::size_t n = 1;
    for (int d : shape) n *= std::size_t(d);
    vals.resize(n);
    for (auto& v : vals) v = rng.normal(0.0f, stddev);
    return Tensor::from_values(std::move(shape), std::move(vals), true);
}

Tensor ones(std::vector<int> shape) {
    std::size_t n = 1;
    for (int d : shape) n *= std::size_t(d);
    return Tensor::from_values(std::move(shape), std::vector<float>(n, 1.0f), true);
}

std::vector<int> default_positions(int n) {
    std::vector<int> p(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) p[std::size_t(i)] = i;
    return p;
}

Tensor causal_mask(int n) {
    // constant leaves are shared across graphs; cached per length
    thread_local std::vector<std::pair<int, Tensor>> cache;
    for (auto& [len, t] : cache)
        if (len == n) return t;
    std::vector<float> m(std::size_t(n) * n, 0.0f);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) m[std::size_t(i) * n + j] = kMaskNegative;
    Tensor t = Tensor::from_values({n, n}, std::move(m));
    cache.emplace_back(n, t);
    return t;
}

Tensor pad_key_mask(int q_rows, std::span<const std::uint8_t> pad_mask) {
    const int n = int(pad_mask.size());
    std::vector<float> m(std::size_t(q_rows) * n, 0.0f);
    for (int i = 0; i < q_rows; ++i)
        for (int j = 0; j < n; ++j)
            if (pad_mask[std::size_t(j)]) m[std::size_t(i) * n + j] = kMaskNegative;
    return Tensor::from_values({q_rows, n}, std::move(m));
}
}  // namespace

int default_ffn_dim(int d_model, int n_heads) {
    const double target = 8.0 * d_model / 3.0;
    int mult = int(std::lround(target / n_heads));
    if (mult < 1) mult = 1;
    return mult * n_heads;
}

std::uint64_t fnv1a64(const void* data, std::size_t bytes, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

ModelParams ModelParams::init(const std::string& name, BlockConfig block, int vocab, int n_layers,
                              bool with_head, Rng& rng) {
    if (block.d_model % block.n_heads != 0) fail_config("d_model must be divisible by n_heads");
    if (block.head_dim() % 2 != 0) fail_config("rotary positions require an even head dimension");
    if (block.d_ffn <= 0) block.d_ffn = default_ffn_dim(block.d_model, block.n_heads);

    ModelParams p;
    p.name = name;
    p.block = block;
    p.vocab = vocab;
    const int d = block.d_model;
    const float std0 = 0.02f;
    // residual-output projections get a depth-scaled init
    const float std_res = std0 / std::sqrt(2.0f * float(n_layers));
    p.tok_embed = normal_init({vocab, d}, std0, rng);
    for (int i = 0; i < n_layers; ++i) {
        LayerParams lp;
        lp.attn_norm = ones({d});
        lp.wq = normal_init({d, d}, std0, rng);
        lp.wk = normal_init({d, d}, std0, rng);
        lp.wv = normal_init({d, d}, std0, rng);
        lp.wo = normal_init({d, d}, std_res, rng);
        lp.ffn_norm = ones({d});
        lp.w_gate = normal_init({d, block.d_ffn}, std0, rng);
        lp.w_up = normal_init({d, block.d_ffn}, std0, rng);
        lp.w_down = normal_init({block.d_ffn, d}, std_res, rng);
        p.layers.push_back(std::move(lp));
    }
    p.final_norm = ones({d});
    if (with_head) p.output_head = normal_init({d, vocab}, std0, rng);
    return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("tok_embed", tok_embed);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string base = "layers." + std::to_string(i) + ".";
        const LayerParams& lp = layers[i];
        out.emplace_back(base + "attn_norm", lp.attn_norm);
        out.emplace_back(base + "wq", lp.wq);
        out.emplace_back(base + "wk", lp.wk);
        out.emplace_back(base + "wv", lp.wv);
        out.emplace_back(base + "wo", lp.wo);
        out.emplace_back(base + "ffn_norm", lp.ffn_norm);
        out.emplace_back(base + "w_gate", lp.w_gate);
        out.emplace_back(base + "w_up", lp.w_up);
        out.emplace_back(base + "w_down", lp.w_down);
    }
    out.emplace_back("final_norm", final_norm);
    if (has_head()) out.emplace_back("output_head", output_head);
    return out;
}

std::size_t ModelParams::param_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : named_params()) n += t.numel();
    return n;
}

void ModelParams::set_requires_grad(bool v) {
    for (auto& [name, t] : named_params()) {
        Tensor tt = t;
        tt.set_requires_grad(v);
    }
}

void ModelParams::freeze() {
    set_requires_grad(false);
    frozen = true;
    frozen_hash = content_hash();
}

std::uint64_t ModelParams::content_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [name, t] : named_params()) {
        h = fnv1a64(name.data(), name.size(), h);
        h = fnv1a64(t.data().data(), t.numel() * sizeof(float), h);
    }
    return h;
}

void ModelParams::save_into(Checkpoint& ckpt, const std::string& prefix) const {
    std::vector<float> meta = {float(block.d_model), float(block.n_heads), float(block.d_ffn),
                               block.causal ? 1.0f : 0.0f, block.rope_base, float(vocab),
                               float(n_layers()), has_head() ? 1.0f : 0.0f};
    ckpt.add(prefix + "meta", {int(meta.size())}, meta);
    for (const auto& [name, t] : named_params()) ckpt.add(prefix + name, t);
}

ModelParams ModelParams::load_from(const Checkpoint& ckpt, const std::string& prefix) {
    const auto& meta = ckpt.at(prefix + "meta").values;
    ModelParams p;
    p.block.d_model = int(meta[0]);
    p.block.n_heads = int(meta[1]);
    p.block.d_ffn = int(meta[2]);
    p.block.causal = meta[3] != 0.0f;
    p.block.rope_base = meta[4];
    p.vocab = int(meta[5]);
    const int n_layers = int(meta[6]);
    const bool with_head = meta[7] != 0.0f;
    p.tok_embed = ckpt.tensor(prefix + "tok_embed", true);
    for (int i = 0; i < n_layers; ++i) {
        const std::string base = prefix + "layers." + std::to_string(i) + ".";
        LayerParams lp;
        lp.attn_norm = ckpt.tensor(base + "attn_norm", true);
        lp.wq = ckpt.tensor(base + "wq", true);
        lp.wk = ckpt.tensor(base + "wk", true);
        lp.wv = ckpt.tensor(base + "wv", true);
        lp.wo = ckpt.tensor(base + "wo", true);
        lp.ffn_norm = ckpt.tensor(base + "ffn_norm", true);
        lp.w_gate = ckpt.tensor(base + "w_gate", true);
        lp.w_up = ckpt.tensor(base + "w_up", true);
        lp.w_down = ckpt.tensor(base + "w_down", true);
        p.layers.push_back(std::move(lp));
    }
    p.final_norm = ckpt.tensor(prefix + "final_norm", true);
    if (with_head) p.output_head = ckpt.tensor(prefix + "output_head", true);
    return p;
}

Tensor embed_tokens(const ModelParams& p, std::span<const int> tokens) {
    if (tokens.empty()) fail_dim("embed_tokens: empty token sequence");
    return gather_rows(p.tok_embed, tokens);
}

Tensor attention(const Tensor& x, const LayerParams& lp, const BlockConfig& cfg,
                 std::span<const int> positions, const PoolingSpec* pooling, int stage_factor,
                 int valid_rows, std::span<const std::uint8_t> pad_mask) {
    const int n = x.rows();
    const int d = cfg.d_model;
    const int dh = cfg.head_dim();
    if (x.cols() != d) fail_dim("attention: input width does not match d_model");
    const bool pooled = pooling != nullptr && stage_factor > 1;
    if (pooled && cfg.causal)
        fail_contract("attention: query pooling cannot run under a causal mask "
                      "(pooled queries attend all positions)");
    if (valid_rows < 1 || valid_rows > n) valid_rows = n;

    std::vector<int> default_pos;
    if (positions.empty()) {
        default_pos = default_positions(n);
        positions = default_pos;
    }

    Tensor q = matmul(x, lp.wq);
    Tensor k = matmul(x, lp.wk);
    Tensor v = matmul(x, lp.wv);
    q = rope_rows(q, positions, cfg.n_heads, cfg.rope_base);
    k = rope_rows(k, positions, cfg.n_heads, cfg.rope_base);
    if (pooled) q = pool_queries(q, stage_factor, pooling->variant, valid_rows);
    const int nq = q.rows();

    Tensor mask;
    if (cfg.causal) {
        mask = causal_mask(n);
    } else if (!pad_mask.empty()) {
        mask = pad_key_mask(nq, pad_mask);
    }

    const float inv_sqrt_dh = 1.0f / std::sqrt(float(dh));
    // the 1/sqrt(dh) factor rides on the (much smaller) query block
    Tensor qs = scale(q, inv_sqrt_dh);
    std::vector<Tensor> head_ctx;
    for (int h = 0; h < cfg.n_heads; ++h) {
        Tensor qh = slice_cols(qs, h * dh, dh);
        Tensor kh = slice_cols(k, h * dh, dh);
        Tensor vh = slice_cols(v, h * dh, dh);
        Tensor scores = matmul(qh, transpose(kh));
        if (mask.defined()) scores = add(scores, mask);
        head_ctx.push_back(matmul(softmax(scores), vh));
    }
    Tensor ctx = cfg.n_heads == 1 ? head_ctx[0] : concat_cols(head_ctx);
    return matmul(ctx, lp.wo);
}

namespace {
Tensor pool_residual(const Tensor& x, const PoolingSpec& spec, int stage_factor, int valid_rows) {
    if (spec.variant == PoolingVariant::LastQuery) {
        const int n = x.rows();
        const int groups = (n + stage_factor - 1) / stage_factor;
        std::vector<int> ids(static_cast<std::size_t>(groups));
        for (int g = 0; g < groups; ++g)
            ids[std::size_t(g)] = std::min(std::min((g + 1) * stage_factor, n), valid_rows) - 1;
        return gather_rows(x, ids);
    }
    return grouped_mean_rows(x, stage_factor, valid_rows);
}
}  // namespace

ForwardResult forward_stack(const Tensor& input_rows, const ModelParams& p,
                            const PoolingSpec* pooling, int pool_factor, int valid_rows,
                            std::span<const std::uint8_t> pad_mask) {
    if (input_rows.cols() != p.block.d_model)
        fail_dim("forward_stack: embedding row dimension " + std::to_string(input_rows.cols()) +
                 " does not match d_model " + std::to_string(p.block.d_model));
    Tensor x = input_rows;
    std::vector<int> positions = default_positions(x.rows());
    if (valid_rows < 1 || valid_rows > x.rows()) valid_rows = x.rows();

    const bool pool_active = pooling != nullptr &&
                             pooling->variant != PoolingVariant::MemoryTokens &&
                             (pool_factor > 1 || (pool_factor == 0 && pooling->factor > 1));
    int remaining = pool_active ? (pool_factor > 0 ? pool_factor : pooling->factor) : 1;

    for (int i = 0; i < p.n_layers(); ++i) {
        const LayerParams& lp = p.layers[std::size_t(i)];
        bool pooled_here = pool_active && pooling->applies_at(i) && remaining > 1;
        int stage = 1;
        if (pooled_here) {
            stage = pooling->variant == PoolingVariant::ProgressiveBy2 ? 2 : remaining;
            // the last placement stage absorbs any leftover factor
            if (pooling->variant == PoolingVariant::ProgressiveBy2 && i == pooling->placement.back())
                stage = remaining;
        }
        Tensor a_in = rms_norm(x, lp.attn_norm);
        // a causal stack ("w causality" ablation) drops the mask at the pooled
        // layer: pooled queries attend all positions
        BlockConfig layer_cfg = p.block;
        if (pooled_here) layer_cfg.causal = false;
        Tensor attn = attention(a_in, lp, layer_cfg, positions, pooled_here ? pooling : nullptr,
                                stage, valid_rows, pad_mask);
        Tensor residual = pooled_here ? pool_residual(x, *pooling, stage, valid_rows) : x;
        x = add(residual, attn);
        if (pooled_here) {
            positions = pooled_positions(positions, stage);
            remaining /= stage;
            valid_rows = x.rows();
            pad_mask = {};
        }
        Tensor f_in = rms_norm(x, lp.ffn_norm);
        Tensor ffn = matmul(mul(silu(matmul(f_in, lp.w_gate)), matmul(f_in, lp.w_up)), lp.w_down);
        x = add(x, ffn);
    }

    ForwardResult r;
    r.hidden = rms_norm(x, p.final_norm);
    if (p.has_head()) r.logits = matmul(r.hidden, p.output_head);
    r.positions = std::move(positions);
    return r;
}

std::vector<int> generate_greedy(const ModelParams& p, const Tensor& prefix_rows, int max_new,
                                 int eos_id) {
    if (max_new < 1) fail_contract("generate_greedy: max_new must be >= 1");
    if (!p.has_head()) fail_contract("generate_greedy: model has no output head");
    NoGradGuard ng;
    std::vector<int> out;
    for (int step = 0; step < max_new; ++step) {
        Tensor rows = out.empty()
                          ? prefix_rows
                          : concat_rows({prefix_rows, embed_tokens(p, out)});
        ForwardResult r = forward_stack(rows, p);
        const int n = r.logits.rows();
        const int v = r.logits.cols();
        std::span<const float> last(r.logits.data().data() + std::size_t(n - 1) * v, std::size_t(v));
        int best = 0;
        for (int j = 1; j < v; ++j)
            if (last[std::size_t(j)] > last[std::size_t(best)]) best = j;
        if (best == eos_id) break;
        out.push_back(best);
    }
    return out;
}

}  // namespace arc
