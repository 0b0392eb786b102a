#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arc/pooling.hpp"
#include "arc/tensor.hpp"

namespace arc {

class Rng;
class Checkpoint;

struct BlockConfig {
    int d_model = 0;
    int n_heads = 0;
    int d_ffn = 0;
    bool causal = true;
    float rope_base = 10000.0f;

    int head_dim() const { return d_model / n_heads; }
};

// SiLU-gated FFN width: (8/3)*d rounded to a multiple of n_heads.
int default_ffn_dim(int d_model, int n_heads);

struct LayerParams {
    Tensor attn_norm;
    Tensor wq, wk, wv, wo;      // [d x d]
    Tensor ffn_norm;
    Tensor w_gate, w_up, w_down;
};

// Decoder-only stack (rotary positions, RMS pre-norm). Encoder instances
// carry no output head and run without the causal mask.
struct ModelParams {
    std::string name;
    BlockConfig block;
    int vocab = 0;
    Tensor tok_embed;           // [vocab x d]
    std::vector<LayerParams> layers;
    Tensor final_norm;
    Tensor output_head;         // undefined for encoders
    bool frozen = false;
    std::uint64_t frozen_hash = 0;

    bool has_head() const { return output_head.defined(); }
    int n_layers() const { return int(layers.size()); }

    static ModelParams init(const std::string& name, BlockConfig block, int vocab, int n_layers,
                            bool with_head, Rng& rng);

    std::vector<std::pair<std::string, Tensor>> named_params() const;
    std::size_t param_count() const;
    void set_requires_grad(bool v);
    // Records the content hash and locks parameters; the hash must never
    // change across training afterwards.
    void freeze();
    std::uint64_t content_hash() const;

    void save_into(Checkpoint& ckpt, const std::string& prefix) const;
    static ModelParams load_from(const Checkpoint& ckpt, const std::string& prefix);
};

Tensor embed_tokens(const ModelParams& p, std::span<const int> tokens);

// One attention sublayer over pre-normed rows; returns the output-projected
// context (pre-residual). With pooling present the block emits ceil(n/x)
// rows and no causal mask may be configured.
Tensor attention(const Tensor& x, const LayerParams& lp, const BlockConfig& cfg,
                 std::span<const int> positions, const PoolingSpec* pooling = nullptr,
                 int stage_factor = 1, int valid_rows = -1,
                 std::span<const std::uint8_t> pad_mask = {});

struct ForwardResult {
    Tensor hidden;   // [n' x d], post final norm
    Tensor logits;   // [n' x vocab], defined only when the model has a head
    std::vector<int> positions;  // positions carried by the output rows
};

// Runs the stack over pre-built embedding rows (token embeddings, compressed
// vectors, or a mix; they are consumed identically). Pooling stages apply at
// the spec's placement layers with the given runtime factor.
ForwardResult forward_stack(const Tensor& input_rows, const ModelParams& p,
                            const PoolingSpec* pooling = nullptr, int pool_factor = 0,
                            int valid_rows = -1, std::span<const std::uint8_t> pad_mask = {});

// Argmax decoding from embedding-space prefix rows; deterministic, stops at
// max_new tokens or end-of-text. Each step recomputes the full forward pass.
std::vector<int> generate_greedy(const ModelParams& p, const Tensor& prefix_rows, int max_new,
                                 int eos_id);

std::uint64_t fnv1a64(const void* data, std::size_t bytes, std::uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace arc
