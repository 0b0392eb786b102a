#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arc/pooling.hpp"
#include "arc/projector.hpp"
#include "arc/tensor.hpp"
#include "arc/transformer.hpp"

namespace arc {

class Rng;

enum class TaskToken { None, Cont, Rec };
TaskToken task_token_from_string(const std::string& s);
std::string to_string(TaskToken t);

struct ArcEncoderConfig {
    int d_model = 64;
    int n_heads = 4;
    int backbone_layers = 4;
    int truncate_last = 0;
    bool causal = false;     // Tab-5-style "w causality" ablation when true
    int vocab = 259;
    int max_compress_len = 256;
    int pooling_factor = 4;
    PoolingVariant variant = PoolingVariant::AverageQueries;
    RemainderPolicy remainder = RemainderPolicy::SmallLastGroup;
    bool placement_every_two = false;  // progressive_by2 stage spacing
};

// Truncated non-causal stack + query pooling at the placement layers +
// (externally) a per-decoder projector. Owns its token embedding matrix.
struct ArcEncoder {
    ArcEncoderConfig cfg;
    ModelParams encoder;  // no output head
    PoolingSpec pooling;
    Tensor mem_embed;     // learned memory-slot embeddings (MemoryTokens variant)

    int d_model() const { return encoder.block.d_model; }
    std::size_t param_count() const;
};

ArcEncoder make_arc_encoder(const ArcEncoderConfig& cfg, Rng& rng);

// Keeps the first (backbone_layers - drop_last) blocks; the pooled layer
// becomes the new last block (parameters are shared with the input stack).
ModelParams truncate_encoder(const ModelParams& backbone, int drop_last);

// Continuous rows in decoder embedding space standing in for one document,
// optionally terminated by one special-token row.
struct CompressedContext {
    Tensor vectors;  // [m x d_dec]
    int source_token_count = 0;
    std::string decoder_id;
    TaskToken task = TaskToken::None;

    int content_rows() const { return vectors.rows() - (task == TaskToken::None ? 0 : 1); }
    double realized_factor() const {
        return double(source_token_count) / double(content_rows());
    }
};

// --- graph-connected paths (used during training; respect NoGradGuard) ---

// Encoder forward with pooling; [ceil(n/x) x d_enc].
Tensor encode_pooled(const ArcEncoder& arc, std::span<const int> tokens, int factor);
// Memory-token slots appended to the input; returns encoder output at exactly
// those positions. n_pad extra PAD tokens may be appended after the slots and
// are masked out of attention (probe hook).
Tensor memory_token_encode(const ArcEncoder& arc, std::span<const int> tokens, int n_mem,
                           int n_pad = 0);
// encode_pooled -> projector; [m x d_bottleneck] then [m x d_dec].
Tensor bottleneck_rows(const ArcEncoder& arc, const ProjectorParams& proj,
                       std::span<const int> tokens, int factor);
Tensor rows_from_bottleneck(const Tensor& z, const DecoderEntry& entry, TaskToken task);
// Full path: encoder -> projector -> optional special-token row appended.
Tensor compress_rows(const ArcEncoder& arc, const DecoderEntry& entry,
                     std::span<const int> tokens, int factor, TaskToken task);

// --- inference wrappers (no graph recorded) ---

CompressedContext compress(const ArcEncoder& arc, const DecoderEntry& entry,
                           std::span<const int> tokens, int factor, TaskToken task);
// Fixed-size chunks compressed independently and concatenated in order; no
// special tokens in this mode. Over-capacity inputs are truncated with a
// warning appended to *warning when provided.
CompressedContext compress_chunks(const ArcEncoder& arc, const DecoderEntry& entry,
                                  std::span<const int> tokens, int chunk_len, int factor,
                                  int max_chunks = 32, std::string* warning = nullptr);

void write_context(const std::string& path, const CompressedContext& ctx);
CompressedContext read_context(const std::string& path);

// Shared encoder + per-decoder registry: the unit checkpoints move around.
struct ArcBundle {
    ArcEncoder arc;
    DecoderRegistry registry;
    int d_bottleneck = 48;

    void save(const std::string& path) const;
    static ArcBundle load(const std::string& path);
};

}  // namespace arc
