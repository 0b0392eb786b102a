#include "arc/arc_encoder.hpp"

#include <cmath>

#include "arc/checkpoint.hpp"
#include "arc/rng.hpp"
#include "arc/samples.hpp"

namespace arc {

TaskToken task_token_from_string(const std::string& s) {
    if (s == "cont") return TaskToken::Cont;
    if (s == "rec") return TaskToken::Rec;
    if (s == "none") return TaskToken::None;
    fail_config("unknown task token '" + s + "' (cont, rec, none)");
}

std::string to_string(TaskToken t) {
    switch (t) {
        case TaskToken::None: return "none";
        case TaskToken::Cont: return "cont";
        case TaskToken::Rec: return "rec";
    }
    return "?";
}

std::size_t ArcEncoder::param_count() const {
    std::size_t n = encoder.param_count();
    if (mem_embed.defined()) n += mem_embed.numel();
    return n;
}

ModelParams truncate_encoder(const ModelParams& backbone, int drop_last) {
    if (drop_last < 0 || drop_last >= backbone.n_layers())
        fail_config("truncate_encoder: drop_last must satisfy 0 <= drop < n_layers");
    ModelParams out = backbone;
    out.layers.resize(std::size_t(backbone.n_layers() - drop_last));
    return out;
}

ArcEncoder make_arc_encoder(const ArcEncoderConfig& cfg, Rng& rng) {
    BlockConfig block;
    block.d_model = cfg.d_model;
    block.n_heads = cfg.n_heads;
    block.d_ffn = default_ffn_dim(cfg.d_model, cfg.n_heads);
    block.causal = cfg.causal;

    ArcEncoder arc;
    arc.cfg = cfg;
    ModelParams backbone =
        ModelParams::init("encoder", block, cfg.vocab, cfg.backbone_layers, /*with_head=*/false, rng);
    arc.encoder = truncate_encoder(backbone, cfg.truncate_last);

    arc.pooling.factor = cfg.pooling_factor;
    arc.pooling.variant = cfg.variant;
    arc.pooling.remainder = cfg.remainder;
    arc.pooling.placement = resolve_placement(cfg.variant, cfg.pooling_factor,
                                              arc.encoder.n_layers(), cfg.placement_every_two);
    if (cfg.variant == PoolingVariant::MemoryTokens) {
        std::vector<float> vals(std::size_t(cfg.max_compress_len) * cfg.d_model);
        for (auto& v : vals) v = rng.normal(0.0f, 0.02f);
        arc.mem_embed =
            Tensor::from_values({cfg.max_compress_len, cfg.d_model}, std::move(vals), true);
    }
    return arc;
}

namespace {
int output_rows_for(int n, int factor) { return (n + factor - 1) / factor; }

void check_compress_input(const ArcEncoder& arc, std::span<const int> tokens) {
    if (tokens.empty()) fail_dim("compress: empty input");
    if (int(tokens.size()) > arc.cfg.max_compress_len)
        fail_config("compress: input of " + std::to_string(tokens.size()) +
                    " tokens exceeds max_compress_len " + std::to_string(arc.cfg.max_compress_len) +
                    "; chunking required (compress_chunks)");
}
}  // namespace

Tensor memory_token_encode(const ArcEncoder& arc, std::span<const int> tokens, int n_mem,
                           int n_pad) {
    if (n_mem < 1) fail_config("memory_token_encode: n_mem must be >= 1");
    if (n_mem >= arc.cfg.max_compress_len)
        fail_config("memory_token_encode: n_mem reaches the context limit");
    if (!arc.mem_embed.defined())
        fail_config("memory_token_encode: encoder was not built with memory slots");
    const int n = int(tokens.size());
    std::vector<Tensor> parts = {embed_tokens(arc.encoder, tokens),
                                 slice_rows(arc.mem_embed, 0, n_mem)};
    std::vector<std::uint8_t> pad_mask;
    if (n_pad > 0) {
        std::vector<int> pads(std::size_t(n_pad), kPadId);
        parts.push_back(embed_tokens(arc.encoder, pads));
        pad_mask.assign(std::size_t(n + n_mem + n_pad), 0);
        for (int i = n + n_mem; i < n + n_mem + n_pad; ++i) pad_mask[std::size_t(i)] = 1;
    }
    Tensor rows = concat_rows(parts);
    ForwardResult r = forward_stack(rows, arc.encoder, nullptr, 0, -1, pad_mask);
    return slice_rows(r.hidden, n, n_mem);
}

Tensor encode_pooled(const ArcEncoder& arc, std::span<const int> tokens, int factor) {
    check_compress_input(arc, tokens);
    if (factor < 1) fail_config("encode_pooled: factor must be >= 1");
    const int n = int(tokens.size());

    if (arc.pooling.variant == PoolingVariant::MemoryTokens)
        return memory_token_encode(arc, tokens, output_rows_for(n, factor));

    std::vector<int> padded;
    std::span<const int> input = tokens;
    int valid = n;
    if (arc.pooling.remainder == RemainderPolicy::PadGroup && n % factor != 0) {
        // PAD ids flow through the stack as ordinary tokens; they are only
        // excluded from the query-group means
        padded.assign(tokens.begin(), tokens.end());
        while (int(padded.size()) % factor != 0) padded.push_back(kPadId);
        input = padded;
    }

    PoolingSpec spec = arc.pooling;
    spec.placement = resolve_placement(spec.variant, factor, arc.encoder.n_layers(),
                                       arc.cfg.placement_every_two);
    ForwardResult r = forward_stack(embed_tokens(arc.encoder, input), arc.encoder, &spec, factor,
                                    valid);
    return r.hidden;
}

Tensor bottleneck_rows(const ArcEncoder& arc, const ProjectorParams& proj,
                       std::span<const int> tokens, int factor) {
    return matmul(encode_pooled(arc, tokens, factor), proj.w1);
}

Tensor rows_from_bottleneck(const Tensor& z, const DecoderEntry& entry, TaskToken task) {
    Tensor rows = matmul(z, entry.projector.w2);
    switch (task) {
        case TaskToken::None: return rows;
        case TaskToken::Cont: return concat_rows({rows, entry.specials.cont_vec});
        case TaskToken::Rec: return concat_rows({rows, entry.specials.rec_vec});
    }
    return rows;
}

Tensor compress_rows(const ArcEncoder& arc, const DecoderEntry& entry,
                     std::span<const int> tokens, int factor, TaskToken task) {
    return rows_from_bottleneck(bottleneck_rows(arc, entry.projector, tokens, factor), entry, task);
}

CompressedContext compress(const ArcEncoder& arc, const DecoderEntry& entry,
                           std::span<const int> tokens, int factor, TaskToken task) {
    NoGradGuard ng;
    CompressedContext ctx;
    ctx.vectors = compress_rows(arc, entry, tokens, factor, task);
    ctx.source_token_count = int(tokens.size());
    ctx.decoder_id = entry.projector.owner;
    ctx.task = task;
    return ctx;
}

CompressedContext compress_chunks(const ArcEncoder& arc, const DecoderEntry& entry,
                                  std::span<const int> tokens, int chunk_len, int factor,
                                  int max_chunks, std::string* warning) {
    if (chunk_len < factor) fail_config("compress_chunks: chunk_len must be >= pooling factor");
    if (tokens.empty()) fail_dim("compress_chunks: empty input");
    NoGradGuard ng;
    std::size_t keep = tokens.size();
    const std::size_t capacity = std::size_t(chunk_len) * std::size_t(max_chunks);
    if (keep > capacity) {
        keep = capacity;
        if (warning)
            *warning = "input of " + std::to_string(tokens.size()) + " tokens truncated to " +
                       std::to_string(capacity) + " (" + std::to_string(max_chunks) + " chunks of " +
                       std::to_string(chunk_len) + ")";
    }
    std::vector<Tensor> parts;
    for (std::size_t off = 0; off < keep; off += std::size_t(chunk_len)) {
        const std::size_t len = std::min(std::size_t(chunk_len), keep - off);
        parts.push_back(
            compress_rows(arc, entry, tokens.subspan(off, len), factor, TaskToken::None));
    }
    CompressedContext ctx;
    ctx.vectors = parts.size() == 1 ? parts[0] : concat_rows(parts);
    ctx.source_token_count = int(keep);
    ctx.decoder_id = entry.projector.owner;
    ctx.task = TaskToken::None;
    return ctx;
}

void write_context(const std::string& path, const CompressedContext& ctx) {
    Checkpoint ckpt;
    ckpt.add("vectors." + ctx.decoder_id, ctx.vectors);
    ckpt.add("meta", {3},
             {float(ctx.source_token_count), float(int(ctx.task)), 0.0f});
    ckpt.write(path);
}

CompressedContext read_context(const std::string& path) {
    Checkpoint ckpt = Checkpoint::read(path);
    CompressedContext ctx;
    for (const auto& e : ckpt.entries()) {
        if (e.name.rfind("vectors.", 0) == 0) {
            ctx.decoder_id = e.name.substr(8);
            ctx.vectors = Tensor::from_values(e.shape, e.values);
        }
    }
    const auto& meta = ckpt.at("meta").values;
    ctx.source_token_count = int(meta[0]);
    ctx.task = TaskToken(int(meta[1]));
    if (!ctx.vectors.defined()) fail_io("context blob has no vectors entry: " + path);
    return ctx;
}

void ArcBundle::save(const std::string& path) const {
    Checkpoint ckpt;
    const auto& cfg = arc.cfg;
    std::vector<float> meta = {float(cfg.d_model), float(cfg.n_heads), float(cfg.backbone_layers),
                               float(cfg.truncate_last), cfg.causal ? 1.0f : 0.0f, float(cfg.vocab),
                               float(cfg.max_compress_len), float(cfg.pooling_factor),
                               float(int(cfg.variant)), float(int(cfg.remainder)),
                               cfg.placement_every_two ? 1.0f : 0.0f, float(d_bottleneck)};
    ckpt.add("arc.meta", {int(meta.size())}, meta);
    arc.encoder.save_into(ckpt, "encoder.");
    if (arc.mem_embed.defined()) ckpt.add("encoder.mem_embed", arc.mem_embed);
    for (const auto& id : registry.ids()) {
        const DecoderEntry& e = registry.at(id);
        e.decoder.save_into(ckpt, "decoder." + id + ".");
        ckpt.add("projector." + id + ".w1", e.projector.w1);
        ckpt.add("projector." + id + ".w2", e.projector.w2);
        ckpt.add("special." + id + ".cont", e.specials.cont_vec);
        ckpt.add("special." + id + ".rec", e.specials.rec_vec);
    }
    ckpt.write(path);
}

ArcBundle ArcBundle::load(const std::string& path) {
    Checkpoint ckpt = Checkpoint::read(path);
    const auto& meta = ckpt.at("arc.meta").values;
    ArcBundle b;
    ArcEncoderConfig cfg;
    cfg.d_model = int(meta[0]);
    cfg.n_heads = int(meta[1]);
    cfg.backbone_layers = int(meta[2]);
    cfg.truncate_last = int(meta[3]);
    cfg.causal = meta[4] != 0.0f;
    cfg.vocab = int(meta[5]);
    cfg.max_compress_len = int(meta[6]);
    cfg.pooling_factor = int(meta[7]);
    cfg.variant = PoolingVariant(int(meta[8]));
    cfg.remainder = RemainderPolicy(int(meta[9]));
    cfg.placement_every_two = meta[10] != 0.0f;
    b.d_bottleneck = int(meta[11]);

    b.arc.cfg = cfg;
    b.arc.encoder = ModelParams::load_from(ckpt, "encoder.");
    b.arc.encoder.name = "encoder";
    b.arc.pooling.factor = cfg.pooling_factor;
    b.arc.pooling.variant = cfg.variant;
    b.arc.pooling.remainder = cfg.remainder;
    b.arc.pooling.placement = resolve_placement(cfg.variant, cfg.pooling_factor,
                                                b.arc.encoder.n_layers(), cfg.placement_every_two);
    if (ckpt.has("encoder.mem_embed")) b.arc.mem_embed = ckpt.tensor("encoder.mem_embed", true);

    for (const auto& e : ckpt.entries()) {
        const std::string& n = e.name;
        if (n.rfind("projector.", 0) == 0 && n.size() > 13 &&
            n.compare(n.size() - 3, 3, ".w1") == 0) {
            const std::string id = n.substr(10, n.size() - 13);
            ModelParams dec = ModelParams::load_from(ckpt, "decoder." + id + ".");
            dec.name = id;
            dec.freeze();
            DecoderEntry entry;
            entry.decoder = std::move(dec);
            entry.projector.owner = id;
            entry.projector.w1 = ckpt.tensor("projector." + id + ".w1", true);
            entry.projector.w2 = ckpt.tensor("projector." + id + ".w2", true);
            entry.specials.owner = id;
            entry.specials.cont_vec = ckpt.tensor("special." + id + ".cont", true);
            entry.specials.rec_vec = ckpt.tensor("special." + id + ".rec", true);
            b.registry.add_entry(id, std::move(entry));
        }
    }
    return b;
}

}  // namespace arc
