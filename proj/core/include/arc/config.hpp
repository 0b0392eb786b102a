#pragma once

#include <map>
#include <string>
#include <vector>

#include "arc/arc_encoder.hpp"
#include "arc/training.hpp"

namespace arc {

// Plain-text dotted-key configuration: one `key=value` per line, `#` comments.
class KeyValueConfig {
public:
    static KeyValueConfig from_file(const std::string& path);
    static KeyValueConfig from_string(const std::string& text);

    void set(const std::string& key, const std::string& value);
    // "key=value" CLI override strings
    void apply_override(const std::string& assignment);

    bool has(const std::string& key) const;
    std::string get_str(const std::string& key, const std::string& fallback) const;
    long get_int(const std::string& key, long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    // Canonical snapshot: sorted key=value lines; re-running from it must
    // reproduce a run byte-identically.
    std::string snapshot() const;

private:
    std::map<std::string, std::string> values_;
};

// Rejects keys outside the known registry, suggesting nearest valid keys.
void validate_keys(const KeyValueConfig& cfg);
const std::vector<std::string>& known_config_keys();

struct DecoderSpec {
    std::string id = "A";
    int d_model = 96;
    int n_layers = 4;
    int n_heads = 4;
    std::string ckpt;  // trained stand-in checkpoint (decoder_lm output)
};

// Full experiment description parsed from a KeyValueConfig.
struct ArcConfig {
    std::uint64_t seed = 0;
    // data
    std::string corpus_path = "corpus.tsv";
    int n_docs = 4000;
    int fact_density = 3;
    double heldout_frac = 0.1;
    // encoder + pooling + projector
    ArcEncoderConfig enc;
    int d_bottleneck = 48;
    // decoders
    std::vector<DecoderSpec> decoders;
    // training
    TrainConfig train;
    std::string init_bundle;  // resume/fine-tune source (empty = fresh)
    // chunked long-context compression
    int chunk_len = 64;
    int max_chunks = 32;
    // evaluation
    int eval_k_shot = 3;
    int eval_n_items = 200;
    int eval_max_new = 12;

    static ArcConfig from_kv(const KeyValueConfig& kv);
};

// Run directory helpers: config snapshot + metrics CSV + checkpoints.
std::string run_file(const std::string& run_dir, const std::string& name);
void ensure_run_dir(const std::string& run_dir);
void write_snapshot(const std::string& run_dir, const KeyValueConfig& cfg);

}  // namespace arc
