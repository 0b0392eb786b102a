#pragma once

#include <map>
#include <string>
#include <vector>

#include "arc/tensor.hpp"
#include "arc/transformer.hpp"

namespace arc {

class Rng;

// 2-layer MLP without activation or biases: encoder space -> decoder
// embedding space through a dimensional bottleneck. Linear composition,
// rank-limited by the bottleneck width.
struct ProjectorParams {
    Tensor w1;  // [d_enc x d_bottleneck]
    Tensor w2;  // [d_bottleneck x d_dec]
    std::string owner;

    int d_enc() const { return w1.dim(0); }
    int d_bottleneck() const { return w1.dim(1); }
    int d_dec() const { return w2.dim(1); }
    std::size_t param_count() const { return w1.numel() + w2.numel(); }

    static ProjectorParams init(int d_enc, int d_bottleneck, int d_dec, const std::string& owner,
                                Rng& rng);
};

// Learned per-decoder task vectors living directly in decoder embedding
// space; initialized to all-ones.
struct SpecialTokens {
    Tensor cont_vec;  // [1 x d_dec]
    Tensor rec_vec;   // [1 x d_dec]
    std::string owner;

    static SpecialTokens init(int d_dec, const std::string& owner);
};

struct DecoderEntry {
    ModelParams decoder;  // frozen
    ProjectorParams projector;
    SpecialTokens specials;
};

// Per-decoder registry behind one shared encoder: only projector and special
// tokens differ per decoder.
class DecoderRegistry {
public:
    bool has(const std::string& id) const { return entries_.count(id) != 0; }
    DecoderEntry& at(const std::string& id);
    const DecoderEntry& at(const std::string& id) const;
    std::vector<std::string> ids() const;
    std::size_t size() const { return entries_.size(); }

    // Registers a frozen decoder with freshly initialized projector and
    // all-ones special tokens. Fails on duplicate ids.
    DecoderEntry& add_decoder(ModelParams decoder, int d_enc, int d_bottleneck, Rng& rng);
    // Registers a pre-built entry (checkpoint load path).
    DecoderEntry& add_entry(const std::string& id, DecoderEntry e);

private:
    std::map<std::string, DecoderEntry> entries_;
};

Tensor project(const Tensor& h, const ProjectorParams& p);

// (projector + special token parameters) / encoder parameter count.
double param_fraction(const DecoderRegistry& reg, const std::string& decoder_id,
                      std::size_t encoder_param_count);

}  // namespace arc
