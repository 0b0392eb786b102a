#include "arc/projector.hpp"

#include <cmath>

#include "arc/rng.hpp"

namespace arc {

ProjectorParams ProjectorParams::init(int d_enc, int d_bottleneck, int d_dec,
                                      const std::string& owner, Rng& rng) {
    if (d_enc < 1 || d_bottleneck < 1 || d_dec < 1) fail_config("projector dims must be positive");
    ProjectorParams p;
    p.owner = owner;
    // Kaiming-uniform with leaky-ReLU slope sqrt(5) reduces to +-1/sqrt(fan_in)
    const float b1 = 1.0f / std::sqrt(float(d_enc));
    const float b2 = 1.0f / std::sqrt(float(d_bottleneck));
    p.w1 = Tensor::uniform({d_enc, d_bottleneck}, -b1, b1, rng, true);
    p.w2 = Tensor::uniform({d_bottleneck, d_dec}, -b2, b2, rng, true);
    return p;
}

SpecialTokens SpecialTokens::init(int d_dec, const std::string& owner) {
    SpecialTokens s;
    s.owner = owner;
    s.cont_vec = Tensor::from_values({1, d_dec}, std::vector<float>(std::size_t(d_dec), 1.0f), true);
    s.rec_vec = Tensor::from_values({1, d_dec}, std::vector<float>(std::size_t(d_dec), 1.0f), true);
    return s;
}

DecoderEntry& DecoderRegistry::at(const std::string& id) {
    auto it = entries_.find(id);
    if (it == entries_.end()) fail_config("unknown decoder id '" + id + "'");
    return it->second;
}

const DecoderEntry& DecoderRegistry::at(const std::string& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) fail_config("unknown decoder id '" + id + "'");
    return it->second;
}

std::vector<std::string> DecoderRegistry::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, e] : entries_) out.push_back(id);
    return out;
}

DecoderEntry& DecoderRegistry::add_decoder(ModelParams decoder, int d_enc, int d_bottleneck,
                                           Rng& rng) {
    const std::string id = decoder.name;
    if (entries_.count(id)) fail_config("duplicate decoder id '" + id + "'");
    if (!decoder.frozen) decoder.freeze();
    DecoderEntry e;
    const int d_dec = decoder.block.d_model;
    e.projector = ProjectorParams::init(d_enc, d_bottleneck, d_dec, id, rng);
    e.specials = SpecialTokens::init(d_dec, id);
    e.decoder = std::move(decoder);
    return entries_.emplace(id, std::move(e)).first->second;
}

DecoderEntry& DecoderRegistry::add_entry(const std::string& id, DecoderEntry e) {
    if (entries_.count(id)) fail_config("duplicate decoder id '" + id + "'");
    return entries_.emplace(id, std::move(e)).first->second;
}

Tensor project(const Tensor& h, const ProjectorParams& p) {
    if (h.cols() != p.d_enc())
        fail_dim("project: input width " + std::to_string(h.cols()) + " does not match d_enc " +
                 std::to_string(p.d_enc()));
    return matmul(matmul(h, p.w1), p.w2);
}

double param_fraction(const DecoderRegistry& reg, const std::string& decoder_id,
                      std::size_t encoder_param_count) {
    const DecoderEntry& e = reg.at(decoder_id);
    const std::size_t specific = e.projector.param_count() + e.specials.cont_vec.numel() +
                                 e.specials.rec_vec.numel();
    return double(specific) / double(encoder_param_count);
}

}  // namespace arc
