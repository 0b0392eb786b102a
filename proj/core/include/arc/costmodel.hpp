#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace arc {
namespace cost {

// One "FLOP" counts one multiply-accumulate, matching the counting convention
// behind 4sd^2 + 2s^2d. All counts are exact integers for integer inputs.
struct CostConfig {
    std::int64_t s = 0;        // prompt tokens
    std::int64_t d = 0;        // hidden dim
    std::int64_t n_layers = 0;
    std::int64_t vocab = 0;
    double total_params = 0;   // N, decoder parameter count
    double p = 1.0;            // encoder/decoder parameter ratio, (0, 1]
    int x = 1;                 // pooling factor
    // gated FFN with hidden (8/3)d costs 3*(8/3) = 8 mult-accs per token-dim^2
    double ffn_const = 8.0;
};

// Q,K,V projections (3sd^2) + scores (s^2 d) + xV (s^2 d) + final projection
// (sd^2) = 4sd^2 + 2s^2 d.
std::int64_t attention_flops(std::int64_t s, std::int64_t d);

// n_layers * (attention + ffn_const * s * d^2) + s * d * vocab.
std::int64_t prefill_flops(const CostConfig& cfg);

// Prefill cost of compressing with the encoder at full length s, then
// prefilling the decoder on ceil(s/x) rows (encoder modeled as a scaled
// decoder with d_enc hidden size and enc_layers blocks, no vocab head).
std::int64_t compressed_prefill_flops(const CostConfig& dec, std::int64_t d_enc,
                                      std::int64_t enc_layers);

enum class Regime { TokenDominatedByD, TokenDominatedByS };  // d >> s / d << s

// Relative FLOPs of the compressed pipeline vs the raw prompt:
// p + 1/x in the linear (d >> s) regime, sqrt(p) + 1/x^2 in the quadratic.
double relative_cost(double p, int x, Regime regime);

struct SweepRow {
    std::int64_t s = 0;
    int x = 0;
    std::int64_t raw_flops = 0;
    std::int64_t compressed_flops = 0;
    double ratio = 0.0;
};

std::vector<SweepRow> sweep(const CostConfig& dec, std::int64_t d_enc, std::int64_t enc_layers,
                            const std::vector<std::int64_t>& s_values,
                            const std::vector<int>& x_values);
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

}  // namespace cost
}  // namespace arc
