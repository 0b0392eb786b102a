#include "arc/costmodel.hpp"

#include <cmath>
#include <ostream>

#include "arc/error.hpp"

namespace arc {
namespace cost {

std::int64_t attention_flops(std::int64_t s, std::int64_t d) {
    if (s < 1 || d < 1) fail_config("attention_flops: s and d must be >= 1");
    return 4 * s * d * d + 2 * s * s * d;
}

std::int64_t prefill_flops(const CostConfig& cfg) {
    if (cfg.s < 1 || cfg.d < 1 || cfg.n_layers < 0) fail_config("prefill_flops: bad config");
    const std::int64_t ffn = std::int64_t(std::llround(cfg.ffn_const)) * cfg.s * cfg.d * cfg.d;
    return cfg.n_layers * (attention_flops(cfg.s, cfg.d) + ffn) + cfg.s * cfg.d * cfg.vocab;
}

std::int64_t compressed_prefill_flops(const CostConfig& dec, std::int64_t d_enc,
                                      std::int64_t enc_layers) {
    CostConfig enc = dec;
    enc.d = d_enc;
    enc.n_layers = enc_layers;
    enc.vocab = 0;  // the encoder carries no output head
    CostConfig dec_short = dec;
    dec_short.s = (dec.s + dec.x - 1) / dec.x;
    return prefill_flops(enc) + prefill_flops(dec_short);
}

double relative_cost(double p, int x, Regime regime) {
    if (x < 1) fail_config("relative_cost: x must be >= 1");
    if (p < 0.0 || p > 1.0) fail_config("relative_cost: p must lie in [0, 1]");
    switch (regime) {
        case Regime::TokenDominatedByD: return p + 1.0 / double(x);
        case Regime::TokenDominatedByS: return std::sqrt(p) + 1.0 / (double(x) * double(x));
    }
    fail_config("relative_cost: unknown regime");
}

std::vector<SweepRow> sweep(const CostConfig& dec, std::int64_t d_enc, std::int64_t enc_layers,
                            const std::vector<std::int64_t>& s_values,
                            const std::vector<int>& x_values) {
    std::vector<SweepRow> rows;
    for (std::int64_t s : s_values) {
        for (int x : x_values) {
            CostConfig c = dec;
            c.s = s;
            c.x = x;
            SweepRow row;
            row.s = s;
            row.x = x;
            row.raw_flops = prefill_flops(c);
            row.compressed_flops = compressed_prefill_flops(c, d_enc, enc_layers);
            row.ratio = double(row.compressed_flops) / double(row.raw_flops);
            rows.push_back(row);
        }
    }
    return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << "s,x,raw_flops,compressed_flops,ratio\n";
    for (const auto& r : rows) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6g", r.ratio);
        os << r.s << ',' << r.x << ',' << r.raw_flops << ',' << r.compressed_flops << ',' << buf
           << '\n';
    }
}

}  // namespace cost
}  // namespace arc
