#include "arc/pooling.hpp"

namespace arc {

PoolingVariant pooling_variant_from_string(const std::string& s) {
    if (s == "average_queries") return PoolingVariant::AverageQueries;
    if (s == "last_query") return PoolingVariant::LastQuery;
    if (s == "memory_tokens") return PoolingVariant::MemoryTokens;
    if (s == "progressive_by2") return PoolingVariant::ProgressiveBy2;
    fail_config("unknown pooling variant '" + s +
                "' (average_queries, last_query, memory_tokens, progressive_by2)");
}

std::string to_string(PoolingVariant v) {
    switch (v) {
        case PoolingVariant::AverageQueries: return "average_queries";
        case PoolingVariant::LastQuery: return "last_query";
        case PoolingVariant::MemoryTokens: return "memory_tokens";
        case PoolingVariant::ProgressiveBy2: return "progressive_by2";
    }
    return "?";
}

RemainderPolicy remainder_policy_from_string(const std::string& s) {
    if (s == "small_last_group") return RemainderPolicy::SmallLastGroup;
    if (s == "pad_group") return RemainderPolicy::PadGroup;
    fail_config("unknown remainder policy '" + s + "' (small_last_group, pad_group)");
}

std::vector<int> resolve_placement(PoolingVariant variant, int factor, int n_layers,
                                   bool every_two) {
    if (n_layers < 1) fail_config("resolve_placement: empty stack");
    if (variant != PoolingVariant::ProgressiveBy2) return {n_layers - 1};
    int stages = 0;
    int f = factor;
    while (f > 1) {
        if (f % 2 != 0) fail_config("progressive_by2 requires a power-of-two pooling factor");
        f /= 2;
        ++stages;
    }
    if (stages == 0) return {n_layers - 1};
    const int stride = every_two ? 2 : 1;
    std::vector<int> placement;
    for (int i = stages - 1; i >= 0; --i) {
        const int layer = n_layers - 1 - i * stride;
        if (layer < 0) fail_config("progressive_by2: not enough layers for the requested factor");
        placement.push_back(layer);
    }
    return placement;
}

Tensor pool_queries(const Tensor& q, int factor, PoolingVariant variant, int valid_rows) {
    if (factor < 1) fail_config("pool_queries: factor must be >= 1");
    const int n = q.rows();
    if (valid_rows < 1 || valid_rows > n) valid_rows = n;
    switch (variant) {
        case PoolingVariant::AverageQueries:
        case PoolingVariant::ProgressiveBy2:
            return grouped_mean_rows(q, factor, valid_rows);
        case PoolingVariant::LastQuery: {
            const int groups = (n + factor - 1) / factor;
            std::vector<int> ids(static_cast<std::size_t>(groups));
            for (int g = 0; g < groups; ++g)
                ids[std::size_t(g)] = std::min(std::min((g + 1) * factor, n), valid_rows) - 1;
            return gather_rows(q, ids);
        }
        case PoolingVariant::MemoryTokens:
            fail_config("pool_queries: memory_tokens pools by slot selection, not query merging");
    }
    fail_config("pool_queries: unknown variant");
}

std::vector<int> pooled_positions(std::span<const int> positions, int factor) {
    std::vector<int> out;
    for (std::size_t i = 0; i < positions.size(); i += std::size_t(factor))
        out.push_back(positions[i]);
    return out;
}

Tensor rope_then_pool(const Tensor& q_raw, std::span<const int> positions, int factor,
                      int n_heads, float rope_base, int valid_rows) {
    Tensor rotated = rope_rows(q_raw, positions, n_heads, rope_base);
    return pool_queries(rotated, factor, PoolingVariant::AverageQueries, valid_rows);
}

}  // namespace arc
