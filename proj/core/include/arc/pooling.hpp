#pragma once

#include <span>
#include <string>
#include <vector>

#include "arc/tensor.hpp"

namespace arc {

enum class PoolingVariant { AverageQueries, LastQuery, MemoryTokens, ProgressiveBy2 };
enum class RemainderPolicy { SmallLastGroup, PadGroup };

PoolingVariant pooling_variant_from_string(const std::string& s);
std::string to_string(PoolingVariant v);
RemainderPolicy remainder_policy_from_string(const std::string& s);

// Where and how queries are merged inside self-attention. `placement` holds
// the layer indices carrying a pooling stage; for the single-stage variants
// this is exactly the last block, for ProgressiveBy2 it is log2(factor)
// stages of factor-2 pooling over the final blocks.
struct PoolingSpec {
    int factor = 1;
    PoolingVariant variant = PoolingVariant::AverageQueries;
    std::vector<int> placement;
    RemainderPolicy remainder = RemainderPolicy::SmallLastGroup;

    // factor applied at one placement layer (2 for progressive stages)
    int stage_factor() const { return variant == PoolingVariant::ProgressiveBy2 ? 2 : factor; }
    bool applies_at(int layer) const {
        for (int p : placement) {
            if (p == layer) return true;
        }
        return false;
    }
};

// Stage layers for a pooling schedule: "last" places one stage at the final
// block (or, for ProgressiveBy2, consecutive final blocks); "every_two"
// spaces the progressive stages one block apart.
std::vector<int> resolve_placement(PoolingVariant variant, int factor, int n_layers,
                                   bool every_two = false);

// Merge consecutive query rows of one head: group i covers
// [i*factor, min((i+1)*factor, n)); rows >= valid_rows are padding and are
// excluded from group means. Keys and values are untouched by contract.
Tensor pool_queries(const Tensor& q, int factor, PoolingVariant variant, int valid_rows);

// Positions carried by pooled rows: the rotary position of the first token
// of each group.
std::vector<int> pooled_positions(std::span<const int> positions, int factor);

// Rotate-then-average order for pooled queries (fixed choice): applies the
// rotary rotation to individual query rows first, then merges groups.
Tensor rope_then_pool(const Tensor& q_raw, std::span<const int> positions, int factor,
                      int n_heads, float rope_base, int valid_rows);

}  // namespace arc
