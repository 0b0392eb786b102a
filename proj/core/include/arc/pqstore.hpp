#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "arc/evalsuite.hpp"

namespace arc {
namespace pq {

// Product-quantization codebooks: m sub-quantizers with k centroids each over
// sub-vectors of the bottleneck space.
struct PQCodebook {
    int m = 0;
    int k = 0;
    int sub_dim = 0;
    std::uint64_t seed = 0;
    int trained_on = 0;
    std::vector<float> centroids;  // [m][k][sub_dim]

    int dim() const { return m * sub_dim; }
    int bits_per_code() const;              // ceil(log2 k)
    int bits_per_vector() const { return m * bits_per_code(); }
    double bits_per_dim() const { return double(bits_per_vector()) / double(dim()); }
    const float* centroid(int sub, int idx) const {
        return centroids.data() + (std::size_t(sub) * k + std::size_t(idx)) * std::size_t(sub_dim);
    }
};

// Per-subspace Lloyd's k-means with a seeded distinct-point init and a fixed
// iteration count. Sub-vectors are canonicalized by sorting before the init
// draw, which makes training invariant to input vector order. Appends the
// per-iteration objective (sum of squared distances) to *objective_trace when
// provided. Fewer than k distinct sub-vectors in a subspace degenerates into
// duplicate centroids (flagged via *degenerate).
PQCodebook train_pq(const std::vector<float>& vectors, int dim, int m, int k, int iters,
                    std::uint64_t seed, std::vector<double>* objective_trace = nullptr,
                    bool* degenerate = nullptr);

// Nearest centroid per subspace; ties resolve to the lowest index.
std::vector<std::uint32_t> encode(std::span<const float> v, const PQCodebook& cb);
std::vector<float> decode(std::span<const std::uint32_t> codes, const PQCodebook& cb);

// ceil(n_source_tokens/x) * d_b * bits_per_dim / 8, exact integer arithmetic
// (d_b * bits_per_dim must come out integral, as it does for PQ codes and for
// raw 32/16-bit floats).
std::int64_t memory_report_bytes(std::int64_t n_source_tokens, int x, int d_b,
                                 double bits_per_dim);

// Codebook file: header (m, k, d_b, seed) + centroid floats.
void write_codebook(const std::string& path, const PQCodebook& cb);
PQCodebook read_codebook(const std::string& path);

// Code blobs: packed little-endian indices, bits_per_code bits each.
std::vector<std::uint8_t> pack_codes(std::span<const std::uint32_t> codes, int bits_per_code);
std::vector<std::uint32_t> unpack_codes(std::span<const std::uint8_t> bytes, int count,
                                        int bits_per_code);

// Collects bottleneck vectors for the documents of a QA set (shots + items).
std::vector<float> collect_bottleneck_vectors(const EvalBundle& bundle,
                                              const std::vector<QaItem>& items, int x, int* dim);

// eval_qa with every compressed document routed through encode/decode in the
// bottleneck space; cb == nullptr runs the exact 32-bit passthrough.
QaEvalResult eval_with_pq(const EvalBundle& bundle, const std::vector<QaItem>& items,
                          const std::vector<QaItem>& shots, int k_shot, int x,
                          const PQCodebook* cb, int max_new = 16);

}  // namespace pq
}  // namespace arc
